#pragma once

// Shared helpers for the unit tests.

#include <filesystem>
#include <string>
#include <unistd.h>

#include "usegmix/raster.hpp"
#include "usegmix/rng.hpp"

namespace usegmix::test {

inline ImageRGB random_image(int w, int h, std::uint64_t seed) {
    ImageRGB img(w, h);
    Rng rng(seed);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.index(256));
    return img;
}

inline ImageRGB uniform_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    ImageRGB img(w, h);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        img.data[3 * i] = r;
        img.data[3 * i + 1] = g;
        img.data[3 * i + 2] = b;
    }
    return img;
}

inline BitMask random_mask(int w, int h, double density, std::uint64_t seed) {
    BitMask m(w, h);
    Rng rng(seed);
    for (auto& b : m.bits) b = rng.uniform() < density ? 1 : 0;
    return m;
}

/// Inclusive rectangle.
inline BitMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    BitMask m(w, h);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) m.set(x, y);
    }
    return m;
}

/// Directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("usegmix-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

#ifdef USEGMIX_FIXTURE_DIR
/// Command line running one of the Python fixture backends.
inline std::string fixture_command(const std::string& script, const std::string& args = {}) {
    std::string cmd = std::string(USEGMIX_PYTHON) + " " + USEGMIX_FIXTURE_DIR + "/" + script;
    if (!args.empty()) cmd += " " + args;
    return cmd;
}
#endif

}  // namespace usegmix::test
