#include "usegmix/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"
#include "usegmix/rng.hpp"

namespace usegmix {

namespace {

using Color = std::array<int, 3>;

Color random_color(Rng& rng) {
    return {static_cast<int>(30 + rng.index(200)), static_cast<int>(30 + rng.index(200)),
            static_cast<int>(30 + rng.index(200))};
}

// Far enough from `avoid` on some channel that a 25-level flood fill cannot leak.
Color distinct_color(Rng& rng, const std::vector<Color>& avoid) {
    while (true) {
        const Color c = random_color(rng);
        bool ok = true;
        for (const auto& a : avoid) {
            int maxdiff = 0;
            for (int k = 0; k < 3; ++k) maxdiff = std::max(maxdiff, std::abs(c[k] - a[k]));
            if (maxdiff < 70) ok = false;
        }
        if (ok) return c;
    }
}

}  // namespace

std::vector<std::string> toy_classes() { return {"blobs", "tiles", "bands"}; }

ImageRGB make_toy_image(const std::string& class_label, int size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> canvas(static_cast<std::size_t>(size) * size, 0);  // palette index per pixel
    std::vector<Color> palette;
    palette.push_back(random_color(rng));
    palette.push_back(distinct_color(rng, palette));
    palette.push_back(distinct_color(rng, palette));

    if (class_label == "blobs") {
        const int n = 3 + static_cast<int>(rng.index(3));
        for (int k = 0; k < n; ++k) {
            const double r = size * (0.08 + 0.08 * rng.uniform());
            const double cx = r + rng.uniform() * (size - 2 * r);
            const double cy = r + rng.uniform() * (size - 2 * r);
            const int col = 1 + static_cast<int>(rng.index(2));
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) canvas[static_cast<std::size_t>(y) * size + x] = col;
                }
            }
        }
    } else if (class_label == "tiles") {
        const int n = 3 + static_cast<int>(rng.index(3));
        for (int k = 0; k < n; ++k) {
            const int w = static_cast<int>(size * (0.15 + 0.2 * rng.uniform()));
            const int h = static_cast<int>(size * (0.15 + 0.2 * rng.uniform()));
            const int x0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(size - w)));
            const int y0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(size - h)));
            const int col = 1 + static_cast<int>(rng.index(2));
            for (int y = y0; y < y0 + h; ++y) {
                for (int x = x0; x < x0 + w; ++x) canvas[static_cast<std::size_t>(y) * size + x] = col;
            }
        }
    } else if (class_label == "bands") {
        int y = 0;
        int col = 0;
        while (y < size) {
            const int thick = static_cast<int>(size * (0.1 + 0.15 * rng.uniform()));
            for (int yy = y; yy < std::min(size, y + thick); ++yy) {
                for (int x = 0; x < size; ++x) canvas[static_cast<std::size_t>(yy) * size + x] = col;
            }
            y += std::max(1, thick);
            col = (col + 1 + static_cast<int>(rng.index(2))) % 3;
        }
    } else {
        throw Error("unknown toy class '" + class_label + "'");
    }

    ImageRGB img(size, size);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        const Color& c = palette[static_cast<std::size_t>(canvas[i])];
        for (int k = 0; k < 3; ++k) {
            const int noise = static_cast<int>(rng.index(9)) - 4;
            img.data[i * 3 + k] = static_cast<std::uint8_t>(std::clamp(c[k] + noise, 0, 255));
        }
    }
    return img;
}

void write_toy_corpus(const std::filesystem::path& root, int classes, int per_class, int size, std::uint64_t seed) {
    const auto names = toy_classes();
    if (classes < 1 || classes > static_cast<int>(names.size())) throw Error("toy corpus supports 1 to 3 classes");
    for (int c = 0; c < classes; ++c) {
        const auto dir = root / names[static_cast<std::size_t>(c)];
        std::filesystem::create_directories(dir);
        for (int k = 0; k < per_class; ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "img%02d.png", k);
            const std::uint64_t s = derive_seed(derive_seed(seed, names[static_cast<std::size_t>(c)]), static_cast<std::uint64_t>(k));
            save_png(dir / name, make_toy_image(names[static_cast<std::size_t>(c)], size, s));
        }
    }
}

}  // namespace usegmix
