#pragma once

#include <sys/types.h>

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "usegmix/raster.hpp"

namespace usegmix {

inline constexpr int kDefaultInpaintSteps = 500;

struct BackendOptions {
    double timeout_s = 120.0;
};

/// A child process speaking newline-delimited JSON on stdin/stdout.
///
/// Every request is one line `{"op": ...}` and is answered by exactly one
/// line. The handshake (`hello`) runs inside spawn(); `shutdown` is sent and
/// the child reaped when the handle is destroyed. A handle serves one caller
/// at a time. After a timeout or framing error the child is killed and the
/// handle refuses further requests.
class BackendHandle {
public:
    /// Splits `command` with shell word rules (no command substitution) and
    /// execs it directly. Throws BackendError if the exec fails or the hello
    /// reply is missing or malformed.
    static BackendHandle spawn(const std::string& command, BackendOptions options = {});

    BackendHandle(BackendHandle&& other) noexcept;
    BackendHandle& operator=(BackendHandle&& other) noexcept;
    BackendHandle(const BackendHandle&) = delete;
    BackendHandle& operator=(const BackendHandle&) = delete;
    ~BackendHandle();

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::set<std::string>& capabilities() const { return capabilities_; }
    [[nodiscard]] bool has_capability(const std::string& cap) const { return capabilities_.contains(cap); }
    [[nodiscard]] pid_t pid() const { return pid_; }
    [[nodiscard]] bool alive() const { return pid_ > 0 && !broken_; }

    /// Sends one request line and returns the parsed reply object. A reply
    /// carrying an "error" member is raised as BackendError.
    nlohmann::json exchange(const nlohmann::json& request);

    /// Sends shutdown and reaps the child. Idempotent.
    void close();

private:
    BackendHandle() = default;

    void write_line(const std::string& line);
    std::string read_line();
    void kill_child();

    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    bool broken_ = false;
    double timeout_s_ = 120.0;
    std::string command_;
    std::string buffer_;
    std::string name_;
    std::set<std::string> capabilities_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Point-prompted segmentation. The returned mask always has the image's dimensions.
BitMask request_segment(BackendHandle& h, const ImageRGB& img, Point p);

/// Inpaints the masked region; the reply must have the image's dimensions.
ImageRGB request_inpaint(BackendHandle& h, const ImageRGB& img, const BitMask& mask, int steps = kDefaultInpaintSteps);

}  // namespace usegmix
