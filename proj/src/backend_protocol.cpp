#include "usegmix/backend_protocol.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sodium.h>
#include <sys/wait.h>
#include <unistd.h>
#include <wordexp.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>
#include <vector>

#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"

namespace usegmix {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> split_command(const std::string& command) {
    wordexp_t we{};
    const int rc = wordexp(command.c_str(), &we, WRDE_NOCMD | WRDE_UNDEF);
    if (rc != 0) {
        if (rc == WRDE_NOSPACE) wordfree(&we);
        throw BackendError("cannot parse backend command: " + command);
    }
    std::vector<std::string> argv(we.we_wordv, we.we_wordv + we.we_wordc);
    wordfree(&we);
    if (argv.empty()) throw BackendError("empty backend command");
    return argv;
}

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

std::string truncate_for_message(const std::string& s) {
    constexpr std::size_t kMax = 200;
    return s.size() <= kMax ? s : s.substr(0, kMax) + "...";
}

}  // namespace

BackendHandle BackendHandle::spawn(const std::string& command, BackendOptions options) {
    static const bool sigpipe_ignored = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    const std::vector<std::string> args = split_command(command);
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    int in_pipe[2];    // parent -> child stdin
    int out_pipe[2];   // child stdout -> parent
    int exec_pipe[2];  // reports exec failure
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
        throw BackendError(std::string("pipe failed: ") + std::strerror(errno));
    }

    const pid_t pid = ::fork();
    if (pid < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execvp(argv[0], argv.data());
        const int err = errno;
        [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof(err));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(exec_pipe[1]);

    int exec_errno = 0;
    ssize_t got = 0;
    do {
        got = ::read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
    } while (got < 0 && errno == EINTR);
    ::close(exec_pipe[0]);
    if (got > 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::waitpid(pid, nullptr, 0);
        throw BackendError("cannot spawn backend '" + args[0] + "': " + std::strerror(exec_errno));
    }

    BackendHandle h;
    h.pid_ = pid;
    h.to_child_ = in_pipe[1];
    h.from_child_ = out_pipe[0];
    h.timeout_s_ = options.timeout_s;
    h.command_ = command;

    h.write_line(nlohmann::json{{"op", "hello"}}.dump());
    const std::string line = h.read_line();
    nlohmann::json hello;
    try {
        hello = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
        h.kill_child();
        throw BackendError("backend handshake failed: not a JSON line: '" + truncate_for_message(line) + "'");
    }
    if (!hello.is_object() || !hello.contains("name") || !hello["name"].is_string() ||
        !hello.contains("capabilities") || !hello["capabilities"].is_array()) {
        h.kill_child();
        throw BackendError("backend handshake failed: malformed hello reply: '" + truncate_for_message(line) + "'");
    }
    h.name_ = hello["name"].get<std::string>();
    for (const auto& cap : hello["capabilities"]) {
        if (!cap.is_string()) {
            h.kill_child();
            throw BackendError("backend handshake failed: non-string capability in '" + truncate_for_message(line) + "'");
        }
        h.capabilities_.insert(cap.get<std::string>());
    }
    return h;
}

BackendHandle::BackendHandle(BackendHandle&& other) noexcept { *this = std::move(other); }

BackendHandle& BackendHandle::operator=(BackendHandle&& other) noexcept {
    if (this != &other) {
        close();
        pid_ = std::exchange(other.pid_, -1);
        to_child_ = std::exchange(other.to_child_, -1);
        from_child_ = std::exchange(other.from_child_, -1);
        broken_ = other.broken_;
        timeout_s_ = other.timeout_s_;
        command_ = std::move(other.command_);
        buffer_ = std::move(other.buffer_);
        name_ = std::move(other.name_);
        capabilities_ = std::move(other.capabilities_);
    }
    return *this;
}

BackendHandle::~BackendHandle() { close(); }

void BackendHandle::close() {
    if (pid_ <= 0) return;
    if (!broken_) {
        try {
            write_line(nlohmann::json{{"op", "shutdown"}}.dump());
        } catch (const Error&) {
        }
    }
    if (to_child_ >= 0) ::close(std::exchange(to_child_, -1));
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(std::min(timeout_s_, 10.0)));
    while (true) {
        const pid_t r = ::waitpid(pid_, nullptr, WNOHANG);
        if (r == pid_ || (r < 0 && errno != EINTR)) break;
        if (Clock::now() >= deadline) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (from_child_ >= 0) ::close(std::exchange(from_child_, -1));
    pid_ = -1;
}

void BackendHandle::kill_child() {
    broken_ = true;
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }
    if (to_child_ >= 0) ::close(std::exchange(to_child_, -1));
    if (from_child_ >= 0) ::close(std::exchange(from_child_, -1));
}

void BackendHandle::write_line(const std::string& line) {
    if (line.find('\n') != std::string::npos) throw BackendError("request contains an embedded newline");
    const std::string framed = line + "\n";
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_s_));
    std::size_t off = 0;
    while (off < framed.size()) {
        pollfd pfd{to_child_, POLLOUT, 0};
        const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
        if (pr < 0 && errno == EINTR) continue;
        if (pr == 0) {
            kill_child();
            throw BackendError("backend '" + command_ + "' timed out accepting a request");
        }
        const ssize_t n = ::write(to_child_, framed.data() + off, framed.size() - off);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            const std::string err = std::strerror(errno);
            kill_child();
            throw BackendError("write to backend '" + command_ + "' failed: " + err);
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string BackendHandle::read_line() {
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_s_));
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
        if (pr < 0 && errno == EINTR) continue;
        if (pr == 0) {
            kill_child();
            throw BackendError("backend '" + command_ + "' timed out after " + std::to_string(timeout_s_) + " s");
        }
        char chunk[65536];
        const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            const std::string err = std::strerror(errno);
            kill_child();
            throw BackendError("read from backend '" + command_ + "' failed: " + err);
        }
        if (n == 0) {
            kill_child();
            throw BackendError("backend '" + command_ + "' closed its output" +
                               (buffer_.empty() ? std::string() : " after partial line '" + truncate_for_message(buffer_) + "'"));
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

nlohmann::json BackendHandle::exchange(const nlohmann::json& request) {
    if (!alive()) throw BackendError("backend '" + command_ + "' is not running");
    write_line(request.dump());
    const std::string line = read_line();
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
        kill_child();
        throw BackendError("backend '" + command_ + "' sent a non-JSON reply: '" + truncate_for_message(line) + "'");
    }
    if (!reply.is_object()) {
        kill_child();
        throw BackendError("backend '" + command_ + "' sent a non-object reply: '" + truncate_for_message(line) + "'");
    }
    if (reply.contains("error")) {
        const auto& e = reply["error"];
        throw BackendError("backend '" + name_ + "' error: " + (e.is_string() ? e.get<std::string>() : e.dump()));
    }
    return reply;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), kVariant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), kVariant);
    out.resize(std::strlen(out.c_str()));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw BackendError("invalid base64 payload");
    }
    out.resize(len);
    return out;
}

namespace {

const std::string& require_string(const nlohmann::json& reply, const char* key) {
    if (!reply.contains(key) || !reply[key].is_string()) {
        throw BackendError(std::string("backend reply lacks string field '") + key + "'");
    }
    return reply[key].get_ref<const std::string&>();
}

void require_capability(const BackendHandle& h, const std::string& cap) {
    if (!h.has_capability(cap)) throw BackendError("backend '" + h.name() + "' lacks capability '" + cap + "'");
}

}  // namespace

BitMask request_segment(BackendHandle& h, const ImageRGB& img, Point p) {
    require_capability(h, "segment");
    nlohmann::json req{{"op", "segment"}, {"image_png_b64", base64_encode(encode_png(img))}, {"point", {p.x, p.y}}};
    const nlohmann::json reply = h.exchange(req);
    BitMask mask;
    try {
        mask = decode_mask(base64_decode(require_string(reply, "mask_png_b64")));
    } catch (const DecodeError& e) {
        throw BackendError(std::string("backend mask does not decode: ") + e.what());
    }
    if (mask.width != img.width || mask.height != img.height) {
        throw BackendError("backend mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                           ", image is " + std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    return mask;
}

ImageRGB request_inpaint(BackendHandle& h, const ImageRGB& img, const BitMask& mask, int steps) {
    require_capability(h, "inpaint");
    nlohmann::json req{{"op", "inpaint"},
                       {"image_png_b64", base64_encode(encode_png(img))},
                       {"mask_png_b64", base64_encode(encode_png(mask))},
                       {"steps", steps}};
    const nlohmann::json reply = h.exchange(req);
    ImageRGB out;
    try {
        out = decode_image(base64_decode(require_string(reply, "image_png_b64")));
    } catch (const DecodeError& e) {
        throw BackendError(std::string("backend image does not decode: ") + e.what());
    }
    if (out.width != img.width || out.height != img.height) {
        throw BackendError("backend image is " + std::to_string(out.width) + "x" + std::to_string(out.height) +
                           ", expected " + std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    return out;
}

}  // namespace usegmix
