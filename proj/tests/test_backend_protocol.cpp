#include "doctest.h"

#include <signal.h>

#include <cerrno>
#include <chrono>
#include <fstream>

#include "json.hpp"
#include "support.hpp"
#include "usegmix/backend_protocol.hpp"
#include "usegmix/error.hpp"

using namespace usegmix;
using usegmix::test::fixture_command;

namespace {

BackendHandle spawn_mode(const std::string& mode, const std::string& extra = {}, double timeout_s = 20.0) {
    return BackendHandle::spawn(fixture_command("fake_backend.py", mode + (extra.empty() ? "" : " " + extra)),
                                BackendOptions{timeout_s});
}

std::vector<nlohmann::json> read_log(const std::filesystem::path& p) {
    std::vector<nlohmann::json> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
    return out;
}

bool process_exists(pid_t pid) { return ::kill(pid, 0) == 0 || errno != ESRCH; }

// Mean of the 4-connected outer boundary, rounded half up, painted over the mask.
ImageRGB mean_fill_oracle(const ImageRGB& img, const BitMask& mask) {
    long long total[3] = {0, 0, 0};
    long long count = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (mask.get(x, y)) continue;
            const bool near = (x > 0 && mask.get(x - 1, y)) || (x + 1 < img.width && mask.get(x + 1, y)) ||
                              (y > 0 && mask.get(x, y - 1)) || (y + 1 < img.height && mask.get(x, y + 1));
            if (!near) continue;
            ++count;
            for (int c = 0; c < 3; ++c) total[c] += img.at(x, y, c);
        }
    }
    ImageRGB out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!mask.get(x, y)) continue;
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<std::uint8_t>((total[c] + count / 2) / count);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("spawn performs the handshake") {
    BackendHandle h = spawn_mode("echo");
    CHECK(h.name() == "fake-echo");
    CHECK(h.capabilities() == std::set<std::string>{"segment", "inpaint"});
    CHECK(h.alive());
}

TEST_CASE("spawn failures") {
    CHECK_THROWS_WITH_AS(BackendHandle::spawn("/nonexistent/usegmix-backend --flag"), doctest::Contains("cannot spawn"),
                         BackendError);
    CHECK_THROWS_AS(BackendHandle::spawn(""), BackendError);
    CHECK_THROWS_WITH_AS(spawn_mode("garbage"), doctest::Contains("loading weights from /nowhere"), BackendError);
    CHECK_THROWS_WITH_AS(spawn_mode("badhello"), doctest::Contains("malformed hello"), BackendError);
    // A child that never answers the hello.
    CHECK_THROWS_WITH_AS(BackendHandle::spawn("sleep 30", BackendOptions{0.3}), doctest::Contains("timed out"), BackendError);
}

TEST_CASE("request_segment") {
    const ImageRGB img = test::random_image(9, 7, 1);

    SUBCASE("echo returns a full mask") {
        BackendHandle h = spawn_mode("echo");
        CHECK(request_segment(h, img, {3, 4}) == BitMask(9, 7, true));
    }
    SUBCASE("wrong-size mask is a dimension error") {
        BackendHandle h = spawn_mode("wrongsize");
        CHECK_THROWS_WITH_AS(request_segment(h, img, {0, 0}), doctest::Contains("10x7"), BackendError);
    }
    SUBCASE("replies stay in request order") {
        BackendHandle h = spawn_mode("counter");
        for (std::size_t n = 1; n <= 10; ++n) {
            const BitMask m = request_segment(h, img, {1, 1});
            CHECK(m.count() == n);
            for (std::size_t i = 0; i < n; ++i) CHECK(m.bits[i] == 1);
        }
    }
    SUBCASE("missing capability") {
        BackendHandle h = spawn_mode("segonly");
        CHECK_THROWS_WITH_AS(request_inpaint(h, img, BitMask(9, 7, true)), doctest::Contains("lacks capability 'inpaint'"),
                             BackendError);
        CHECK(request_segment(h, img, {0, 0}).count() == 63);
    }
}

TEST_CASE("request_inpaint") {
    const ImageRGB img = test::random_image(12, 10, 2);
    const BitMask mask = test::rect_mask(12, 10, 3, 2, 7, 6);

    SUBCASE("echo returns the input") {
        BackendHandle h = spawn_mode("echo");
        CHECK(request_inpaint(h, img, mask) == img);
    }
    SUBCASE("steps default to 500 on the wire") {
        test::TempDir dir("proto");
        const auto log = dir.path() / "log.jsonl";
        {
            BackendHandle h = spawn_mode("echo", "--log " + log.string());
            request_inpaint(h, img, mask);
            request_inpaint(h, img, mask, 7);
        }
        const auto entries = read_log(log);
        REQUIRE(entries.size() == 5);
        CHECK(entries[0]["op"] == "hello");
        CHECK(entries[1]["steps"] == 500);
        CHECK(entries[2]["steps"] == 7);
        CHECK(entries[3]["op"] == "shutdown");
        CHECK(entries[4]["op"] == "exit");
    }
    SUBCASE("mean-fill differs from the input only inside the mask") {
        BackendHandle h = spawn_mode("meanfill");
        const ImageRGB out = request_inpaint(h, img, mask);
        CHECK(out == mean_fill_oracle(img, mask));
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (mask.get(x, y)) continue;
                for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == img.at(x, y, c));
            }
        }
    }
}

TEST_CASE("error replies raise without killing the backend") {
    BackendHandle h = spawn_mode("error");
    const ImageRGB img = test::random_image(4, 4, 3);
    CHECK_THROWS_WITH_AS(request_segment(h, img, {0, 0}), doctest::Contains("cannot handle"), BackendError);
    CHECK(h.alive());
    CHECK_THROWS_AS(request_inpaint(h, img, BitMask(4, 4, true)), BackendError);
    CHECK_THROWS_WITH_AS(h.exchange({{"op", "bogus"}}), doctest::Contains("bogus"), BackendError);
    CHECK(h.alive());
}

TEST_CASE("malformed requests get error replies from the echo backend") {
    BackendHandle h = spawn_mode("echo");
    CHECK_THROWS_WITH_AS(h.exchange({{"op", "segment"}, {"image_png_b64", "!!"}}), doctest::Contains("bad image"),
                         BackendError);
    CHECK(request_segment(h, test::random_image(3, 3, 4), {1, 1}).count() == 9);
}

TEST_CASE("timeouts kill the child and poison the handle") {
    BackendHandle h = spawn_mode("slow", "--delay 5", 0.3);
    const pid_t pid = h.pid();
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_WITH_AS(request_segment(h, test::random_image(4, 4, 5), {0, 0}), doctest::Contains("timed out"),
                         BackendError);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
    CHECK_FALSE(h.alive());
    CHECK_FALSE(process_exists(pid));
    CHECK_THROWS_WITH_AS(request_segment(h, test::random_image(4, 4, 5), {0, 0}), doctest::Contains("not running"),
                         BackendError);
}

TEST_CASE("close sends shutdown and reaps the child") {
    test::TempDir dir("proto");
    const auto log = dir.path() / "log.jsonl";
    BackendHandle h = spawn_mode("echo", "--log " + log.string());
    const pid_t pid = h.pid();
    h.close();
    CHECK_FALSE(process_exists(pid));
    CHECK_FALSE(h.alive());
    h.close();
    const auto entries = read_log(log);
    REQUIRE(entries.size() == 3);
    CHECK(entries[1]["op"] == "shutdown");

    BackendHandle moved = spawn_mode("echo");
    const pid_t moved_pid = moved.pid();
    {
        BackendHandle other = std::move(moved);
        CHECK(other.pid() == moved_pid);
    }
    CHECK_FALSE(process_exists(moved_pid));
}

TEST_CASE("base64 round trip") {
    CHECK(base64_encode(std::vector<std::uint8_t>{}) == "");
    const std::string foobar = "foobar";
    CHECK(base64_encode(std::vector<std::uint8_t>(foobar.begin(), foobar.end())) == "Zm9vYmFy");
    CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o'}) == "Zm8=");
    Rng rng(6);
    for (std::size_t len = 0; len < 64; ++len) {
        std::vector<std::uint8_t> bytes(len);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.index(256));
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK_THROWS_AS(base64_decode("Zm9v!"), BackendError);
    CHECK_THROWS_AS(base64_decode("Zm9vY"), BackendError);
}
