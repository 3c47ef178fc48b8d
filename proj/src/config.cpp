#include "usegmix/config.hpp"

#include <set>

#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"

namespace usegmix {

using nlohmann::json;

namespace {

// Reads members of one JSON object, rejecting any key nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error("config: '" + path_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error("config: bad value for '" + qualified(key) + "': " + e.what());
        }
    }

    template <typename T>
    void read_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        read(key, v);
        out = v;
    }

    template <typename Enum>
    void read_enum(const char* key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> names) {
        std::string s;
        bool present = j_.contains(key);
        read(key, s);
        if (!present) return;
        for (const auto& [name, value] : names) {
            if (s == name) {
                out = value;
                return;
            }
        }
        throw Error("config: unknown value '" + s + "' for '" + qualified(key) + "'");
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) throw Error("config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Enum>
const char* enum_name(Enum v, std::initializer_list<std::pair<const char*, Enum>> names) {
    for (const auto& [name, value] : names) {
        if (value == v) return name;
    }
    return "?";
}

const std::initializer_list<std::pair<const char*, BlendMode>> kModes = {{"seamless-clone", BlendMode::seamless_clone},
                                                                         {"harmonic-fill", BlendMode::harmonic_fill}};
const std::initializer_list<std::pair<const char*, InpaintRegion>> kRegions = {{"band", InpaintRegion::band},
                                                                              {"full-union", InpaintRegion::full_union}};
const std::initializer_list<std::pair<const char*, InpaintBackend>> kInpainters = {
    {"builtin", InpaintBackend::builtin}, {"external", InpaintBackend::external}};
const std::initializer_list<std::pair<const char*, SegmenterKind>> kSegmenters = {{"builtin", SegmenterKind::builtin},
                                                                                 {"external", SegmenterKind::external}};

json optional_json(const auto& opt) { return opt ? json(*opt) : json(nullptr); }

}  // namespace

json to_json(const RunConfig& c) {
    json j = json::object();
    const auto& s = c.phase1.slic;
    j["slic"] = {{"n_s", s.n_s}, {"compactness", s.compactness}, {"max_iters", s.max_iters}, {"min_region_frac", s.min_region_frac}};
    j["floodfill"] = {{"color_tol", c.floodfill.color_tol}, {"connectivity", c.floodfill.connectivity}, {"max_frac", c.floodfill.max_frac}};
    const auto& k = c.phase1.consensus;
    j["consensus"] = {{"k", k.k},
                      {"cluster_tol", optional_json(k.cluster_tol)},
                      {"freq_iou", k.freq_iou},
                      {"dedup_iou", k.dedup_iou},
                      {"min_area_frac", k.min_area_frac}};
    j["descriptor"] = {{"bins_per_channel", c.phase1.descriptor.bins_per_channel}, {"gradient_bins", c.phase1.descriptor.gradient_bins}};
    j["pca_dim"] = c.phase1.pca_dim;
    const auto& b = c.blend;
    j["blend"] = {{"band_width", b.band_width},
                  {"solver_tol", b.solver_tol},
                  {"solver_max_iters", optional_json(b.solver_max_iters)},
                  {"mode", enum_name(b.mode, kModes)},
                  {"inpaint_region", enum_name(b.region, kRegions)},
                  {"inpaint_steps", b.inpaint_steps},
                  {"fallback_to_builtin", b.fallback_to_builtin}};
    const auto& p = c.phase2;
    j["phase2"] = {{"ratio_min", p.ratio_min},
                   {"ratio_max", p.ratio_max},
                   {"max_attempts", p.max_attempts},
                   {"per_class_count", p.per_class_count},
                   {"inpaint_backend", enum_name(p.inpaint_backend, kInpainters)},
                   {"master_seed", p.master_seed},
                   {"reset_weights_per_image", p.reset_weights_per_image}};
    j["segmenter"] = enum_name(c.segmenter, kSegmenters);
    j["backend"] = {{"command", optional_json(c.backend_command)}, {"timeout_s", c.backend_timeout_s}};
    j["features_file"] = optional_json(c.features_file);
    j["persist_weights"] = c.persist_weights;
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    ObjectReader top(j, "");
    if (const json* s = top.child("slic")) {
        ObjectReader r(*s, "slic");
        r.read("n_s", c.phase1.slic.n_s);
        r.read("compactness", c.phase1.slic.compactness);
        r.read("max_iters", c.phase1.slic.max_iters);
        r.read("min_region_frac", c.phase1.slic.min_region_frac);
        r.finish();
    }
    if (const json* s = top.child("floodfill")) {
        ObjectReader r(*s, "floodfill");
        r.read("color_tol", c.floodfill.color_tol);
        r.read("connectivity", c.floodfill.connectivity);
        r.read("max_frac", c.floodfill.max_frac);
        r.finish();
    }
    if (const json* s = top.child("consensus")) {
        ObjectReader r(*s, "consensus");
        r.read("k", c.phase1.consensus.k);
        r.read_optional("cluster_tol", c.phase1.consensus.cluster_tol);
        r.read("freq_iou", c.phase1.consensus.freq_iou);
        r.read("dedup_iou", c.phase1.consensus.dedup_iou);
        r.read("min_area_frac", c.phase1.consensus.min_area_frac);
        r.finish();
    }
    if (const json* s = top.child("descriptor")) {
        ObjectReader r(*s, "descriptor");
        r.read("bins_per_channel", c.phase1.descriptor.bins_per_channel);
        r.read("gradient_bins", c.phase1.descriptor.gradient_bins);
        r.finish();
    }
    top.read("pca_dim", c.phase1.pca_dim);
    if (const json* s = top.child("blend")) {
        ObjectReader r(*s, "blend");
        r.read("band_width", c.blend.band_width);
        r.read("solver_tol", c.blend.solver_tol);
        r.read_optional("solver_max_iters", c.blend.solver_max_iters);
        r.read_enum("mode", c.blend.mode, kModes);
        r.read_enum("inpaint_region", c.blend.region, kRegions);
        r.read("inpaint_steps", c.blend.inpaint_steps);
        r.read("fallback_to_builtin", c.blend.fallback_to_builtin);
        r.finish();
    }
    if (const json* s = top.child("phase2")) {
        ObjectReader r(*s, "phase2");
        r.read("ratio_min", c.phase2.ratio_min);
        r.read("ratio_max", c.phase2.ratio_max);
        r.read("max_attempts", c.phase2.max_attempts);
        r.read("per_class_count", c.phase2.per_class_count);
        r.read_enum("inpaint_backend", c.phase2.inpaint_backend, kInpainters);
        r.read("master_seed", c.phase2.master_seed);
        r.read("reset_weights_per_image", c.phase2.reset_weights_per_image);
        r.finish();
    }
    top.read_enum("segmenter", c.segmenter, kSegmenters);
    if (const json* s = top.child("backend")) {
        ObjectReader r(*s, "backend");
        r.read_optional("command", c.backend_command);
        r.read("timeout_s", c.backend_timeout_s);
        r.finish();
    }
    top.read_optional("features_file", c.features_file);
    top.read("persist_weights", c.persist_weights);
    top.finish();

    if (c.phase1.pca_dim < 1) throw Error("config: pca_dim must be >= 1");
    if (c.phase1.consensus.k < 1) throw Error("config: consensus.k must be >= 1");
    if (c.blend.band_width < 1) throw Error("config: blend.band_width must be >= 1");
    if (!(c.blend.solver_tol > 0.0)) throw Error("config: blend.solver_tol must be > 0");
    if (c.blend.inpaint_steps < 1) throw Error("config: blend.inpaint_steps must be >= 1");
    validate(c.phase2);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
    try {
        return run_config_from_json(j);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

}  // namespace usegmix
