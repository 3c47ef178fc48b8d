#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "usegmix/blend.hpp"
#include "usegmix/pipeline.hpp"
#include "usegmix/pool.hpp"
#include "usegmix/segmenter.hpp"

namespace usegmix {

enum class SegmenterKind { builtin, external };

/// Everything a CLI run can be configured with. JSON keys mirror the field
/// names; absent keys keep their defaults, unknown keys are rejected.
struct RunConfig {
    Phase1Config phase1;
    FloodFillConfig floodfill;
    BlendConfig blend;
    Phase2Config phase2;
    SegmenterKind segmenter = SegmenterKind::builtin;
    std::optional<std::string> backend_command;
    double backend_timeout_s = 120.0;
    std::optional<std::string> features_file;
    /// Write penalty weights back into the pools after `augment`.
    bool persist_weights = false;

    bool operator==(const RunConfig&) const = default;
};

/// Canonical form: every key present, fixed key order.
nlohmann::json to_json(const RunConfig& cfg);
/// Throws Error naming the offending key.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace usegmix
