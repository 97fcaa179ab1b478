#pragma once

#include <string>

#include <json.hpp>

#include "splitlora/protocol.hpp"

namespace splitlora {

struct RunConfig {
    TrainingConfig train;
    std::string out_dir = "run";
};

/// Strict schema: unknown keys are rejected, types are checked, and every
/// absent field falls back to its documented default. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc);

std::string mode_name(RunMode mode);

}  // namespace splitlora
