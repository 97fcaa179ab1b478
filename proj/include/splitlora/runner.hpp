#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "splitlora/protocol.hpp"

namespace splitlora {

// Exit codes shared by the CLI commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Loads and validates the config, runs the selected mode, and writes
/// log.jsonl, summary.json and adapter checkpoints into the run directory.
int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed_override,
            std::optional<std::string> out_override, std::ostream& out, std::ostream& err);

/// Prints a per-round table from a run directory and emits summary.csv.
int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err);

/// Side-by-side comparison of runs: final loss/ppl plus time and bytes to
/// reach the loss threshold.
int cmd_compare(const std::vector<std::string>& run_dirs, double threshold, std::ostream& out,
                std::ostream& err);

/// One JSONL record per round; exposed for tests.
std::string round_record_json(const RoundRecord& record);

}  // namespace splitlora
