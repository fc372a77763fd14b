#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// End-to-end orchestration: config validation, stage ordering, per-stage seed
// derivation, the run manifest, and the command-line entry point.

namespace attribaudit::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

struct StageRecord {
    std::string name;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;  // relative to the output directory
};

struct RunManifest {
    std::string config_hash;  // hex; insensitive to config key order
    std::uint64_t global_seed = 0;
    std::uint64_t split_seed = 0;
    std::string out_dir;
    std::vector<StageRecord> stages;
};

// Stages run in dependency order: generate|ingest, then train, evaluate,
// attribute, roar, fairness, interaction as configured. Identical config and
// seed reproduce every data and report file byte for byte; only the
// manifest's wall-clock fields vary. manifest.json is written atomically
// after the last stage, listing every file the run produced.
RunManifest run_pipeline(const std::string& config_path,
                         const std::string& out_override = "",
                         std::optional<std::uint64_t> seed_override = std::nullopt);

void write_manifest_json(const std::string& path, const RunManifest& manifest);

// Subcommand dispatcher behind the binary. Exit codes: 0 success,
// 1 validation error, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace attribaudit::pipeline
