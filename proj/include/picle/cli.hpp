#pragma once

// Library-level entry points behind the command-line tool: generate a
// sequence directory, run an engine mode over it, and compare finished runs.
// Exposed here so the command surface is testable in-process.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "picle/benchgen.hpp"
#include "picle/engine.hpp"

namespace picle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Reads {"pattern", "length", "seed"} plus optional engine-facing fields.
SequenceSpec sequence_spec_from_file(const std::filesystem::path& spec_path);

/// Writes sequence.json plus per-problem descriptors and train/val/test CSV
/// dumps. Deterministic for a fixed spec.
void write_sequence_dir(const RealizedSequence& seq, const std::filesystem::path& dir);

/// Loads the generated datasets back (labels included; the generator is not
/// re-run).
std::vector<DataBundle> load_sequence_dir(const std::filesystem::path& dir);

EngineConfig engine_config_from_json_file(const std::filesystem::path& config_path);

struct RunOptions {
    std::filesystem::path sequence_dir;
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> config_path;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool resume = false;
};

int cmd_generate(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir);
int cmd_run(const RunOptions& options);
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::optional<std::filesystem::path>& csv_out);

}  // namespace picle::cli
