#pragma once

#include "dispel/config.hpp"
#include "dispel/eval.hpp"
#include "dispel/nn.hpp"
#include "dispel/train.hpp"

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace dispel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitMissingArtifact = 2;
inline constexpr int kExitConfigParse = 3;
inline constexpr int kExitConfig = 4;
inline constexpr int kExitFailure = 5;

/// Environment variable that replaces `out.dir` when set and non-empty.
inline constexpr const char* kOutDirEnv = "DISPEL_OUT_DIR";

struct CommandContext {
    RunConfig config;
    std::size_t jobs = 1;
};

/// Commands: gen-data, train-erm, train-emg, eval, sweep-global, bound-check,
/// export-embeddings, pipeline.
const std::vector<std::string>& command_names();

/// Runs one command. Every input artifact is loaded before the run directory
/// is touched, so a missing input leaves it unchanged.
void run_command(const std::string& name, const CommandContext& ctx);

/// Runs a command and converts failures into an exit code plus one
/// `error code=N kind=K message="..."` line on `err`.
int run_command_guarded(const std::string& name, const CommandContext& ctx, std::ostream& err);

int exit_code_for(const Error& e);
std::string error_line(int code, const std::string& kind, const std::string& message);

std::filesystem::path resolve_out_dir(const RunConfig& config);

/// SHA-256 of every file under `dir` except manifest.json and log.txt,
/// keyed by relative path.
std::map<std::string, std::string> artifact_checksums(const std::filesystem::path& dir);
/// True when manifest.json exists, is complete and matches the directory.
bool verify_manifest(const std::filesystem::path& dir);

/// Base model as stored by train-erm.
SplitModel load_base_model(const std::filesystem::path& dir);
EmgModel load_emg_model(const std::filesystem::path& dir, const SplitModel& base);

struct LoadedData {
    std::vector<DomainDataset> train;
    DomainDataset unseen;
    std::optional<FeatureOracle> oracle;
};
/// Reads `data.json` from a gen-data run (or a hand-written index of CSVs).
LoadedData load_data_dir(const std::filesystem::path& dir);

}  // namespace dispel
