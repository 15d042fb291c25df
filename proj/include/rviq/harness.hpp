#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rviq/bias.hpp"
#include "rviq/learning.hpp"
#include "rviq/smdp.hpp"

namespace rviq {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_assertion = 2, exit_divergence = 3 };

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// 64-bit FNV-1a of the canonical (key-sorted, compact) JSON text, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// The root directory for run artifacts: RVIQ_OUTPUT_ROOT if set, else "runs".
std::filesystem::path default_output_root();

/// Creates `<root>/<command>-<hash8>-seed<seed>`, adding -1, -2, ... when the
/// name is taken so earlier runs are never overwritten.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   const std::string& hash, std::uint64_t seed);

nlohmann::json versions();

struct ResolvedModel {
    SmdpModel model;
    ExpectedQuantities eq;
    nlohmann::json source;
};

/// Reads "model" (path) or "generator" (generator spec) from a config.
ResolvedModel resolve_model(const nlohmann::json& config);
/// Reads "bias" from a config; defaults to the uniform affine average.
BiasFn resolve_bias(const nlohmann::json& config, const ExpectedQuantities& eq);
/// Builds the learning configuration; "auto" scalings resolve to 1.05 times
/// the smallest admissible value.
RviQlConfig resolve_learn_config(const nlohmann::json& config, const ExpectedQuantities& eq, const BiasFn& f);

struct HarnessOptions {
    std::filesystem::path output_root = default_output_root();
    bool quiet = true;
};

struct CommandResult {
    int exit_code = exit_ok;
    std::filesystem::path run_dir;
    nlohmann::json summary;
    std::vector<std::string> failures;
};

/// Dispatches one of validate, generate, solve-exact, learn, run-sa,
/// ode-check, sweep. Usage problems, failed assertions and divergence are
/// reported through the exit code rather than thrown.
CommandResult run_command(const std::string& command, const nlohmann::json& config,
                          const HarnessOptions& options = {});

const std::vector<std::string>& command_names();

}  // namespace rviq
