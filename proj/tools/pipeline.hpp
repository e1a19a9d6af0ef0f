#ifndef MFSTEER_TOOLS_PIPELINE_HPP
#define MFSTEER_TOOLS_PIPELINE_HPP

#include "scenario.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsteer::cli {

struct Check {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

nlohmann::json checks_json(const std::vector<Check>& checks);
bool all_pass(const std::vector<Check>& checks);

struct RunOptions {
    std::string command = "run";
    /// Solve the 1-D bridge even for Gaussian marginals (cross-validation).
    bool force_bridge = false;
    bool simulate = true;
    bool write_verify = true;
};

struct RunResult {
    std::vector<Check> checks;
    std::vector<std::string> artifacts;
    /// 0 when every check passes, 1 otherwise.
    int exit_code = 0;
};

/// Design, optionally simulate, and write the artifacts into out_dir.
/// Library errors propagate; failed checks only set the exit code.
RunResult run_pipeline(const ScenarioConfig& config, const std::filesystem::path& out_dir, const RunOptions& options,
                       std::ostream& log);

/// The content of design.json for a config, recomputed from scratch.
nlohmann::json compute_design_json(const ScenarioConfig& config, bool force_bridge);

/// Re-derives the design from the config, compares it with the saved
/// design.json and re-checks the saved ensembles. Writes verify.json.
RunResult verify_artifacts(const ScenarioConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Reads an ensemble CSV written by ParticleEnsemble::write_csv.
Eigen::MatrixXd read_ensemble_csv(const std::filesystem::path& path);

/// First mismatch between two JSON documents (numbers within rel), or "".
std::string json_mismatch(const nlohmann::json& a, const nlohmann::json& b, double rel, const std::string& path = "");

}  // namespace mfsteer::cli

#endif  // MFSTEER_TOOLS_PIPELINE_HPP
