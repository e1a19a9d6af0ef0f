#ifndef MFSTEER_TOOLS_SCENARIO_HPP
#define MFSTEER_TOOLS_SCENARIO_HPP

#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"
#include "mfsteer/mfsim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mfsteer::cli {

enum class ScenarioMode { noncoop, coop, stationary, zero_noise };

std::string to_string(ScenarioMode mode);
std::optional<ScenarioMode> mode_from_string(const std::string& text);

/// Either Gaussian moments or a two-column grid CSV (scalar states only).
struct MarginalSpec {
    std::optional<std::string> grid;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    bool is_grid() const { return grid.has_value(); }
    GaussianDensity gaussian() const { return {mean, cov}; }
    bool operator==(const MarginalSpec& other) const;
};

struct NumericsConfig {
    int steps = 1000;
    int grid_points = 2048;
    double tol = 1e-8;
    int maxiter = 500;
    double relaxation = 1.0;
    bool operator==(const NumericsConfig&) const = default;
};

struct SimulationConfig {
    bool enabled = true;
    int particles = 20000;
    std::uint64_t seed = 1;
    /// Unset: quarters of the horizon.
    std::optional<std::vector<double>> snapshots;
    Coupling coupling = Coupling::empirical;
    int threads = 1;
    /// Stationary mode only; defaults to 5 there.
    std::optional<double> horizon;
    bool operator==(const SimulationConfig&) const = default;
};

struct ScenarioConfig {
    ScenarioMode mode = ScenarioMode::noncoop;
    SystemDynamics dyn;
    std::optional<MarginalSpec> initial;
    std::optional<MarginalSpec> terminal;
    std::optional<MarginalSpec> target;
    NumericsConfig numerics;
    SimulationConfig simulation;
    std::optional<std::string> output;
    /// Relative grid and output paths are taken from here. Not serialized.
    std::filesystem::path base_dir = ".";

    bool operator==(const ScenarioConfig& other) const;

    double horizon() const;
    std::vector<double> snapshot_times() const;
    std::filesystem::path resolve(const std::string& path) const;
};

/// Reads and validates a scenario file. Throws ConfigError listing every
/// problem found, each prefixed with its field path.
ScenarioConfig parse_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Cross-field checks (dimensions, SPD covariances, mode requirements, files
/// present). Throws ConfigError with all problems.
void validate_scenario(const ScenarioConfig& config);

/// YAML text that parses back to an equal config; numbers carry 17 digits.
std::string emit_scenario(const ScenarioConfig& config);

nlohmann::json scenario_json(const ScenarioConfig& config);

/// The same config with grid paths made absolute, for copying elsewhere.
ScenarioConfig with_absolute_paths(const ScenarioConfig& config);

}  // namespace mfsteer::cli

#endif  // MFSTEER_TOOLS_SCENARIO_HPP
