#ifndef MFSTEER_MFSIM_HPP
#define MFSTEER_MFSIM_HPP

#include "mfsteer/bridge1d.hpp"
#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"
#include "mfsteer/policy.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mfsteer {

/// Philox4x32-10 block function: four 32-bit words from a counter and a key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

/// Standard normals addressed by (particle, step, stream). Every call with the
/// same address returns the same numbers, whatever order particles are
/// visited in.
class NoiseSource {
public:
    enum Stream : std::uint32_t { initial = 0, diffusion = 1 };

    explicit NoiseSource(std::uint64_t seed);

    /// Fills out with normals; block b of the counter yields entries 2b, 2b+1.
    void normals(std::uint64_t particle, std::uint32_t step, Stream stream, double* out, int count) const;
    /// A uniform in (0, 1) with 53 random bits.
    double uniform(std::uint64_t particle, std::uint32_t step, Stream stream) const;

private:
    std::array<std::uint32_t, 2> key_;
};

struct ParticleEnsemble {
    /// N x n, one particle per row.
    Eigen::MatrixXd states;
    double t = 0.0;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(states.rows()); }
    int dim() const { return static_cast<int>(states.cols()); }
    /// One row per particle: "x" for n = 1, otherwise "x1,...,xn".
    void write_csv(std::ostream& out) const;
};

/// Throws DomainError for N < 1 or an invalid density.
ParticleEnsemble init_ensemble(const GaussianDensity& rho, int N, std::uint64_t seed);
/// Inverse-CDF sampling of the interpolated grid density.
ParticleEnsemble init_ensemble(const GridDensity1D& rho, int N, std::uint64_t seed);

enum class Coupling { empirical, meanfield };

struct SimOptions {
    /// Snapshot times, rounded to the nearest grid node. The start and the
    /// end of the grid are always recorded.
    std::vector<double> snapshots;
    /// 0 picks the hardware concurrency.
    int threads = 1;
    /// Mean-field mode only: a prescribed mean path in place of the ensemble
    /// mean (the population an individual agent best-responds to).
    std::function<Eigen::VectorXd(double)> mean_path;
};

struct SimOutput {
    std::vector<double> snapshot_times;
    std::vector<Eigen::MatrixXd> snapshots;
    /// Ensemble mean at every grid node.
    std::vector<double> times;
    std::vector<Eigen::VectorXd> mean_path;
    /// (1/N) sum_i sum_k 1/2 |u_i(t_k)|^2 dt
    double realized_cost = 0.0;
    ParticleEnsemble final;
};

/// Euler-Maruyama for dx_i = (A x_i + Abar c_i + B u_i) dt + sqrt(eps) B dw_i,
/// where c_i is the mean of the other particles (empirical) or the population
/// mean (meanfield). Results do not depend on the thread count. Throws
/// BlowUpError on a non-finite state and DomainError when the policy horizon
/// does not cover the grid.
SimOutput simulate(const ParticleEnsemble& ens, const SystemDynamics& dyn, const FeedbackPolicy& policy,
                   Coupling coupling, const TimeGrid& grid, const SimOptions& options = {});

struct MomentTrajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::MatrixXd> cov;
};

/// Mean and covariance of the closed loop under a Gaussian design, by RK4 on
/// [Pi, m, y, mean, Sigma] jointly, started from the design's initial data.
MomentTrajectory moment_oracle(const GaussianDensity& rho0, const SystemDynamics& dyn, const RiccatiSolution& riccati,
                               const MeanSteering& steering, const TimeGrid& grid);

struct Histogram {
    double lo = 0.0;
    double width = 1.0;
    /// Fraction of particles per bin; sums to 1.
    std::vector<double> mass;
};

struct EnsembleStats {
    Eigen::VectorXd mean;
    /// Unbiased (divides by N - 1).
    Eigen::MatrixXd cov;
    /// One per coordinate.
    std::vector<Histogram> histograms;
    /// Kolmogorov-Smirnov distance to the reference CDF (n = 1 only).
    std::optional<double> ks;
};

/// Throws DomainError for fewer than 2 particles.
EnsembleStats ensemble_stats(const Eigen::MatrixXd& states, const std::function<double(double)>& reference_cdf = {},
                             int bins = 60);

/// Asymptotic KS critical distance sqrt(-log(alpha / 2) / 2) / sqrt(N).
double ks_critical(int N, double alpha = 0.01);

}  // namespace mfsteer

#endif  // MFSTEER_MFSIM_HPP
