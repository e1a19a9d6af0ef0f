#ifndef MFSTEER_GAUSS_STEER_HPP
#define MFSTEER_GAUSS_STEER_HPP

#include "mfsteer/linsys.hpp"
#include "mfsteer/policy.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace mfsteer {

/// N(mean, cov) with cov symmetric positive definite.
struct GaussianDensity {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    static GaussianDensity scalar(double mean, double variance);
    int dim() const { return static_cast<int>(mean.size()); }
    /// Throws DimensionError or DomainError (non-symmetric / not positive definite).
    void validate() const;
};

enum class GameMode { noncoop, coop };

/// Pi(t) on the design grid, plus the running integral of tr(B B' Pi).
struct RiccatiSolution {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> pi;
    std::vector<double> trace_integral;
    Eigen::MatrixXd B;
    double eps = 1.0;

    Eigen::MatrixXd pi_at(double t) const { return interpolate_samples(grid, pi, t); }
    double trace_integral_at(double t) const { return interpolate_samples(grid, trace_integral, t); }
};

/// Mean steering m(t), y(t), gamma(t). y is the mean path of the population.
struct MeanSteering {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> m;
    std::vector<Eigen::VectorXd> y;
    std::vector<double> gamma;
    GameMode mode = GameMode::noncoop;
    Eigen::MatrixXd B;
    Eigen::MatrixXd Abar;

    Eigen::VectorXd m_at(double t) const { return interpolate_samples(grid, m, t); }
    Eigen::VectorXd y_at(double t) const { return interpolate_samples(grid, y, t); }
    double gamma_at(double t) const { return interpolate_samples(grid, gamma, t); }
};

/// g(x, mu) = (x - a)' quad (x - a) + lin . x [+ constant], where a is the mean
/// of mu, or a fixed anchor for the mean-independent variant.
struct TerminalCostSpec {
    Eigen::MatrixXd quad;
    Eigen::VectorXd lin;
    double constant = 0.0;
    bool include_constant = false;
    std::optional<Eigen::VectorXd> anchor;

    double evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& population_mean) const;
};

struct TerminalCostOptions {
    /// Keep -gamma(1) (and, for the mean-independent form, the trace term).
    bool include_constant = false;
    /// Use g(x) = -lambda(1, x) with the anchor frozen at y(1).
    bool mean_independent = false;
};

/// Pi_eps(0) from the marginal covariances; eps is read from dyn.
Eigen::MatrixXd riccati_initial(const GaussianDensity& rho0, const GaussianDensity& rho1,
                                const SystemDynamics& dyn, const TimeGrid& grid);

/// Integrates dPi/dt = -A'Pi - Pi A + Pi B B' Pi forward from pi0 (RK4,
/// symmetrized each step). A finite escape raises DivergenceError.
RiccatiSolution riccati_propagate(const Eigen::MatrixXd& pi0, const SystemDynamics& dyn, const TimeGrid& grid);

/// Noncooperative mode uses the coupled Gramian Mbar, cooperative mode Mhat.
/// Raises InvariantError if y(1) misses the target mean by more than
/// 1e-6 (1 + |target|).
MeanSteering mean_steering(const GaussianDensity& rho0, const GaussianDensity& rho1, const SystemDynamics& dyn,
                           GameMode mode, const TimeGrid& grid);

TerminalCostSpec terminal_cost(const RiccatiSolution& riccati, const MeanSteering& steering,
                               const TerminalCostOptions& options = {});

/// u(t, x) = -B' Pi(t) (x - y(t)) + B' m(t).
FeedbackPolicy feedback_noncoop(const RiccatiSolution& riccati, const MeanSteering& steering);

/// u(t, x) = -B' Pi(t) x + B' n(t) with n = Pi y + m.
FeedbackPolicy feedback_coop(const RiccatiSolution& riccati, const MeanSteering& steering);

/// n(t) = Pi(t) y(t) + m(t).
Eigen::VectorXd coop_offset(const RiccatiSolution& riccati, const MeanSteering& steering, double t);

/// n(t) written out through Phibar, Mhat and the marginal means; an independent
/// route to coop_offset used for cross-checking.
Eigen::VectorXd coop_offset_expanded(const RiccatiSolution& riccati, const SystemDynamics& dyn,
                                     const Eigen::VectorXd& mean0, const Eigen::VectorXd& mean1, double t);

/// lambda(t, x) = -1/2 (x-y)' Pi (x-y) + eps/2 int_0^t tr(B B' Pi) + m . x + gamma.
double value_field(const RiccatiSolution& riccati, const MeanSteering& steering, double t,
                   const Eigen::VectorXd& x);

/// grad lambda(t, x) = -Pi (x - y) + m.
Eigen::VectorXd value_gradient(const RiccatiSolution& riccati, const MeanSteering& steering, double t,
                               const Eigen::VectorXd& x);

/// Everything a Gaussian steering run produces.
struct GaussianDesign {
    SystemDynamics dyn;
    GaussianDensity rho0;
    GaussianDensity rho1;
    GameMode mode;
    Eigen::MatrixXd pi0;
    RiccatiSolution riccati;
    MeanSteering steering;

    FeedbackPolicy policy() const;
    TerminalCostSpec cost(const TerminalCostOptions& options = {}) const {
        return terminal_cost(riccati, steering, options);
    }
};

GaussianDesign design_gaussian(const GaussianDensity& rho0, const GaussianDensity& rho1, const SystemDynamics& dyn,
                               GameMode mode, const TimeGrid& grid);

}  // namespace mfsteer

#endif  // MFSTEER_GAUSS_STEER_HPP
