#ifndef MFSTEER_STATIONARY_HPP
#define MFSTEER_STATIONARY_HPP

#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"
#include "mfsteer/policy.hpp"

#include <Eigen/Dense>

namespace mfsteer {

struct FeasibilityReport {
    bool feasible = false;
    /// Distance of A S + S A' from the range of X -> B X' + X B' (Frobenius).
    double covariance_residual = 0.0;
    /// Distance of (A + Abar) m from range(B).
    double mean_residual = 0.0;
};

/// Never throws on infeasibility; dimension mismatches still raise.
FeasibilityReport check_feasibility(const GaussianDensity& target, const SystemDynamics& dyn);

struct StationaryDesign {
    Eigen::MatrixXd pi;
    Eigen::VectorXd nvec;
    Eigen::MatrixXd Q;
    Eigen::VectorXd target_mean;
    Eigen::MatrixXd target_cov;
    double eta = 0.0;
    /// False when only B'Pi is pinned down (fewer inputs than states). Pi is
    /// then the minimum-norm solution; the policy does not depend on the choice.
    bool unique = true;
    Eigen::MatrixXd A;
    Eigen::MatrixXd Abar;
    Eigen::MatrixXd B;
    double eps = 1.0;

    /// g(x, rho) = 1/2 x'Qx + n.(A - BB'Pi)x - mean(rho).Abar'Pi x
    double cost(const Eigen::VectorXd& x, const Eigen::VectorXd& population_mean) const;
};

/// Throws DomainError for rank-deficient B and DesignError for an
/// infeasible target.
StationaryDesign design_stationary(const GaussianDensity& target, const SystemDynamics& dyn);

/// u(x) = -B'Pi x + B'n, time invariant on [0, inf).
FeedbackPolicy stationary_policy(const StationaryDesign& design);

/// The constant of the ergodic HJB equation for the designed cost.
double stationary_eta(const StationaryDesign& design, const SystemDynamics& dyn);

}  // namespace mfsteer

#endif  // MFSTEER_STATIONARY_HPP
