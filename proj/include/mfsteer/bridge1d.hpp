#ifndef MFSTEER_BRIDGE1D_HPP
#define MFSTEER_BRIDGE1D_HPP

#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"
#include "mfsteer/policy.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mfsteer {

/// Density on the uniform grid x_k = x0 + k dx, k = 0..size-1, with
/// sum w dx = 1.
class GridDensity1D {
public:
    GridDensity1D() = default;

    /// Rescales the weights to unit mass; throws DomainError for negative or
    /// non-finite weights, zero mass, or mass touching the grid boundary.
    GridDensity1D(double x0, double dx, std::vector<double> weights);

    /// Samples f on `points` nodes spanning [lo, hi].
    static GridDensity1D from_function(double lo, double hi, int points, const std::function<double(double)>& f);
    /// N(mean, variance) on mean +- halfwidth standard deviations.
    static GridDensity1D gaussian(double mean, double variance, int points = 2048, double halfwidth = 8.0);

    /// Two-column CSV "x,weight" with an optional header line. Nodes must be
    /// uniformly spaced.
    static GridDensity1D read_csv(std::istream& in);
    static GridDensity1D read_csv(const std::string& path);
    void write_csv(std::ostream& out) const;

    int size() const { return static_cast<int>(w_.size()); }
    double x0() const { return x0_; }
    double dx() const { return dx_; }
    double lo() const { return x0_; }
    double hi() const { return x0_ + dx_ * (size() - 1); }
    double x(int k) const { return x0_ + dx_ * k; }
    std::vector<double> xs() const;
    const std::vector<double>& weights() const { return w_; }
    double mean() const { return mean_; }
    double variance() const;
    /// Linear interpolation, zero outside the grid.
    double operator()(double x) const;
    /// Piecewise-linear CDF of the interpolated density.
    double cdf(double x) const;
    /// Smallest x with cdf(x) >= q.
    double quantile(double q) const;
    /// Same weights on nodes moved by `shift`.
    GridDensity1D shifted(double shift) const;

private:
    double x0_ = 0.0;
    double dx_ = 1.0;
    std::vector<double> w_;
    double mean_ = 0.0;
    /// cum_[k] = trapezoid mass of the cells left of node k (unnormalized).
    std::vector<double> cum_;
};

double l1_distance(const GridDensity1D& a, const GridDensity1D& b);

/// Moves the grid so the density has mean zero; returns the removed mean.
std::pair<GridDensity1D, double> center_marginal(const GridDensity1D& rho);

/// q(x, y) = N(y; phi x, var), the scalar prior transition density over [s, t].
struct GaussianKernel1D {
    double phi = 1.0;
    double var = 1.0;

    double log_density(double x, double y) const;
    double operator()(double x, double y) const;
};

/// Scalar prior dx = a(t) x dt + b u dt: Phi(t, 0) and M(t, 0) tabulated once
/// and interpolated with cubic Hermite splines. M(t, s) is taken without the
/// noise intensity.
class ScalarPrior1D {
public:
    /// Throws DimensionError unless n = m = 1, DomainError for b = 0.
    explicit ScalarPrior1D(const SystemDynamics& dyn, int steps = 4000);

    double b() const { return b_; }
    double phi(double t, double s) const;
    /// M(t, s) for s <= t.
    double gramian(double t, double s) const;

private:
    double phi0(double t) const;
    double gram0(double t) const;

    TimeGrid grid_;
    std::vector<double> a_;
    std::vector<double> phi_;
    std::vector<double> gram_;
    double b_;
};

/// The prior with noise sqrt(eps) b dw and its Gaussian transition densities.
class PriorKernel1D : public ScalarPrior1D {
public:
    /// Additionally throws DomainError for eps <= 0.
    explicit PriorKernel1D(const SystemDynamics& dyn, int steps = 4000);

    double eps() const { return eps_; }
    /// Throws DomainError unless 0 <= s < t <= 1.
    GaussianKernel1D at(double s, double t) const;

private:
    double eps_;
};

GaussianKernel1D transition_kernel(const SystemDynamics& dyn, double s, double t);

struct IpfOptions {
    double tol = 1e-8;
    int maxiter = 500;
    /// When false an unconverged solve is returned with converged = false.
    bool throw_on_failure = true;
    /// Over-relaxed updates, log u <- (1 - w) log u + w (Sinkhorn update).
    /// w = 1 is plain IPF; values near 2 pay off for small eps, where plain
    /// IPF needs a number of sweeps growing like 1/eps.
    double relaxation = 1.0;
};

/// Solution of the discrete Schroedinger system between two centered grid
/// marginals. Potentials are stored as logarithms; -inf marks nodes outside
/// the support.
struct BridgePotentials1D {
    GridDensity1D rho0;
    GridDensity1D rho1;
    std::vector<double> log_phihat0;
    std::vector<double> log_phi1;
    PriorKernel1D prior;
    bool converged = false;
    int iterations = 0;
    double error0 = 0.0;
    double error1 = 0.0;

    /// log phi(t, x) = log int q(t, x; 1, y) phi(1, y) dy
    double log_phi(double t, double x) const;
    /// log phihat(t, x) = log int q(0, z; t, x) phihat(0, z) dz
    double log_phihat(double t, double x) const;
    /// Grid on which intermediate densities and drifts live: the union of
    /// both marginal grids, widened by a quarter of its length on each side.
    double flow_lo() const;
    double flow_hi() const;
    double flow_dx() const;
};

/// Iterative proportional fitting. Throws ConvergenceError when maxiter is
/// reached and DomainError when the marginals cannot be coupled through the
/// kernel (support mismatch).
BridgePotentials1D ipf_solve(const GridDensity1D& rhohat0, const GridDensity1D& rhohat1, const PriorKernel1D& prior,
                             const IpfOptions& options = {});

/// rho(t, .) = phi(t, .) phihat(t, .). t = 0 and t = 1 return the marginal
/// grids; other times use the flow grid with `points` nodes.
GridDensity1D bridge_density(const BridgePotentials1D& pot, double t, int points = 0);

/// u(t, x) = eps b d/dx log phi(t, x) by a central difference of one flow-grid
/// step. Throws DomainError within 3 steps of the flow-grid boundary.
double bridge_drift(const BridgePotentials1D& pot, double t, double x);

/// Bridge drift sampled on a time-space lattice and interpolated bilinearly.
/// Beyond the x range the last two columns are extrapolated linearly.
class DriftTable1D {
public:
    DriftTable1D(const BridgePotentials1D& pot, int time_points = 101, int x_points = 384);

    double operator()(double t, double x) const;
    double x_lo() const { return x_lo_; }
    double x_hi() const { return x_hi_; }

private:
    int nt_;
    int nx_;
    double x_lo_;
    double x_hi_;
    std::vector<double> u_;
};

/// The full solution for general marginals: the zero-mean bridge moved along
/// the mean path of a steering solution.
struct MeanShiftedBridge {
    FeedbackPolicy policy;
    std::function<GridDensity1D(double)> density;
    /// g(x, mu) = -eps log phi(1, x - mean(mu)) - m(1) x - gamma(1)
    std::function<double(double, double)> terminal_cost;
};

/// Policy u(t, x) = drift(t, x - y(t)) + b m(t). With `tabulate` the drift is
/// read from a DriftTable1D (fast, for simulation); otherwise bridge_drift is
/// evaluated directly.
MeanShiftedBridge compose_mean_shift(const BridgePotentials1D& pot, const MeanSteering& steering,
                                     bool tabulate = true);

}  // namespace mfsteer

#endif  // MFSTEER_BRIDGE1D_HPP
