#ifndef MFSTEER_OMT1D_HPP
#define MFSTEER_OMT1D_HPP

#include "mfsteer/bridge1d.hpp"
#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"
#include "mfsteer/policy.hpp"

#include <string>
#include <vector>

namespace mfsteer {

/// Monotone rearrangement T = F1^{-1} o F0 between two centered scalar
/// marginals, together with the prior quantities needed to interpolate it.
struct TransportMap1D {
    GridDensity1D rho0;
    GridDensity1D rho1;
    /// T at the nodes of rho0.
    std::vector<double> samples;
    ScalarPrior1D prior;
    double phi10 = 1.0;
    double gram10 = 1.0;
    /// Set when a marginal puts most of its mass in very few cells.
    std::vector<std::string> warnings;

    /// Exact composition of the two piecewise-quadratic CDF tables.
    double operator()(double x) const;
    /// F0^{-1} o F1, the inverse on the support of rho1.
    double inverse(double y) const;
    /// Coefficients of T_t(x) = a(t) x + c(t) T(x).
    double coef_identity(double t) const;
    double coef_map(double t) const;
};

/// Throws DimensionError unless n = m = 1, DomainError for uncentered
/// marginals or a transition that does not preserve order.
TransportMap1D monotone_map(const GridDensity1D& rhohat0, const GridDensity1D& rhohat1, const SystemDynamics& dyn);

/// T_t(x). T_0 is the identity and T_1 = T, with no rounding.
double displacement_interpolate(const TransportMap1D& T, double t, double x);

/// Solves T_t(z) = x by bisection. Throws DomainError when x lies outside
/// the range of T_t (only possible at t = 1).
double displacement_inverse(const TransportMap1D& T, double t, double x);

/// CDF of (T_t) pushed forward rho0, i.e. F0(T_t^{-1}(x)).
double pushforward_cdf(const TransportMap1D& T, double t, double x);

/// (T_t) pushed forward rho0 on a grid covering the image of the support of
/// rho0, by differencing the push-forward CDF over cells.
GridDensity1D pushforward_density(const TransportMap1D& T, double t, int points = 0);

/// u(t, x) = b Phi(1, t) M10^{-1} (T(z) - Phi10 z) + b m(t) with
/// z = T_t^{-1}(x - y(t)).
FeedbackPolicy zero_noise_policy(const TransportMap1D& T, const MeanSteering& steering);

/// The zero-noise flow shifted by the mean path.
GridDensity1D zero_noise_density(const TransportMap1D& T, const MeanSteering& steering, double t, int points = 0);

}  // namespace mfsteer

#endif  // MFSTEER_OMT1D_HPP
