#include "mfsteer/omt1d.hpp"

#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cmath>
#include <memory>

namespace mfsteer {

namespace {

void require_centered(const GridDensity1D& r) {
    if (std::abs(r.mean()) > 1e-8 * (1.0 + std::sqrt(r.variance())))
        throw DomainError("transport marginals must be centered (see center_marginal)");
}

void check_resolution(const GridDensity1D& r, const char* name, std::vector<std::string>& warnings) {
    int support = 0;
    double largest = 0.0;
    for (double w : r.weights()) {
        if (w > 0.0) ++support;
        largest = std::max(largest, w * r.dx());
    }
    if (support < 8 || largest > 0.25)
        warnings.push_back(std::string(name) + " is concentrated on a few grid cells; refine the grid");
}

double invert_interior(const TransportMap1D& T, double a, double c, double x);

}  // namespace

double TransportMap1D::operator()(double x) const { return rho1.quantile(rho0.cdf(x)); }

double TransportMap1D::inverse(double y) const { return rho0.quantile(rho1.cdf(y)); }

double TransportMap1D::coef_identity(double t) const {
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    // Phi(t, 1) M(1, t) M10^{-1} Phi10 = Phi(t, 0) M(1, t) / M10
    return prior.phi(t, 0.0) * prior.gramian(1.0, t) / gram10;
}

double TransportMap1D::coef_map(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return prior.gramian(t, 0.0) * prior.phi(1.0, t) / gram10;
}

TransportMap1D monotone_map(const GridDensity1D& rhohat0, const GridDensity1D& rhohat1, const SystemDynamics& dyn) {
    require_centered(rhohat0);
    require_centered(rhohat1);
    if (dyn.n() != 1 || dyn.m_in() != 1) throw DimensionError("monotone transport needs a scalar state and input");
    ScalarPrior1D prior(dyn);
    const double phi10 = prior.phi(1.0, 0.0);
    const double gram10 = prior.gramian(1.0, 0.0);
    if (!(phi10 > 0.0)) throw DomainError("monotone transport needs Phi(1, 0) > 0");
    if (!(gram10 > 0.0)) throw SingularError("reachability Gramian M(1, 0) vanishes", 0.0);

    TransportMap1D T{rhohat0, rhohat1, {}, prior, phi10, gram10, {}};
    check_resolution(rhohat0, "initial marginal", T.warnings);
    check_resolution(rhohat1, "terminal marginal", T.warnings);
    T.samples.resize(rhohat0.size());
    for (int k = 0; k < rhohat0.size(); ++k) T.samples[k] = T(rhohat0.x(k));
    return T;
}

double displacement_interpolate(const TransportMap1D& T, double t, double x) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("displacement time outside [0, 1]");
    if (t == 0.0) return x;
    if (t == 1.0) return T(x);
    const double a = T.coef_identity(t), c = T.coef_map(t);
    if (a < 0.0 || c < 0.0)
        throw InvariantError("displacement interpolation is not monotone at t=" + format_double(t));
    return a * x + c * T(x);
}

double displacement_inverse(const TransportMap1D& T, double t, double x) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("displacement time outside [0, 1]");
    if (t == 0.0) return x;
    if (t == 1.0) {
        const double tmin = T.rho1.quantile(0.0), tmax = T.rho1.quantile(1.0);
        if (!(x >= tmin && x <= tmax))
            throw DomainError("x=" + format_double(x) + " lies outside the range of the transport map");
        return T.inverse(x);
    }
    return invert_interior(T, T.coef_identity(t), T.coef_map(t), x);
}

namespace {

// T_t^{-1}(x) for 0 < t < 1 given the two coefficients of T_t.
double invert_interior(const TransportMap1D& T, double a, double c, double x) {
    if (!(a > 0.0) || c < 0.0) throw InvariantError("displacement interpolation is not monotone");
    const GridDensity1D& g = T.rho0;
    const int last = g.size() - 1;
    auto Tt = [&](double z) { return a * z + c * T(z); };
    // Beyond the source grid T is constant, so T_t is affine there.
    if (x <= a * g.lo() + c * T.samples.front()) return (x - c * T.samples.front()) / a;
    if (x >= a * g.hi() + c * T.samples.back()) return (x - c * T.samples.back()) / a;
    // Bisection over the node table, then a bracketed (Illinois) refinement
    // inside the cell.
    int lo = 0, hi = last;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (a * g.x(mid) + c * T.samples[mid] < x)
            lo = mid;
        else
            hi = mid;
    }
    double zl = g.x(lo), zh = g.x(hi);
    double fl = a * zl + c * T.samples[lo] - x, fh = a * zh + c * T.samples[hi] - x;
    const double tol = 1e-10 * (g.hi() - g.lo());
    int side = 0;
    for (int it = 0; it < 200 && zh - zl > tol; ++it) {
        double z = fh != fl ? zl - fl * (zh - zl) / (fh - fl) : 0.5 * (zl + zh);
        if (!(z > zl && z < zh)) z = 0.5 * (zl + zh);
        const double f = Tt(z) - x;
        if (f == 0.0) return z;
        if (f < 0.0) {
            zl = z;
            fl = f;
            if (side == -1) fh *= 0.5;
            side = -1;
        } else {
            zh = z;
            fh = f;
            if (side == 1) fl *= 0.5;
            side = 1;
        }
        // Illinois steps can stall on one side; fall back to halving.
        if (it % 8 == 7) {
            const double mid = 0.5 * (zl + zh);
            const double fm = Tt(mid) - x;
            if (fm < 0.0) {
                zl = mid;
                fl = fm;
            } else {
                zh = mid;
                fh = fm;
            }
        }
    }
    return fl == 0.0 ? zl : (fh == 0.0 ? zh : 0.5 * (zl + zh));
}

}  // namespace

double pushforward_cdf(const TransportMap1D& T, double t, double x) {
    if (t == 1.0) return T.rho1.cdf(x);
    return T.rho0.cdf(displacement_inverse(T, t, x));
}

GridDensity1D pushforward_density(const TransportMap1D& T, double t, int points) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("displacement time outside [0, 1]");
    if (t == 0.0) return T.rho0;
    if (t == 1.0) return T.rho1;
    if (points <= 0) points = std::max(T.rho0.size(), T.rho1.size());
    if (points < 8) throw DomainError("push-forward grid needs at least 8 points");
    const double lo = displacement_interpolate(T, t, T.rho0.lo());
    const double hi = displacement_interpolate(T, t, T.rho0.hi());
    const double dx = (hi - lo) / (points - 5);
    const double x0 = lo - 2 * dx;
    std::vector<double> w(points);
    double below = pushforward_cdf(T, t, x0 - 0.5 * dx);
    for (int k = 0; k < points; ++k) {
        const double above = pushforward_cdf(T, t, x0 + (k + 0.5) * dx);
        w[k] = std::max(0.0, above - below) / dx;
        below = above;
    }
    return GridDensity1D(x0, dx, std::move(w));
}

FeedbackPolicy zero_noise_policy(const TransportMap1D& T, const MeanSteering& steering) {
    if (steering.y.empty() || steering.y.front().size() != 1)
        throw DimensionError("mean steering for a scalar transport must be scalar");
    auto map = std::make_shared<const TransportMap1D>(T);
    auto steer = std::make_shared<const MeanSteering>(steering);
    // Everything except the inversion depends on t only; particles of one
    // time step share it through a per-thread cache.
    struct StepData {
        std::uint64_t owner = 0;
        double t = -1.0;
        double a = 1.0, c = 0.0, gain = 0.0, y = 0.0, drift = 0.0;
    };
    static std::atomic<std::uint64_t> next_id{1};
    const std::uint64_t id = next_id++;
    auto eval = [map, steer, id](double t, const Eigen::VectorXd& x) {
        const TransportMap1D& M = *map;
        thread_local StepData cache;
        if (cache.owner != id || cache.t != t) {
            const double b = M.prior.b();
            cache = {id, t, M.coef_identity(t), M.coef_map(t), b * M.prior.phi(1.0, t) / M.gram10,
                     steer->y_at(t)(0), b * steer->m_at(t)(0)};
        }
        const double shifted = x(0) - cache.y;
        const double z = t == 0.0 ? shifted
                         : t == 1.0 ? displacement_inverse(M, t, shifted)
                                    : invert_interior(M, cache.a, cache.c, shifted);
        return Eigen::VectorXd::Constant(1, cache.gain * (M(z) - M.phi10 * z) + cache.drift);
    };
    return FeedbackPolicy::general(eval, PolicyMode::zero_noise, 0.0, 0.0, 1.0);
}

GridDensity1D zero_noise_density(const TransportMap1D& T, const MeanSteering& steering, double t, int points) {
    return pushforward_density(T, t, points).shifted(steering.y_at(t)(0));
}

}  // namespace mfsteer
