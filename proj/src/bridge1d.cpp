#include "mfsteer/bridge1d.hpp"

#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mfsteer {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Uniform grid geometry shared by the two marginals.
struct Lattice {
    double x0;
    double dx;
    int n;
    double x(int k) const { return x0 + dx * k; }
};

Lattice lattice_of(const GridDensity1D& g) { return {g.x0(), g.dx(), g.size()}; }

double max_finite(const std::vector<double>& v) {
    double m = kNegInf;
    for (double x : v)
        if (x > m) m = x;
    return m;
}

// log of the trapezoid sum  sum_j N(y_j; mu, s^2) exp(ell_j) dx.
double log_gauss_sum(const Lattice& lat, const std::vector<double>& ell, double ell_max, double mu, double s) {
    const double inv2s2 = 0.5 / (s * s);
    // Terms whose Gaussian factor alone puts them 60 nats below a reference
    // term are dropped; the reference is the best term near mu.
    int lo = 0, hi = lat.n - 1;
    const int near = static_cast<int>(std::lround((mu - lat.x0) / lat.dx));
    double ref = kNegInf;
    for (int j = std::max(0, near - 4); j <= std::min(lat.n - 1, near + 4); ++j) {
        if (ell[j] == kNegInf) continue;
        const double d = lat.x(j) - mu;
        ref = std::max(ref, ell[j] - d * d * inv2s2);
    }
    if (ref > kNegInf) {
        const double radius = s * std::sqrt(2.0 * (ell_max - ref + 60.0));
        lo = std::max(lo, static_cast<int>(std::floor((mu - radius - lat.x0) / lat.dx)));
        hi = std::min(hi, static_cast<int>(std::ceil((mu + radius - lat.x0) / lat.dx)));
    }
    double best = kNegInf;
    for (int j = lo; j <= hi; ++j) {
        if (ell[j] == kNegInf) continue;
        const double d = lat.x(j) - mu;
        best = std::max(best, ell[j] - d * d * inv2s2);
    }
    if (best == kNegInf) return kNegInf;
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) {
        if (ell[j] == kNegInf) continue;
        const double d = lat.x(j) - mu;
        acc += std::exp(ell[j] - d * d * inv2s2 - best);
    }
    return best + std::log(acc) + std::log(lat.dx / (std::sqrt(2.0 * std::numbers::pi) * s));
}

// log int N(y; mu, s^2) exp(ell(y)) dy for grid data ell. Kernels narrower
// than the grid are handled by integrating the local quadratic through the
// three nodes nearest mu exactly; wider ones by the trapezoid rule.
double log_smooth(const Lattice& lat, const std::vector<double>& ell, double ell_max, double mu, double s) {
    if (s >= 1.5 * lat.dx) return log_gauss_sum(lat, ell, ell_max, mu, s);
    const int j0 = std::clamp(static_cast<int>(std::lround((mu - lat.x0) / lat.dx)), 1, lat.n - 2);
    const double lm = ell[j0 - 1], l0 = ell[j0], lp = ell[j0 + 1];
    const bool inside = mu >= lat.x(0) - 0.5 * lat.dx && mu <= lat.x(lat.n - 1) + 0.5 * lat.dx;
    const bool smooth = lm != kNegInf && l0 != kNegInf && lp != kNegInf;
    // Past the grid ends a point evaluation continues the edge quadratic.
    if (!inside && !(s == 0.0 && smooth)) return s > 0.0 ? log_gauss_sum(lat, ell, ell_max, mu, s) : kNegInf;
    if (!smooth) {
        if (s > 0.0) return log_gauss_sum(lat, ell, ell_max, mu, s);
        // Edge of the support: interpolate the potential itself linearly.
        const double u = std::clamp((mu - lat.x0) / lat.dx, 0.0, lat.n - 1.0);
        const int k = std::min(static_cast<int>(u), lat.n - 2);
        const double f = u - k;
        const double value = (1.0 - f) * std::exp(ell[k] - ell_max) + f * std::exp(ell[k + 1] - ell_max);
        return value > 0.0 ? ell_max + std::log(value) : kNegInf;
    }
    const double g = (lp - lm) / (2.0 * lat.dx);
    const double k = (lp - 2.0 * l0 + lm) / (lat.dx * lat.dx);
    const double z = mu - lat.x(j0);
    if (s == 0.0) return l0 + g * z + 0.5 * k * z * z;
    const double s2 = s * s;
    const double p = 1.0 / s2 - k;
    if (p <= 0.0) return log_gauss_sum(lat, ell, ell_max, mu, s);
    const double b = z / s2 + g;
    return l0 - 0.5 * std::log(p * s2) + b * b / (2.0 * p) - z * z / (2.0 * s2);
}

double log_sum_exp(const std::vector<double>& terms) {
    double best = kNegInf;
    for (double t : terms) best = std::max(best, t);
    if (best == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

// ---------------------------------------------------------------------------
// GridDensity1D

GridDensity1D::GridDensity1D(double x0, double dx, std::vector<double> weights)
    : x0_(x0), dx_(dx), w_(std::move(weights)) {
    if (w_.size() < 3) throw DomainError("grid density needs at least 3 nodes");
    if (!(dx_ > 0.0) || !std::isfinite(dx_) || !std::isfinite(x0_))
        throw DomainError("grid density needs a finite positive spacing");
    double mass = 0.0, peak = 0.0;
    for (double w : w_) {
        if (!std::isfinite(w) || w < 0.0) throw DomainError("grid density weights must be finite and nonnegative");
        mass += w;
        peak = std::max(peak, w);
    }
    mass *= dx_;
    if (!(mass > 0.0)) throw DomainError("grid density has zero mass");
    if (w_.front() > 1e-12 * peak || w_.back() > 1e-12 * peak)
        throw DomainError("grid density support reaches the grid boundary");
    double first = 0.0;
    for (int k = 0; k < size(); ++k) {
        w_[k] /= mass;
        first += x(k) * w_[k];
    }
    mean_ = first * dx_;
    cum_.assign(size(), 0.0);
    for (int j = 0; j + 1 < size(); ++j) cum_[j + 1] = cum_[j] + 0.5 * (w_[j] + w_[j + 1]);
}

GridDensity1D GridDensity1D::from_function(double lo, double hi, int points,
                                           const std::function<double(double)>& f) {
    if (points < 3 || !(hi > lo)) throw DomainError("grid needs lo < hi and at least 3 points");
    const double dx = (hi - lo) / (points - 1);
    std::vector<double> w(points);
    for (int k = 0; k < points; ++k) w[k] = f(lo + dx * k);
    return GridDensity1D(lo, dx, std::move(w));
}

GridDensity1D GridDensity1D::gaussian(double mean, double variance, int points, double halfwidth) {
    if (!(variance > 0.0)) throw DomainError("gaussian grid density needs a positive variance");
    const double sd = std::sqrt(variance);
    return from_function(mean - halfwidth * sd, mean + halfwidth * sd, points, [&](double x) {
        const double z = (x - mean) / sd;
        return std::exp(-0.5 * z * z);
    });
}

GridDensity1D GridDensity1D::read_csv(std::istream& in) {
    std::vector<double> xs, ws;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line) || line[line.find_first_not_of(" \t")] == '#') continue;
        const auto comma = line.find(',');
        const auto x = comma == std::string::npos ? std::nullopt : parse_double(line.substr(0, comma));
        const auto w = comma == std::string::npos ? std::nullopt : parse_double(line.substr(comma + 1));
        if (!x || !w) {
            if (xs.empty() && lineno == 1) continue;  // header
            throw DomainError("grid csv line " + std::to_string(lineno) + ": expected two numbers");
        }
        xs.push_back(*x);
        ws.push_back(*w);
    }
    if (xs.size() < 3) throw DomainError("grid csv needs at least 3 rows");
    const double dx = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (std::abs(xs[k] - (xs.front() + dx * static_cast<double>(k))) > 1e-6 * dx)
            throw DomainError("grid csv nodes are not uniformly spaced (row " + std::to_string(k + 1) + ")");
    return GridDensity1D(xs.front(), dx, std::move(ws));
}

GridDensity1D GridDensity1D::read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open grid csv " + path);
    return read_csv(in);
}

void GridDensity1D::write_csv(std::ostream& out) const {
    out << "x,weight\n";
    for (int k = 0; k < size(); ++k) out << format_double(x(k)) << ',' << format_double(w_[k]) << '\n';
}

std::vector<double> GridDensity1D::xs() const {
    std::vector<double> out(size());
    for (int k = 0; k < size(); ++k) out[k] = x(k);
    return out;
}

double GridDensity1D::variance() const {
    double acc = 0.0;
    for (int k = 0; k < size(); ++k) acc += (x(k) - mean_) * (x(k) - mean_) * w_[k];
    return acc * dx_;
}

double GridDensity1D::operator()(double xv) const {
    const double u = (xv - x0_) / dx_;
    if (!(u >= 0.0) || u > size() - 1) return 0.0;
    const int k = std::min(static_cast<int>(u), size() - 2);
    const double f = u - k;
    return (1.0 - f) * w_[k] + f * w_[k + 1];
}

double GridDensity1D::cdf(double xv) const {
    const double u = (xv - x0_) / dx_;
    if (!(u > 0.0)) return 0.0;
    if (u >= size() - 1) return 1.0;
    // Trapezoid mass of the interpolant, rescaled so cdf(hi) = 1.
    const int k = static_cast<int>(u);
    const double f = u - k;
    const double below = cum_[k] + f * w_[k] + 0.5 * f * f * (w_[k + 1] - w_[k]);
    return std::min(1.0, below / cum_.back());
}

double GridDensity1D::quantile(double q) const {
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
    const double target = q * cum_.back();
    // First cell with positive mass whose upper cumulative value reaches the target.
    int j = static_cast<int>(std::lower_bound(cum_.begin() + 1, cum_.end(), target) - cum_.begin()) - 1;
    while (j + 1 < size() && cum_[j + 1] - cum_[j] <= 0.0) ++j;
    if (j + 1 >= size()) return hi();
    // Solve w_j f + (w_{j+1} - w_j) f^2 / 2 = target - cum_j for f in [0, 1].
    const double a = 0.5 * (w_[j + 1] - w_[j]);
    const double b = w_[j];
    const double c = cum_[j] - target;
    double f;
    if (std::abs(a) < 1e-14 * (std::abs(b) + 1e-300)) {
        f = -c / b;
    } else {
        const double disc = std::max(0.0, b * b - 4.0 * a * c);
        f = (2.0 * -c) / (b + std::sqrt(disc));
    }
    return x(j) + dx_ * std::clamp(f, 0.0, 1.0);
}

GridDensity1D GridDensity1D::shifted(double shift) const {
    GridDensity1D out = *this;
    out.x0_ += shift;
    double first = 0.0;
    for (int k = 0; k < size(); ++k) first += out.x(k) * w_[k];
    out.mean_ = first * dx_;
    return out;
}

double l1_distance(const GridDensity1D& a, const GridDensity1D& b) {
    const bool same = a.size() == b.size() && std::abs(a.x0() - b.x0()) <= 1e-12 * (1.0 + std::abs(a.x0())) &&
                      std::abs(a.dx() - b.dx()) <= 1e-14 * a.dx();
    if (same) {
        double acc = 0.0;
        for (int k = 0; k < a.size(); ++k) acc += std::abs(a.weights()[k] - b.weights()[k]);
        return acc * a.dx();
    }
    // Different grids: trapezoid on the finer of the two, over the union.
    const double dx = std::min(a.dx(), b.dx());
    const double lo = std::min(a.lo(), b.lo());
    const double hi = std::max(a.hi(), b.hi());
    const int n = static_cast<int>(std::ceil((hi - lo) / dx)) + 1;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += std::abs(a(lo + k * dx) - b(lo + k * dx));
    return acc * dx;
}

std::pair<GridDensity1D, double> center_marginal(const GridDensity1D& rho) {
    const double mean = rho.mean();
    return {rho.shifted(-mean), mean};
}

// ---------------------------------------------------------------------------
// Kernels

double GaussianKernel1D::log_density(double x, double y) const {
    const double d = y - phi * x;
    return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

double GaussianKernel1D::operator()(double x, double y) const { return std::exp(log_density(x, y)); }

ScalarPrior1D::ScalarPrior1D(const SystemDynamics& dyn, int steps) : grid_(0.0, 1.0, steps) {
    dyn.validate();
    if (dyn.n() != 1 || dyn.m_in() != 1) throw DimensionError("scalar prior needs a scalar state and input");
    if (dyn.B(0, 0) == 0.0) throw DomainError("scalar prior needs b != 0");
    b_ = dyn.B(0, 0);
    const TransitionData data = tabulate_transition(dyn, grid_);
    a_.resize(steps + 1);
    phi_.resize(steps + 1);
    gram_.resize(steps + 1);
    for (int k = 0; k <= steps; ++k) {
        a_[k] = dyn.a_at(grid_.node(k))(0, 0);
        phi_[k] = data.phi[k](0, 0);
        gram_[k] = data.gram_M[k](0, 0);
    }
}

PriorKernel1D::PriorKernel1D(const SystemDynamics& dyn, int steps) : ScalarPrior1D(dyn, steps) {
    if (!(dyn.eps > 0.0)) throw DomainError("bridge prior needs eps > 0; use the zero-noise transport for eps = 0");
    eps_ = dyn.eps;
}

namespace {
double hermite(double p0, double d0, double p1, double d1, double h, double f) {
    const double f2 = f * f, f3 = f2 * f;
    return (2 * f3 - 3 * f2 + 1) * p0 + (f3 - 2 * f2 + f) * h * d0 + (-2 * f3 + 3 * f2) * p1 + (f3 - f2) * h * d1;
}
}  // namespace

double ScalarPrior1D::phi0(double t) const {
    const auto [i, f] = grid_.locate(t);
    if (f == 0.0) return phi_[i];
    return hermite(phi_[i], a_[i] * phi_[i], phi_[i + 1], a_[i + 1] * phi_[i + 1], grid_.dt(), f);
}

double ScalarPrior1D::gram0(double t) const {
    const auto [i, f] = grid_.locate(t);
    if (f == 0.0) return gram_[i];
    const double b2 = b_ * b_;
    return hermite(gram_[i], 2 * a_[i] * gram_[i] + b2, gram_[i + 1], 2 * a_[i + 1] * gram_[i + 1] + b2,
                   grid_.dt(), f);
}

double ScalarPrior1D::phi(double t, double s) const {
    if (t == s) return 1.0;
    return phi0(t) / phi0(s);
}

double ScalarPrior1D::gramian(double t, double s) const {
    if (t == s) return 0.0;
    const double p = phi(t, s);
    return std::max(0.0, gram0(t) - p * p * gram0(s));
}

GaussianKernel1D PriorKernel1D::at(double s, double t) const {
    if (!(s >= 0.0 && t <= 1.0 && s < t)) throw DomainError("transition kernel needs 0 <= s < t <= 1");
    return {phi(t, s), eps_ * gramian(t, s)};
}

GaussianKernel1D transition_kernel(const SystemDynamics& dyn, double s, double t) {
    return PriorKernel1D(dyn).at(s, t);
}

// ---------------------------------------------------------------------------
// Schroedinger system

double BridgePotentials1D::log_phi(double t, double x) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bridge time outside [0, 1]");
    const Lattice lat = lattice_of(rho1);
    const double lmax = max_finite(log_phi1);
    if (t == 1.0) return log_smooth(lat, log_phi1, lmax, x, 0.0);
    const double s = std::sqrt(prior.eps() * prior.gramian(1.0, t));
    return log_smooth(lat, log_phi1, lmax, prior.phi(1.0, t) * x, s);
}

double BridgePotentials1D::log_phihat(double t, double x) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bridge time outside [0, 1]");
    const Lattice lat = lattice_of(rho0);
    const double lmax = max_finite(log_phihat0);
    if (t == 0.0) return log_smooth(lat, log_phihat0, lmax, x, 0.0);
    const double p = prior.phi(t, 0.0);
    const double s = std::sqrt(prior.eps() * prior.gramian(t, 0.0)) / std::abs(p);
    return -std::log(std::abs(p)) + log_smooth(lat, log_phihat0, lmax, x / p, s);
}

double BridgePotentials1D::flow_lo() const {
    const double lo = std::min(rho0.lo(), rho1.lo());
    const double hi = std::max(rho0.hi(), rho1.hi());
    return lo - 0.25 * (hi - lo);
}

double BridgePotentials1D::flow_hi() const {
    const double lo = std::min(rho0.lo(), rho1.lo());
    const double hi = std::max(rho0.hi(), rho1.hi());
    return hi + 0.25 * (hi - lo);
}

double BridgePotentials1D::flow_dx() const { return std::min(rho0.dx(), rho1.dx()); }

BridgePotentials1D ipf_solve(const GridDensity1D& rhohat0, const GridDensity1D& rhohat1, const PriorKernel1D& prior,
                             const IpfOptions& options) {
    for (const GridDensity1D* r : {&rhohat0, &rhohat1})
        if (std::abs(r->mean()) > 1e-8 * (1.0 + std::sqrt(r->variance())))
            throw DomainError("bridge marginals must be centered (see center_marginal)");

    // Work on the supports only.
    std::vector<int> s0, s1;
    for (int i = 0; i < rhohat0.size(); ++i)
        if (rhohat0.weights()[i] > 0.0) s0.push_back(i);
    for (int j = 0; j < rhohat1.size(); ++j)
        if (rhohat1.weights()[j] > 0.0) s1.push_back(j);
    const int n0 = static_cast<int>(s0.size());
    const int n1 = static_cast<int>(s1.size());
    const double h0 = rhohat0.dx(), h1 = rhohat1.dx();

    const GaussianKernel1D kern = prior.at(0.0, 1.0);
    auto log_k = [&](int i, int j) { return kern.log_density(rhohat0.x(s0[i]), rhohat1.x(s1[j])); };

    // Targets of the two half steps: log a_i = log(mu_i / h1) - log sum_j K_ij b_j.
    Eigen::ArrayXd log_mu(n0), log_nu(n1);
    for (int i = 0; i < n0; ++i) log_mu(i) = std::log(rhohat0.weights()[s0[i]] / h1);
    for (int j = 0; j < n1; ++j) log_nu(j) = std::log(rhohat1.weights()[s1[j]] / h0);

    // Stabilized scaling: f = F + log u, g = G + log v, E = exp(log K + F + G).
    Eigen::ArrayXd F(n0), G = Eigen::ArrayXd::Zero(n1);
    {
        std::vector<double> terms(n1);
        for (int i = 0; i < n0; ++i) {
            for (int j = 0; j < n1; ++j) terms[j] = log_k(i, j);
            F(i) = log_mu(i) - log_sum_exp(terms);
        }
    }
    Eigen::MatrixXd E(n0, n1);
    auto rebuild = [&]() {
        for (int j = 0; j < n1; ++j)
            for (int i = 0; i < n0; ++i) E(i, j) = std::exp(log_k(i, j) + F(i) + G(j));
    };
    rebuild();
    Eigen::ArrayXd log_u = Eigen::ArrayXd::Zero(n0), log_v = Eigen::ArrayXd::Zero(n1);

    // Exact log of (E' u)_j or (E v)_i when the scaled product underflows.
    auto log_col = [&](int j) {
        std::vector<double> terms(n0);
        for (int i = 0; i < n0; ++i) terms[i] = log_k(i, j) + F(i) + G(j) + log_u(i);
        return log_sum_exp(terms);
    };
    auto log_row = [&](int i) {
        std::vector<double> terms(n1);
        for (int j = 0; j < n1; ++j) terms[j] = log_k(i, j) + F(i) + G(j) + log_v(j);
        return log_sum_exp(terms);
    };
    auto safe_log = [](double value, const auto& fallback, bool& absorb) {
        if (value > 1e-280 && std::isfinite(value)) return std::log(value);
        absorb = true;
        const double l = fallback();
        if (l == kNegInf) throw DomainError("bridge marginals cannot be coupled through the prior (support mismatch)");
        return l;
    };

    const double w = options.relaxation;
    if (!(w >= 1.0 && w < 2.0)) throw DomainError("bridge relaxation factor must lie in [1, 2)");

    BridgePotentials1D pot{rhohat0, rhohat1, {}, {}, prior};
    Eigen::VectorXd col = E.transpose() * log_u.exp().matrix();
    int it = 0;
    double err1 = std::numeric_limits<double>::infinity();
    while (it < options.maxiter) {
        ++it;
        bool absorb = false;
        for (int j = 0; j < n1; ++j)
            log_v(j) = (1.0 - w) * log_v(j) + w * (log_nu(j) - safe_log(col(j), [&] { return log_col(j); }, absorb));
        const Eigen::VectorXd row = E * log_v.exp().matrix();
        for (int i = 0; i < n0; ++i)
            log_u(i) = (1.0 - w) * log_u(i) + w * (log_mu(i) - safe_log(row(i), [&] { return log_row(i); }, absorb));

        if (absorb || log_u.abs().maxCoeff() > 100.0 || log_v.abs().maxCoeff() > 100.0) {
            F += log_u;
            G += log_v;
            log_u.setZero();
            log_v.setZero();
            rebuild();
        }
        col = E.transpose() * log_u.exp().matrix();
        // Terminal marginal of the current coupling.
        err1 = 0.0;
        for (int j = 0; j < n1; ++j) {
            const double got = std::exp(log_v(j)) * col(j) * h0;
            err1 += std::abs(got - rhohat1.weights()[s1[j]]);
        }
        err1 *= h1;
        if (err1 <= options.tol) break;
    }

    const Eigen::VectorXd row = E * log_v.exp().matrix();
    double err0 = 0.0;
    for (int i = 0; i < n0; ++i) err0 += std::abs(std::exp(log_u(i)) * row(i) * h1 - rhohat0.weights()[s0[i]]);
    err0 *= h0;

    pot.log_phihat0.assign(rhohat0.size(), kNegInf);
    pot.log_phi1.assign(rhohat1.size(), kNegInf);
    for (int i = 0; i < n0; ++i) pot.log_phihat0[s0[i]] = F(i) + log_u(i);
    for (int j = 0; j < n1; ++j) pot.log_phi1[s1[j]] = G(j) + log_v(j);
    pot.iterations = it;
    pot.error0 = err0;
    pot.error1 = err1;
    pot.converged = err0 <= options.tol && err1 <= options.tol;
    if (!pot.converged && options.throw_on_failure)
        throw ConvergenceError("bridge fitting did not reach marginal error " + format_double(options.tol) +
                                   " (terminal error " + format_double(err1) + ")",
                               it);
    return pot;
}

GridDensity1D bridge_density(const BridgePotentials1D& pot, double t, int points) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bridge time outside [0, 1]");
    if (t == 0.0 || t == 1.0) {
        const GridDensity1D& g = t == 0.0 ? pot.rho0 : pot.rho1;
        std::vector<double> w(g.size());
        for (int k = 0; k < g.size(); ++k) {
            const double l = pot.log_phi(t, g.x(k)) + pot.log_phihat(t, g.x(k));
            w[k] = std::isfinite(l) ? std::exp(l) : 0.0;
        }
        return GridDensity1D(g.x0(), g.dx(), std::move(w));
    }
    const double lo = pot.flow_lo(), hi = pot.flow_hi();
    if (points <= 0) points = static_cast<int>(std::lround((hi - lo) / pot.flow_dx())) + 1;
    const double dx = (hi - lo) / (points - 1);
    std::vector<double> w(points);
    for (int k = 0; k < points; ++k) {
        const double x = lo + dx * k;
        const double l = pot.log_phi(t, x) + pot.log_phihat(t, x);
        w[k] = std::isfinite(l) ? std::exp(l) : 0.0;
    }
    return GridDensity1D(lo, dx, std::move(w));
}

double bridge_drift(const BridgePotentials1D& pot, double t, double x) {
    const double d = pot.flow_dx();
    if (!(x >= pot.flow_lo() + 3 * d && x <= pot.flow_hi() - 3 * d))
        throw DomainError("bridge drift requested at x=" + format_double(x) + ", outside the interior of the flow grid");
    const double up = pot.log_phi(t, x + d);
    const double down = pot.log_phi(t, x - d);
    if (!std::isfinite(up) || !std::isfinite(down))
        throw DomainError("bridge drift requested where the potential vanishes (x=" + format_double(x) + ")");
    return pot.prior.eps() * pot.prior.b() * (up - down) / (2.0 * d);
}

// ---------------------------------------------------------------------------
// Tabulated drift

DriftTable1D::DriftTable1D(const BridgePotentials1D& pot, int time_points, int x_points)
    : nt_(time_points), nx_(x_points) {
    if (nt_ < 2 || nx_ < 2) throw DomainError("drift table needs at least 2 points per axis");
    const double d = pot.flow_dx();
    x_lo_ = pot.flow_lo() + 4 * d;
    x_hi_ = pot.flow_hi() - 4 * d;
    u_.resize(static_cast<std::size_t>(nt_) * nx_);
    for (int i = 0; i < nt_; ++i) {
        const double t = static_cast<double>(i) / (nt_ - 1);
        for (int k = 0; k < nx_; ++k) {
            const double x = x_lo_ + (x_hi_ - x_lo_) * k / (nx_ - 1);
            u_[static_cast<std::size_t>(i) * nx_ + k] = bridge_drift(pot, t, x);
        }
    }
}

double DriftTable1D::operator()(double t, double x) const {
    if (!(t >= -1e-12 && t <= 1.0 + 1e-12)) throw DomainError("drift table time outside [0, 1]");
    const double tu = std::clamp(t, 0.0, 1.0) * (nt_ - 1);
    const int i = std::min(static_cast<int>(tu), nt_ - 2);
    const double ft = tu - i;
    const double xu = (x - x_lo_) / (x_hi_ - x_lo_) * (nx_ - 1);
    const int k = std::clamp(static_cast<int>(std::floor(xu)), 0, nx_ - 2);
    const double fx = xu - k;  // outside [0, 1] beyond the edges: linear extrapolation
    auto at = [&](int ti, int xi) { return u_[static_cast<std::size_t>(ti) * nx_ + xi]; };
    const double lower = (1.0 - fx) * at(i, k) + fx * at(i, k + 1);
    const double upper = (1.0 - fx) * at(i + 1, k) + fx * at(i + 1, k + 1);
    return (1.0 - ft) * lower + ft * upper;
}

// ---------------------------------------------------------------------------
// Mean shift

MeanShiftedBridge compose_mean_shift(const BridgePotentials1D& pot, const MeanSteering& steering, bool tabulate) {
    if (steering.y.empty() || steering.y.front().size() != 1)
        throw DimensionError("mean steering for a bridge must be scalar");
    auto shared = std::make_shared<const BridgePotentials1D>(pot);
    auto steer = std::make_shared<const MeanSteering>(steering);
    const double b = pot.prior.b();

    FeedbackPolicy::Evaluator eval;
    if (tabulate) {
        auto table = std::make_shared<const DriftTable1D>(pot);
        eval = [table, steer, b](double t, const Eigen::VectorXd& x) {
            return Eigen::VectorXd::Constant(1, (*table)(t, x(0) - steer->y_at(t)(0)) + b * steer->m_at(t)(0));
        };
    } else {
        eval = [shared, steer, b](double t, const Eigen::VectorXd& x) {
            return Eigen::VectorXd::Constant(1, bridge_drift(*shared, t, x(0) - steer->y_at(t)(0)) +
                                                    b * steer->m_at(t)(0));
        };
    }

    MeanShiftedBridge out{FeedbackPolicy::general(eval, PolicyMode::bridge, pot.prior.eps(), 0.0, 1.0), {}, {}};
    out.density = [shared, steer](double t) { return bridge_density(*shared, t).shifted(steer->y_at(t)(0)); };
    out.terminal_cost = [shared, steer](double x, double population_mean) {
        const double m1 = steer->m.back()(0);
        return -shared->prior.eps() * shared->log_phi(1.0, x - population_mean) - m1 * x - steer->gamma.back();
    };
    return out;
}

}  // namespace mfsteer
