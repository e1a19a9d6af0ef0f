#include "pipeline.hpp"

#include "mfsteer/bridge1d.hpp"
#include "mfsteer/errors.hpp"
#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/io.hpp"
#include "mfsteer/mfsim.hpp"
#include "mfsteer/omt1d.hpp"
#include "mfsteer/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

namespace mfsteer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Route { gaussian, bridge, transport, stationary };

std::string route_name(Route r) {
    switch (r) {
        case Route::gaussian: return "gaussian";
        case Route::bridge: return "bridge";
        case Route::transport: return "transport";
        case Route::stationary: return "stationary";
    }
    return "?";
}

json to_json(const Eigen::MatrixXd& m) {
    auto rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double normal_cdf(double x, double mean, double sd) { return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2)); }

double normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// A distribution an ensemble is compared with.
struct Reference {
    std::optional<GaussianDensity> gauss;
    std::optional<GridDensity1D> grid;
};

/// Marginal density of one coordinate, nonzero on [lo, hi].
struct Marginal1D {
    double lo;
    double hi;
    std::function<double(double)> pdf;
};

struct Design {
    Route route;
    TimeGrid grid;
    SystemDynamics dyn;
    json doc;
    std::vector<Check> checks;
    std::optional<FeedbackPolicy> policy;
    Reference initial;
    Reference terminal;
    std::function<Eigen::VectorXd(double)> model_mean;
    std::function<std::vector<Marginal1D>(double)> flow;
};

Check make_check(std::string name, double value, double tolerance, std::string detail = {}) {
    return {std::move(name), value, tolerance, std::isfinite(value) && value <= tolerance, std::move(detail)};
}

GridDensity1D to_grid(const ScenarioConfig& c, const MarginalSpec& spec) {
    if (spec.is_grid()) return GridDensity1D::read_csv(c.resolve(*spec.grid).string());
    return GridDensity1D::gaussian(spec.mean(0), spec.cov(0, 0), c.numerics.grid_points);
}

GameMode game_mode(const ScenarioConfig& c) { return c.mode == ScenarioMode::coop ? GameMode::coop : GameMode::noncoop; }

std::vector<Marginal1D> gaussian_marginals(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    std::vector<Marginal1D> out;
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        const double mu = mean(i), sd = std::sqrt(std::max(cov(i, i), 0.0));
        out.push_back({mu - 6.0 * sd, mu + 6.0 * sd, [mu, sd](double x) { return normal_pdf(x, mu, sd); }});
    }
    return out;
}

Marginal1D grid_marginal(const GridDensity1D& g) {
    return {g.lo(), g.hi(), [g](double x) { return g(x); }};
}

/// Every k-th node with positive weight, at most about `limit` of them.
std::vector<double> sample_nodes(const GridDensity1D& g, int limit = 257) {
    const int stride = std::max(1, g.size() / limit);
    std::vector<double> xs;
    for (int k = 0; k < g.size(); k += stride)
        if (g.weights()[k] > 0.0) xs.push_back(g.x(k));
    return xs;
}

void base_doc(Design& d, const ScenarioConfig& c) {
    d.doc["mode"] = to_string(c.mode);
    d.doc["route"] = route_name(d.route);
    d.doc["n"] = d.dyn.n();
    d.doc["m"] = d.dyn.m_in();
    d.doc["epsilon"] = d.dyn.eps;
}

void steering_doc(Design& d, const MeanSteering& s) {
    d.doc["m1"] = to_json(s.m.back());
    d.doc["y1"] = to_json(s.y.back());
    d.doc["gamma1"] = s.gamma.back();
}

// ---------------------------------------------------------------------------
// Routes

Design gaussian_route(const ScenarioConfig& c) {
    Design d{Route::gaussian, TimeGrid(0.0, 1.0, c.numerics.steps), c.dyn, json::object(), {}, {}, {}, {}, {}, {}};
    base_doc(d, c);
    const auto rho0 = c.initial->gaussian(), rho1 = c.terminal->gaussian();
    const auto g = design_gaussian(rho0, rho1, c.dyn, game_mode(c), d.grid);
    d.doc["pi0"] = to_json(g.pi0);
    d.doc["pi1"] = to_json(g.riccati.pi.back());
    steering_doc(d, g.steering);
    if (g.mode == GameMode::noncoop) {
        const auto cost = g.cost();
        d.doc["terminal_cost"] = {{"form", "(x - mean)' quad (x - mean) + lin . x"},
                                  {"quad", to_json(cost.quad)},
                                  {"lin", to_json(cost.lin)}};
    } else {
        d.doc["coop_offset0"] = to_json(coop_offset(g.riccati, g.steering, 0.0));
        d.doc["coop_offset1"] = to_json(coop_offset(g.riccati, g.steering, 1.0));
    }

    const auto traj = std::make_shared<MomentTrajectory>(moment_oracle(rho0, c.dyn, g.riccati, g.steering, d.grid));
    const double mean_err = (traj->mean.back() - rho1.mean).norm() / std::max(1.0, rho1.mean.norm());
    const double cov_err = (traj->cov.back() - rho1.cov).norm() / rho1.cov.norm();
    d.checks.push_back(make_check("oracle_terminal_mean", mean_err, 1e-6, "relative"));
    d.checks.push_back(make_check("oracle_terminal_cov", cov_err, 1e-5, "relative, Frobenius"));

    d.policy = g.policy();
    d.initial.gauss = rho0;
    d.terminal.gauss = rho1;
    const TimeGrid grid = d.grid;
    d.model_mean = [traj, grid](double t) { return interpolate_samples(grid, traj->mean, t); };
    d.flow = [traj, grid](double t) {
        return gaussian_marginals(interpolate_samples(grid, traj->mean, t), interpolate_samples(grid, traj->cov, t));
    };
    return d;
}

Design stationary_route(const ScenarioConfig& c) {
    const double h = c.horizon();
    Design d{Route::stationary, TimeGrid(0.0, h, c.numerics.steps), c.dyn, json::object(), {}, {}, {}, {}, {}, {}};
    base_doc(d, c);
    const auto target = c.target->gaussian();
    const auto feas = check_feasibility(target, c.dyn);
    const Eigen::MatrixXd& A = c.dyn.A;
    const double cov_scale = (A * target.cov + target.cov * A.transpose()).norm();
    const double mean_scale = ((A + c.dyn.Abar) * target.mean).norm();
    d.doc["feasibility"] = {{"feasible", feas.feasible},
                            {"covariance_residual", feas.covariance_residual},
                            {"mean_residual", feas.mean_residual}};
    d.checks.push_back(make_check("target_covariance_feasible", feas.covariance_residual, 1e-8 * (1.0 + cov_scale)));
    d.checks.push_back(make_check("target_mean_feasible", feas.mean_residual, 1e-8 * (1.0 + mean_scale)));
    if (!feas.feasible) return d;

    const auto s = design_stationary(target, c.dyn);
    d.doc["pi"] = to_json(s.pi);
    d.doc["nvec"] = to_json(s.nvec);
    d.doc["Q"] = to_json(s.Q);
    d.doc["eta"] = s.eta;
    d.doc["unique"] = s.unique;
    d.doc["cost_form"] = "1/2 x'Qx + n.(A - BB'Pi)x - mean.Abar'Pi x";

    const Eigen::MatrixXd bbt = c.dyn.bbt();
    const Eigen::MatrixXd F = A - bbt * s.pi;
    const Eigen::MatrixXd Fbar = F + c.dyn.Abar;
    const double lyap = (F * target.cov + target.cov * F.transpose() + c.dyn.eps * bbt).norm();
    const double drift = (Fbar * target.mean + bbt * s.nvec).norm();
    d.checks.push_back(make_check("target_invariant", std::max(lyap, drift),
                                  1e-8 * (1.0 + bbt.norm()) * (1.0 + target.cov.norm() + target.mean.norm()),
                                  "closed-loop moment residual at the target"));
    const double abscissa =
        std::max(F.eigenvalues().real().maxCoeff(), Fbar.eigenvalues().real().maxCoeff());
    d.checks.push_back(make_check("closed_loop_stable", abscissa, -1e-12, "largest real part of A-BB'Pi, A+Abar-BB'Pi"));
    d.policy = stationary_policy(s);

    // Mean and covariance of the closed loop from the initial law.
    const GaussianDensity start = c.initial ? c.initial->gaussian() : target;
    const int n = c.dyn.n();
    const Eigen::VectorXd offset = bbt * s.nvec;
    const Eigen::MatrixXd noise = c.dyn.eps * bbt;
    Eigen::MatrixXd x0(n, n + 1);
    x0 << start.mean, start.cov;
    const auto field = [=](double, const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd dx(n, n + 1);
        const Eigen::MatrixXd S = x.rightCols(n);
        dx.col(0) = Fbar * x.col(0) + offset;
        dx.rightCols(n) = F * S + S * F.transpose() + noise;
        return dx;
    };
    const auto path = std::make_shared<std::vector<Eigen::MatrixXd>>(integrate_ode(field, x0, d.grid));
    const Eigen::MatrixXd end = path->back();
    d.initial.gauss = start;
    d.terminal.gauss = GaussianDensity{end.col(0), symmetrize(end.rightCols(n))};
    const TimeGrid grid = d.grid;
    d.model_mean = [path, grid](double t) -> Eigen::VectorXd { return interpolate_samples(grid, *path, t).col(0); };
    d.flow = [path, grid, n](double t) {
        const Eigen::MatrixXd x = interpolate_samples(grid, *path, t);
        return gaussian_marginals(x.col(0), x.rightCols(n));
    };
    return d;
}

Design bridge_route(const ScenarioConfig& c) {
    Design d{Route::bridge, TimeGrid(0.0, 1.0, c.numerics.steps), c.dyn, json::object(), {}, {}, {}, {}, {}, {}};
    base_doc(d, c);
    const auto r0 = to_grid(c, *c.initial), r1 = to_grid(c, *c.terminal);
    const auto [c0, shift0] = center_marginal(r0);
    const auto [c1, shift1] = center_marginal(r1);
    const auto g0 = GaussianDensity::scalar(r0.mean(), r0.variance());
    const auto g1 = GaussianDensity::scalar(r1.mean(), r1.variance());
    const auto steering = mean_steering(g0, g1, c.dyn, game_mode(c), d.grid);
    const PriorKernel1D prior(c.dyn);
    const auto& k = c.numerics;
    const auto pot = std::make_shared<BridgePotentials1D>(ipf_solve(c0, c1, prior, {k.tol, k.maxiter, true, k.relaxation}));
    const auto composed = compose_mean_shift(*pot, steering, true);

    d.doc["shift0"] = shift0;
    d.doc["shift1"] = shift1;
    d.doc["ipf"] = {{"converged", pot->converged},
                    {"iterations", pot->iterations},
                    {"error0", pot->error0},
                    {"error1", pot->error1}};
    steering_doc(d, steering);
    std::vector<double> xs, gs;
    for (double x : sample_nodes(r1)) {
        const double g = composed.terminal_cost(x, r1.mean());
        if (std::isfinite(g)) xs.push_back(x), gs.push_back(g);
    }
    d.doc["terminal_cost"] = {{"form", "-eps log phi(1, x - mean) - m1 . x - gamma1"},
                              {"population_mean", r1.mean()},
                              {"x", xs},
                              {"g", gs}};

    d.checks.push_back(make_check("ipf_residual", std::max(pot->error0, pot->error1), k.tol));
    d.checks.push_back(make_check("bridge_l1_initial", l1_distance(composed.density(0.0), r0), 1e-7));
    d.checks.push_back(make_check("bridge_l1_terminal", l1_distance(composed.density(1.0), r1), 1e-7));
    double flow_mean = 0.0;
    for (double t : c.snapshot_times()) flow_mean = std::max(flow_mean, std::abs(bridge_density(*pot, t).mean()));
    d.checks.push_back(make_check("bridge_zero_mean_flow", flow_mean, 1e-6, "max over snapshots"));

    // Gaussian marginals: the bridge drift must be the affine Riccati feedback.
    if (!c.initial->is_grid() && !c.terminal->is_grid()) {
        const auto g = design_gaussian(GaussianDensity::scalar(0.0, r0.variance()),
                                       GaussianDensity::scalar(0.0, r1.variance()), c.dyn, GameMode::noncoop, d.grid);
        double worst = 0.0;
        for (double t : c.snapshot_times()) {
            const double pi = g.riccati.pi_at(t)(0, 0);
            const double sd = std::sqrt(bridge_density(*pot, t).variance());
            for (int j = -40; j <= 40; ++j) {
                const double x = j * sd / 20.0;
                worst = std::max(worst, std::abs(bridge_drift(*pot, t, x) + pi * x));
            }
        }
        d.checks.push_back(make_check("bridge_drift_vs_riccati", worst, 1e-3, "sup over |x| <= 2 sd at snapshots"));
    }

    d.policy = composed.policy;
    d.initial.grid = r0;
    d.terminal.grid = r1;
    const auto steer = std::make_shared<MeanSteering>(steering);
    d.model_mean = [steer](double t) { return steer->y_at(t); };
    const auto density = composed.density;
    d.flow = [density](double t) { return std::vector<Marginal1D>{grid_marginal(density(t))}; };
    return d;
}

Design transport_route(const ScenarioConfig& c) {
    Design d{Route::transport, TimeGrid(0.0, 1.0, c.numerics.steps), c.dyn, json::object(), {}, {}, {}, {}, {}, {}};
    base_doc(d, c);
    const auto r0 = to_grid(c, *c.initial), r1 = to_grid(c, *c.terminal);
    const auto [c0, shift0] = center_marginal(r0);
    const auto [c1, shift1] = center_marginal(r1);
    const auto steering = mean_steering(GaussianDensity::scalar(r0.mean(), r0.variance()),
                                        GaussianDensity::scalar(r1.mean(), r1.variance()), c.dyn, GameMode::noncoop,
                                        d.grid);
    const auto T = std::make_shared<TransportMap1D>(monotone_map(c0, c1, c.dyn));

    d.doc["shift0"] = shift0;
    d.doc["shift1"] = shift1;
    d.doc["phi10"] = T->phi10;
    d.doc["gram10"] = T->gram10;
    d.doc["warnings"] = T->warnings;
    steering_doc(d, steering);
    std::vector<double> xs, ts;
    for (double x : sample_nodes(c0)) xs.push_back(x), ts.push_back((*T)(x));
    d.doc["map"] = {{"form", "centered marginals, T = F1^-1 o F0"}, {"x", xs}, {"T", ts}};

    double decrease = 0.0;
    for (std::size_t k = 1; k < T->samples.size(); ++k)
        decrease = std::max(decrease, T->samples[k - 1] - T->samples[k]);
    d.checks.push_back(make_check("transport_monotone", decrease, 0.0));
    double worst = 0.0;
    for (int q = 1; q <= 9; ++q)
        worst = std::max(worst, std::abs((*T)(c0.quantile(0.1 * q)) - c1.quantile(0.1 * q)));
    d.checks.push_back(
        make_check("transport_quantiles", worst, 2.0 * std::max(c0.dx(), c1.dx()) + 1e-3, "q = 0.1, ..., 0.9"));

    d.policy = zero_noise_policy(*T, steering);
    d.initial.grid = r0;
    d.terminal.grid = r1;
    const auto steer = std::make_shared<MeanSteering>(steering);
    d.model_mean = [steer](double t) { return steer->y_at(t); };
    d.flow = [T, steer](double t) {
        return std::vector<Marginal1D>{grid_marginal(zero_noise_density(*T, *steer, t))};
    };
    return d;
}

Design compute_design(const ScenarioConfig& c, bool force_bridge) {
    if (c.mode == ScenarioMode::stationary) {
        if (force_bridge) throw ConfigError({"mode: the bridge needs mode noncoop or coop"});
        return stationary_route(c);
    }
    const bool grid = c.initial->is_grid() || c.terminal->is_grid();
    if (force_bridge) {
        std::vector<std::string> errs;
        if (c.mode == ScenarioMode::zero_noise) errs.push_back("mode: the bridge needs mode noncoop or coop");
        if (c.dyn.n() != 1 || c.dyn.m_in() != 1) errs.push_back("dynamics.B: the bridge needs a scalar state and input");
        if (!(c.dyn.eps > 0.0)) errs.push_back("dynamics.epsilon: the bridge needs epsilon > 0");
        if (!errs.empty()) throw ConfigError(errs);
        return bridge_route(c);
    }
    if (grid) return c.mode == ScenarioMode::zero_noise ? transport_route(c) : bridge_route(c);
    return gaussian_route(c);
}

// ---------------------------------------------------------------------------
// Ensemble checks

std::vector<Check> ensemble_checks(const Eigen::MatrixXd& states, const Reference& ref, const std::string& prefix) {
    std::vector<Check> out;
    const int N = static_cast<int>(states.rows());
    const int n = static_cast<int>(states.cols());
    const auto stats = ensemble_stats(states);
    if (ref.gauss) {
        const auto& g = *ref.gauss;
        const double mean_tol = 5.0 * std::sqrt(g.cov.diagonal().maxCoeff() / N) + 1e-3;
        out.push_back(make_check(prefix + "_mean", (stats.mean - g.mean).cwiseAbs().maxCoeff(), mean_tol,
                                 "max over coordinates; 5 standard errors"));
        double var_sum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) var_sum += g.cov(i, i) * g.cov(j, j) + g.cov(i, j) * g.cov(i, j);
        const double cov_tol = 5.0 * std::sqrt(var_sum / N) + 1e-3 * (1.0 + g.cov.norm());
        out.push_back(make_check(prefix + "_cov", (stats.cov - g.cov).norm(), cov_tol, "Frobenius; 5 standard errors"));
        double ks = 0.0;
        for (int i = 0; i < n; ++i) {
            const double mu = g.mean(i), sd = std::sqrt(g.cov(i, i));
            const auto s = ensemble_stats(Eigen::MatrixXd(states.col(i)), [=](double x) { return normal_cdf(x, mu, sd); });
            ks = std::max(ks, *s.ks);
        }
        out.push_back(make_check(prefix + "_ks", ks, ks_critical(N, 0.01 / n),
                                 "max over coordinates, 1% level (Bonferroni)"));
    } else if (ref.grid) {
        const auto& g = *ref.grid;
        const double var = g.variance();
        double m4 = 0.0;
        for (int k = 0; k < g.size(); ++k) m4 += g.weights()[k] * std::pow(g.x(k) - g.mean(), 4) * g.dx();
        out.push_back(make_check(prefix + "_mean", std::abs(stats.mean(0) - g.mean()),
                                 5.0 * std::sqrt(var / N) + 1e-3 + g.dx(), "5 standard errors"));
        out.push_back(make_check(prefix + "_var", std::abs(stats.cov(0, 0) - var),
                                 5.0 * std::sqrt(std::max(m4 - var * var, 0.0) / N) + 1e-3 * (1.0 + var) + g.dx(),
                                 "5 standard errors"));
        const auto s = ensemble_stats(states, [&g](double x) { return g.cdf(x); });
        out.push_back(make_check(prefix + "_ks", *s.ks, ks_critical(N, 0.01), "1% level"));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writers

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

template <typename Fn>
void write_with(const fs::path& path, Fn fn) {
    std::ofstream out(path, std::ios::binary);
    fn(out);
    if (!out) throw Error("cannot write " + path.string());
}

void write_density_flow(const fs::path& path, const Design& d, const std::vector<double>& times, int points) {
    std::vector<std::vector<Marginal1D>> marg;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double t : times) {
        marg.push_back(d.flow(t));
        for (const auto& m : marg.back()) lo = std::min(lo, m.lo), hi = std::max(hi, m.hi);
    }
    const int n = d.dyn.n();
    write_with(path, [&](std::ostream& out) {
        out << "x";
        for (int i = 0; i < n; ++i)
            for (double t : times) out << "," << (n == 1 ? "" : "x" + std::to_string(i + 1) + ":") << "t=" << format_double(t);
        out << "\n";
        for (int k = 0; k < points; ++k) {
            const double x = lo + (hi - lo) * k / (points - 1);
            out << format_double(x);
            for (int i = 0; i < n; ++i)
                for (const auto& m : marg) out << "," << format_double(x >= m[i].lo && x <= m[i].hi ? m[i].pdf(x) : 0.0);
            out << "\n";
        }
    });
}

void write_mean_path(const fs::path& path, const Design& d, const SimOutput* sim) {
    const int n = d.dyn.n();
    write_with(path, [&](std::ostream& out) {
        out << "t";
        for (int i = 0; i < n; ++i) out << ",model_x" << i + 1;
        if (sim)
            for (int i = 0; i < n; ++i) out << ",sim_x" << i + 1;
        out << "\n";
        for (int k = 0; k <= d.grid.steps(); ++k) {
            const double t = d.grid.node(k);
            const Eigen::VectorXd mm = d.model_mean(t);
            out << format_double(t);
            for (int i = 0; i < n; ++i) out << "," << format_double(mm(i));
            if (sim)
                for (int i = 0; i < n; ++i) out << "," << format_double(sim->mean_path[k](i));
            out << "\n";
        }
    });
}

ParticleEnsemble initial_ensemble(const Reference& ref, int N, std::uint64_t seed) {
    return ref.gauss ? init_ensemble(*ref.gauss, N, seed) : init_ensemble(*ref.grid, N, seed);
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path.string() + ": not found"});
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
}

json verify_doc(const std::string& command, const std::vector<Check>& checks, const json& metrics) {
    return {{"command", command}, {"checks", checks_json(checks)}, {"metrics", metrics}, {"all_pass", all_pass(checks)}};
}

void write_manifest(const fs::path& out_dir, const std::string& command, const ScenarioConfig& c,
                    const std::vector<std::string>& artifacts) {
    json manifest = {{"tool", "mfsteer"}, {"command", command}, {"artifacts", artifacts}, {"config", scenario_json(c)}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

void report(std::ostream& log, const std::vector<Check>& checks) {
    for (const auto& c : checks)
        if (!c.pass)
            log << "check failed: " << c.name << " = " << format_double(c.value) << " (tolerance "
                << format_double(c.tolerance) << ")" << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
}

}  // namespace

nlohmann::json checks_json(const std::vector<Check>& checks) {
    auto arr = json::array();
    for (const auto& c : checks) {
        json j = {{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}};
        if (!c.detail.empty()) j["detail"] = c.detail;
        arr.push_back(j);
    }
    return arr;
}

bool all_pass(const std::vector<Check>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

nlohmann::json compute_design_json(const ScenarioConfig& config, bool force_bridge) {
    return compute_design(config, force_bridge).doc;
}

RunResult run_pipeline(const ScenarioConfig& config, const fs::path& out_dir, const RunOptions& options,
                       std::ostream& log) {
    fs::create_directories(out_dir);
    const ScenarioConfig saved = with_absolute_paths(config);
    RunResult res;

    Design d = compute_design(config, options.force_bridge);
    log << "design: route " << route_name(d.route) << "\n";
    for (const auto& w : d.doc.value("warnings", std::vector<std::string>{})) log << "warning: " << w << "\n";
    res.checks = d.checks;
    write_text(out_dir / "design.json", d.doc.dump(2) + "\n");
    write_text(out_dir / "scenario.yaml", emit_scenario(saved));
    res.artifacts = {"design.json", "scenario.yaml"};

    json metrics = json::object();
    if (options.simulate && d.policy) {
        const auto& s = config.simulation;
        const auto times = config.snapshot_times();
        write_density_flow(out_dir / "density_flow.csv", d, times, config.numerics.grid_points);
        log << "simulate: " << s.particles << " particles, " << d.grid.steps() << " steps, seed " << s.seed << "\n";
        const auto ens = initial_ensemble(d.initial, s.particles, s.seed);
        SimOptions opt;
        opt.snapshots = times;
        opt.threads = s.threads;
        const auto sim = simulate(ens, d.dyn, *d.policy, s.coupling, d.grid, opt);
        write_mean_path(out_dir / "mean_path.csv", d, &sim);
        write_with(out_dir / "ensemble_t0.csv", [&](std::ostream& out) { ens.write_csv(out); });
        write_with(out_dir / "ensemble_t1.csv", [&](std::ostream& out) { sim.final.write_csv(out); });
        res.artifacts.insert(res.artifacts.end(),
                             {"density_flow.csv", "mean_path.csv", "ensemble_t0.csv", "ensemble_t1.csv"});

        auto term = ensemble_checks(sim.final.states, d.terminal, "terminal");
        res.checks.insert(res.checks.end(), term.begin(), term.end());
        // Snapshot means against the model mean path, in units of 5 standard errors.
        double ratio = 0.0;
        for (std::size_t k = 0; k < sim.snapshot_times.size(); ++k) {
            const auto st = ensemble_stats(sim.snapshots[k]);
            const Eigen::VectorXd diff = st.mean - d.model_mean(sim.snapshot_times[k]);
            for (Eigen::Index i = 0; i < diff.size(); ++i) {
                const double tol = 5.0 * std::sqrt(st.cov(i, i) / s.particles) + 1e-3;
                ratio = std::max(ratio, std::abs(diff(i)) / tol);
            }
        }
        res.checks.push_back(make_check("mean_path", ratio, 1.0, "max |sim - model| / (5 standard errors + 1e-3)"));
        metrics["realized_cost"] = sim.realized_cost;
        metrics["particles"] = s.particles;
        metrics["snapshot_times"] = sim.snapshot_times;
    } else if (options.simulate) {
        log << "simulate: skipped, the design failed\n";
    }

    if (options.write_verify) {
        write_text(out_dir / "verify.json", verify_doc(options.command, res.checks, metrics).dump(2) + "\n");
        res.artifacts.push_back("verify.json");
    }
    res.artifacts.push_back("manifest.json");
    write_manifest(out_dir, options.command, saved, res.artifacts);
    report(log, res.checks);
    res.exit_code = all_pass(res.checks) ? 0 : 1;
    return res;
}

RunResult verify_artifacts(const ScenarioConfig& config, const fs::path& out_dir, std::ostream& log) {
    const json saved = read_json(out_dir / "design.json");
    const bool any_grid = config.mode != ScenarioMode::stationary &&
                          ((config.initial && config.initial->is_grid()) || (config.terminal && config.terminal->is_grid()));
    const bool forced = saved.value("route", "") == "bridge" && !any_grid;
    Design d = compute_design(config, forced);

    RunResult res;
    const std::string diff = json_mismatch(saved, d.doc, 1e-9);
    res.checks.push_back(make_check("design_reproduces", diff.empty() ? 0.0 : 1.0, 0.0, diff));
    res.checks.insert(res.checks.end(), d.checks.begin(), d.checks.end());

    const auto& s = config.simulation;
    if (fs::exists(out_dir / "ensemble_t0.csv")) {
        const Eigen::MatrixXd states = read_ensemble_csv(out_dir / "ensemble_t0.csv");
        const auto fresh = initial_ensemble(d.initial, static_cast<int>(states.rows()), s.seed);
        const double gap = states.cols() == fresh.states.cols() ? (states - fresh.states).cwiseAbs().maxCoeff()
                                                                 : std::numeric_limits<double>::infinity();
        res.checks.push_back(make_check("ensemble_t0_reproduces", gap, 0.0, "regenerated from the seed"));
    }
    if (fs::exists(out_dir / "ensemble_t1.csv")) {
        const Eigen::MatrixXd states = read_ensemble_csv(out_dir / "ensemble_t1.csv");
        if (states.cols() != d.dyn.n()) {
            res.checks.push_back(make_check("ensemble_t1_dimension", 1.0, 0.0));
        } else if (d.terminal.gauss || d.terminal.grid) {
            auto term = ensemble_checks(states, d.terminal, "terminal");
            res.checks.insert(res.checks.end(), term.begin(), term.end());
        }
    }
    write_text(out_dir / "verify.json", verify_doc("verify", res.checks, json::object()).dump(2) + "\n");
    res.artifacts = {"verify.json"};
    report(log, res.checks);
    res.exit_code = all_pass(res.checks) ? 0 : 1;
    return res;
}

Eigen::MatrixXd read_ensemble_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path.string() + ": not found"});
    std::string line;
    std::getline(in, line);
    const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int k = 0;
        while (std::getline(ss, cell, ',')) {
            const auto v = parse_double(cell);
            if (!v) throw ConfigError({path.string() + ": bad number '" + cell + "' on row " + std::to_string(rows + 1)});
            values.push_back(*v);
            ++k;
        }
        if (k != cols) throw ConfigError({path.string() + ": row " + std::to_string(rows + 1) + " has " + std::to_string(k) + " columns"});
        ++rows;
    }
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i) * cols + j];
    return out;
}

std::string json_mismatch(const json& a, const json& b, double rel, const std::string& path) {
    const std::string where = path.empty() ? "(root)" : path;
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>(), y = b.get<double>();
        if (std::abs(x - y) <= rel * std::max({1.0, std::abs(x), std::abs(y)})) return "";
        return where + ": " + format_double(x) + " vs " + format_double(y);
    }
    if (a.type() != b.type()) return where + ": type differs";
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) return path + "." + it.key() + ": missing";
            auto m = json_mismatch(it.value(), b[it.key()], rel, path + "." + it.key());
            if (!m.empty()) return m;
        }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key())) return path + "." + it.key() + ": unexpected";
        return "";
    }
    if (a.is_array()) {
        if (a.size() != b.size()) return where + ": length differs";
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto m = json_mismatch(a[i], b[i], rel, path + "[" + std::to_string(i) + "]");
            if (!m.empty()) return m;
        }
        return "";
    }
    return a == b ? "" : where + ": differs";
}

}  // namespace mfsteer::cli
