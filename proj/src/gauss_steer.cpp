#include "mfsteer/gauss_steer.hpp"

#include "mfsteer/errors.hpp"
#include "rk4.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace mfsteer {

GaussianDensity GaussianDensity::scalar(double mean, double variance) {
    return {Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, variance)};
}

void GaussianDensity::validate() const {
    const auto n = mean.size();
    if (n == 0) throw DimensionError("Gaussian density has empty mean");
    if (cov.rows() != n || cov.cols() != n) throw DimensionError("covariance must be n x n with n = size(mean)");
    if (!mean.allFinite() || !cov.allFinite()) throw DomainError("Gaussian density has non-finite entries");
    if ((cov - cov.transpose()).norm() > 1e-10 * std::max(1.0, cov.norm()))
        throw DomainError("covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(cov), Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0))
        throw DomainError("covariance is not positive definite (smallest eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
}

double TerminalCostSpec::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& population_mean) const {
    const Eigen::VectorXd d = x - (anchor ? *anchor : population_mean);
    double g = d.dot(quad * d) + lin.dot(x);
    if (include_constant) g += constant;
    return g;
}

namespace {

void check_marginals(const GaussianDensity& rho0, const GaussianDensity& rho1, const SystemDynamics& dyn) {
    dyn.validate();
    rho0.validate();
    rho1.validate();
    if (rho0.dim() != dyn.n() || rho1.dim() != dyn.n())
        throw DimensionError("marginal dimension does not match the state dimension");
}

}  // namespace

Eigen::MatrixXd riccati_initial(const GaussianDensity& rho0, const GaussianDensity& rho1,
                                const SystemDynamics& dyn, const TimeGrid& grid) {
    check_marginals(rho0, rho1, dyn);
    const auto n = dyn.n();
    const double t0 = grid.t0();
    const double t1 = grid.t1();
    const double eps = dyn.eps;

    const Eigen::MatrixXd phi10 = transition_matrix(dyn, Flow::plain, t1, t0, grid);
    const Eigen::MatrixXd m10 = gramian(dyn, GramianKind::M, t1, t0, grid, /*require_invertible=*/true);
    const Eigen::MatrixXd m10_inv = m10.inverse();

    const Eigen::MatrixXd s0_half = sqrtm_spd(rho0.cov);
    const Eigen::MatrixXd s0_half_inv = s0_half.inverse();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    const Eigen::MatrixXd pull = s0_half * phi10.transpose() * m10_inv;
    const Eigen::MatrixXd drift_term = symmetrize(pull * phi10 * s0_half);
    const Eigen::MatrixXd target_term = symmetrize(pull * rho1.cov * pull.transpose());
    const Eigen::MatrixXd root = sqrtm_spd(0.25 * eps * eps * I + target_term);
    return symmetrize(s0_half_inv * (0.5 * eps * I + drift_term - root) * s0_half_inv);
}

RiccatiSolution riccati_propagate(const Eigen::MatrixXd& pi0, const SystemDynamics& dyn, const TimeGrid& grid) {
    dyn.validate();
    const auto n = dyn.n();
    if (pi0.rows() != n || pi0.cols() != n) throw DimensionError("pi0 must be n x n");
    if ((pi0 - pi0.transpose()).norm() > 1e-9 * std::max(1.0, pi0.norm()))
        throw DomainError("pi0 must be symmetric");

    const Eigen::MatrixXd bbt = dyn.bbt();
    // State block-diagonal [Pi, 0; 0, c] with c' = tr(B B' Pi).
    const auto field = [&](double t, const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
        const Eigen::MatrixXd a = dyn.a_at(t);
        const auto pi = s.topLeftCorner(n, n);
        Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(n + 1, n + 1);
        ds.topLeftCorner(n, n) = -a.transpose() * pi - pi * a + pi * bbt * pi;
        ds(n, n) = (bbt * pi).trace();
        return ds;
    };

    RiccatiSolution sol{grid, {}, {}, dyn.B, dyn.eps};
    sol.pi.reserve(grid.steps() + 1);
    sol.trace_integral.reserve(grid.steps() + 1);

    Eigen::MatrixXd state = Eigen::MatrixXd::Zero(n + 1, n + 1);
    state.topLeftCorner(n, n) = symmetrize(pi0);
    sol.pi.push_back(state.topLeftCorner(n, n));
    sol.trace_integral.push_back(0.0);
    const double h = grid.dt();
    for (int i = 0; i < grid.steps(); ++i) {
        state = detail::rk4_step(field, grid.node(i), state, h);
        if (!state.allFinite() || state.cwiseAbs().maxCoeff() > 1e150)
            throw DivergenceError("Riccati solution escaped", grid.node(i + 1));
        state.topLeftCorner(n, n) = symmetrize(state.topLeftCorner(n, n));
        sol.pi.push_back(state.topLeftCorner(n, n));
        sol.trace_integral.push_back(state(n, n));
    }
    return sol;
}

MeanSteering mean_steering(const GaussianDensity& rho0, const GaussianDensity& rho1, const SystemDynamics& dyn,
                           GameMode mode, const TimeGrid& grid) {
    check_marginals(rho0, rho1, dyn);
    const auto n = dyn.n();
    const double t0 = grid.t0();
    const double t1 = grid.t1();

    const Eigen::MatrixXd phibar10 = transition_matrix(dyn, Flow::bar, t1, t0, grid);
    const Eigen::MatrixXd gram = mode == GameMode::noncoop
                                     ? gramian(dyn, GramianKind::Mbar, t1, t0, grid, true)
                                     : gramian(dyn, GramianKind::Mhat, t1, t0, grid, true);
    const Eigen::VectorXd shift = rho1.mean - phibar10 * rho0.mean;
    const Eigen::VectorXd m_end = gram.partialPivLu().solve(shift);
    // m(t) = Phi(1,t)' m_end (Phibar for coop), so m(t0) = Phi(1,t0)' m_end.
    const Eigen::MatrixXd adj10 = transition_matrix(dyn, mode == GameMode::noncoop ? Flow::plain : Flow::bar, t1,
                                                    t0, grid);
    const Eigen::VectorXd m_start = adj10.transpose() * m_end;

    const Eigen::MatrixXd bbt = dyn.bbt();
    // Joint state [y; m; gamma].
    const auto field = [&](double t, const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
        const Eigen::MatrixXd a = dyn.a_at(t);
        const Eigen::MatrixXd abar = a + dyn.Abar;
        const auto y = s.col(0).head(n);
        const auto m = s.col(0).segment(n, n);
        Eigen::MatrixXd ds(2 * n + 1, 1);
        ds.col(0).head(n) = abar * y + bbt * m;
        ds.col(0).segment(n, n) = mode == GameMode::noncoop ? Eigen::VectorXd(-a.transpose() * m)
                                                            : Eigen::VectorXd(-abar.transpose() * m);
        ds(2 * n, 0) = -((dyn.Abar * y).dot(m) + 0.5 * m.dot(bbt * m));
        return ds;
    };
    Eigen::MatrixXd s0(2 * n + 1, 1);
    s0.col(0).head(n) = rho0.mean;
    s0.col(0).segment(n, n) = m_start;
    s0(2 * n, 0) = 0.0;
    const auto traj = integrate_ode(field, s0, grid);

    MeanSteering out{grid, {}, {}, {}, mode, dyn.B, dyn.Abar};
    for (const auto& s : traj) {
        out.y.push_back(s.col(0).head(n));
        out.m.push_back(s.col(0).segment(n, n));
        out.gamma.push_back(s(2 * n, 0));
    }
    const double miss = (out.y.back() - rho1.mean).norm();
    if (miss > 1e-6 * (1.0 + rho1.mean.norm()))
        throw InvariantError("mean steering misses the target mean by " + std::to_string(miss) +
                             " (integration accuracy)");
    return out;
}

TerminalCostSpec terminal_cost(const RiccatiSolution& riccati, const MeanSteering& steering,
                               const TerminalCostOptions& options) {
    if (steering.mode != GameMode::noncoop)
        throw DomainError("terminal cost is defined for the noncooperative game only");
    TerminalCostSpec spec;
    spec.quad = 0.5 * riccati.pi.back();
    spec.lin = -steering.m.back();
    spec.constant = -steering.gamma.back();
    spec.include_constant = options.include_constant;
    if (options.mean_independent) {
        spec.anchor = steering.y.back();
        spec.constant -= 0.5 * riccati.eps * riccati.trace_integral.back();
        spec.include_constant = true;
    }
    return spec;
}

namespace {

FeedbackPolicy make_policy(const RiccatiSolution& riccati, const MeanSteering& steering, PolicyMode mode) {
    // Capture by value: the policy outlives its inputs.
    auto gains = [riccati, steering](double t) {
        const Eigen::MatrixXd pi = riccati.pi_at(t);
        const Eigen::MatrixXd bt = riccati.B.transpose();
        AffineGain g;
        g.K = -bt * pi;
        g.k = bt * (pi * steering.y_at(t) + steering.m_at(t));
        return g;
    };
    return FeedbackPolicy::affine(std::move(gains), mode, riccati.eps, riccati.grid.t0(), riccati.grid.t1());
}

}  // namespace

FeedbackPolicy feedback_noncoop(const RiccatiSolution& riccati, const MeanSteering& steering) {
    if (steering.mode != GameMode::noncoop) throw DomainError("feedback_noncoop needs noncooperative steering");
    return make_policy(riccati, steering, PolicyMode::noncoop);
}

FeedbackPolicy feedback_coop(const RiccatiSolution& riccati, const MeanSteering& steering) {
    if (steering.mode != GameMode::coop) throw DomainError("feedback_coop needs cooperative steering");
    return make_policy(riccati, steering, PolicyMode::coop);
}

Eigen::VectorXd coop_offset(const RiccatiSolution& riccati, const MeanSteering& steering, double t) {
    return riccati.pi_at(t) * steering.y_at(t) + steering.m_at(t);
}

Eigen::VectorXd coop_offset_expanded(const RiccatiSolution& riccati, const SystemDynamics& dyn,
                                     const Eigen::VectorXd& mean0, const Eigen::VectorXd& mean1, double t) {
    const TimeGrid& grid = riccati.grid;
    const double t0 = grid.t0();
    const double t1 = grid.t1();
    const Eigen::MatrixXd pi = riccati.pi_at(t);
    const Eigen::MatrixXd phibar10 = transition_matrix(dyn, Flow::bar, t1, t0, grid);
    const Eigen::MatrixXd phibar1t = transition_matrix(dyn, Flow::bar, t1, t, grid);
    const Eigen::MatrixXd phibar_t1 = phibar1t.inverse();
    const Eigen::MatrixXd mhat10_inv = gramian(dyn, GramianKind::Mhat, t1, t0, grid, true).inverse();
    const Eigen::MatrixXd mhat1t = gramian(dyn, GramianKind::Mhat, t1, t, grid);
    const Eigen::MatrixXd mhat_t0 = gramian(dyn, GramianKind::Mhat, t, t0, grid);

    return pi * phibar_t1 * mhat1t * mhat10_inv * phibar10 * mean0 +
           pi * mhat_t0 * phibar1t.transpose() * mhat10_inv * mean1 +
           phibar1t.transpose() * mhat10_inv * (mean1 - phibar10 * mean0);
}

double value_field(const RiccatiSolution& riccati, const MeanSteering& steering, double t,
                   const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = x - steering.y_at(t);
    return -0.5 * z.dot(riccati.pi_at(t) * z) + 0.5 * riccati.eps * riccati.trace_integral_at(t) +
           steering.m_at(t).dot(x) + steering.gamma_at(t);
}

Eigen::VectorXd value_gradient(const RiccatiSolution& riccati, const MeanSteering& steering, double t,
                               const Eigen::VectorXd& x) {
    return -riccati.pi_at(t) * (x - steering.y_at(t)) + steering.m_at(t);
}

FeedbackPolicy GaussianDesign::policy() const {
    return mode == GameMode::noncoop ? feedback_noncoop(riccati, steering) : feedback_coop(riccati, steering);
}

GaussianDesign design_gaussian(const GaussianDensity& rho0, const GaussianDensity& rho1, const SystemDynamics& dyn,
                               GameMode mode, const TimeGrid& grid) {
    Eigen::MatrixXd pi0 = riccati_initial(rho0, rho1, dyn, grid);
    RiccatiSolution riccati = riccati_propagate(pi0, dyn, grid);
    MeanSteering steering = mean_steering(rho0, rho1, dyn, mode, grid);
    return {dyn, rho0, rho1, mode, std::move(pi0), std::move(riccati), std::move(steering)};
}

}  // namespace mfsteer
