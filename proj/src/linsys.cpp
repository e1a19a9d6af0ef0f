#include "mfsteer/linsys.hpp"

#include "mfsteer/errors.hpp"
#include "rk4.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace mfsteer {

TimeGrid::TimeGrid(double t0, double t1, int steps) : t0_(t0), t1_(t1), steps_(steps) {
    if (!(t0 < t1)) throw DomainError("time grid requires t0 < t1");
    if (steps <= 0) throw DomainError("time grid requires a positive step count");
}

double TimeGrid::node(int i) const {
    if (i == steps_) return t1_;
    return t0_ + i * dt();
}

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> out(steps_ + 1);
    for (int i = 0; i <= steps_; ++i) out[i] = node(i);
    return out;
}

bool TimeGrid::covers(double s, double t) const {
    const double slack = 1e-12 * (t1_ - t0_);
    return s >= t0_ - slack && t <= t1_ + slack;
}

std::pair<int, double> TimeGrid::locate(double t) const {
    const double slack = 1e-12 * (t1_ - t0_);
    if (!(t >= t0_ - slack && t <= t1_ + slack)) {
        throw DomainError("time " + std::to_string(t) + " outside [" + std::to_string(t0_) + ", " +
                          std::to_string(t1_) + "]");
    }
    const double pos = std::clamp((t - t0_) / dt(), 0.0, static_cast<double>(steps_));
    int i = static_cast<int>(std::floor(pos));
    double frac = pos - i;
    if (i >= steps_) return {steps_, 0.0};
    if (frac < 1e-12) frac = 0.0;
    if (frac > 1.0 - 1e-12) {
        ++i;
        frac = 0.0;
    }
    return {i, frac};
}

SystemDynamics SystemDynamics::scalar(double a, double abar, double b, double eps) {
    SystemDynamics dyn;
    dyn.A = Eigen::MatrixXd::Constant(1, 1, a);
    dyn.Abar = Eigen::MatrixXd::Constant(1, 1, abar);
    dyn.B = Eigen::MatrixXd::Constant(1, 1, b);
    dyn.eps = eps;
    return dyn;
}

Eigen::MatrixXd SystemDynamics::a_at(double t) const {
    if (A_samples.empty()) return A;
    const int k = static_cast<int>(A_samples.size());
    if (k == 1) return A_samples.front();
    const double pos = std::clamp(t, 0.0, 1.0) * (k - 1);
    const int i = std::min(static_cast<int>(std::floor(pos)), k - 2);
    const double frac = pos - i;
    return (1.0 - frac) * A_samples[i] + frac * A_samples[i + 1];
}

void SystemDynamics::validate() const {
    const auto n = B.rows();
    if (n == 0 || B.cols() == 0) throw DimensionError("B must be non-empty");
    if (A_samples.empty()) {
        if (A.rows() != n || A.cols() != n) throw DimensionError("A must be n x n with n = rows(B)");
    } else {
        for (const auto& sample : A_samples) {
            if (sample.rows() != n || sample.cols() != n)
                throw DimensionError("every A sample must be n x n with n = rows(B)");
        }
    }
    if (Abar.rows() != n || Abar.cols() != n) throw DimensionError("Abar must be n x n with n = rows(B)");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw DomainError("noise intensity eps must be finite and >= 0");
}

namespace {

void check_span(const SystemDynamics& dyn, double t, double s, const TimeGrid& grid) {
    dyn.validate();
    if (!(s <= t)) throw DomainError("transition requires s <= t");
    if (!grid.covers(s, t)) throw DomainError("time grid does not cover [s, t]");
}

int substeps(double t, double s, const TimeGrid& grid) {
    return std::max(1, static_cast<int>(std::lround((t - s) / grid.dt())));
}

}  // namespace

Eigen::MatrixXd transition_matrix(const SystemDynamics& dyn, Flow which, double t, double s,
                                  const TimeGrid& grid) {
    check_span(dyn, t, s, grid);
    const auto n = dyn.n();
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
    if (t == s) return phi;
    const auto field = [&](double tau, const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd gen = dyn.a_at(tau);
        if (which == Flow::bar) gen += dyn.Abar;
        return gen * x;
    };
    const int k = substeps(t, s, grid);
    const double h = (t - s) / k;
    for (int i = 0; i < k; ++i) {
        phi = detail::rk4_step(field, s + i * h, phi, h);
        if (!phi.allFinite()) throw DivergenceError("transition matrix diverged", s + (i + 1) * h);
    }
    return phi;
}

Eigen::MatrixXd gramian(const SystemDynamics& dyn, GramianKind kind, double t, double s,
                        const TimeGrid& grid, bool require_invertible) {
    check_span(dyn, t, s, grid);
    const auto n = dyn.n();
    const Eigen::MatrixXd bbt = dyn.bbt();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    if (t > s) {
        const auto field = [&](double tau, const Eigen::MatrixXd& g) -> Eigen::MatrixXd {
            const Eigen::MatrixXd a = dyn.a_at(tau);
            const Eigen::MatrixXd abar = a + dyn.Abar;
            switch (kind) {
                case GramianKind::M: return a * g + g * a.transpose() + bbt;
                case GramianKind::Mbar: return abar * g + g * a.transpose() + bbt;
                case GramianKind::Mhat: return abar * g + g * abar.transpose() + bbt;
            }
            return g;
        };
        const int k = substeps(t, s, grid);
        const double h = (t - s) / k;
        for (int i = 0; i < k; ++i) {
            gram = detail::rk4_step(field, s + i * h, gram, h);
            if (!gram.allFinite()) throw DivergenceError("Gramian diverged", s + (i + 1) * h);
        }
    }
    if (kind != GramianKind::Mbar) gram = symmetrize(gram);
    if (require_invertible) {
        static const char* names[] = {"reachability Gramian M", "coupled Gramian Mbar", "Gramian Mhat"};
        check_invertible(gram, names[static_cast<int>(kind)]);
    }
    return gram;
}

TransitionData tabulate_transition(const SystemDynamics& dyn, const TimeGrid& grid) {
    dyn.validate();
    const auto n = dyn.n();
    const Eigen::MatrixXd bbt = dyn.bbt();
    // Columns: [Phi | Phibar | M | Mbar | Mhat].
    const auto field = [&](double tau, const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
        const Eigen::MatrixXd a = dyn.a_at(tau);
        const Eigen::MatrixXd abar = a + dyn.Abar;
        Eigen::MatrixXd dx(n, 5 * n);
        dx.middleCols(0, n) = a * x.middleCols(0, n);
        dx.middleCols(n, n) = abar * x.middleCols(n, n);
        dx.middleCols(2 * n, n) = a * x.middleCols(2 * n, n) + x.middleCols(2 * n, n) * a.transpose() + bbt;
        dx.middleCols(3 * n, n) =
            abar * x.middleCols(3 * n, n) + x.middleCols(3 * n, n) * a.transpose() + bbt;
        dx.middleCols(4 * n, n) =
            abar * x.middleCols(4 * n, n) + x.middleCols(4 * n, n) * abar.transpose() + bbt;
        return dx;
    };
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(n, 5 * n);
    x0.middleCols(0, n).setIdentity();
    x0.middleCols(n, n).setIdentity();
    const auto traj = integrate_ode(field, x0, grid);

    TransitionData data{grid, {}, {}, {}, {}, {}};
    for (const auto& x : traj) {
        data.phi.push_back(x.middleCols(0, n));
        data.phibar.push_back(x.middleCols(n, n));
        data.gram_M.push_back(symmetrize(x.middleCols(2 * n, n)));
        data.gram_Mbar.push_back(x.middleCols(3 * n, n));
        data.gram_Mhat.push_back(symmetrize(x.middleCols(4 * n, n)));
    }
    return data;
}

void check_invertible(const Eigen::MatrixXd& mat, const char* what) {
    if (mat.rows() != mat.cols()) throw DimensionError(std::string(what) + " is not square");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
    const auto& sv = svd.singularValues();
    const double rcond = sv.size() == 0 || sv(0) == 0.0 ? 0.0 : sv(sv.size() - 1) / sv(0);
    if (!(rcond >= 1e-12)) throw SingularError(std::string(what) + " is singular", rcond);
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& W) {
    const auto n = F.rows();
    if (F.cols() != n || W.rows() != n || W.cols() != n)
        throw DimensionError("solve_lyapunov: F and W must be square of equal size");
    if (n == 0) return Eigen::MatrixXd(0, 0);

    // F = U T U^*, so T Y + Y T^* = C with Y = U^* X U and C = -U^* W U.
    Eigen::ComplexSchur<Eigen::MatrixXd> schur(F);
    const Eigen::MatrixXcd& T = schur.matrixT();
    const Eigen::MatrixXcd& U = schur.matrixU();
    const Eigen::MatrixXcd C = -(U.adjoint() * W.cast<std::complex<double>>() * U);

    const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    // Column j couples to columns k > j through conj(T(j, k)); sweep right to left.
    for (Eigen::Index j = n - 1; j >= 0; --j) {
        Eigen::VectorXcd rhs = C.col(j);
        for (Eigen::Index k = j + 1; k < n; ++k) rhs -= std::conj(T(j, k)) * Y.col(k);
        Eigen::MatrixXcd lhs = T;
        lhs.diagonal().array() += std::conj(T(j, j));
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(lhs(i, i)) < 1e-13 * scale)
                throw SingularError("Lyapunov operator is singular (eigenvalues sum to zero)",
                                    std::abs(lhs(i, i)) / scale);
        }
        Y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
    }
    const Eigen::MatrixXd X = (U * Y * U.adjoint()).real();
    return symmetrize(X);
}

Eigen::MatrixXd sqrtm_spd(const Eigen::MatrixXd& S) {
    if (S.rows() != S.cols()) throw DimensionError("sqrtm_spd: matrix is not square");
    const double norm = S.norm();
    if ((S - S.transpose()).norm() > 1e-10 * std::max(1.0, norm))
        throw DomainError("sqrtm_spd: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(S));
    Eigen::VectorXd vals = eig.eigenvalues();
    if (vals.size() > 0 && vals.minCoeff() < -1e-12 * std::max(norm, 1e-300))
        throw DomainError("sqrtm_spd: matrix is indefinite (eigenvalue " + std::to_string(vals.minCoeff()) +
                          ")");
    vals = vals.cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd& V = eig.eigenvectors();
    return symmetrize(V * vals.asDiagonal() * V.transpose());
}

std::vector<Eigen::MatrixXd> integrate_ode(const MatrixField& field, const Eigen::MatrixXd& x0,
                                           const TimeGrid& grid) {
    std::vector<Eigen::MatrixXd> traj;
    traj.reserve(grid.steps() + 1);
    traj.push_back(x0);
    if (!x0.allFinite()) throw DivergenceError("non-finite initial state", grid.t0());
    const double h = grid.dt();
    for (int i = 0; i < grid.steps(); ++i) {
        Eigen::MatrixXd next = detail::rk4_step(field, grid.node(i), traj.back(), h);
        if (!next.allFinite()) throw DivergenceError("ODE integration diverged", grid.node(i + 1));
        traj.push_back(std::move(next));
    }
    return traj;
}

}  // namespace mfsteer
