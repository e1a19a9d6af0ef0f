#include "mfsteer/stationary.hpp"

#include "mfsteer/errors.hpp"

#include <cmath>
#include <limits>

namespace mfsteer {

namespace {

// Symmetric matrices as vectors, off-diagonal entries weighted by sqrt(2) so
// the Euclidean norm of the vector is the Frobenius norm of the matrix.
Eigen::VectorXd sym_vec(const Eigen::MatrixXd& S) {
    const int n = static_cast<int>(S.rows());
    Eigen::VectorXd v(n * (n + 1) / 2);
    int k = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i <= j; ++i) v(k++) = i == j ? S(i, i) : std::sqrt(2.0) * 0.5 * (S(i, j) + S(j, i));
    return v;
}

Eigen::MatrixXd sym_unvec(const Eigen::VectorXd& v, int n) {
    Eigen::MatrixXd S(n, n);
    int k = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i <= j; ++i) {
            const double value = i == j ? v(k) : v(k) / std::sqrt(2.0);
            S(i, j) = value;
            S(j, i) = value;
            ++k;
        }
    return S;
}

// Matrix of X -> B X' + X B' from R^{n x m} into sym_vec coordinates.
Eigen::MatrixXd range_fb(const Eigen::MatrixXd& B) {
    const int n = static_cast<int>(B.rows());
    const int m = static_cast<int>(B.cols());
    Eigen::MatrixXd F(n * (n + 1) / 2, n * m);
    for (int c = 0; c < m; ++c)
        for (int r = 0; r < n; ++r) {
            Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, m);
            X(r, c) = 1.0;
            F.col(c * n + r) = sym_vec(B * X.transpose() + X * B.transpose());
        }
    return F;
}

double projection_residual(const Eigen::MatrixXd& F, const Eigen::VectorXd& v) {
    if (F.cols() == 0) return v.norm();
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(F);
    return (v - F * cod.solve(v)).norm();
}

void check_inputs(const GaussianDensity& target, const SystemDynamics& dyn) {
    dyn.validate();
    target.validate();
    if (target.dim() != dyn.n()) throw DimensionError("target dimension does not match the state dimension");
    if (dyn.time_varying()) throw DomainError("stationary design needs a time-invariant A");
}

}  // namespace

FeasibilityReport check_feasibility(const GaussianDensity& target, const SystemDynamics& dyn) {
    check_inputs(target, dyn);
    const Eigen::MatrixXd& A = dyn.A;
    const Eigen::MatrixXd& S = target.cov;
    const Eigen::VectorXd cov_rhs = sym_vec(A * S + S * A.transpose());
    const Eigen::VectorXd mean_rhs = (A + dyn.Abar) * target.mean;

    FeasibilityReport report;
    report.covariance_residual = projection_residual(range_fb(dyn.B), cov_rhs);
    report.mean_residual = projection_residual(dyn.B, mean_rhs);
    report.feasible = report.covariance_residual <= 1e-8 * (1.0 + cov_rhs.norm()) &&
                      report.mean_residual <= 1e-8 * (1.0 + mean_rhs.norm());
    return report;
}

StationaryDesign design_stationary(const GaussianDensity& target, const SystemDynamics& dyn) {
    check_inputs(target, dyn);
    const int n = dyn.n();
    const Eigen::MatrixXd& A = dyn.A;
    const Eigen::MatrixXd& B = dyn.B;
    const Eigen::MatrixXd& S = target.cov;
    const Eigen::MatrixXd bbt = dyn.bbt();

    const Eigen::JacobiSVD<Eigen::MatrixXd> bsvd(B);
    const Eigen::VectorXd sv = bsvd.singularValues();
    if (dyn.m_in() > n || sv.size() == 0 || sv(sv.size() - 1) <= 1e-12 * sv(0))
        throw DomainError("stationary design needs B with full column rank");

    const FeasibilityReport feas = check_feasibility(target, dyn);
    if (!feas.feasible)
        throw DesignError("target is not an invariant measure for any linear feedback",
                          std::max(feas.covariance_residual, feas.mean_residual));

    // Pi -> BB'Pi S + S Pi BB' on symmetric matrices, in an orthonormal basis.
    const int dim = n * (n + 1) / 2;
    Eigen::MatrixXd L(dim, dim);
    for (int k = 0; k < dim; ++k) {
        const Eigen::MatrixXd E = sym_unvec(Eigen::VectorXd::Unit(dim, k), n);
        L.col(k) = sym_vec(bbt * E * S + S * E * bbt);
    }
    const Eigen::VectorXd rhs = sym_vec(A * S + S * A.transpose() + dyn.eps * bbt);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(L);
    cod.setThreshold(1e-12);

    StationaryDesign d;
    d.unique = cod.rank() == dim;
    d.pi = sym_unvec(cod.solve(rhs), n);
    d.A = A;
    d.Abar = dyn.Abar;
    d.B = B;
    d.eps = dyn.eps;
    d.target_mean = target.mean;
    d.target_cov = S;

    const Eigen::MatrixXd acl = A - bbt * d.pi;
    const double lyap = (acl * S + S * acl.transpose() + dyn.eps * bbt).norm();
    if (lyap > 1e-9 * (1.0 + bbt.norm()) * (1.0 + S.norm() * (1.0 + A.norm())))
        throw DesignError("stationary covariance equation is inconsistent", lyap);

    // B B' n = -(A + Abar - BB'Pi) m; any n works, take the minimum-norm one.
    const Eigen::VectorXd mean_rhs = -(A + dyn.Abar - bbt * d.pi) * target.mean;
    d.nvec = bbt.completeOrthogonalDecomposition().solve(mean_rhs);
    const double mean_res = (bbt * d.nvec - mean_rhs).norm();
    if (mean_res > 1e-9 * (1.0 + mean_rhs.norm()))
        throw DesignError("stationary mean equation is inconsistent", mean_res);

    d.Q = symmetrize(-d.pi * A - A.transpose() * d.pi + d.pi * bbt * d.pi);
    d.eta = stationary_eta(d, dyn);
    return d;
}

double StationaryDesign::cost(const Eigen::VectorXd& x, const Eigen::VectorXd& population_mean) const {
    const Eigen::MatrixXd bbt = B * B.transpose();
    return 0.5 * x.dot(Q * x) + nvec.dot((A - bbt * pi) * x) - population_mean.dot(Abar.transpose() * pi * x);
}

FeedbackPolicy stationary_policy(const StationaryDesign& design) {
    AffineGain gain{-design.B.transpose() * design.pi, design.B.transpose() * design.nvec};
    return FeedbackPolicy::affine([gain](double) { return gain; }, PolicyMode::stationary, design.eps, 0.0,
                                  std::numeric_limits<double>::infinity());
}

double stationary_eta(const StationaryDesign& design, const SystemDynamics& dyn) {
    const Eigen::MatrixXd bbt = dyn.bbt();
    const Eigen::VectorXd& n = design.nvec;
    return 0.5 * dyn.eps * (bbt * design.pi).trace() - n.dot(dyn.Abar * design.target_mean) -
           0.5 * n.dot(bbt * n);
}

}  // namespace mfsteer
