#ifndef MFSTEER_TESTS_TEST_UTIL_HPP
#define MFSTEER_TESTS_TEST_UTIL_HPP

#include "mfsteer/gauss_steer.hpp"
#include "mfsteer/linsys.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace mfsteer::testing {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// SPD with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double lo = 0.3, double hi = 3.0) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, n, n));
    const Eigen::MatrixXd Q = qr.householderQ();
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = unif(rng);
    return symmetrize(Q * d.asDiagonal() * Q.transpose());
}

/// Hurwitz matrix: random matrix shifted left of its spectral abscissa.
inline Eigen::MatrixXd random_stable(std::mt19937_64& rng, int n) {
    Eigen::MatrixXd F = random_matrix(rng, n, n);
    const double abscissa = F.eigenvalues().real().maxCoeff();
    F -= (abscissa + 0.5) * Eigen::MatrixXd::Identity(n, n);
    return F;
}

inline SystemDynamics random_system(std::mt19937_64& rng, int n, int m, double eps) {
    SystemDynamics dyn;
    dyn.A = random_matrix(rng, n, n, 0.6);
    dyn.Abar = random_matrix(rng, n, n, 0.4);
    dyn.B = random_matrix(rng, n, m, 1.0);
    dyn.eps = eps;
    return dyn;
}

/// The two-agent-type example: dx = x dt - 2 xbar dt + u dt + dw.
inline SystemDynamics example_system(double eps = 1.0) { return SystemDynamics::scalar(1.0, -2.0, 1.0, eps); }
inline GaussianDensity example_rho0() { return GaussianDensity::scalar(1.0, 4.0); }
inline GaussianDensity example_rho1() { return GaussianDensity::scalar(-4.0, 1.0); }

/// Scalar mean path that stays at zero.
inline MeanSteering zero_steering() {
    MeanSteering s{TimeGrid::unit(10), {}, {}, {}, GameMode::noncoop, Eigen::MatrixXd::Ones(1, 1),
                   Eigen::MatrixXd::Zero(1, 1)};
    for (int k = 0; k <= 10; ++k) {
        s.m.push_back(Eigen::VectorXd::Zero(1));
        s.y.push_back(Eigen::VectorXd::Zero(1));
        s.gamma.push_back(0.0);
    }
    return s;
}

}  // namespace mfsteer::testing

#endif  // MFSTEER_TESTS_TEST_UTIL_HPP
