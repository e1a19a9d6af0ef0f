#include "mfsteer/omt1d.hpp"
#include "mfsteer/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace mfsteer {
namespace {

const double e = std::exp(1.0);

double normal_pdf(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Two well separated unit-variance bumps; mean 1.
GridDensity1D two_bumps(int points = 1536) {
    return GridDensity1D::from_function(-12.0, 14.0, points, [](double x) {
        return 0.5 * normal_pdf(x, -2.0, 1.0) + 0.5 * normal_pdf(x, 4.0, 1.0);
    });
}

Eigen::VectorXd vec(double x) { return Eigen::VectorXd::Constant(1, x); }

const TransportMap1D& halving_map() {
    static const TransportMap1D T = monotone_map(GridDensity1D::gaussian(0.0, 4.0), GridDensity1D::gaussian(0.0, 1.0),
                                                 testing::example_system(0.0));
    return T;
}

// ---------------------------------------------------------------------------

TEST(MonotoneMap, EqualMarginalsGiveIdentity) {
    const auto r = GridDensity1D::gaussian(0.0, 2.0, 1024);
    const auto T = monotone_map(r, r, testing::example_system(0.0));
    const double sd = std::sqrt(2.0);
    for (int k = 0; k < r.size(); ++k)
        if (std::abs(r.x(k)) <= 4 * sd) EXPECT_NEAR(T.samples[k], r.x(k), 1e-9) << r.x(k);
    EXPECT_TRUE(T.warnings.empty());
}

TEST(MonotoneMap, GaussianQuantileAlgebra) {
    const auto& T = halving_map();
    double worst = 0.0;
    for (double x = -4.0; x <= 4.0; x += 0.01) worst = std::max(worst, std::abs(T(x) - 0.5 * x));
    EXPECT_LE(worst, 1e-3);
    for (std::size_t k = 1; k < T.samples.size(); ++k) EXPECT_LE(T.samples[k - 1], T.samples[k]);
}

TEST(MonotoneMap, UniformToNormalPushForward) {
    const auto u = center_marginal(
        GridDensity1D::from_function(-1.2, 1.2, 961, [](double x) { return std::abs(x) <= 1.0 ? 1.0 : 0.0; })).first;
    const auto n = GridDensity1D::gaussian(0.0, 1.0, 2048);
    const auto T = monotone_map(u, n, SystemDynamics::scalar(0.0, 0.0, 1.0, 0.0));
    const double dx = std::max(u.dx(), n.dx());
    // Push-forward CDF at the images of the source nodes against the exact one.
    double worst = 0.0;
    for (int k = 0; k < u.size(); ++k)
        if (std::abs(u.x(k)) <= 1.0) worst = std::max(worst, std::abs(normal_cdf(T(u.x(k))) - 0.5 * (u.x(k) + 1.0)));
    EXPECT_LE(worst, 2 * dx);
}

TEST(MonotoneMap, Rejections) {
    const auto r = GridDensity1D::gaussian(0.0, 1.0, 256);
    EXPECT_THROW(monotone_map(r.shifted(0.5), r, testing::example_system(0.0)), DomainError);
    EXPECT_THROW(monotone_map(r, r, SystemDynamics::scalar(1.0, 0.0, 0.0, 0.0)), DomainError);
    SystemDynamics planar;
    planar.A = Eigen::MatrixXd::Zero(2, 2);
    planar.Abar = Eigen::MatrixXd::Zero(2, 2);
    planar.B = Eigen::MatrixXd::Identity(2, 2);
    planar.eps = 0.0;
    EXPECT_THROW(monotone_map(r, r, planar), DimensionError);
}

TEST(MonotoneMap, WarnsOnUnresolvedMarginal) {
    const GridDensity1D spike(-2.0, 1.0, {0.0, 0.0, 1.0, 0.0, 0.0});
    const auto T = monotone_map(spike, GridDensity1D::gaussian(0.0, 1.0, 256), testing::example_system(0.0));
    EXPECT_FALSE(T.warnings.empty());
}

// ---------------------------------------------------------------------------

TEST(DisplacementInterpolation, EndpointsAreExact) {
    const auto& T = halving_map();
    for (double x : {-3.3, 0.0, 0.123, 5.0}) {
        EXPECT_EQ(displacement_interpolate(T, 0.0, x), x);
        EXPECT_EQ(displacement_interpolate(T, 1.0, x), T(x));
    }
}

TEST(DisplacementInterpolation, ClosedFormCoefficients) {
    // Phi(t, s) = e^{t-s}, M(t, s) = (e^{2(t-s)} - 1) / 2, so at t = 1/2 both
    // coefficients equal e^{1/2} / (e + 1).
    const auto& T = halving_map();
    const double c = std::sqrt(e) / (e + 1.0);
    EXPECT_NEAR(T.coef_identity(0.5), c, 1e-10);
    EXPECT_NEAR(T.coef_map(0.5), c, 1e-10);
    EXPECT_NEAR(T.phi10, e, 1e-12);
    EXPECT_NEAR(T.gram10, (e * e - 1.0) / 2.0, 1e-10);
    EXPECT_NEAR(displacement_interpolate(T, 0.5, 1.0), 1.5 * c, 1e-3);
    for (double t : {0.1, 0.4, 0.8}) {
        const double a = std::exp(t) * (std::exp(2 * (1 - t)) - 1) / (e * e - 1);
        const double b = (std::exp(2 * t) - 1) * std::exp(1 - t) / (e * e - 1);
        EXPECT_NEAR(T.coef_identity(t), a, 1e-10);
        EXPECT_NEAR(T.coef_map(t), b, 1e-10);
    }
}

TEST(DisplacementInterpolation, InverseAndMonotone) {
    const auto& T = halving_map();
    for (double t : {0.2, 0.7, 0.999})
        for (double z : {-5.0, -1.0, 0.3, 2.5}) {
            const double x = displacement_interpolate(T, t, z);
            EXPECT_NEAR(displacement_inverse(T, t, x), z, 1e-8);
            EXPECT_LE(displacement_interpolate(T, t, z - 0.01), x);
        }
    EXPECT_THROW(displacement_inverse(T, 1.0, 1e3), DomainError);
    EXPECT_THROW(displacement_interpolate(T, 1.5, 0.0), DomainError);
}

TEST(DisplacementInterpolation, PushForwardFlow) {
    // T(x) = x / 2 scales N(0, 4) by a(t) + c(t) / 2.
    const auto& T = halving_map();
    for (double t : {0.25, 0.5, 0.75}) {
        const double scale = T.coef_identity(t) + 0.5 * T.coef_map(t);
        const auto rho = pushforward_density(T, t);
        EXPECT_NEAR(rho.mean(), 0.0, 1e-6);
        EXPECT_NEAR(rho.variance(), 4.0 * scale * scale, 2e-3 * scale * scale);
        double prev = 0.0;
        for (double x = rho.lo() - 1.0; x <= rho.hi() + 1.0; x += 0.05) {
            const double F = pushforward_cdf(T, t, x);
            EXPECT_GE(F, prev);
            prev = F;
        }
        EXPECT_EQ(pushforward_cdf(T, t, rho.hi() + 1.0), 1.0);
        EXPECT_EQ(pushforward_cdf(T, t, rho.lo() - 1.0), 0.0);
    }
}

// ---------------------------------------------------------------------------

TEST(ZeroNoisePolicy, NothingToMove) {
    const auto r = GridDensity1D::gaussian(0.0, 1.0, 512);
    const auto T = monotone_map(r, r, SystemDynamics::scalar(0.0, 0.0, 1.0, 0.0));
    const auto u = zero_noise_policy(T, testing::zero_steering());
    EXPECT_EQ(u.mode(), PolicyMode::zero_noise);
    EXPECT_EQ(u.eps(), 0.0);
    for (double t : {0.0, 0.5, 0.9})
        for (double x : {-2.0, 0.0, 1.5}) EXPECT_NEAR(u(t, vec(x))(0), 0.0, 1e-8);
}

TEST(ZeroNoisePolicy, MatchesRiccatiAtZeroNoise) {
    const auto dyn = testing::example_system(0.0);
    const auto d = design_gaussian(testing::example_rho0(), testing::example_rho1(), dyn, GameMode::noncoop,
                                   TimeGrid::unit());
    const auto exact = d.policy();
    const auto u = zero_noise_policy(halving_map(), d.steering);
    for (double t : {0.0, 0.3, 0.6, 0.95}) {
        const double y = d.steering.y_at(t)(0);
        for (double dx : {-3.0, -1.0, 0.0, 2.0}) {
            const Eigen::VectorXd x = vec(y + dx);
            EXPECT_NEAR(u(t, x)(0), exact(t, x)(0), 1e-3) << t << " " << dx;
        }
        // Affine in x.
        const double curv = u(t, vec(y + 1))(0) - 2 * u(t, vec(y))(0) + u(t, vec(y - 1))(0);
        EXPECT_NEAR(curv, 0.0, 1e-3);
    }
}

// Integrates dx = (a x + abar ybar + b u) dt with RK4.
double characteristic(const FeedbackPolicy& u, const SystemDynamics& dyn, const MeanSteering& s, double x, int steps) {
    const double a = dyn.A(0, 0), abar = dyn.Abar(0, 0), b = dyn.B(0, 0);
    auto f = [&](double t, double v) { return a * v + abar * s.y_at(t)(0) + b * u(t, vec(v))(0); };
    const double h = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const double k1 = f(t, x);
        const double k2 = f(t + h / 2, x + h / 2 * k1);
        const double k3 = f(t + h / 2, x + h / 2 * k2);
        const double k4 = f(t + h, x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

TEST(ZeroNoisePolicy, CharacteristicsPreserveQuantiles) {
    const auto dyn = testing::example_system(0.0);
    const auto r0 = GridDensity1D::gaussian(1.0, 4.0, 1536), r1 = two_bumps();
    const auto [c0, mean0] = center_marginal(r0);
    const auto [c1, mean1] = center_marginal(r1);
    const auto T = monotone_map(c0, c1, dyn);
    const auto steering = mean_steering(GaussianDensity::scalar(mean0, r0.variance()),
                                        GaussianDensity::scalar(mean1, r1.variance()), dyn, GameMode::noncoop,
                                        TimeGrid::unit());
    const auto u = zero_noise_policy(T, steering);
    const double tol = 2 * std::max(r0.dx(), r1.dx()) + 1e-3;
    for (int i = 1; i <= 9; ++i) {
        const double q = 0.1 * i;
        const double end = characteristic(u, dyn, steering, r0.quantile(q), 400);
        EXPECT_NEAR(end, r1.quantile(q), tol) << q;
    }
    // The shifted flow matches the marginals at the ends and moves the mean.
    EXPECT_NEAR(zero_noise_density(T, steering, 1.0).mean(), mean1, 1e-8);
    EXPECT_NEAR(zero_noise_density(T, steering, 0.5).mean(), steering.y_at(0.5)(0), 1e-3);
}

TEST(ZeroNoisePolicy, RejectsOutOfRangeAtFinalTime) {
    const auto u = zero_noise_policy(halving_map(), testing::zero_steering());
    EXPECT_THROW(u(1.0, vec(100.0)), DomainError);
    EXPECT_NO_THROW(u(0.999, vec(100.0)));
}

TEST(ZeroNoisePolicy, SmallNoiseBridgeLimit) {
    // eps = 1e-3 needs the over-relaxed fitting; plain IPF stalls.
    const auto r0 = GridDensity1D::gaussian(0.0, 4.0, 1024, 7.5);
    // A mildly bimodal target: a deep gap between the modes slows the fitting
    // down by another order of magnitude.
    const auto r1 = center_marginal(GridDensity1D::from_function(-7.0, 7.0, 1024, [](double x) {
                        return normal_pdf(x, -1.0, 0.5) + normal_pdf(x, 1.2, 0.5);
                    })).first;
    const auto T = monotone_map(r0, r1, testing::example_system(0.0));
    const PriorKernel1D prior(testing::example_system(1e-3));
    IpfOptions opts;
    opts.maxiter = 5000;
    opts.relaxation = 1.8;
    const auto pot = ipf_solve(r0, r1, prior, opts);
    const auto u = zero_noise_policy(T, testing::zero_steering());
    for (double t : {0.25, 0.5, 0.75}) {
        const auto rho = pushforward_density(T, t);
        const double sd = std::sqrt(rho.variance());
        double worst = 0.0;
        for (double x = -2 * sd; x <= 2 * sd; x += sd / 20)
            worst = std::max(worst, std::abs(bridge_drift(pot, t, x) - u(t, vec(x))(0)));
        EXPECT_LE(worst, 5e-2) << t;
    }
}

}  // namespace
}  // namespace mfsteer
