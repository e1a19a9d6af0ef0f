#ifndef MFSTEER_POLICY_HPP
#define MFSTEER_POLICY_HPP

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <string>

namespace mfsteer {

enum class PolicyMode { noncoop, coop, stationary, zero_noise, bridge };

std::string to_string(PolicyMode mode);

/// u = K x + k at a fixed time.
struct AffineGain {
    Eigen::MatrixXd K;
    Eigen::VectorXd k;
};

/// Read-only state-feedback law u = phi(t, x) on a horizon [t0, t1].
///
/// Policies built from Gaussian designs carry an affine form so the simulator
/// can evaluate the gains once per time step instead of once per particle.
class FeedbackPolicy {
public:
    using Evaluator = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
    using GainEvaluator = std::function<AffineGain(double)>;

    static FeedbackPolicy affine(GainEvaluator gains, PolicyMode mode, double eps, double t0, double t1);
    static FeedbackPolicy general(Evaluator eval, PolicyMode mode, double eps, double t0, double t1);

    /// Throws DomainError for t outside the horizon.
    Eigen::VectorXd operator()(double t, const Eigen::VectorXd& x) const;

    bool is_affine() const { return static_cast<bool>(gains_); }
    AffineGain gains(double t) const;

    PolicyMode mode() const { return mode_; }
    double eps() const { return eps_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    bool covers(double t) const;

private:
    FeedbackPolicy() = default;
    void check_time(double t) const;

    Evaluator eval_;
    GainEvaluator gains_;
    PolicyMode mode_ = PolicyMode::noncoop;
    double eps_ = 1.0;
    double t0_ = 0.0;
    double t1_ = std::numeric_limits<double>::infinity();
};

}  // namespace mfsteer

#endif  // MFSTEER_POLICY_HPP
