#include "mfsteer/policy.hpp"

#include "mfsteer/errors.hpp"

#include <cmath>

namespace mfsteer {

std::string to_string(PolicyMode mode) {
    switch (mode) {
        case PolicyMode::noncoop: return "noncoop";
        case PolicyMode::coop: return "coop";
        case PolicyMode::stationary: return "stationary";
        case PolicyMode::zero_noise: return "zero-noise";
        case PolicyMode::bridge: return "bridge";
    }
    return "unknown";
}

FeedbackPolicy FeedbackPolicy::affine(GainEvaluator gains, PolicyMode mode, double eps, double t0,
                                      double t1) {
    FeedbackPolicy p;
    p.gains_ = std::move(gains);
    p.mode_ = mode;
    p.eps_ = eps;
    p.t0_ = t0;
    p.t1_ = t1;
    return p;
}

FeedbackPolicy FeedbackPolicy::general(Evaluator eval, PolicyMode mode, double eps, double t0, double t1) {
    FeedbackPolicy p;
    p.eval_ = std::move(eval);
    p.mode_ = mode;
    p.eps_ = eps;
    p.t0_ = t0;
    p.t1_ = t1;
    return p;
}

bool FeedbackPolicy::covers(double t) const {
    const double span = std::isfinite(t1_) ? t1_ - t0_ : 1.0;
    return t >= t0_ - 1e-12 * span && t <= t1_ + 1e-12 * span;
}

void FeedbackPolicy::check_time(double t) const {
    if (!covers(t)) throw DomainError("policy evaluated outside its horizon at t=" + std::to_string(t));
}

Eigen::VectorXd FeedbackPolicy::operator()(double t, const Eigen::VectorXd& x) const {
    check_time(t);
    if (gains_) {
        const AffineGain g = gains_(t);
        return g.K * x + g.k;
    }
    return eval_(t, x);
}

AffineGain FeedbackPolicy::gains(double t) const {
    if (!gains_) throw DomainError("policy has no affine form");
    check_time(t);
    return gains_(t);
}

}  // namespace mfsteer
