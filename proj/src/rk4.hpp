#ifndef MFSTEER_SRC_RK4_HPP
#define MFSTEER_SRC_RK4_HPP

#include <Eigen/Dense>

namespace mfsteer::detail {

// One classical Runge-Kutta step for any state supporting + and scalar *.
template <typename State, typename Field>
State rk4_step(const Field& field, double t, const State& x, double h) {
    const State k1 = field(t, x);
    const State k2 = field(t + 0.5 * h, State(x + (0.5 * h) * k1));
    const State k3 = field(t + 0.5 * h, State(x + (0.5 * h) * k2));
    const State k4 = field(t + h, State(x + h * k3));
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool all_finite(const Eigen::MatrixXd& x) { return x.allFinite(); }

}  // namespace mfsteer::detail

#endif  // MFSTEER_SRC_RK4_HPP
