#ifndef MFSTEER_LINSYS_HPP
#define MFSTEER_LINSYS_HPP

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace mfsteer {

/// Uniform partition of [t0, t1] into `steps` intervals.
class TimeGrid {
public:
    TimeGrid(double t0, double t1, int steps);

    /// The default design grid: [0, 1] with 1000 steps.
    static TimeGrid unit(int steps = 1000) { return TimeGrid(0.0, 1.0, steps); }

    double t0() const { return t0_; }
    double t1() const { return t1_; }
    int steps() const { return steps_; }
    double dt() const { return (t1_ - t0_) / steps_; }
    double node(int i) const;
    std::vector<double> nodes() const;
    bool covers(double s, double t) const;

    /// Index of the interval containing t and the fractional offset inside it.
    /// Times outside the grid raise DomainError.
    std::pair<int, double> locate(double t) const;

private:
    double t0_;
    double t1_;
    int steps_;
};

/// Agent model dx = (A x + Abar xbar + B u) dt + sqrt(eps) B dw.
///
/// A is either constant or sampled on a uniform grid over [0, 1]; samples are
/// linearly interpolated and held constant outside [0, 1].
struct SystemDynamics {
    Eigen::MatrixXd A;
    std::vector<Eigen::MatrixXd> A_samples;
    Eigen::MatrixXd Abar;
    Eigen::MatrixXd B;
    double eps = 1.0;

    static SystemDynamics scalar(double a, double abar, double b, double eps);

    int n() const { return static_cast<int>(B.rows()); }
    int m_in() const { return static_cast<int>(B.cols()); }
    bool time_varying() const { return !A_samples.empty(); }

    Eigen::MatrixXd a_at(double t) const;
    Eigen::MatrixXd abar_total_at(double t) const { return a_at(t) + Abar; }
    Eigen::MatrixXd bbt() const { return B * B.transpose(); }

    /// Throws DimensionError / DomainError on inconsistent data.
    void validate() const;
};

enum class Flow { plain, bar };
enum class GramianKind { M, Mbar, Mhat };

/// Samples of Phi(t_k, t0), Phibar(t_k, t0) and the three Gramians
/// M(t_k, t0), Mbar(t_k, t0), Mhat(t_k, t0) on every node of a grid.
struct TransitionData {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> phi;
    std::vector<Eigen::MatrixXd> phibar;
    std::vector<Eigen::MatrixXd> gram_M;
    std::vector<Eigen::MatrixXd> gram_Mbar;
    std::vector<Eigen::MatrixXd> gram_Mhat;
};

/// State transition matrix Phi(t, s) of A (plain) or of A + Abar (bar), s <= t.
/// RK4 with the grid step size; Phi(s, s) is returned as the exact identity.
Eigen::MatrixXd transition_matrix(const SystemDynamics& dyn, Flow which, double t, double s,
                                  const TimeGrid& grid);

/// Reachability Gramians over [s, t]:
///   M    = int Phi(t,r)    B B' Phi(t,r)'    dr
///   Mbar = int Phibar(t,r) B B' Phi(t,r)'    dr   (mixed, generally nonsymmetric)
///   Mhat = int Phibar(t,r) B B' Phibar(t,r)' dr
/// Each is integrated as the differential Lyapunov/Sylvester equation in t
/// jointly with the transition matrices. M and Mhat come back exactly symmetric.
/// With `require_invertible` the result is checked by check_invertible.
Eigen::MatrixXd gramian(const SystemDynamics& dyn, GramianKind kind, double t, double s,
                        const TimeGrid& grid, bool require_invertible = false);

TransitionData tabulate_transition(const SystemDynamics& dyn, const TimeGrid& grid);

/// Throws SingularError when the reciprocal 2-norm condition number is below 1e-12.
void check_invertible(const Eigen::MatrixXd& mat, const char* what);

/// Solves F X + X F' + W = 0 (Bartels-Stewart on the complex Schur form).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& W);

/// Symmetric PSD square root. Eigenvalues in [-1e-12 |S|, 0) are clamped.
Eigen::MatrixXd sqrtm_spd(const Eigen::MatrixXd& S);

/// Returns (M + M') / 2.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

using MatrixField = std::function<Eigen::MatrixXd(double, const Eigen::MatrixXd&)>;

/// Classical fixed-step RK4. Returns the state at every node of the grid.
/// A non-finite value raises DivergenceError carrying the offending time.
std::vector<Eigen::MatrixXd> integrate_ode(const MatrixField& field, const Eigen::MatrixXd& x0,
                                           const TimeGrid& grid);

/// Linear interpolation of node samples at time t.
template <typename T>
T interpolate_samples(const TimeGrid& grid, const std::vector<T>& samples, double t) {
    auto [i, frac] = grid.locate(t);
    if (frac == 0.0) return samples[i];
    return (1.0 - frac) * samples[i] + frac * samples[i + 1];
}

}  // namespace mfsteer

#endif  // MFSTEER_LINSYS_HPP
