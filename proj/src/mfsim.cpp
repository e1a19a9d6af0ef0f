#include "mfsteer/mfsim.hpp"

#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <algorithm>
#include <barrier>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

namespace mfsteer {

// ---------------------------------------------------------------------------
// Counter-based noise

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// 53 random bits to a double in (0, 1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

NoiseSource::NoiseSource(std::uint64_t seed)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

void NoiseSource::normals(std::uint64_t particle, std::uint32_t step, Stream stream, double* out, int count) const {
    if (particle >> 32) throw DomainError("particle index exceeds the noise counter range");
    for (int b = 0; 2 * b < count; ++b) {
        const auto w = philox4x32({static_cast<std::uint32_t>(particle), step, static_cast<std::uint32_t>(b), stream},
                                  key_);
        const double r = std::sqrt(-2.0 * std::log(to_unit(w[0], w[1])));
        const double angle = 2.0 * std::numbers::pi * to_unit(w[2], w[3]);
        out[2 * b] = r * std::cos(angle);
        if (2 * b + 1 < count) out[2 * b + 1] = r * std::sin(angle);
    }
}

double NoiseSource::uniform(std::uint64_t particle, std::uint32_t step, Stream stream) const {
    if (particle >> 32) throw DomainError("particle index exceeds the noise counter range");
    const auto w = philox4x32({static_cast<std::uint32_t>(particle), step, 0u, stream}, key_);
    return to_unit(w[0], w[1]);
}

// ---------------------------------------------------------------------------
// Ensembles

void ParticleEnsemble::write_csv(std::ostream& out) const {
    if (dim() == 1) {
        out << "x\n";
    } else {
        for (int j = 0; j < dim(); ++j) out << (j ? "," : "") << "x" << j + 1;
        out << "\n";
    }
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < dim(); ++j) out << (j ? "," : "") << format_double(states(i, j));
        out << "\n";
    }
}

ParticleEnsemble init_ensemble(const GaussianDensity& rho, int N, std::uint64_t seed) {
    if (N < 1) throw DomainError("ensemble needs at least one particle");
    rho.validate();
    const int n = rho.dim();
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(rho.cov).matrixL();
    const NoiseSource noise(seed);
    ParticleEnsemble ens{Eigen::MatrixXd(N, n), 0.0, seed};
    Eigen::VectorXd xi(n);
    for (int i = 0; i < N; ++i) {
        noise.normals(i, 0, NoiseSource::initial, xi.data(), n);
        ens.states.row(i) = (rho.mean + L * xi).transpose();
    }
    return ens;
}

ParticleEnsemble init_ensemble(const GridDensity1D& rho, int N, std::uint64_t seed) {
    if (N < 1) throw DomainError("ensemble needs at least one particle");
    if (rho.size() < 3) throw DomainError("ensemble needs a valid grid density");
    const NoiseSource noise(seed);
    ParticleEnsemble ens{Eigen::MatrixXd(N, 1), 0.0, seed};
    for (int i = 0; i < N; ++i) ens.states(i, 0) = rho.quantile(noise.uniform(i, 0, NoiseSource::initial));
    return ens;
}

// ---------------------------------------------------------------------------
// Simulation

SimOutput simulate(const ParticleEnsemble& ens, const SystemDynamics& dyn, const FeedbackPolicy& policy,
                   Coupling coupling, const TimeGrid& grid, const SimOptions& options) {
    dyn.validate();
    const int N = ens.size();
    const int n = dyn.n();
    const int m = dyn.m_in();
    if (ens.dim() != n) throw DimensionError("ensemble dimension does not match the dynamics");
    if (N < 1) throw DomainError("ensemble is empty");
    if (coupling == Coupling::empirical && N < 2) throw DomainError("empirical coupling needs at least 2 particles");
    if (!policy.covers(grid.t0()) || !policy.covers(grid.t1()))
        throw DomainError("policy horizon does not cover the simulation grid");
    if (!ens.states.allFinite()) throw BlowUpError(grid.t0(), static_cast<long>(0));

    const int steps = grid.steps();
    const double dt = grid.dt();
    const double noise_scale = std::sqrt(dyn.eps * dt);

    std::vector<int> snap_idx{0, steps};
    for (double s : options.snapshots) {
        if (!(s >= grid.t0() - 1e-12 && s <= grid.t1() + 1e-12))
            throw DomainError("snapshot time " + format_double(s) + " outside the simulation horizon");
        snap_idx.push_back(std::clamp(static_cast<int>(std::lround((s - grid.t0()) / dt)), 0, steps));
    }
    std::sort(snap_idx.begin(), snap_idx.end());
    snap_idx.erase(std::unique(snap_idx.begin(), snap_idx.end()), snap_idx.end());

    // Row-major working copy so each particle is contiguous.
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMatrix X = ens.states;
    std::vector<double> cost(N, 0.0);
    const NoiseSource noise(ens.seed);

    SimOutput out;
    out.times = grid.nodes();
    out.mean_path.reserve(steps + 1);

    int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, N));

    // Per-step quantities written by the serial phase, read by all workers.
    int k = 0;
    bool abort = false;
    Eigen::MatrixXd A_k, K_k;
    Eigen::VectorXd k_k, sum(n), coupling_k(n);
    const Eigen::MatrixXd& Abar = dyn.Abar;
    const Eigen::MatrixXd& B = dyn.B;

    std::mutex error_mutex;
    long error_particle = -1;
    std::exception_ptr error;
    auto record_error = [&](long particle, std::exception_ptr e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (error_particle < 0 || particle < error_particle) {
            error_particle = particle;
            error = e;
        }
    };

    // Serial phase: reduce the ensemble in fixed particle order, then prepare
    // step k (or record the end state when k == steps).
    auto serial = [&]() noexcept {
        if (error) {
            abort = true;
            return;
        }
        sum.setZero();
        for (int i = 0; i < N; ++i) sum += X.row(i).transpose();
        out.mean_path.push_back(sum / N);
        if (std::binary_search(snap_idx.begin(), snap_idx.end(), k)) {
            out.snapshot_times.push_back(grid.node(k));
            out.snapshots.emplace_back(X);
        }
        if (k == steps) return;
        const double t = grid.node(k);
        try {
            A_k = dyn.a_at(t);
            if (coupling == Coupling::meanfield)
                coupling_k = options.mean_path ? options.mean_path(t) : Eigen::VectorXd(sum / N);
            if (coupling_k.size() != n) throw DimensionError("mean path has the wrong dimension");
            if (policy.is_affine()) {
                const AffineGain g = policy.gains(t);
                K_k = g.K;
                k_k = g.k;
            }
        } catch (...) {
            error = std::current_exception();
            abort = true;
        }
    };

    auto work = [&](int lo, int hi) {
        Eigen::VectorXd x(n), u(m), xi(m), c(n), drift(n), kick(n);
        const double t = grid.node(k);
        for (int i = lo; i < hi; ++i) {
            x = X.row(i).transpose();
            if (coupling == Coupling::empirical)
                c = (sum - x) / (N - 1);
            else
                c = coupling_k;
            try {
                if (policy.is_affine()) {
                    u.noalias() = K_k * x;
                    u += k_k;
                }
                else
                    u = policy(t, x);
            } catch (...) {
                record_error(i, std::current_exception());
                return;
            }
            noise.normals(i, static_cast<std::uint32_t>(k), NoiseSource::diffusion, xi.data(), m);
            drift.noalias() = A_k * x;
            drift.noalias() += Abar * c;
            drift.noalias() += B * u;
            kick.noalias() = B * xi;
            x += dt * drift + noise_scale * kick;
            cost[i] += 0.5 * u.squaredNorm() * dt;
            if (!x.allFinite()) {
                record_error(i, std::make_exception_ptr(BlowUpError(grid.node(k + 1), i)));
                return;
            }
            X.row(i) = x.transpose();
        }
    };

    if (threads == 1) {
        for (k = 0; k <= steps; ++k) {
            serial();
            if (abort || k == steps) break;
            work(0, N);
        }
    } else {
        auto completion = [&]() noexcept {
            ++k;
            serial();
        };
        k = 0;
        serial();
        std::barrier sync(threads, completion);
        std::vector<std::thread> pool;
        const int chunk = (N + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const int lo = std::min(N, w * chunk), hi = std::min(N, lo + chunk);
            pool.emplace_back([&, lo, hi] {
                while (!abort && k < steps) {
                    work(lo, hi);
                    sync.arrive_and_wait();
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    double total = 0.0;
    for (double c : cost) total += c;
    out.realized_cost = total / N;
    out.final = ParticleEnsemble{Eigen::MatrixXd(X), grid.t1(), ens.seed};
    return out;
}

// ---------------------------------------------------------------------------
// Moment oracle

MomentTrajectory moment_oracle(const GaussianDensity& rho0, const SystemDynamics& dyn, const RiccatiSolution& riccati,
                               const MeanSteering& steering, const TimeGrid& grid) {
    dyn.validate();
    rho0.validate();
    const int n = dyn.n();
    if (rho0.dim() != n || riccati.pi.empty() || riccati.pi.front().rows() != n || steering.m.empty() ||
        steering.m.front().size() != n)
        throw DimensionError("moment oracle inputs have inconsistent dimensions");
    if (riccati.grid.t0() != grid.t0() || steering.grid.t0() != grid.t0())
        throw DomainError("moment oracle grid must start where the design starts");
    if (riccati.eps != dyn.eps) throw DomainError("Riccati solution was built for a different noise level");

    const Eigen::MatrixXd bbt = dyn.bbt();
    const bool coop = steering.mode == GameMode::coop;
    const int nn = n * n;
    // Column layout: vec Pi, m, y, mean, vec Sigma.
    const int rows = 2 * nn + 3 * n;
    auto field = [&](double t, const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
        const Eigen::MatrixXd a = dyn.a_at(t);
        const Eigen::MatrixXd abar = a + dyn.Abar;
        const Eigen::Map<const Eigen::MatrixXd> pi(s.data(), n, n);
        const auto mv = s.col(0).segment(nn, n);
        const auto y = s.col(0).segment(nn + n, n);
        const auto xbar = s.col(0).segment(nn + 2 * n, n);
        const Eigen::Map<const Eigen::MatrixXd> sigma(s.data() + nn + 3 * n, n, n);
        const Eigen::MatrixXd closed = a - bbt * pi;

        Eigen::MatrixXd ds(rows, 1);
        Eigen::Map<Eigen::MatrixXd>(ds.data(), n, n) = -a.transpose() * pi - pi * a + pi * bbt * pi;
        ds.col(0).segment(nn, n) = coop ? Eigen::VectorXd(-abar.transpose() * mv) : Eigen::VectorXd(-a.transpose() * mv);
        ds.col(0).segment(nn + n, n) = abar * y + bbt * mv;
        ds.col(0).segment(nn + 2 * n, n) = abar * xbar - bbt * pi * (xbar - y) + bbt * mv;
        Eigen::Map<Eigen::MatrixXd>(ds.data() + nn + 3 * n, n, n) =
            closed * sigma + sigma * closed.transpose() + dyn.eps * bbt;
        return ds;
    };

    Eigen::MatrixXd s0(rows, 1);
    Eigen::Map<Eigen::MatrixXd>(s0.data(), n, n) = riccati.pi.front();
    s0.col(0).segment(nn, n) = steering.m.front();
    s0.col(0).segment(nn + n, n) = steering.y.front();
    s0.col(0).segment(nn + 2 * n, n) = rho0.mean;
    Eigen::Map<Eigen::MatrixXd>(s0.data() + nn + 3 * n, n, n) = rho0.cov;

    const auto traj = integrate_ode(field, s0, grid);
    MomentTrajectory out;
    out.times = grid.nodes();
    for (const auto& s : traj) {
        out.mean.push_back(s.col(0).segment(nn + 2 * n, n));
        out.cov.push_back(symmetrize(Eigen::Map<const Eigen::MatrixXd>(s.data() + nn + 3 * n, n, n)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

EnsembleStats ensemble_stats(const Eigen::MatrixXd& states, const std::function<double(double)>& reference_cdf,
                             int bins) {
    const int N = static_cast<int>(states.rows());
    const int n = static_cast<int>(states.cols());
    if (N < 2) throw DomainError("ensemble statistics need at least 2 particles");
    if (bins < 1) throw DomainError("histogram needs at least one bin");

    EnsembleStats st;
    st.mean = states.colwise().mean().transpose();
    const Eigen::MatrixXd centered = states.rowwise() - st.mean.transpose();
    st.cov = symmetrize(centered.transpose() * centered / (N - 1));

    for (int j = 0; j < n; ++j) {
        const double lo = states.col(j).minCoeff(), hi = states.col(j).maxCoeff();
        Histogram h;
        h.mass.assign(bins, 0.0);
        h.width = hi > lo ? (hi - lo) / bins : 1.0;
        h.lo = hi > lo ? lo : lo - 0.5 * bins * h.width;
        for (int i = 0; i < N; ++i) {
            const int b = std::clamp(static_cast<int>((states(i, j) - h.lo) / h.width), 0, bins - 1);
            h.mass[b] += 1.0 / N;
        }
        st.histograms.push_back(std::move(h));
    }

    if (reference_cdf && n == 1) {
        std::vector<double> xs(states.data(), states.data() + N);
        std::sort(xs.begin(), xs.end());
        double d = 0.0;
        for (int i = 0; i < N; ++i) {
            const double F = reference_cdf(xs[i]);
            d = std::max({d, static_cast<double>(i + 1) / N - F, F - static_cast<double>(i) / N});
        }
        st.ks = d;
    }
    return st;
}

double ks_critical(int N, double alpha) {
    if (N < 1 || !(alpha > 0.0 && alpha < 1.0)) throw DomainError("KS critical value needs N >= 1 and alpha in (0, 1)");
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(N));
}

}  // namespace mfsteer
