#include "scenario.hpp"

#include "mfsteer/bridge1d.hpp"
#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace mfsteer::cli {

std::string to_string(ScenarioMode mode) {
    switch (mode) {
        case ScenarioMode::noncoop: return "noncoop";
        case ScenarioMode::coop: return "coop";
        case ScenarioMode::stationary: return "stationary";
        case ScenarioMode::zero_noise: return "zero-noise";
    }
    return "?";
}

std::optional<ScenarioMode> mode_from_string(const std::string& text) {
    for (auto m : {ScenarioMode::noncoop, ScenarioMode::coop, ScenarioMode::stationary, ScenarioMode::zero_noise})
        if (to_string(m) == text) return m;
    return std::nullopt;
}

namespace {

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

// Walks the YAML tree, converting values and remembering which fields were
// present but malformed (so the semantic pass does not report them again).
class Reader {
public:
    std::vector<std::string> errors;
    std::set<std::string> malformed;

    void fail(const std::string& path, const std::string& msg) {
        errors.push_back(path + ": " + msg);
        malformed.insert(path);
    }

    bool is_map(const YAML::Node& node, const std::string& path) {
        if (node.IsMap()) return true;
        fail(path, "expected a mapping");
        return false;
    }

    void check_keys(const YAML::Node& node, const std::string& prefix, std::initializer_list<const char*> allowed) {
        for (const auto& kv : node) {
            const std::string key = kv.first.Scalar();
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
                errors.push_back(join(prefix, key) + ": unknown key");
        }
    }

    std::optional<double> number(const YAML::Node& node, const std::string& path) {
        if (!node.IsScalar()) {
            fail(path, "expected a number");
            return std::nullopt;
        }
        auto v = parse_double(node.Scalar());
        if (!v || !std::isfinite(*v)) {
            fail(path, "'" + node.Scalar() + "' is not a finite number");
            return std::nullopt;
        }
        return v;
    }

    template <typename Int>
    std::optional<Int> integer(const YAML::Node& node, const std::string& path) {
        Int v{};
        if (node.IsScalar()) {
            const std::string& s = node.Scalar();
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty()) return v;
        }
        fail(path, "expected an integer");
        return std::nullopt;
    }

    std::optional<bool> boolean(const YAML::Node& node, const std::string& path) {
        if (node.IsScalar() && (node.Scalar() == "true" || node.Scalar() == "false")) return node.Scalar() == "true";
        fail(path, "expected true or false");
        return std::nullopt;
    }

    std::optional<std::string> string(const YAML::Node& node, const std::string& path) {
        if (node.IsScalar() && !node.Scalar().empty()) return node.Scalar();
        fail(path, "expected a non-empty string");
        return std::nullopt;
    }

    /// A scalar is read as a 1-vector.
    std::optional<Eigen::VectorXd> vector(const YAML::Node& node, const std::string& path) {
        if (node.IsScalar()) {
            auto v = number(node, path);
            if (!v) return std::nullopt;
            return Eigen::VectorXd::Constant(1, *v);
        }
        if (!node.IsSequence() || node.size() == 0) {
            fail(path, "expected a number or a list of numbers");
            return std::nullopt;
        }
        Eigen::VectorXd out(node.size());
        for (std::size_t i = 0; i < node.size(); ++i) {
            auto v = number(node[i], path + "[" + std::to_string(i) + "]");
            if (!v) {
                malformed.insert(path);
                return std::nullopt;
            }
            out(i) = *v;
        }
        return out;
    }

    /// A scalar is read as a 1x1 matrix; otherwise a list of equal-length rows.
    std::optional<Eigen::MatrixXd> matrix(const YAML::Node& node, const std::string& path) {
        if (node.IsScalar()) {
            auto v = number(node, path);
            if (!v) return std::nullopt;
            return Eigen::MatrixXd::Constant(1, 1, *v);
        }
        if (!node.IsSequence() || node.size() == 0) {
            fail(path, "expected a number or a list of rows");
            return std::nullopt;
        }
        std::vector<Eigen::VectorXd> rows;
        for (std::size_t i = 0; i < node.size(); ++i) {
            const std::string rp = path + "[" + std::to_string(i) + "]";
            if (!node[i].IsSequence()) {
                fail(rp, "expected a list of numbers");
                malformed.insert(path);
                return std::nullopt;
            }
            auto r = vector(node[i], rp);
            if (!r) {
                malformed.insert(path);
                return std::nullopt;
            }
            rows.push_back(*r);
        }
        const auto cols = rows.front().size();
        Eigen::MatrixXd out(rows.size(), cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != cols) {
                fail(path, "rows have different lengths");
                return std::nullopt;
            }
            out.row(i) = rows[i].transpose();
        }
        return out;
    }

    static std::string join(const std::string& prefix, const std::string& key) {
        return prefix.empty() ? key : prefix + "." + key;
    }
};

MarginalSpec read_marginal(Reader& r, const YAML::Node& node, const std::string& path) {
    MarginalSpec spec;
    if (!r.is_map(node, path)) return spec;
    r.check_keys(node, path, {"mean", "cov", "grid"});
    if (node["grid"]) {
        if (node["mean"] || node["cov"]) r.fail(path, "give either grid or mean/cov, not both");
        spec.grid = r.string(node["grid"], path + ".grid");
        if (!spec.grid) spec.grid = std::string();
        return spec;
    }
    if (node["mean"])
        if (auto v = r.vector(node["mean"], path + ".mean")) spec.mean = *v;
    if (node["cov"])
        if (auto m = r.matrix(node["cov"], path + ".cov")) spec.cov = *m;
    return spec;
}

ScenarioConfig read_config(Reader& r, const YAML::Node& root, const std::filesystem::path& base_dir,
                           std::optional<int>& n_decl, std::optional<int>& m_decl) {
    ScenarioConfig c;
    c.base_dir = base_dir;
    c.dyn = SystemDynamics{};
    if (!root.IsMap()) {
        r.fail("(root)", "expected a mapping of sections");
        return c;
    }
    r.check_keys(root, "", {"mode", "dynamics", "marginals", "numerics", "simulation", "output"});

    if (root["mode"]) {
        if (auto s = r.string(root["mode"], "mode")) {
            if (auto m = mode_from_string(*s))
                c.mode = *m;
            else
                r.fail("mode", "'" + *s + "' is not one of noncoop, coop, stationary, zero-noise");
        }
    } else {
        r.errors.push_back("mode: required");
    }

    c.dyn.eps = c.mode == ScenarioMode::zero_noise ? 0.0 : 1.0;
    if (const auto d = root["dynamics"]; d && r.is_map(d, "dynamics")) {
        r.check_keys(d, "dynamics", {"A", "Abar", "B", "epsilon", "n", "m"});
        if (d["A"])
            if (auto m = r.matrix(d["A"], "dynamics.A")) c.dyn.A = *m;
        if (d["Abar"])
            if (auto m = r.matrix(d["Abar"], "dynamics.Abar")) c.dyn.Abar = *m;
        if (d["B"])
            if (auto m = r.matrix(d["B"], "dynamics.B")) c.dyn.B = *m;
        if (d["epsilon"])
            if (auto v = r.number(d["epsilon"], "dynamics.epsilon")) c.dyn.eps = *v;
        if (d["n"]) n_decl = r.integer<int>(d["n"], "dynamics.n");
        if (d["m"]) m_decl = r.integer<int>(d["m"], "dynamics.m");
    }

    if (const auto mg = root["marginals"]; mg && r.is_map(mg, "marginals")) {
        r.check_keys(mg, "marginals", {"initial", "terminal", "target"});
        if (mg["initial"]) c.initial = read_marginal(r, mg["initial"], "marginals.initial");
        if (mg["terminal"]) c.terminal = read_marginal(r, mg["terminal"], "marginals.terminal");
        if (mg["target"]) c.target = read_marginal(r, mg["target"], "marginals.target");
    }

    if (const auto nu = root["numerics"]; nu && r.is_map(nu, "numerics")) {
        r.check_keys(nu, "numerics", {"steps", "grid_points", "tol", "maxiter", "relaxation"});
        auto& k = c.numerics;
        if (nu["steps"]) k.steps = r.integer<int>(nu["steps"], "numerics.steps").value_or(k.steps);
        if (nu["grid_points"])
            k.grid_points = r.integer<int>(nu["grid_points"], "numerics.grid_points").value_or(k.grid_points);
        if (nu["tol"]) k.tol = r.number(nu["tol"], "numerics.tol").value_or(k.tol);
        if (nu["maxiter"]) k.maxiter = r.integer<int>(nu["maxiter"], "numerics.maxiter").value_or(k.maxiter);
        if (nu["relaxation"]) k.relaxation = r.number(nu["relaxation"], "numerics.relaxation").value_or(k.relaxation);
    }

    if (const auto s = root["simulation"]; s && r.is_map(s, "simulation")) {
        r.check_keys(s, "simulation", {"enabled", "particles", "seed", "snapshots", "coupling", "threads", "horizon"});
        auto& sim = c.simulation;
        if (s["enabled"]) sim.enabled = r.boolean(s["enabled"], "simulation.enabled").value_or(sim.enabled);
        if (s["particles"])
            sim.particles = r.integer<int>(s["particles"], "simulation.particles").value_or(sim.particles);
        if (s["seed"]) sim.seed = r.integer<std::uint64_t>(s["seed"], "simulation.seed").value_or(sim.seed);
        if (s["snapshots"]) {
            if (s["snapshots"].IsSequence() && s["snapshots"].size() == 0) {
                r.fail("simulation.snapshots", "must not be empty");
            } else if (auto v = r.vector(s["snapshots"], "simulation.snapshots")) {
                sim.snapshots = std::vector<double>(v->data(), v->data() + v->size());
            }
        }
        if (s["coupling"]) {
            if (auto str = r.string(s["coupling"], "simulation.coupling")) {
                if (*str == "empirical")
                    sim.coupling = Coupling::empirical;
                else if (*str == "meanfield")
                    sim.coupling = Coupling::meanfield;
                else
                    r.fail("simulation.coupling", "'" + *str + "' is not one of empirical, meanfield");
            }
        }
        if (s["threads"]) sim.threads = r.integer<int>(s["threads"], "simulation.threads").value_or(sim.threads);
        if (s["horizon"]) sim.horizon = r.number(s["horizon"], "simulation.horizon");
    }

    if (root["output"]) c.output = r.string(root["output"], "output");
    return c;
}

std::vector<std::string> semantic_errors(const ScenarioConfig& c, std::optional<int> n_decl = {},
                                         std::optional<int> m_decl = {}) {
    std::vector<std::string> errs;
    auto err = [&](const std::string& path, const std::string& msg) { errs.push_back(path + ": " + msg); };
    const auto& d = c.dyn;
    const bool steering = c.mode == ScenarioMode::noncoop || c.mode == ScenarioMode::coop;

    const int n = static_cast<int>(d.B.rows()), m = static_cast<int>(d.B.cols());
    if (d.B.size() == 0) err("dynamics.B", "required");
    if (d.A.size() == 0) err("dynamics.A", "required");
    if (d.B.size() > 0) {
        if (n_decl && *n_decl != n) err("dynamics.n", "declared " + std::to_string(*n_decl) + " but B has " + std::to_string(n) + " rows");
        if (m_decl && *m_decl != m) err("dynamics.m", "declared " + std::to_string(*m_decl) + " but B has " + std::to_string(m) + " columns");
        if (d.A.size() > 0 && (d.A.rows() != n || d.A.cols() != n))
            err("dynamics.A", "must be " + std::to_string(n) + "x" + std::to_string(n) + " to match B");
        if (d.Abar.size() > 0 && (d.Abar.rows() != n || d.Abar.cols() != n))
            err("dynamics.Abar", "must be " + std::to_string(n) + "x" + std::to_string(n) + " to match B");
    }
    if (!(d.eps >= 0.0) || !std::isfinite(d.eps)) err("dynamics.epsilon", "must be a finite number >= 0");
    if (c.mode == ScenarioMode::zero_noise && d.eps != 0.0) err("dynamics.epsilon", "zero-noise mode needs epsilon = 0");

    auto check_marginal = [&](const std::optional<MarginalSpec>& spec, const std::string& path) {
        if (!spec) return;
        if (spec->is_grid()) {
            if (spec->grid->empty()) return;
            if (d.B.size() > 0 && (n != 1 || m != 1)) err(path + ".grid", "grid marginals need a scalar state and input");
            const auto file = c.resolve(*spec->grid);
            if (!std::filesystem::is_regular_file(file)) {
                err(path + ".grid", "file not found: " + file.string());
                return;
            }
            try {
                GridDensity1D::read_csv(file.string());
            } catch (const Error& e) {
                err(path + ".grid", e.what());
            }
            return;
        }
        if (spec->mean.size() == 0) err(path + ".mean", "required");
        if (spec->cov.size() == 0) err(path + ".cov", "required");
        if (d.B.size() > 0) {
            if (spec->mean.size() > 0 && spec->mean.size() != n)
                err(path + ".mean", "must have " + std::to_string(n) + " entries");
            if (spec->cov.size() > 0 && (spec->cov.rows() != n || spec->cov.cols() != n)) {
                err(path + ".cov", "must be " + std::to_string(n) + "x" + std::to_string(n));
                return;
            }
        }
        if (spec->cov.size() == 0) return;
        if (spec->cov.rows() != spec->cov.cols()) {
            err(path + ".cov", "must be square");
            return;
        }
        const double scale = spec->cov.cwiseAbs().maxCoeff();
        if ((spec->cov - spec->cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            err(path + ".cov", "not symmetric");
            return;
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec->cov);
        if (!(es.eigenvalues().minCoeff() > 0.0))
            err(path + ".cov", "not positive definite (smallest eigenvalue " +
                                   format_double(es.eigenvalues().minCoeff()) + ")");
    };

    if (steering || c.mode == ScenarioMode::zero_noise) {
        if (!c.initial) err("marginals.initial", "required in " + to_string(c.mode) + " mode");
        if (!c.terminal) err("marginals.terminal", "required in " + to_string(c.mode) + " mode");
        if (c.target) err("marginals.target", "only used in stationary mode");
        const bool grid = (c.initial && c.initial->is_grid()) || (c.terminal && c.terminal->is_grid());
        if (steering && grid && d.eps == 0.0)
            err("dynamics.epsilon", "grid marginals with epsilon = 0 need mode zero-noise");
        if (c.simulation.horizon) err("simulation.horizon", "only used in stationary mode (the horizon is [0, 1])");
    } else {
        if (!c.target) err("marginals.target", "required in stationary mode");
        if (c.terminal) err("marginals.terminal", "not used in stationary mode");
        if (c.target && c.target->is_grid()) err("marginals.target", "the stationary target must be Gaussian");
        if (c.initial && c.initial->is_grid()) err("marginals.initial", "stationary mode needs a Gaussian initial law");
        if (c.simulation.horizon && !(*c.simulation.horizon > 0.0)) err("simulation.horizon", "must be positive");
    }
    check_marginal(c.initial, "marginals.initial");
    check_marginal(c.terminal, "marginals.terminal");
    check_marginal(c.target, "marginals.target");

    const auto& k = c.numerics;
    if (k.steps < 1) err("numerics.steps", "must be >= 1");
    if (k.grid_points < 16) err("numerics.grid_points", "must be >= 16");
    if (!(k.tol > 0.0)) err("numerics.tol", "must be positive");
    if (k.maxiter < 1) err("numerics.maxiter", "must be >= 1");
    if (!(k.relaxation >= 1.0 && k.relaxation < 2.0)) err("numerics.relaxation", "must lie in [1, 2)");

    const auto& s = c.simulation;
    const int min_particles = s.coupling == Coupling::empirical ? 2 : 1;
    if (s.particles < min_particles)
        err("simulation.particles", "must be >= " + std::to_string(min_particles));
    if (s.threads < 0) err("simulation.threads", "must be >= 0 (0 uses every core)");
    if (s.snapshots && (c.mode != ScenarioMode::stationary || !s.horizon || *s.horizon > 0.0)) {
        const double h = c.horizon();
        for (double t : *s.snapshots)
            if (!(t >= 0.0 && t <= h)) err("simulation.snapshots", format_double(t) + " lies outside [0, " + format_double(h) + "]");
    }
    return errs;
}

void emit_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    out << '[';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << (i ? ", [" : "[");
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? ", " : "") << format_double(m(i, j));
        out << ']';
    }
    out << ']';
}

void emit_list(std::ostream& out, const double* v, std::size_t n) {
    out << '[';
    for (std::size_t i = 0; i < n; ++i) out << (i ? ", " : "") << format_double(v[i]);
    out << ']';
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

void emit_marginal(std::ostream& out, const char* name, const MarginalSpec& spec) {
    out << "  " << name << ":\n";
    if (spec.is_grid()) {
        out << "    grid: " << quoted(*spec.grid) << "\n";
        return;
    }
    out << "    mean: ";
    emit_list(out, spec.mean.data(), spec.mean.size());
    out << "\n    cov: ";
    emit_matrix(out, spec.cov);
    out << "\n";
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json marginal_json(const MarginalSpec& spec) {
    if (spec.is_grid()) return {{"grid", *spec.grid}};
    return {{"mean", std::vector<double>(spec.mean.data(), spec.mean.data() + spec.mean.size())},
            {"cov", matrix_json(spec.cov)}};
}

}  // namespace

bool MarginalSpec::operator==(const MarginalSpec& other) const {
    return grid == other.grid && same(mean, other.mean) && same(cov, other.cov);
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const {
    return mode == o.mode && same(dyn.A, o.dyn.A) && same(dyn.Abar, o.dyn.Abar) && same(dyn.B, o.dyn.B) &&
           dyn.eps == o.dyn.eps && initial == o.initial && terminal == o.terminal && target == o.target &&
           numerics == o.numerics && simulation == o.simulation && output == o.output;
}

double ScenarioConfig::horizon() const {
    return mode == ScenarioMode::stationary ? simulation.horizon.value_or(5.0) : 1.0;
}

std::vector<double> ScenarioConfig::snapshot_times() const {
    if (simulation.snapshots) return *simulation.snapshots;
    const double h = horizon();
    return {0.0, 0.25 * h, 0.5 * h, 0.75 * h, h};
}

std::filesystem::path ScenarioConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    if (p.is_absolute()) return p;
    return (base_dir / p).lexically_normal();
}

ScenarioConfig parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError({"line " + std::to_string(e.mark.line + 1) + ": " + e.msg});
    }
    Reader r;
    std::optional<int> n_decl, m_decl;
    ScenarioConfig c = read_config(r, root, base_dir, n_decl, m_decl);
    // Abar defaults to zero once the state dimension is known.
    if (c.dyn.Abar.size() == 0 && !r.malformed.count("dynamics.Abar") && c.dyn.B.rows() > 0)
        c.dyn.Abar = Eigen::MatrixXd::Zero(c.dyn.B.rows(), c.dyn.B.rows());
    auto errs = r.errors;
    if (root.IsMap())
        for (auto& e : semantic_errors(c, n_decl, m_decl)) {
            const std::string field = e.substr(0, e.find(':'));
            bool reported = false;
            for (const auto& bad : r.malformed)
                if (field == bad || field.rfind(bad + ".", 0) == 0) reported = true;
            if (!reported) errs.push_back(e);
        }
    if (!errs.empty()) throw ConfigError(errs);
    return c;
}

ScenarioConfig parse_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path.string() + ": cannot open scenario file"});
    std::stringstream buf;
    buf << in.rdbuf();
    auto dir = path.parent_path();
    if (dir.empty()) dir = ".";
    try {
        return parse_scenario_text(buf.str(), dir);
    } catch (const ConfigError& e) {
        std::vector<std::string> problems;
        for (const auto& p : e.problems()) problems.push_back(path.string() + ": " + p);
        throw ConfigError(problems);
    }
}

void validate_scenario(const ScenarioConfig& config) {
    auto errs = semantic_errors(config);
    if (!errs.empty()) throw ConfigError(errs);
}

std::string emit_scenario(const ScenarioConfig& c) {
    std::ostringstream out;
    out << "mode: " << to_string(c.mode) << "\n";
    out << "dynamics:\n  A: ";
    emit_matrix(out, c.dyn.A);
    out << "\n  Abar: ";
    emit_matrix(out, c.dyn.Abar);
    out << "\n  B: ";
    emit_matrix(out, c.dyn.B);
    out << "\n  epsilon: " << format_double(c.dyn.eps) << "\n";
    if (c.initial || c.terminal || c.target) {
        out << "marginals:\n";
        if (c.initial) emit_marginal(out, "initial", *c.initial);
        if (c.terminal) emit_marginal(out, "terminal", *c.terminal);
        if (c.target) emit_marginal(out, "target", *c.target);
    }
    const auto& k = c.numerics;
    out << "numerics:\n"
        << "  steps: " << k.steps << "\n"
        << "  grid_points: " << k.grid_points << "\n"
        << "  tol: " << format_double(k.tol) << "\n"
        << "  maxiter: " << k.maxiter << "\n"
        << "  relaxation: " << format_double(k.relaxation) << "\n";
    const auto& s = c.simulation;
    out << "simulation:\n"
        << "  enabled: " << (s.enabled ? "true" : "false") << "\n"
        << "  particles: " << s.particles << "\n"
        << "  seed: " << s.seed << "\n";
    if (s.snapshots) {
        out << "  snapshots: ";
        emit_list(out, s.snapshots->data(), s.snapshots->size());
        out << "\n";
    }
    out << "  coupling: " << (s.coupling == Coupling::empirical ? "empirical" : "meanfield") << "\n"
        << "  threads: " << s.threads << "\n";
    if (s.horizon) out << "  horizon: " << format_double(*s.horizon) << "\n";
    if (c.output) out << "output: " << quoted(*c.output) << "\n";
    return out.str();
}

nlohmann::json scenario_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["mode"] = to_string(c.mode);
    j["dynamics"] = {{"A", matrix_json(c.dyn.A)},
                     {"Abar", matrix_json(c.dyn.Abar)},
                     {"B", matrix_json(c.dyn.B)},
                     {"epsilon", c.dyn.eps}};
    auto mg = nlohmann::json::object();
    if (c.initial) mg["initial"] = marginal_json(*c.initial);
    if (c.terminal) mg["terminal"] = marginal_json(*c.terminal);
    if (c.target) mg["target"] = marginal_json(*c.target);
    j["marginals"] = mg;
    const auto& k = c.numerics;
    j["numerics"] = {{"steps", k.steps},
                     {"grid_points", k.grid_points},
                     {"tol", k.tol},
                     {"maxiter", k.maxiter},
                     {"relaxation", k.relaxation}};
    const auto& s = c.simulation;
    j["simulation"] = {{"enabled", s.enabled},
                       {"particles", s.particles},
                       {"seed", s.seed},
                       {"snapshots", c.snapshot_times()},
                       {"coupling", s.coupling == Coupling::empirical ? "empirical" : "meanfield"},
                       {"threads", s.threads},
                       {"horizon", c.horizon()}};
    if (c.output) j["output"] = *c.output;
    return j;
}

ScenarioConfig with_absolute_paths(const ScenarioConfig& config) {
    ScenarioConfig c = config;
    for (auto* spec : {&c.initial, &c.terminal, &c.target})
        if (*spec && (*spec)->is_grid()) (*spec)->grid = std::filesystem::absolute(c.resolve(*(*spec)->grid)).string();
    if (c.output) c.output = std::filesystem::absolute(c.resolve(*c.output)).string();
    return c;
}

}  // namespace mfsteer::cli
