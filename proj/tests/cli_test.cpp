#include "cli.hpp"
#include "pipeline.hpp"
#include "scenario.hpp"

#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace mfsteer;
using namespace mfsteer::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kExample = R"(mode: noncoop
dynamics:
  A: 1
  Abar: -2
  B: 1
  epsilon: 1
marginals:
  initial: {mean: 1, cov: 4}
  terminal: {mean: -4, cov: 1}
)";

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("mfsteer_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    int cli(std::vector<std::string> args) {
        args.insert(args.begin(), "mfsteer");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        stderr_ = err.str();
        return code;
    }

    static json load(const fs::path& p) {
        std::ifstream in(p);
        return json::parse(in);
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }

    static std::vector<std::string> problems(const std::string& text) {
        try {
            parse_scenario_text(text);
        } catch (const ConfigError& e) {
            return e.problems();
        }
        return {};
    }

    static bool mentions(const std::vector<std::string>& list, const std::string& needle) {
        for (const auto& p : list)
            if (p.find(needle) != std::string::npos) return true;
        return false;
    }

    static json check(const json& verify, const std::string& name) {
        for (const auto& c : verify["checks"])
            if (c["name"] == name) return c;
        return nullptr;
    }

    fs::path dir_;
    std::string stderr_;
};

// Scalar prior with A = 0, B = 1: Pi' = Pi^2, var' = -2 Pi var + eps. Shooting
// on Pi(0) for var(1) = var(0) = 1.
double identical_marginal_quad(double eps) {
    auto terminal_var = [eps](double pi0) {
        const int steps = 4000;
        const double h = 1.0 / steps;
        double pi = pi0, v = 1.0;
        auto f = [eps](double p, double var) { return std::pair{p * p, -2.0 * p * var + eps}; };
        for (int k = 0; k < steps; ++k) {
            auto [a1, b1] = f(pi, v);
            auto [a2, b2] = f(pi + 0.5 * h * a1, v + 0.5 * h * b1);
            auto [a3, b3] = f(pi + 0.5 * h * a2, v + 0.5 * h * b2);
            auto [a4, b4] = f(pi + h * a3, v + h * b3);
            pi += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
            v += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
        }
        return std::pair{pi, v};
    };
    double lo = 0.0, hi = 0.9;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (terminal_var(mid).second > 1.0 ? lo : hi) = mid;
    }
    return 0.5 * terminal_var(0.5 * (lo + hi)).first;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

TEST_F(CliTest, ParsesTheScalarExample) {
    const auto c = parse_scenario(write("ex.yaml", kExample));
    EXPECT_EQ(c.mode, ScenarioMode::noncoop);
    EXPECT_EQ(c.dyn.A(0, 0), 1.0);
    EXPECT_EQ(c.dyn.Abar(0, 0), -2.0);
    EXPECT_EQ(c.dyn.eps, 1.0);
    EXPECT_EQ(c.initial->mean(0), 1.0);
    EXPECT_EQ(c.terminal->cov(0, 0), 1.0);
    EXPECT_EQ(c.numerics.steps, 1000);
    EXPECT_EQ(c.snapshot_times().size(), 5u);
    EXPECT_EQ(c.horizon(), 1.0);
}

TEST_F(CliTest, MissingBIsNamed) {
    const auto p = problems("mode: noncoop\ndynamics: {A: 1}\nmarginals: {initial: {mean: 0, cov: 1}, terminal: {mean: 0, cov: 1}}\n");
    ASSERT_FALSE(p.empty());
    EXPECT_TRUE(mentions(p, "dynamics.B: required"));
}

TEST_F(CliTest, NegativeEigenvalueIsAnSpdViolation) {
    const auto p = problems(R"(mode: noncoop
dynamics: {A: [[0, 1], [0, 0]], B: [[0], [1]]}
marginals:
  initial: {mean: [0, 0], cov: [[1, 2], [2, 1]]}
  terminal: {mean: [0, 0], cov: [[1, 0], [0, 1]]}
)");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(mentions(p, "marginals.initial.cov: not positive definite"));
}

TEST_F(CliTest, ReportsEveryProblemAtOnce) {
    const auto p = problems(R"(mode: coop
dynamics: {A: [[1, 0], [0, 1]], B: [[1], [0]], epsilon: -1, Q: 2}
marginals:
  initial: {mean: [0, 0, 0], cov: [[1, 0], [0, 1]]}
numerics: {steps: many, relaxation: 2.5}
simulation: {coupling: global}
)");
    EXPECT_TRUE(mentions(p, "dynamics.Q: unknown key"));
    EXPECT_TRUE(mentions(p, "dynamics.epsilon"));
    EXPECT_TRUE(mentions(p, "marginals.initial.mean: must have 2 entries"));
    EXPECT_TRUE(mentions(p, "marginals.terminal: required"));
    EXPECT_TRUE(mentions(p, "numerics.steps: expected an integer"));
    EXPECT_TRUE(mentions(p, "numerics.relaxation"));
    EXPECT_TRUE(mentions(p, "simulation.coupling"));
    EXPECT_GE(p.size(), 7u);
}

TEST_F(CliTest, ModeRequirements) {
    EXPECT_TRUE(mentions(problems(std::string(kExample) + "mode2: 1\n"), "mode2: unknown key"));
    auto zero = std::string(kExample);
    zero.replace(zero.find("noncoop"), 7, "zero-noise");
    EXPECT_TRUE(mentions(problems(zero), "zero-noise mode needs epsilon = 0"));
    EXPECT_TRUE(mentions(problems("mode: stationary\ndynamics: {A: 1, B: 1}\n"), "marginals.target: required"));
    EXPECT_TRUE(mentions(problems("mode: noncoop\ndynamics: {A: 1, B: 1}\nmarginals: {initial: {grid: none.csv}, "
                                  "terminal: {mean: 0, cov: 1}}\n"),
                         "file not found"));
    EXPECT_TRUE(mentions(problems(std::string(kExample) + "simulation: {horizon: 3}\n"), "simulation.horizon"));
    EXPECT_TRUE(mentions(problems(std::string(kExample) + "simulation: {snapshots: [0.5, 2]}\n"), "simulation.snapshots"));
    EXPECT_TRUE(mentions(problems("mode: noncoop\ndynamics: {A: 1, B: 1, n: 2}\nmarginals: {initial: {mean: 0, cov: 1}, "
                                  "terminal: {mean: 0, cov: 1}}\n"),
                         "dynamics.n"));
    EXPECT_TRUE(mentions(problems("mode: [1\n"), "line"));
}

TEST_F(CliTest, ZeroNoiseDefaultsEpsilonToZero) {
    auto zero = std::string(kExample);
    zero.replace(zero.find("noncoop"), 7, "zero-noise");
    zero.replace(zero.find("  epsilon: 1\n"), 13, "");
    EXPECT_EQ(parse_scenario_text(zero).dyn.eps, 0.0);
}

TEST_F(CliTest, RoundTrip) {
    write("g.csv", "x,weight\n-2,0\n-1,1\n0,2\n1,1\n2,0\n");
    std::vector<ScenarioConfig> configs;
    configs.push_back(parse_scenario(write("a.yaml", kExample)));
    configs.push_back(parse_scenario(write("b.yaml", R"(mode: zero-noise
dynamics: {A: 0.1, B: 3}
marginals: {initial: {grid: g.csv}, terminal: {mean: 0.3333333333333333, cov: 1e-3}}
numerics: {steps: 77, grid_points: 100, tol: 1e-11, maxiter: 9, relaxation: 1.85}
simulation: {enabled: false, particles: 3, seed: 18446744073709551615, snapshots: [0, 0.1, 1], coupling: meanfield, threads: 0}
output: "out dir/x"
)")));
    configs.push_back(parse_scenario(write("c.yaml", R"(mode: stationary
dynamics: {A: [[0, 1], [-2, -3]], Abar: [[0.1, 0], [0, 0.2]], B: [[0, 1], [1, 0]], epsilon: 0.25}
marginals:
  initial: {mean: [1, 2], cov: [[2, 0.5], [0.5, 1]]}
  target: {mean: [0, 0], cov: [[1, 0], [0, 1]]}
simulation: {horizon: 7.5, snapshots: [0, 7.5]}
)")));
    // Random Gaussian scenarios with awkward doubles.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        ScenarioConfig c = configs[0];
        const int n = 1 + trial % 3;
        c.mode = trial % 2 ? ScenarioMode::coop : ScenarioMode::noncoop;
        c.dyn.A = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng) / 3.0; });
        c.dyn.Abar = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng) * 1e-7; });
        c.dyn.B = Eigen::MatrixXd::NullaryExpr(n, 1 + trial % n, [&] { return normal(rng); });
        c.dyn.eps = std::abs(normal(rng));
        for (auto* spec : {&c.initial, &c.terminal}) {
            const Eigen::MatrixXd R = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
            const Eigen::MatrixXd S = R * R.transpose() + Eigen::MatrixXd::Identity(n, n);
            (*spec)->mean = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng) * 1e5; });
            (*spec)->cov = 0.5 * (S + S.transpose());
        }
        c.numerics.tol = std::exp(normal(rng));
        c.simulation.seed = rng();
        validate_scenario(c);
        configs.push_back(c);
    }
    for (const auto& c : configs) {
        const auto back = parse_scenario_text(emit_scenario(c), c.base_dir);
        EXPECT_TRUE(back == c) << emit_scenario(c);
        EXPECT_EQ(emit_scenario(back), emit_scenario(c));
    }
}

TEST_F(CliTest, AbsolutePathsSurviveRelocation) {
    write("g.csv", "x,weight\n-2,0\n-1,1\n0,2\n1,1\n2,0\n");
    const auto c = parse_scenario(write("b.yaml", "mode: zero-noise\ndynamics: {A: 0, B: 1}\nmarginals: "
                                                  "{initial: {grid: g.csv}, terminal: {grid: g.csv}}\n"));
    const auto abs = with_absolute_paths(c);
    EXPECT_TRUE(fs::path(*abs.initial->grid).is_absolute());
    EXPECT_NO_THROW(validate_scenario(parse_scenario_text(emit_scenario(abs), "/")));
}

// ---------------------------------------------------------------------------
// Commands

TEST_F(CliTest, DesignReproducesTheExampleCost) {
    const auto s = write("ex.yaml", kExample);
    ASSERT_EQ(cli({"design", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const auto d = load(dir_ / "o" / "design.json");
    EXPECT_NEAR(d["terminal_cost"]["quad"][0][0].get<double>(), 0.9805, 1e-3);
    EXPECT_NEAR(d["terminal_cost"]["lin"][0].get<double>(), 4.3679, 1e-3);
    EXPECT_NEAR(d["pi0"][0][0].get<double>(), 1.9945937, 1e-6);
    EXPECT_TRUE(fs::exists(dir_ / "o" / "manifest.json"));
    EXPECT_FALSE(fs::exists(dir_ / "o" / "ensemble_t1.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "o" / "verify.json"));
    const auto manifest = load(dir_ / "o" / "manifest.json");
    EXPECT_EQ(manifest["config"]["dynamics"]["Abar"][0][0].get<double>(), -2.0);
    EXPECT_EQ(manifest["artifacts"].size(), 3u);
}

TEST_F(CliTest, IdenticalMarginalsNeedOnlyTheSpreadCorrection) {
    const auto s = write("same.yaml", R"(mode: noncoop
dynamics: {A: 0, Abar: 0, B: 1, epsilon: 1}
marginals: {initial: {mean: 0, cov: 1}, terminal: {mean: 0, cov: 1}}
simulation: {particles: 4000}
)");
    ASSERT_EQ(cli({"run", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const auto d = load(dir_ / "o" / "design.json");
    EXPECT_NEAR(d["terminal_cost"]["lin"][0].get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(d["terminal_cost"]["quad"][0][0].get<double>(), identical_marginal_quad(1.0), 1e-6);
    EXPECT_TRUE(load(dir_ / "o" / "verify.json")["all_pass"].get<bool>());

    // Without noise nothing has to be corrected.
    ASSERT_EQ(cli({"design", "--scenario", s.string(), "--out", (dir_ / "q").string(), "--epsilon-override", "1e-6"}), 0);
    const auto q = load(dir_ / "q" / "design.json");
    EXPECT_LE(std::abs(q["terminal_cost"]["quad"][0][0].get<double>()), 1e-6);
    EXPECT_LE(std::abs(q["terminal_cost"]["lin"][0].get<double>()), 1e-12);
}

TEST_F(CliTest, InfeasibleStationaryTargetFails) {
    const auto s = write("inf.yaml", R"(mode: stationary
dynamics: {A: [[1, 0], [0, 1]], B: [[1], [0]]}
marginals: {target: {mean: [0, 0], cov: [[1, 0], [0, 1]]}}
)");
    EXPECT_EQ(cli({"stationary", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 1);
    const auto v = load(dir_ / "o" / "verify.json");
    EXPECT_FALSE(v["all_pass"].get<bool>());
    const auto c = check(v, "target_covariance_feasible");
    ASSERT_FALSE(c.is_null());
    EXPECT_FALSE(c["pass"].get<bool>());
    EXPECT_GE(c["value"].get<double>(), 2.0 - 1e-12);
    EXPECT_FALSE(load(dir_ / "o" / "design.json")["feasibility"]["feasible"].get<bool>());
    EXPECT_FALSE(fs::exists(dir_ / "o" / "ensemble_t1.csv"));
}

TEST_F(CliTest, StationaryExample) {
    const auto s = write("st.yaml", R"(mode: stationary
dynamics: {A: 1, Abar: -2, B: 1, epsilon: 1}
marginals: {target: {mean: 0, cov: 1}}
simulation: {particles: 4000, horizon: 2}
)");
    ASSERT_EQ(cli({"stationary", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const auto d = load(dir_ / "o" / "design.json");
    EXPECT_NEAR(d["pi"][0][0].get<double>(), 1.5, 1e-12);
    EXPECT_NEAR(d["Q"][0][0].get<double>(), -0.75, 1e-12);
    EXPECT_NEAR(d["nvec"][0].get<double>(), 0.0, 1e-12);
    // The mean path file ends at the horizon.
    const auto path = slurp(dir_ / "o" / "mean_path.csv");
    EXPECT_NE(path.find("\n2,0,"), std::string::npos);
    // A steering scenario is refused by the stationary command.
    EXPECT_EQ(cli({"stationary", "--scenario", write("ex.yaml", kExample).string(), "--out", (dir_ / "p").string()}), 2);
}

TEST_F(CliTest, SimulationIsBitwiseReproducible) {
    const auto s = write("ex.yaml", kExample);
    for (const char* out : {"a", "b"})
        ASSERT_EQ(cli({"simulate", "--scenario", s.string(), "--particles", "20000", "--seed", "7", "--out",
                       (dir_ / out).string()}),
                  0)
            << stderr_;
    ASSERT_EQ(cli({"simulate", "--scenario", s.string(), "--particles", "20000", "--seed", "7", "--threads", "3",
                   "--out", (dir_ / "c").string()}),
              0);
    for (const char* f : {"ensemble_t0.csv", "ensemble_t1.csv", "mean_path.csv", "density_flow.csv"}) {
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "c" / f)) << f;
    }
    ASSERT_EQ(cli({"simulate", "--scenario", s.string(), "--particles", "20000", "--seed", "8", "--out",
                   (dir_ / "d").string()}),
              0);
    EXPECT_NE(slurp(dir_ / "a" / "ensemble_t1.csv"), slurp(dir_ / "d" / "ensemble_t1.csv"));
}

TEST_F(CliTest, VerifyDetectsTampering) {
    const auto s = write("ex.yaml", kExample);
    const auto out = dir_ / "o";
    ASSERT_EQ(cli({"run", "--scenario", s.string(), "--particles", "2000", "--out", out.string()}), 0) << stderr_;
    EXPECT_EQ(cli({"verify", "--out", out.string()}), 0) << stderr_;

    auto d = load(out / "design.json");
    d["terminal_cost"]["quad"][0][0] = d["terminal_cost"]["quad"][0][0].get<double>() * (1 + 1e-6);
    std::ofstream(out / "design.json") << d.dump(2);
    EXPECT_EQ(cli({"verify", "--out", out.string()}), 1);
    const auto c = check(load(out / "verify.json"), "design_reproduces");
    EXPECT_FALSE(c["pass"].get<bool>());
    EXPECT_NE(c["detail"].get<std::string>().find("quad"), std::string::npos);

    // Restore the design, then damage one particle of the initial ensemble.
    ASSERT_EQ(cli({"design", "--scenario", s.string(), "--particles", "2000", "--out", out.string()}), 0);
    EXPECT_EQ(cli({"verify", "--out", out.string()}), 0) << stderr_;
    auto csv = slurp(out / "ensemble_t0.csv");
    csv.replace(csv.find('\n') + 1, 1, csv[csv.find('\n') + 1] == '9' ? "8" : "9");
    std::ofstream(out / "ensemble_t0.csv") << csv;
    EXPECT_EQ(cli({"verify", "--out", out.string()}), 1);
    EXPECT_EQ(cli({"verify", "--out", (dir_ / "missing").string()}), 2);
}

TEST_F(CliTest, FlagsWinWithAWarning) {
    const auto s = write("ex.yaml", std::string(kExample) + "simulation: {seed: 3, particles: 100}\n");
    ASSERT_EQ(cli({"run", "--scenario", s.string(), "--seed", "11", "--steps", "200", "--out", (dir_ / "o").string()}), 0)
        << stderr_;
    EXPECT_NE(stderr_.find("--seed 11 overrides simulation.seed = 3"), std::string::npos) << stderr_;
    EXPECT_NE(stderr_.find("--steps 200 overrides numerics.steps = 1000"), std::string::npos) << stderr_;
    const auto cfg = load(dir_ / "o" / "manifest.json")["config"];
    EXPECT_EQ(cfg["simulation"]["seed"].get<int>(), 11);
    EXPECT_EQ(cfg["numerics"]["steps"].get<int>(), 200);
    EXPECT_EQ(parse_scenario(dir_ / "o" / "scenario.yaml").simulation.seed, 11u);
}

TEST_F(CliTest, OutputRootFromEnvironment) {
    const auto s = write("my_case.yaml", kExample);
    ::setenv("MFSTEER_OUT_ROOT", (dir_ / "root").c_str(), 1);
    const int code = cli({"design", "--scenario", s.string()});
    ::unsetenv("MFSTEER_OUT_ROOT");
    EXPECT_EQ(code, 0) << stderr_;
    EXPECT_TRUE(fs::exists(dir_ / "root" / "my_case" / "design.json"));
    // An output key in the scenario is relative to the scenario file.
    const auto t = write("keyed.yaml", std::string(kExample) + "output: results\n");
    EXPECT_EQ(cli({"design", "--scenario", t.string()}), 0);
    EXPECT_TRUE(fs::exists(dir_ / "results" / "design.json"));
}

TEST_F(CliTest, UsageAndConfigErrorsExitWithTwo) {
    EXPECT_EQ(cli({}), 2);
    EXPECT_EQ(cli({"design"}), 2);
    EXPECT_EQ(cli({"design", "--scenario", (dir_ / "absent.yaml").string()}), 2);
    EXPECT_EQ(cli({"design", "--scenario", write("ex.yaml", kExample).string(), "--mode", "sideways"}), 2);
    EXPECT_EQ(cli({"run", "--scenario", write("ex2.yaml", kExample).string(), "--mode", "zero-noise"}), 2);
    EXPECT_NE(stderr_.find("epsilon"), std::string::npos);
    EXPECT_EQ(cli({"--help"}), 0);
}

TEST_F(CliTest, CsvFilesHaveHeadersAndPlainNumbers) {
    const auto s = write("ex.yaml", std::string(kExample) + "numerics: {grid_points: 64}\nsimulation: {particles: 500}\n");
    ASSERT_EQ(cli({"run", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const std::pair<const char*, const char*> expected[] = {
        {"density_flow.csv", "x,t=0,t=0.25,t=0.5,t=0.75,t=1"},
        {"mean_path.csv", "t,model_x1,sim_x1"},
        {"ensemble_t0.csv", "x"},
        {"ensemble_t1.csv", "x"},
    };
    for (const auto& [file, header] : expected) {
        std::ifstream in(dir_ / "o" / file);
        std::string line;
        std::getline(in, line);
        EXPECT_EQ(line, header) << file;
        const auto cols = std::count(line.begin(), line.end(), ',') + 1;
        int rows = 0;
        while (std::getline(in, line)) {
            ++rows;
            std::stringstream ss(line);
            std::string cell;
            int k = 0;
            while (std::getline(ss, cell, ',')) {
                EXPECT_TRUE(parse_double(cell).has_value()) << file << ": " << cell;
                ++k;
            }
            ASSERT_EQ(k, cols) << file;
        }
        EXPECT_GT(rows, 0) << file;
    }
}

TEST_F(CliTest, TwoDimensionalCoopScenario) {
    const auto s = write("two.yaml", R"(mode: coop
dynamics:
  A: [[0, 1], [-1, 0]]
  Abar: [[0, 0], [0.5, 0]]
  B: [[0], [1]]
  epsilon: 0.25
marginals:
  initial: {mean: [1, 0], cov: [[1, 0], [0, 1]]}
  terminal: {mean: [-1, 0.5], cov: [[0.5, 0.1], [0.1, 0.4]]}
simulation: {particles: 4000}
)");
    ASSERT_EQ(cli({"run", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const auto v = load(dir_ / "o" / "verify.json");
    EXPECT_TRUE(v["all_pass"].get<bool>());
    EXPECT_FALSE(check(v, "terminal_cov").is_null());
    std::ifstream in(dir_ / "o" / "density_flow.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("x,x1:t=0,", 0), 0u);
    EXPECT_EQ(cli({"verify", "--out", (dir_ / "o").string()}), 0) << stderr_;
}

TEST_F(CliTest, BridgeMatchesTheRiccatiDrift) {
    const auto s = write("ex.yaml", std::string(kExample) + "numerics: {grid_points: 512}\nsimulation: {particles: 2000}\n");
    ASSERT_EQ(cli({"bridge1d", "--scenario", s.string(), "--out", (dir_ / "o").string()}), 0) << stderr_;
    const auto v = load(dir_ / "o" / "verify.json");
    const auto c = check(v, "bridge_drift_vs_riccati");
    ASSERT_FALSE(c.is_null());
    EXPECT_LE(c["value"].get<double>(), 1e-3);
    EXPECT_LE(check(v, "bridge_l1_terminal")["value"].get<double>(), 1e-7);
    EXPECT_EQ(load(dir_ / "o" / "design.json")["route"], "bridge");
    EXPECT_EQ(cli({"verify", "--out", (dir_ / "o").string()}), 0) << stderr_;
}

TEST_F(CliTest, GridMarginalsRouteThroughBridgeAndTransport) {
    std::ostringstream csv;
    csv << "x,weight\n";
    for (int k = 0; k < 400; ++k) {
        const double x = -7.0 + 16.0 * k / 399;
        csv << format_double(x) << "," << format_double(std::exp(-(x + 1) * (x + 1)) + std::exp(-(x - 2.2) * (x - 2.2)))
            << "\n";
    }
    write("bimodal.csv", csv.str());
    const std::string body = R"(
marginals:
  initial: {mean: 1, cov: 4}
  terminal: {grid: bimodal.csv}
numerics: {grid_points: 400}
simulation: {particles: 2000}
)";
    const auto b = write("b.yaml", "mode: noncoop\ndynamics: {A: 1, Abar: -2, B: 1}" + body);
    ASSERT_EQ(cli({"run", "--scenario", b.string(), "--out", (dir_ / "b").string()}), 0) << stderr_;
    EXPECT_EQ(load(dir_ / "b" / "design.json")["route"], "bridge");
    const auto z = write("z.yaml", "mode: zero-noise\ndynamics: {A: 1, Abar: -2, B: 1}" + body);
    ASSERT_EQ(cli({"run", "--scenario", z.string(), "--out", (dir_ / "z").string()}), 0) << stderr_;
    EXPECT_EQ(load(dir_ / "z" / "design.json")["route"], "transport");
    EXPECT_TRUE(load(dir_ / "z" / "verify.json")["all_pass"].get<bool>());
    EXPECT_EQ(cli({"verify", "--out", (dir_ / "z").string()}), 0) << stderr_;
}

TEST(JsonMismatch, FindsTheFirstDifference) {
    const json a = {{"x", {1.0, 2.0}}, {"s", "a"}};
    EXPECT_EQ(json_mismatch(a, a, 1e-9), "");
    json b = a;
    b["x"][1] = 2.0 + 1e-12;
    EXPECT_EQ(json_mismatch(a, b, 1e-9), "");
    b["x"][1] = 2.1;
    EXPECT_NE(json_mismatch(a, b, 1e-9).find(".x[1]"), std::string::npos);
    b = a;
    b["y"] = 1;
    EXPECT_NE(json_mismatch(a, b, 1e-9).find("unexpected"), std::string::npos);
}
