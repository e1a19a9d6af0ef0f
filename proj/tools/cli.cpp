#include "cli.hpp"

#include "pipeline.hpp"
#include "scenario.hpp"

#include "mfsteer/errors.hpp"
#include "mfsteer/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace mfsteer::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
    std::optional<std::string> scenario;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<int> particles;
    std::optional<int> grid_points;
    std::optional<double> epsilon;
    std::optional<std::string> mode;
    std::optional<int> threads;
};

template <typename T, typename Show>
void override_field(T& field, const std::optional<T>& flag, const char* flag_name, const char* key, Show show,
                    std::ostream& err) {
    if (!flag) return;
    if (!(field == *flag))
        err << "warning: --" << flag_name << " " << show(*flag) << " overrides " << key << " = " << show(field) << "\n";
    field = *flag;
}

void apply_flags(ScenarioConfig& c, const Flags& f, std::ostream& err) {
    const auto num = [](auto v) { return std::to_string(v); };
    if (f.mode) {
        const auto mode = mode_from_string(*f.mode);
        if (mode != c.mode) err << "warning: --mode " << *f.mode << " overrides mode = " << to_string(c.mode) << "\n";
        c.mode = *mode;
    }
    override_field(c.simulation.seed, f.seed, "seed", "simulation.seed", num, err);
    override_field(c.numerics.steps, f.steps, "steps", "numerics.steps", num, err);
    override_field(c.simulation.particles, f.particles, "particles", "simulation.particles", num, err);
    override_field(c.numerics.grid_points, f.grid_points, "grid-points", "numerics.grid_points", num, err);
    override_field(c.simulation.threads, f.threads, "threads", "simulation.threads", num, err);
    override_field(c.dyn.eps, f.epsilon, "epsilon-override", "dynamics.epsilon",
                   [](double v) { return format_double(v); }, err);
    validate_scenario(c);
}

fs::path output_dir(const ScenarioConfig& c, const Flags& f, const fs::path& scenario, std::ostream& err) {
    if (f.out) {
        if (c.output && c.resolve(*c.output) != fs::path(*f.out))
            err << "warning: --out " << *f.out << " overrides output = " << *c.output << "\n";
        return *f.out;
    }
    if (c.output) return c.resolve(*c.output);
    const char* root = std::getenv("MFSTEER_OUT_ROOT");
    return fs::path(root && *root ? root : ".") / scenario.stem();
}

int run_command(const std::string& command, const Flags& f, std::ostream& out, std::ostream& err) {
    if (command == "verify") {
        if (!f.scenario && !f.out) throw ConfigError({"verify needs --out (a run directory) or --scenario"});
        fs::path dir;
        ScenarioConfig config;
        if (f.scenario) {
            config = parse_scenario(*f.scenario);
            apply_flags(config, f, err);
            dir = output_dir(config, f, *f.scenario, err);
        } else {
            dir = *f.out;
            config = parse_scenario(dir / "scenario.yaml");
            apply_flags(config, f, err);
        }
        const auto res = verify_artifacts(config, dir, err);
        out << (res.exit_code == 0 ? "verify: all checks pass" : "verify: checks failed") << " (" << res.checks.size()
            << " checks, " << (dir / "verify.json").string() << ")\n";
        return res.exit_code;
    }

    if (!f.scenario) throw ConfigError({"--scenario is required for " + command});
    ScenarioConfig config = parse_scenario(*f.scenario);
    apply_flags(config, f, err);
    if (command == "stationary" && config.mode != ScenarioMode::stationary)
        throw ConfigError({"mode: the stationary command needs mode stationary (or --mode stationary)"});

    RunOptions options;
    options.command = command;
    options.force_bridge = command == "bridge1d";
    options.simulate = command == "simulate" || (command != "design" && config.simulation.enabled);
    options.write_verify = command != "design";
    const fs::path dir = output_dir(config, f, *f.scenario, err);
    const auto res = run_pipeline(config, dir, options, err);
    out << command << ": " << (res.exit_code == 0 ? "all checks pass" : "checks failed") << ", artifacts in "
        << dir.string() << "\n";
    return res.exit_code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Designs costs and feedback laws that steer populations of linear stochastic agents.", "mfsteer"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--scenario", f.scenario, "Scenario file (YAML)");
    app.add_option("--out", f.out, "Output directory");
    app.add_option("--seed", f.seed, "Simulation seed");
    app.add_option("--steps", f.steps, "Time steps")->check(CLI::PositiveNumber);
    app.add_option("--particles", f.particles, "Number of simulated agents")->check(CLI::PositiveNumber);
    app.add_option("--grid-points", f.grid_points, "Points of 1-D density grids")->check(CLI::PositiveNumber);
    app.add_option("--epsilon-override", f.epsilon, "Noise intensity")->check(CLI::NonNegativeNumber);
    app.add_option("--mode", f.mode, "Game mode")->check(CLI::IsMember({"noncoop", "coop", "stationary", "zero-noise"}));
    app.add_option("--threads", f.threads, "Simulation threads (0: all cores)")->check(CLI::NonNegativeNumber);

    const std::pair<const char*, const char*> commands[] = {
        {"design", "Compute the cost and feedback law; writes design.json"},
        {"simulate", "Design, then simulate the population and check the result"},
        {"stationary", "Stationary design and long-run simulation"},
        {"bridge1d", "Scalar Schroedinger bridge between the marginals (grid solve)"},
        {"verify", "Re-check the artifacts of an earlier run"},
        {"run", "Design, simulate when enabled, verify"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    // CLI11 wants mutable argv.
    std::vector<std::string> args(argv + 1, argv + argc);
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        return run_command(command, f, out, err);
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) err << "error: " << p << "\n";
    } catch (const Error& e) {
        err << "error: " << (f.scenario ? *f.scenario + ": " : std::string()) << command << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return 2;
}

}  // namespace mfsteer::cli
