#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rviq/harness.hpp"

namespace {

using nlohmann::json;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> model;
    std::optional<std::string> generator;
    std::optional<std::uint64_t> instance_seed;
    std::optional<std::string> bias;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> thinning;
    std::optional<std::string> stepsize_class;
    std::optional<std::string> scale;
    std::optional<std::string> varsigma;
    std::optional<double> T0;
    bool require_thresholds = false;
    bool allow_invalid = false;
    std::optional<std::size_t> states;
    std::optional<std::size_t> actions;
    std::optional<std::size_t> branching;
    std::optional<std::string> out;
    std::optional<double> t_end;
    std::optional<double> dt;
    bool no_gas = false;
    std::optional<double> tolerance;
    std::optional<std::size_t> threads;
    bool print_json = false;
};

json number_or_auto(const std::string& s) {
    if (s == "auto") return "auto";
    return std::stod(s);
}

json flags_to_config(const std::string& cmd, const Flags& f) {
    json c = json::object();
    if (f.seed) c["seed"] = *f.seed;
    if (f.model) c["model"] = *f.model;
    if (f.allow_invalid) c["allow_invalid"] = true;
    if (f.generator) {
        c["generator"] = {{"kind", *f.generator}};
        if (f.instance_seed) c["generator"]["seed"] = *f.instance_seed;
        if (f.states) c["generator"]["n_states"] = *f.states;
        if (f.actions) c["generator"]["n_actions"] = *f.actions;
        if (f.branching) c["generator"]["branching"] = *f.branching;
    }
    if (f.bias) c["bias"] = {{"kind", *f.bias}};
    if (f.steps) c["n_steps"] = *f.steps;
    if (f.thinning) c["thinning"] = *f.thinning;
    if (f.stepsize_class || f.scale)
        c["stepsize"] = {{"kind", f.stepsize_class.value_or("class2")}, {"A", number_or_auto(f.scale.value_or("auto"))}};
    if (f.varsigma) c["varsigma"] = number_or_auto(*f.varsigma);
    if (f.T0) c["T0"] = *f.T0;
    if (f.require_thresholds) c["require_thresholds"] = true;
    if (f.out) c["out"] = *f.out;
    if (f.t_end) c["t_end"] = *f.t_end;
    if (f.dt) c["dt"] = *f.dt;
    if (f.no_gas) c["gas_probe"] = false;
    if (f.tolerance) c["tolerance"] = *f.tolerance;
    if (f.threads) c["threads"] = *f.threads;
    if (cmd == "generate" && !c.contains("generator")) {
        c["generator"] = {{"kind", "random_wcom"}};
        if (f.instance_seed) c["generator"]["seed"] = *f.instance_seed;
        if (f.states) c["generator"]["n_states"] = *f.states;
        if (f.actions) c["generator"]["n_actions"] = *f.actions;
        if (f.branching) c["generator"]["branching"] = *f.branching;
    }
    return c;
}

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("-c,--config", f.config_path, "JSON config file; its entries override flags");
    sub->add_option("-s,--seed", f.seed, "Run seed");
    sub->add_flag("--json", f.print_json, "Print the full summary as JSON");
}

void add_model(CLI::App* sub, Flags& f) {
    sub->add_option("-m,--model", f.model, "Model JSON file");
    sub->add_flag("--allow-invalid", f.allow_invalid, "Load a model file even if it fails validation");
    sub->add_option("-g,--generator", f.generator,
                    "Instance generator: random_wcom, loop_canonical, cycle_canonical, transient_feeder");
    sub->add_option("--instance-seed", f.instance_seed, "Seed of the random instance generator");
    sub->add_option("--states", f.states, "States of a random instance");
    sub->add_option("--actions", f.actions, "Actions of a random instance");
    sub->add_option("--branching", f.branching, "Successors per state-action pair of a random instance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative value iteration Q-learning for semi-Markov decision processes"};
    app.require_subcommand(1);
    Flags f;

    auto* validate = app.add_subcommand("validate", "Check a model file and report its communication structure");
    add_common(validate, f);
    add_model(validate, f);

    auto* generate = app.add_subcommand("generate", "Generate a benchmark instance");
    add_common(generate, f);
    add_model(generate, f);
    generate->add_option("-o,--out", f.out, "Also write the model to this path");

    auto* solve = app.add_subcommand("solve-exact", "Optimal rate by policy enumeration and relative value iteration");
    add_common(solve, f);
    add_model(solve, f);
    solve->add_option("-b,--bias", f.bias, "Rate-estimating function kind");
    solve->add_option("--tolerance", f.tolerance, "Allowed gap between the two solvers");

    auto* learn = app.add_subcommand("learn", "Run RVI Q-learning on a sampled model");
    add_common(learn, f);
    add_model(learn, f);
    learn->add_option("-b,--bias", f.bias, "Rate-estimating function kind");
    learn->add_option("-n,--steps", f.steps, "Number of iterations");
    learn->add_option("--thinning", f.thinning, "Snapshot every this many steps");
    learn->add_option("--stepsize-class", f.stepsize_class, "class1 or class2");
    learn->add_option("-A,--scale", f.scale, "Stepsize scaling A, or auto");
    learn->add_option("--varsigma", f.varsigma, "Holding-time stepsize ratio, or auto");
    learn->add_option("--T0", f.T0, "Initial holding-time estimate");
    learn->add_flag("--require-thresholds", f.require_thresholds, "Refuse to run unless the thresholds on A hold");

    auto* run_sa = app.add_subcommand("run-sa", "Run an asynchronous stochastic approximation from a config");
    add_common(run_sa, f);
    run_sa->add_option("-n,--steps", f.steps, "Number of iterations");
    run_sa->add_option("--thinning", f.thinning, "Snapshot every this many steps");

    auto* ode = app.add_subcommand("ode-check", "Integrate the limiting ODEs and check their properties");
    add_common(ode, f);
    add_model(ode, f);
    ode->add_option("-b,--bias", f.bias, "Rate-estimating function kind");
    ode->add_option("--t-end", f.t_end, "Integration horizon");
    ode->add_option("--dt", f.dt, "RK4 step");
    ode->add_flag("--no-gas", f.no_gas, "Skip the global stability probe");

    auto* sweep = app.add_subcommand("sweep", "Run learn over a list of parameter values in parallel");
    add_common(sweep, f);
    sweep->add_option("--threads", f.threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rviq::exit_usage;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    json config;
    try {
        config = flags_to_config(cmd, f);
        if (!f.config_path.empty()) {
            std::ifstream in(f.config_path);
            if (!in) throw std::runtime_error("cannot open config " + f.config_path);
            config.merge_patch(json::parse(in));
        }
    } catch (const std::exception& e) {
        std::cerr << "rviq: " << e.what() << '\n';
        return rviq::exit_usage;
    }

    const rviq::CommandResult res = rviq::run_command(cmd, config);
    if (f.print_json) {
        std::cout << res.summary.dump(2) << '\n';
    } else {
        if (!res.run_dir.empty()) std::cout << "run directory: " << res.run_dir.string() << '\n';
        if (res.summary.contains("results")) std::cout << res.summary.at("results").dump(2) << '\n';
    }
    for (const auto& msg : res.failures) std::cerr << "rviq: " << msg << '\n';
    return res.exit_code;
}
