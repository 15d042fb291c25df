#include "rviq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "rviq/generators.hpp"
#include "rviq/ode.hpp"
#include "rviq/oracle.hpp"
#include "rviq/sa.hpp"

namespace rviq {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_hash(const json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

fs::path default_output_root() {
    if (const char* env = std::getenv("RVIQ_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
    return "runs";
}

fs::path make_run_dir(const fs::path& root, const std::string& command, const std::string& hash, std::uint64_t seed) {
    fs::create_directories(root);
    const std::string base = command + "-" + hash.substr(0, 8) + "-seed" + std::to_string(seed);
    for (int k = 0;; ++k) {
        const fs::path candidate = root / (k == 0 ? base : base + "-" + std::to_string(k));
        if (fs::create_directory(candidate)) return candidate;
    }
}

json versions() {
    return {{"rviq", "0.1.0"},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

namespace {

const std::vector<std::string> kCommands{"validate", "generate", "solve-exact", "learn", "run-sa", "ode-check", "sweep"};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Eigen::VectorXd vector_or_constant(const json& j, std::size_t d, const char* what) {
    if (j.is_number()) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), j.get<double>());
    const auto v = j.get<std::vector<double>>();
    if (v.size() != d) throw UsageError(std::string(what) + " must have length " + std::to_string(d));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double rate_of(const ExpectedQuantities& eq) {
    try {
        return optimal_rate_bruteforce(eq).r_star(0);
    } catch (const std::invalid_argument&) {
        const BiasFn f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eq.n_pairs()),
                                                                        1.0 / static_cast<double>(eq.n_pairs())));
        return schweitzer_rvi(eq, f, eq.t_min).rate_estimate;
    }
}

std::uint64_t seed_of(const json& config) { return config.value("seed", std::uint64_t{0}); }

struct Context {
    std::string command;
    json config;
    std::string hash;
    std::uint64_t seed;
    fs::path dir;
    json artifacts = json::array();
    std::string csv_comment() const { return "config_hash=" + hash + " seed=" + std::to_string(seed); }
};

CommandResult finish(Context& ctx, CommandResult res, json results) {
    res.run_dir = ctx.dir;
    json failures = res.failures;
    res.summary = {{"command", ctx.command},      {"config_hash", ctx.hash}, {"seed", ctx.seed},
                   {"versions", versions()},       {"config", ctx.config},    {"results", std::move(results)},
                   {"failures", failures},         {"pass", res.failures.empty()},
                   {"exit_code", res.exit_code},   {"artifacts", ctx.artifacts}};
    write_json(ctx.dir / "summary.json", res.summary);
    return res;
}

void check_le(std::vector<std::string>& failures, const std::string& name, double value, double tol) {
    if (!(value <= tol)) {
        std::ostringstream os;
        os << name << " = " << value << " exceeds " << tol;
        failures.push_back(os.str());
    }
}

CommandResult cmd_validate(Context& ctx) {
    CommandResult res;
    json results;
    std::optional<SmdpModel> model;
    if (ctx.config.contains("model")) {
        model = load_model(ctx.config.at("model").get<std::string>(), true);
    } else if (ctx.config.contains("generator")) {
        model = generate_instance(GeneratorSpec::from_json(ctx.config.at("generator")));
    } else {
        throw UsageError("validate needs a model path");
    }
    const ValidationReport rep = validate_model(*model);
    results["violations"] = rep.violations;
    results["valid"] = rep.ok();
    for (const auto& v : rep.violations) res.failures.push_back(v);
    if (rep.ok()) {
        const CommStructure cs = classify_communication(*model);
        results["weakly_communicating"] = cs.is_weakly_communicating;
        results["closed_classes"] = cs.closed_classes;
        results["transient_states"] = cs.transient_states;
        const bool exact = is_weakly_communicating_exact(*model);
        results["weakly_communicating_exact"] = exact;
        if (!exact && ctx.config.value("require_wcom", true))
            res.failures.emplace_back(cs.is_weakly_communicating
                                          ? "a state outside the closed class can be held there by some policy"
                                          : "model is not weakly communicating");
        const ExpectedQuantities eq = expected_quantities(*model);
        results["t_min"] = eq.t_min;
    }
    if (!res.failures.empty()) res.exit_code = exit_assertion;
    return finish(ctx, std::move(res), std::move(results));
}

CommandResult cmd_generate(Context& ctx) {
    CommandResult res;
    const json spec_json = ctx.config.contains("generator") ? ctx.config.at("generator") : ctx.config;
    const GeneratorSpec spec = GeneratorSpec::from_json(spec_json);
    const SmdpModel model = generate_instance(spec);
    save_model(model, (ctx.dir / "model.json").string());
    ctx.artifacts.push_back("model.json");
    if (ctx.config.contains("out")) save_model(model, ctx.config.at("out").get<std::string>());
    const ExpectedQuantities eq = expected_quantities(model);
    json results{{"generator", spec.to_json()},
                 {"n_states", model.n_states()},
                 {"n_actions", model.n_actions()},
                 {"t_min", eq.t_min},
                 {"weakly_communicating", classify_communication(model).is_weakly_communicating}};
    return finish(ctx, std::move(res), std::move(results));
}

CommandResult cmd_solve_exact(Context& ctx) {
    CommandResult res;
    const ResolvedModel rm = resolve_model(ctx.config);
    const BiasFn f = resolve_bias(ctx.config, rm.eq);
    // The classical reference iteration needs bar_alpha strictly below t_min.
    const double default_bar_alpha = f.kind() == BiasKind::classical_reference ? 0.9 * rm.eq.t_min : rm.eq.t_min;
    const double bar_alpha = ctx.config.value("bar_alpha", default_bar_alpha);
    const OptimalRates opt = optimal_rate_bruteforce(rm.eq);
    RviOptions ro;
    ro.record_history = true;
    const RviResult rvi = schweitzer_rvi(rm.eq, f, bar_alpha, ro);
    const double tol = ctx.config.value("tolerance", 1e-8);

    {
        std::ofstream csv(ctx.dir / "trace.csv");
        csv << "# " << ctx.csv_comment() << "\niteration,residual\n";
        char buf[96];
        for (std::size_t k = 0; k < rvi.residual_history.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, rvi.residual_history[k]);
            csv << buf;
        }
    }
    ctx.artifacts.push_back("trace.csv");

    json results{{"r_star", opt.r_star(0)},
                 {"r_star_per_state", to_std(opt.r_star)},
                 {"best_policy", opt.best_policy},
                 {"rvi_rate_estimate", rvi.rate_estimate},
                 {"rvi_iterations", rvi.iterations},
                 {"rvi_converged", rvi.converged},
                 {"rvi_residual", rvi.final_residual},
                 {"q", to_std(rvi.q)},
                 {"greedy_policy", greedy_policy(rm.eq, rvi.q)},
                 {"bias", bias_to_json(f)},
                 {"bar_alpha", bar_alpha}};
    write_json(ctx.dir / "report.json", results);
    ctx.artifacts.push_back("report.json");
    if (!rvi.converged) res.failures.emplace_back("relative value iteration did not converge");
    check_le(res.failures, "|rvi - bruteforce|", std::abs(rvi.rate_estimate - opt.r_star(0)), tol);
    if (!res.failures.empty()) res.exit_code = exit_assertion;
    return finish(ctx, std::move(res), std::move(results));
}

CommandResult cmd_learn(Context& ctx) {
    CommandResult res;
    const ResolvedModel rm = resolve_model(ctx.config);
    const BiasFn f = resolve_bias(ctx.config, rm.eq);
    const RviQlConfig lc = resolve_learn_config(ctx.config, rm.eq, f);
    const ThresholdReport th = validate_thresholds(rm.eq, f, lc);
    json results{{"thresholds", th.to_json()}};
    if (ctx.config.value("require_thresholds", false) && !th.pass()) {
        for (const auto& c : th.checks)
            if (!c.pass) {
                std::ostringstream os;
                os << "threshold check '" << c.name << "' failed: " << c.lhs << " <= " << c.rhs << " (A★ = "
                   << th.A_star << " = 2/t_min + L_f with t_min = " << th.t_min << ", L_f = " << th.L_f << ")";
                res.failures.push_back(os.str());
            }
        res.exit_code = exit_assertion;
        return finish(ctx, std::move(res), std::move(results));
    }
    const double r_star = rate_of(rm.eq);
    results["r_star"] = r_star;
    QlRun run;
    try {
        run = run_rvi_q(rm.model, rm.eq, lc);
    } catch (const DivergenceError& e) {
        res.failures.emplace_back(e.what());
        res.exit_code = exit_divergence;
        return finish(ctx, std::move(res), std::move(results));
    }
    run.trace.write_csv((ctx.dir / "trace.csv").string(), ctx.csv_comment());
    ctx.artifacts.push_back("trace.csv");

    const ConvergenceReport conv = convergence_report(run, rm.eq, f, r_star);
    const HoldingRate hr = holding_time_rate(run, rm.eq);
    json holding{{"exact", hr.exact}, {"blocks", hr.blocks}};
    holding["slope"] = hr.slope ? json(*hr.slope) : json(nullptr);
    results["convergence"] = conv.to_json();
    results["holding_rate"] = holding;
    results["beta_clipped"] = run.beta_clipped;
    results["final_T"] = to_std(run.final_T);
    results["final_Q"] = to_std(run.trace.final_x());
    results["stepsize"] = lc.step.to_json();
    results["varsigma"] = lc.varsigma;
    write_json(ctx.dir / "report.json", results);
    ctx.artifacts.push_back("report.json");

    if (ctx.config.contains("assert")) {
        const json& a = ctx.config.at("assert");
        if (a.contains("rate_error")) check_le(res.failures, "rate_error", conv.final_rate_error, a.at("rate_error"));
        if (a.contains("qf_residual"))
            check_le(res.failures, "qf_residual", conv.final_qf_residual, a.at("qf_residual"));
        if (a.contains("holding_error"))
            check_le(res.failures, "holding_error", conv.final_holding_error, a.at("holding_error"));
        if (a.contains("tail_oscillation"))
            check_le(res.failures, "tail_oscillation", conv.tail_oscillation, a.at("tail_oscillation"));
        if (a.value("greedy_optimal", false) && !conv.greedy_optimal)
            res.failures.emplace_back("greedy policy is not optimal");
        if (a.value("thresholds", false) && !th.pass()) res.failures.emplace_back("thresholds not satisfied");
    }
    if (!res.failures.empty()) res.exit_code = exit_assertion;
    return finish(ctx, std::move(res), std::move(results));
}

DriftFn resolve_drift(const json& j, std::size_t& dim) {
    const std::string kind = j.value("kind", std::string("linear"));
    if (kind == "linear") {
        const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
        const std::size_t d = rows.size();
        Eigen::MatrixXd M(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) {
            if (rows[i].size() != d) throw UsageError("drift matrix must be square");
            for (std::size_t k = 0; k < d; ++k)
                M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
        const Eigen::VectorXd b =
            j.contains("offset") ? vector_or_constant(j.at("offset"), d, "offset") : Eigen::VectorXd::Zero(M.rows());
        dim = d;
        return [M, b](const Eigen::VectorXd& x) { return Eigen::VectorXd(M * x + b); };
    }
    if (kind == "smdp") {
        const ResolvedModel rm = resolve_model(j);
        const BiasFn f = resolve_bias(j, rm.eq);
        const double bar_alpha = j.value("bar_alpha", rm.eq.t_min);
        dim = rm.eq.n_pairs();
        return [eq = rm.eq, f, bar_alpha](const Eigen::VectorXd& x) { return h_eval(eq, f, bar_alpha, x); };
    }
    throw UsageError("unknown drift kind '" + kind + "'");
}

CommandResult cmd_run_sa(Context& ctx) {
    CommandResult res;
    if (!ctx.config.contains("drift")) throw UsageError("run-sa needs a drift");
    SaConfig sc;
    sc.drift = resolve_drift(ctx.config.at("drift"), sc.dim);
    sc.step = StepsizeSchedule::from_json(ctx.config.value("stepsize", json{{"kind", "class1"}, {"A", 1.0}}));
    if (ctx.config.contains("update")) sc.upd = UpdateSchedule::from_json(ctx.config.at("update"), sc.dim);
    if (ctx.config.contains("noise")) sc.noise = NoiseModel::from_json(ctx.config.at("noise"), sc.dim);
    sc.x0 = ctx.config.contains("x0") ? vector_or_constant(ctx.config.at("x0"), sc.dim, "x0")
                                      : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sc.dim));
    sc.n_steps = ctx.config.value("n_steps", std::size_t{100000});
    sc.seed = ctx.seed;
    sc.thinning = ctx.config.value("thinning", std::size_t{1000});
    sc.divergence_guard = ctx.config.value("divergence_guard", sc.divergence_guard);
    const bool shadow = ctx.config.contains("shadowing");
    sc.record_updates = ctx.config.value("record_updates", shadow);

    json results;
    RunTrace tr;
    try {
        tr = run_sa(sc);
    } catch (const DivergenceError& e) {
        res.failures.emplace_back(e.what());
        res.exit_code = exit_divergence;
        return finish(ctx, std::move(res), std::move(results));
    }
    tr.write_csv((ctx.dir / "trace.csv").string(), ctx.csv_comment());
    ctx.artifacts.push_back("trace.csv");
    results["final_x"] = to_std(tr.final_x());
    results["ode_time"] = tr.ode_time.back();
    if (tr.n_steps >= 1000) {
        const AsynchronyReport ar = asynchrony_diagnostics(tr);
        results["asynchrony"] = {{"relative_frequencies", to_std(ar.relative_frequencies)},
                                 {"delta_proxy", ar.delta_proxy},
                                 {"gamma_hat", ar.gamma_hat ? json(*ar.gamma_hat) : json(nullptr)},
                                 {"stepsize_ratio_sup", ar.stepsize_ratio_sup},
                                 {"alpha_sum", ar.alpha_sum},
                                 {"alpha_sq_sum", ar.alpha_sq_sum}};
    }
    if (shadow) {
        const json& s = ctx.config.at("shadowing");
        const ShadowingSlopes sh =
            shadowing_rate(tr, sc.drift, s.value("j0", 1), s.value("j1", 5), s.value("dt", 1e-3));
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        results["shadowing"] = {{"j", sh.j},
                                {"err_total", sh.err_total},
                                {"err_noise", sh.err_noise},
                                {"err_async", sh.err_async},
                                {"slope_total", opt(sh.slope_total)},
                                {"slope_noise", opt(sh.slope_noise)},
                                {"slope_async", opt(sh.slope_async)}};
        if (s.contains("slope_below")) {
            const double bound = s.at("slope_below").get<double>();
            if (sh.slope_total && !(*sh.slope_total <= bound))
                res.failures.push_back("shadowing slope " + std::to_string(*sh.slope_total) + " exceeds " +
                                       std::to_string(bound));
        }
    }
    write_json(ctx.dir / "report.json", results);
    ctx.artifacts.push_back("report.json");
    if (!res.failures.empty()) res.exit_code = exit_assertion;
    return finish(ctx, std::move(res), std::move(results));
}

CommandResult cmd_ode_check(Context& ctx) {
    CommandResult res;
    const ResolvedModel rm = resolve_model(ctx.config);
    const BiasFn f = resolve_bias(ctx.config, rm.eq);
    const ExpectedQuantities& eq = rm.eq;
    const std::size_t d = eq.n_pairs();
    const double bar_alpha = ctx.config.value("bar_alpha", eq.t_min);
    const double t_end = ctx.config.value("t_end", 20.0);
    const double dt = ctx.config.value("dt", 1e-3);
    const std::size_t n_starts = ctx.config.value("n_starts", std::size_t{20});
    const double r_star = rate_of(eq);
    Xoshiro256 rng = substream(ctx.seed, StreamPurpose::probing);
    auto random_point = [&](double radius) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = radius * rng.symmetric();
        return x;
    };
    const Eigen::VectorXd x0 =
        ctx.config.contains("x0") ? vector_or_constant(ctx.config.at("x0"), d, "x0") : random_point(5.0);
    const RviResult rvi = schweitzer_rvi(eq, f, bar_alpha);
    const Eigen::VectorXd& qbar = rvi.q;

    json checks = json::array();
    auto verdict = [&](const std::string& name, double value, double bound, bool pass) {
        checks.push_back({{"name", name}, {"value", value}, {"bound", bound}, {"pass", pass}});
        if (!pass) res.failures.push_back(name + " failed: " + std::to_string(value) + " vs " + std::to_string(bound));
    };

    const DecompositionResult dec = decomposition_check(eq, f, bar_alpha, r_star, x0, t_end, dt);
    verdict("decomposition_gap", dec.max_gap, ctx.config.value("decomposition_tol", 1e-5),
            dec.max_gap <= ctx.config.value("decomposition_tol", 1e-5));
    const OrderCheck oc = decomposition_order_check(eq, f, bar_alpha, r_star, x0, t_end, 0.1, 5.0);
    verdict("decomposition_step_halving_ratio", oc.ratio, 8.0, oc.ratio >= 8.0 && oc.kink_free);

    std::size_t violations = 0;
    double worst_increase = 0.0;
    for (std::size_t k = 0; k < n_starts; ++k) {
        const MonotoneDistance md = monotone_distance_check(eq, bar_alpha, r_star, random_point(5.0), qbar, t_end, dt);
        violations += md.violations;
        worst_increase = std::max(worst_increase, md.max_increase);
    }
    verdict("monotone_distance_violations", static_cast<double>(violations), 0.0, violations == 0);
    const double tf = translation_flow_gap(eq, bar_alpha, r_star, x0, 3.0, t_end, dt);
    verdict("translation_flow_gap", tf, 1e-9, tf <= 1e-9);
    const double ed = equilibrium_drift(eq, f, bar_alpha, qbar, t_end, dt);
    verdict("equilibrium_drift", ed, 1e-8, ed <= 1e-8);
    std::vector<Eigen::VectorXd> grid{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))};
    for (int k = 0; k < 16; ++k) grid.push_back(random_point(1.0));
    const ScalingProbe sp = scaling_limit_probe(eq, f, bar_alpha, grid, {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024});
    verdict("scaling_limit_nonincreasing", sp.sup_gap.back(), sp.sup_gap.front(), sp.nonincreasing);
    if (ctx.config.value("gas_probe", true)) {
        const double radius = ctx.config.value("gas_radius", 10.0);
        const double gas_t = ctx.config.value("gas_t_end", 60.0 + 10.0 * std::log1p(radius));
        const GasProbe gp = gas_probe(eq, f, bar_alpha, radius, 50, gas_t, ctx.config.value("gas_dt", 1e-2), rng);
        verdict("gas_probe_max_qf_residual", gp.max_residual, 1e-6, gp.max_residual <= 1e-6);
    }

    {
        std::ofstream csv(ctx.dir / "trace.csv");
        csv << "# " << ctx.csv_comment() << "\nt,gap,z";
        for (std::size_t i = 0; i < d; ++i) csv << ",x" << i;
        csv << '\n';
        char buf[96];
        for (std::size_t k = 0; k < dec.gap.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", dec.x.times[k], dec.gap[k], dec.z[k]);
            csv << buf;
            for (Eigen::Index i = 0; i < dec.x.points[k].size(); ++i) {
                std::snprintf(buf, sizeof buf, ",%.17g", dec.x.points[k](i));
                csv << buf;
            }
            csv << '\n';
        }
    }
    ctx.artifacts.push_back("trace.csv");
    json results{{"r_star", r_star},
                 {"bar_alpha", bar_alpha},
                 {"checks", checks},
                 {"order_check",
                  {{"segment_start", oc.segment_start},
                   {"gap_coarse", oc.gap_coarse},
                   {"gap_fine", oc.gap_fine},
                   {"kink_free", oc.kink_free}}},
                 {"scaling_probe", {{"c", sp.c}, {"sup_gap", sp.sup_gap}}},
                 {"monotone_worst_increase", worst_increase}};
    write_json(ctx.dir / "report.json", results);
    ctx.artifacts.push_back("report.json");
    if (!res.failures.empty()) res.exit_code = exit_assertion;
    return finish(ctx, std::move(res), std::move(results));
}

CommandResult cmd_sweep(Context& ctx, const HarnessOptions& options) {
    CommandResult res;
    const json base = ctx.config.value("base", json::object());
    const std::string parameter = ctx.config.value("parameter", std::string("/stepsize/A"));
    if (!ctx.config.contains("values") || !ctx.config.at("values").is_array() || ctx.config.at("values").empty())
        throw UsageError("sweep needs a nonempty 'values' array");
    const json values = ctx.config.at("values");
    const json::json_pointer ptr(parameter);
    std::vector<json> configs;
    for (const auto& v : values) {
        json c = base;
        c[ptr] = v;
        if (!c.contains("seed")) c["seed"] = ctx.seed;
        configs.push_back(std::move(c));
    }

    std::vector<CommandResult> runs(configs.size());
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(ctx.config.value("threads", hw), configs.size());
    std::size_t next = 0;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1); ++w)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t k;
                {
                    const std::lock_guard<std::mutex> lock(m);
                    if (next == configs.size()) return;
                    k = next++;
                }
                runs[k] = run_command("learn", configs[k], options);
            }
        });
    for (auto& t : pool) t.join();

    std::ofstream csv(ctx.dir / "comparison.csv");
    csv << "# " << ctx.csv_comment() << "\n"
        << "value,exit_code,run_dir,thresholds_pass,final_rate_error,final_qf_residual,final_holding_error,"
           "tail_oscillation\n";
    json list = json::array();
    int worst = exit_ok;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        worst = std::max(worst, r.exit_code);
        const json& rs = r.summary.value("results", json::object());
        const json conv = rs.value("convergence", json::object());
        auto num = [&](const char* key) {
            if (!conv.contains(key)) return std::string("nan");
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", conv.at(key).get<double>());
            return std::string(buf);
        };
        const bool tp = rs.contains("thresholds") && rs.at("thresholds").value("pass", false);
        csv << values[k].dump() << ',' << r.exit_code << ',' << r.run_dir.filename().string() << ','
            << (tp ? 1 : 0) << ',' << num("final_rate_error") << ',' << num("final_qf_residual") << ','
            << num("final_holding_error") << ',' << num("tail_oscillation") << '\n';
        list.push_back({{"value", values[k]}, {"exit_code", r.exit_code}, {"run_dir", r.run_dir.string()}});
        for (const auto& f : r.failures) res.failures.push_back(values[k].dump() + ": " + f);
    }
    csv.close();
    ctx.artifacts.push_back("comparison.csv");
    res.exit_code = worst;
    return finish(ctx, std::move(res), json{{"parameter", parameter}, {"runs", list}});
}

}  // namespace

ResolvedModel resolve_model(const json& config) {
    json source;
    std::optional<SmdpModel> model;
    if (config.contains("model")) {
        const std::string path = config.at("model").get<std::string>();
        model = load_model(path, config.value("allow_invalid", false));
        source = {{"model", path}};
    } else {
        const GeneratorSpec spec = GeneratorSpec::from_json(config.value("generator", reference_instance_spec().to_json()));
        model = generate_instance(spec);
        source = {{"generator", spec.to_json()}};
    }
    ExpectedQuantities eq = expected_quantities(*model);
    return {std::move(*model), std::move(eq), std::move(source)};
}

BiasFn resolve_bias(const json& config, const ExpectedQuantities& eq) {
    const json spec = config.value("bias", json{{"kind", "affine"}, {"theta", "uniform"}});
    return bias_from_json(spec, eq.n_pairs(), &eq);
}

RviQlConfig resolve_learn_config(const json& config, const ExpectedQuantities& eq, const BiasFn& f) {
    RviQlConfig c;
    const std::size_t d = eq.n_pairs();
    c.f = f;
    c.gamma = config.value("gamma", 0.5);
    const double a_star = validate_thresholds(eq, f, StepsizeSchedule::class2(1.0), 1.0).A_star;

    json step = config.value("stepsize", json{{"kind", "class2"}, {"A", "auto"}});
    if (!step.contains("kind")) step["kind"] = "class2";
    if (!step.contains("A") && step.at("kind") != "power") step["A"] = "auto";
    if (step.contains("A") && step.at("A").is_string()) {
        if (step.at("A").get<std::string>() != "auto") throw UsageError("stepsize A must be a number or \"auto\"");
        const std::string kind = step.value("kind", std::string("class2"));
        step["A"] = kind == "class1" ? 1.05 * a_star * std::max(2.0, 1.0 / c.gamma) : 1.05 * a_star;
    }
    c.step = StepsizeSchedule::from_json(step);

    const json vs = config.value("varsigma", json("auto"));
    if (vs.is_string()) {
        if (vs.get<std::string>() != "auto") throw UsageError("varsigma must be a number or \"auto\"");
        c.varsigma = 1.05 * a_star;
    } else {
        c.varsigma = vs.get<double>();
    }
    if (config.contains("eta")) {
        const json& e = config.at("eta");
        if (e.contains("fixed")) {
            c.eta.fixed_bound = e.at("fixed").get<double>();
        } else {
            c.eta.eta0 = e.value("eta0", c.eta.eta0);
            c.eta.power = e.value("power", c.eta.power);
        }
    }
    if (config.contains("update")) c.upd = UpdateSchedule::from_json(config.at("update"), d);
    if (config.contains("Q0")) c.Q0 = vector_or_constant(config.at("Q0"), d, "Q0");
    if (config.contains("T0")) c.T0 = vector_or_constant(config.at("T0"), d, "T0");
    c.n_steps = config.value("n_steps", c.n_steps);
    c.seed = seed_of(config);
    c.thinning = config.value("thinning", c.thinning);
    if (config.contains("bar_alpha")) c.bar_alpha = config.at("bar_alpha").get<double>();
    c.divergence_guard = config.value("divergence_guard", c.divergence_guard);
    return c;
}

const std::vector<std::string>& command_names() { return kCommands; }

CommandResult run_command(const std::string& command, const json& config, const HarnessOptions& options) {
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
        CommandResult res;
        res.exit_code = exit_usage;
        res.failures.push_back("unknown command '" + command + "'");
        return res;
    }
    Context ctx;
    ctx.command = command;
    ctx.config = config;
    ctx.hash = config_hash(config);
    ctx.seed = seed_of(config);
    try {
        ctx.dir = make_run_dir(options.output_root, command, ctx.hash, ctx.seed);
    } catch (const fs::filesystem_error& e) {
        CommandResult res;
        res.exit_code = exit_usage;
        res.failures.emplace_back(e.what());
        return res;
    }
    auto fail = [&](int code, const std::string& msg) {
        CommandResult res;
        res.exit_code = code;
        res.failures.push_back(msg);
        ctx.artifacts = json::array();
        return finish(ctx, std::move(res), json::object());
    };
    try {
        if (command == "validate") return cmd_validate(ctx);
        if (command == "generate") return cmd_generate(ctx);
        if (command == "solve-exact") return cmd_solve_exact(ctx);
        if (command == "learn") return cmd_learn(ctx);
        if (command == "run-sa") return cmd_run_sa(ctx);
        if (command == "ode-check") return cmd_ode_check(ctx);
        return cmd_sweep(ctx, options);
    } catch (const DivergenceError& e) {
        return fail(exit_divergence, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(exit_usage, e.what());
    } catch (const json::exception& e) {
        return fail(exit_usage, std::string("configuration error: ") + e.what());
    } catch (const std::exception& e) {
        return fail(exit_assertion, e.what());
    }
}

}  // namespace rviq
