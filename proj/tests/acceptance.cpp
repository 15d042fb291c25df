#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rviq/generators.hpp"
#include "rviq/harness.hpp"
#include "rviq/learning.hpp"
#include "rviq/ode.hpp"
#include "rviq/oracle.hpp"
#include "rviq/sa.hpp"

using namespace rviq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::VectorXd random_point(Xoshiro256& rng, Eigen::Index d, double radius) {
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = radius * rng.symmetric();
    return x;
}

struct Instance {
    SmdpModel model;
    ExpectedQuantities eq;
    BiasFn f;
    double r_star;
};

Instance reference() {
    SmdpModel m = generate_instance(reference_instance_spec());
    auto eq = expected_quantities(m);
    BiasFn f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eq.n_pairs()),
                                                              1.0 / static_cast<double>(eq.n_pairs())));
    const double r_star = testing::enumerated_optimum(eq)(0);
    return {std::move(m), std::move(eq), std::move(f), r_star};
}

Instance loop() {
    SmdpModel m = loop_canonical();
    auto eq = expected_quantities(m);
    return {std::move(m), std::move(eq), BiasFn::reference_component(0, 1), 1.5};
}

// Criterion 3 and 4 share the same long run.
struct LongRun {
    ThresholdReport thresholds;
    ConvergenceReport report;
    double seconds = 0.0;
};

RviQlConfig long_run_config(const Instance& ref, std::uint64_t seed) {
    const double a_star = 2.0 / ref.eq.t_min + 1.0;
    RviQlConfig cfg;
    cfg.f = ref.f;
    cfg.step = StepsizeSchedule::class2(1.001 * a_star);
    cfg.varsigma = 40.0;
    cfg.T0 = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ref.eq.n_pairs()));
    cfg.n_steps = 2000000;
    cfg.thinning = 1000;
    cfg.seed = seed;
    return cfg;
}

const LongRun& long_run() {
    static const LongRun run = [] {
        const Instance ref = reference();
        const RviQlConfig cfg = long_run_config(ref, 1);
        LongRun out;
        out.thresholds = validate_thresholds(ref.eq, ref.f, cfg);
        const auto t0 = Clock::now();
        const QlRun q = run_rvi_q(ref.model, ref.eq, cfg);
        out.seconds = seconds_since(t0);
        out.report = convergence_report(q, ref.eq, ref.f, ref.r_star);
        return out;
    }();
    return run;
}

Verdict criterion1() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    bool all_converged = true;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto eq = expected_quantities(generate_instance(GeneratorSpec::random_wcom(3, 2, seed)));
        const BiasFn f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(6, 1.0 / 6.0));
        const RviResult rvi = schweitzer_rvi(eq, f, eq.t_min);
        all_converged = all_converged && rvi.converged;
        const double brute = optimal_rate_bruteforce(eq).r_star(0);
        worst = std::max(worst, std::abs(rvi.rate_estimate - brute));
        worst = std::max(worst, std::abs(brute - testing::enumerated_optimum(eq)(0)));
    }
    const double secs = seconds_since(t0);
    return {all_converged && worst <= 1e-8 && secs < 5.0,
            "max |rvi - brute| = " + fmt("%.3g", worst) + " over 25 instances, " + fmt("%.2f", secs) + " s"};
}

Verdict criterion2() {
    HarnessOptions opt;
    opt.output_root = default_output_root() / "criterion-2";
    fs::remove_all(opt.output_root);
    const CommandResult lr = run_command("solve-exact", {{"generator", {{"kind", "loop_canonical"}}}}, opt);
    const CommandResult cr = run_command("solve-exact", {{"generator", {{"kind", "cycle_canonical"}}}}, opt);
    if (lr.exit_code != exit_ok || cr.exit_code != exit_ok) return {false, "solve-exact exited nonzero"};
    const json& l = lr.summary.at("results");
    const json& c = cr.summary.at("results");
    const double el = std::max(std::abs(l.at("r_star").get<double>() - 1.5),
                               std::abs(l.at("rvi_rate_estimate").get<double>() - 1.5));
    const double ec = std::max(std::abs(c.at("r_star").get<double>() - 4.0 / 3.0),
                               std::abs(c.at("rvi_rate_estimate").get<double>() - 4.0 / 3.0));
    return {el <= 1e-10 && ec <= 1e-10,
            "loop error " + fmt("%.3g", el) + ", cycle error " + fmt("%.3g", ec)};
}

Verdict criterion3() {
    const LongRun& r = long_run();
    const auto& c = r.report;
    const bool pass = r.thresholds.pass() && c.final_rate_error <= 0.02 && c.final_qf_residual <= 0.05 &&
                      c.final_holding_error <= 0.02 && r.seconds < 60.0;
    return {pass, "thresholds " + std::string(r.thresholds.pass() ? "pass" : "fail") + ", |f(Q)-r*| = " +
                      fmt("%.4g", c.final_rate_error) + ", qf = " + fmt("%.4g", c.final_qf_residual) +
                      ", max|T-t| = " + fmt("%.4g", c.final_holding_error) + ", " + fmt("%.1f", r.seconds) + " s"};
}

Verdict criterion4() {
    const LongRun& r = long_run();
    const Instance ref = reference();
    const QlRun second = run_rvi_q(ref.model, ref.eq, long_run_config(ref, 2));
    const ConvergenceReport rep2 = convergence_report(second, ref.eq, ref.f, ref.r_star);
    const bool pass = r.report.tail_oscillation <= 0.01 && rep2.final_qf_residual <= 0.05;
    return {pass, "tail oscillation " + fmt("%.4g", r.report.tail_oscillation) + ", second seed qf = " +
                      fmt("%.4g", rep2.final_qf_residual)};
}

Verdict criterion5() {
    double worst_gap = 0.0;
    double worst_ratio = 1e300;
    bool kink_free = true;
    Xoshiro256 rng(5);
    for (const Instance& inst : {loop(), reference()}) {
        const Eigen::Index d = static_cast<Eigen::Index>(inst.eq.n_pairs());
        for (int k = 0; k < 3; ++k) {
            const Eigen::VectorXd x0 = random_point(rng, d, 5.0);
            const auto dc = decomposition_check(inst.eq, inst.f, inst.eq.t_min, inst.r_star, x0, 20.0, 1e-3);
            worst_gap = std::max(worst_gap, dc.max_gap);
            const OrderCheck oc =
                decomposition_order_check(inst.eq, inst.f, inst.eq.t_min, inst.r_star, x0, 20.0, 0.1, 5.0);
            kink_free = kink_free && oc.kink_free;
            // A gap already at rounding level has nothing left to halve.
            if (oc.gap_coarse > 1e-12) worst_ratio = std::min(worst_ratio, oc.ratio);
        }
    }
    return {worst_gap <= 1e-5 && kink_free && worst_ratio >= 8.0,
            "max gap " + fmt("%.3g", worst_gap) + " at dt 1e-3, min halving ratio " + fmt("%.3g", worst_ratio)};
}

Verdict criterion6() {
    const Instance ref = reference();
    const RviResult rvi = schweitzer_rvi(ref.eq, ref.f, ref.eq.t_min);
    Xoshiro256 rng(6);
    std::size_t violations = 0;
    double max_increase = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto md = monotone_distance_check(ref.eq, ref.eq.t_min, ref.r_star, random_point(rng, 6, 10.0), rvi.q,
                                                20.0, 1e-3);
        violations += md.violations;
        max_increase = std::max(max_increase, md.max_increase);
    }
    return {violations == 0, std::to_string(violations) + " violations over 20 starts, largest step increase " +
                                 fmt("%.3g", max_increase)};
}

Verdict criterion7() {
    Xoshiro256 rng(7);
    std::size_t members = 0, failing = 0;
    for (Eigen::Index d : {2, 6}) {
        std::vector<Eigen::VectorXd> probes{Eigen::VectorXd::Zero(d)};
        for (int k = 0; k < 4; ++k) probes.push_back(random_point(rng, d, 10.0));
        for (const auto& f : shipped_family(static_cast<std::size_t>(d))) {
            ++members;
            if (!check_sistr(f, probes).ok()) ++failing;
        }
    }
    const BiasFn ce = BiasFn::counterexample2d();
    const Eigen::VectorXd xbar = (Eigen::VectorXd(2) << 2.0, -2.0).finished();
    const bool f_ok = check_sistr(ce, {xbar}).ok();
    const SistrReport lim = check_sistr(ce.limit(), {xbar});
    const bool witness_ok = lim.witness.has_value() && lim.witness->c1 >= 1.0 - 1e-12 &&
                            lim.witness->c2 <= 2.0 + 1e-12 && lim.witness->c1 < lim.witness->c2 &&
                            ce.eval_infty(xbar.array() + lim.witness->c1) ==
                                ce.eval_infty(xbar.array() + lim.witness->c2);
    return {failing == 0 && f_ok && !lim.is_monotone_on_grid && witness_ok,
            std::to_string(members - failing) + "/" + std::to_string(members) +
                " family members pass, counterexample f " + (f_ok ? "passes" : "fails") + ", f_inf " +
                (lim.is_monotone_on_grid ? "passes" : "fails") + (witness_ok ? " with witness in [1,2]" : "")};
}

Verdict criterion8() {
    Xoshiro256 rng(8);
    std::vector<BiasFn> pool2 = shipped_family(2);
    pool2.push_back(BiasFn::counterexample2d());
    const std::vector<BiasFn> pool6 = shipped_family(6);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const bool small = rng.uniform() < 0.5;
        const auto& pool = small ? pool2 : pool6;
        const BiasFn& f = pool[rng.below(pool.size())];
        const Eigen::VectorXd x = random_point(rng, small ? 2 : 6, 10.0);
        const double target = 100.0 * rng.symmetric();
        const double c = solve_translation(f, x, target);
        worst = std::max(worst, std::abs(f(x.array() + c) - target));
    }
    return {worst <= 1e-10, "max |f(x + c) - target| = " + fmt("%.3g", worst) + " over 1000 triples"};
}

Verdict criterion9() {
    std::vector<ExpectedQuantities> models{expected_quantities(generate_instance(reference_instance_spec()))};
    for (std::uint64_t seed = 0; seed < 4; ++seed)
        models.push_back(expected_quantities(generate_instance(GeneratorSpec::random_wcom(4, 3, seed))));
    Xoshiro256 rng(9);
    const double tol = 1e-12;
    std::size_t violations = 0;
    for (int k = 0; k < 10000; ++k) {
        const auto& eq = models[static_cast<std::size_t>(k) % models.size()];
        const Eigen::Index d = static_cast<Eigen::Index>(eq.n_pairs());
        const double ba = eq.t_min;
        const double r_star = optimal_rate_bruteforce(eq).r_star(0);
        const Eigen::VectorXd q1 = random_point(rng, d, 10.0);
        const Eigen::VectorXd q2 = random_point(rng, d, 10.0);
        const double c = 10.0 * rng.symmetric();
        const double dist = (q1 - q2).cwiseAbs().maxCoeff();
        for (const auto& op : {std::function<Eigen::VectorXd(const Eigen::VectorXd&)>(
                                   [&](const Eigen::VectorXd& q) { return apply_T(eq, ba, q); }),
                               std::function<Eigen::VectorXd(const Eigen::VectorXd&)>(
                                   [&](const Eigen::VectorXd& q) { return apply_T_zero_reward(eq, ba, q); })}) {
            const Eigen::VectorXd t1 = op(q1);
            if ((t1 - op(q2)).cwiseAbs().maxCoeff() > dist + tol) ++violations;
            if ((op(q1.array() + c).matrix() - (t1.array() + c).matrix()).cwiseAbs().maxCoeff() > tol) ++violations;
        }
        const Eigen::VectorXd h1 = h_prime_eval(eq, ba, r_star, q1);
        if ((h_prime_eval(eq, ba, r_star, q1.array() + c) - h1).cwiseAbs().maxCoeff() > tol) ++violations;
    }
    return {violations == 0, std::to_string(violations) + " violations over 10000 pairs at tolerance 1e-12"};
}

Verdict criterion10() {
    const Eigen::Vector2d rates(0.25, 0.125);
    const double L_h = 0.25;
    const DriftFn drift = [rates](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -rates.cwiseProduct(x); };
    std::vector<double> slopes;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SaConfig cfg;
        cfg.dim = 2;
        cfg.drift = drift;
        cfg.step = StepsizeSchedule::class2(2.0 * L_h);
        cfg.upd = UpdateSchedule::round_robin(2);
        cfg.noise = NoiseModel::mds_bounded(1.0);
        cfg.x0 = Eigen::Vector2d(5.0, -5.0);
        cfg.n_steps = 200000;
        cfg.thinning = 1;
        cfg.record_updates = true;
        cfg.seed = seed;
        const RunTrace tr = run_sa(cfg);
        const int span = static_cast<int>(tr.ode_time.back());
        const ShadowingSlopes sh = shadowing_rate(tr, drift, 2, span);
        // An error that never leaves the rounding floor has no fitted slope; count it against the bound.
        slopes.push_back(sh.slope_total.value_or(1e300));
    }
    const double bound = -L_h / 2.0 + 0.5;
    const double med = median(slopes);
    return {med <= bound, "median slope_total " + fmt("%.4g", med) + " vs bound " + fmt("%.4g", bound) +
                              " over 20 seeds (a finite-horizon fit of a limsup rate)"};
}

Verdict criterion11() {
    const SmdpModel m(1, 1, {{{{0.5, 0, 1.0, 1.0}, {0.5, 0, 3.0, 1.0}}}});
    const auto eq = expected_quantities(m);
    std::vector<double> slopes;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RviQlConfig cfg;
        cfg.f = BiasFn::reference_component(0, 1);
        cfg.step = StepsizeSchedule::class1(9.0);
        cfg.varsigma = 10.0;
        cfg.n_steps = 1000000;
        cfg.thinning = 1;
        cfg.seed = seed;
        const HoldingRate hr = holding_time_rate(run_rvi_q(m, eq, cfg), eq);
        slopes.push_back(hr.slope.value_or(1e300));
    }
    const double med = median(slopes);
    return {med <= -3.5, "median slope " + fmt("%.4g", med) + " vs bound -3.5 (theory -4.5) over 20 seeds"};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        std::ifstream in(e.path(), std::ios::binary);
        files[fs::relative(e.path(), root).string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return files;
}

Verdict criterion12() {
    const std::vector<std::pair<std::string, json>> runs{
        {"solve-exact", {{"seed", 12}}},
        {"learn", {{"n_steps", 20000}, {"thinning", 100}, {"T0", 1.0}, {"seed", 12}}},
        {"run-sa",
         {{"drift", {{"kind", "linear"}, {"matrix", {{-1.0, 0.2}, {0.0, -0.5}}}, {"offset", {1.0, 2.0}}}},
          {"update", {{"kind", "iid_subset"}, {"prob", 0.5}}},
          {"noise", {{"centered", {{"kind", "mds_bounded"}, {"scale", 0.5}}}}},
          {"n_steps", 20000},
          {"seed", 12}}},
        {"ode-check", {{"dt", 1e-2}, {"n_starts", 3}, {"seed", 12}}},
        {"sweep", {{"base", {{"n_steps", 5000}, {"thinning", 500}, {"seed", 12}}}, {"values", {3.0, 4.0}}}},
    };
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* name : {"criterion-12a", "criterion-12b"}) {
        HarnessOptions opt;
        opt.output_root = default_output_root() / name;
        fs::remove_all(opt.output_root);
        for (const auto& [cmd, cfg] : runs)
            if (run_command(cmd, cfg, opt).exit_code != exit_ok) return {false, cmd + " exited nonzero"};
        trees.push_back(read_tree(opt.output_root));
    }
    std::size_t mismatched = 0;
    for (const auto& [path, body] : trees[0]) {
        const auto it = trees[1].find(path);
        if (it == trees[1].end() || it->second != body) ++mismatched;
    }
    const bool same_set = trees[0].size() == trees[1].size();
    return {same_set && mismatched == 0 && !trees[0].empty(),
            std::to_string(trees[0].size() - mismatched) + "/" + std::to_string(trees[0].size()) +
                " trace files identical across reruns"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks for the rviq library"};
    int only = 0;
    app.add_option("--only", only, "Run a single criterion (1-12)")->check(CLI::Range(1, 12));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2,  criterion3,  criterion4,
                                                         criterion5, criterion6,  criterion7,  criterion8,
                                                         criterion9, criterion10, criterion11, criterion12};
    bool all_pass = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (only != 0 && static_cast<std::size_t>(only) != k + 1) continue;
        Verdict out;
        try {
            out = criteria[k]();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        all_pass = all_pass && out.pass;
        std::cout << "criterion " << k + 1 << ": " << (out.pass ? "PASS" : "FAIL") << " (" << out.detail << ")"
                  << std::endl;
    }
    return all_pass ? 0 : 1;
}
