#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rviq/generators.hpp"
#include "rviq/learning.hpp"
#include "rviq/oracle.hpp"

using namespace rviq;

namespace {

// One state, one action, holding time 1 or 3 with equal probability, reward 2 or 4.
SmdpModel two_point_loop() {
    return SmdpModel(1, 1, {{{{0.5, 0, 1.0, 2.0}, {0.5, 0, 3.0, 4.0}}}});
}

}  // namespace

TEST_CASE("eta rule") {
    EtaRule decaying;
    CHECK(decaying(0) == 0.01);
    CHECK(decaying(1023) == doctest::Approx(0.01 / std::pow(1024.0, 0.1)).epsilon(1e-15));
    EtaRule fixed;
    fixed.fixed_bound = 0.5;
    CHECK(fixed(12345) == 0.5);
}

TEST_CASE("single-pair run matches a direct replay of the recursion") {
    const SmdpModel m = two_point_loop();
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    cfg.f = BiasFn::reference_component(0, 1);
    cfg.step = StepsizeSchedule::class1(3.0);
    cfg.varsigma = 2.0;
    cfg.T0 = Eigen::VectorXd::Constant(1, 0.5);
    cfg.Q0 = Eigen::VectorXd::Constant(1, -1.0);
    cfg.n_steps = 500;
    cfg.thinning = 1;
    cfg.seed = 31;
    const QlRun run = run_rvi_q(m, eq, cfg);

    Xoshiro256 data = substream(31, StreamPurpose::transitions, 0);
    double q = -1.0, t = 0.5;
    std::size_t clipped = 0;
    for (std::size_t n = 0; n < 500; ++n) {
        const Transition tx = sample_transition(m, 0, 0, data);
        const double a = cfg.step(n);
        double b = 2.0 * a;
        if (b > 1.0) {
            b = 1.0;
            ++clipped;
        }
        const double denom = std::max(t, cfg.eta(n));
        q += a * ((tx.reward + q - q) / denom - q);
        t += b * (tx.tau - t);
        CHECK(run.trace.snapshot(n + 1)(0) == doctest::Approx(q).epsilon(1e-12));
        CHECK(run.trace.aux_at(n + 1, 0) == doctest::Approx(t).epsilon(1e-12));
    }
    CHECK(run.beta_clipped == clipped);
    CHECK(run.final_T(0) == doctest::Approx(t).epsilon(1e-12));
    CHECK(run.trace.aux_names.back() == "delta_hat");
    CHECK(run.trace.aux_at(0, 1) == -1.0);  // f(Q0)
}

TEST_CASE("clipped holding-time gains are counted") {
    const SmdpModel m = loop_canonical();
    RviQlConfig cfg;
    cfg.f = BiasFn::reference_component(0, 1);
    cfg.step = StepsizeSchedule::class1(1.0);
    cfg.varsigma = 10.0;
    cfg.n_steps = 100;
    CHECK(run_rvi_q(m, expected_quantities(m), cfg).beta_clipped == 10);
}

TEST_CASE("deterministic loop converges to the optimal rate with exact holding times") {
    const SmdpModel m = loop_canonical();
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    cfg.f = BiasFn::reference_component(0, 1);
    cfg.step = StepsizeSchedule::class1(3.0);
    cfg.varsigma = 3.0;
    cfg.T0 = Eigen::VectorXd::Constant(1, 2.0);
    cfg.n_steps = 20000;
    cfg.thinning = 100;
    const QlRun run = run_rvi_q(m, eq, cfg);
    const auto rep = convergence_report(run, eq, *cfg.f, 1.5);
    CHECK(rep.final_holding_error == 0.0);
    CHECK(rep.final_rate_error < 0.1);
    CHECK(rep.rate_error.back() < rep.rate_error.front());
    CHECK(holding_time_rate(run, eq).exact);
}

TEST_CASE("holding-time estimates contract at the stepsize clock rate") {
    const SmdpModel m = two_point_loop();
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    cfg.f = BiasFn::reference_component(0, 1);
    cfg.step = StepsizeSchedule::class1(4.0);
    cfg.varsigma = 4.0;
    cfg.n_steps = 200000;
    cfg.thinning = 1;
    const QlRun run = run_rvi_q(m, eq, cfg);
    const HoldingRate hr = holding_time_rate(run, eq);
    CHECK_FALSE(hr.exact);
    REQUIRE(hr.slope.has_value());
    CHECK(*hr.slope < 0.0);
    CHECK(std::abs(run.final_T(0) - 2.0) < 0.05);
}

TEST_CASE("noise records decompose the increment") {
    const SmdpModel m = generate_instance(reference_instance_spec());
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    cfg.f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(6, 1.0 / 6.0));
    cfg.step = StepsizeSchedule::class2(3.0);
    cfg.varsigma = 3.0;
    cfg.T0 = Eigen::VectorXd::Ones(6);
    cfg.n_steps = 20000;
    cfg.record_noise = true;
    cfg.noise_stride = 3;
    const QlRun run = run_rvi_q(m, eq, cfg);
    REQUIRE(run.noise.records.size() == 20000 / 3 + 1);
    CHECK(run.noise.bar_alpha == eq.t_min);
    double mart_sum = 0.0;
    for (const auto& r : run.noise.records) {
        const double total = r.martingale + r.bias + r.drift;
        CHECK(total == doctest::Approx(run.noise.bar_alpha * r.increment / r.alpha).epsilon(1e-9).scale(1.0));
        CHECK(r.delta_hat >= 0.0);
        mart_sum += r.martingale;
    }
    CHECK(std::abs(mart_sum / static_cast<double>(run.noise.records.size())) < 0.1);
}

TEST_CASE("threshold validation") {
    const auto eq = expected_quantities(generate_instance(reference_instance_spec()));
    const BiasFn f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(6, 1.0 / 6.0));
    const double a_star = 2.0 / eq.t_min + 1.0;
    const ThresholdReport ok = validate_thresholds(eq, f, StepsizeSchedule::class2(a_star * 1.01), a_star * 1.01);
    CHECK(ok.A_star == doctest::Approx(a_star).epsilon(1e-15));
    CHECK(ok.L_f_closed_form);
    CHECK(ok.pass());
    CHECK(ok.checks.size() == 2);

    const ThresholdReport low = validate_thresholds(eq, f, StepsizeSchedule::class2(a_star * 0.99), a_star * 1.01);
    CHECK_FALSE(low.pass());
    CHECK_FALSE(low.checks[0].pass);
    CHECK(low.checks[1].pass);

    const ThresholdReport c1 = validate_thresholds(eq, f, StepsizeSchedule::class1(3.0 * a_star), 2.0 * a_star, 0.3);
    REQUIRE(c1.checks.size() == 3);
    CHECK(c1.checks[0].pass);
    CHECK_FALSE(c1.checks[1].pass);
    CHECK(c1.to_json().at("pass") == false);

    const BiasFn soft = BiasFn::custom(6, [](const Eigen::VectorXd& x) { return x.mean(); });
    const ThresholdReport sampled = validate_thresholds(eq, soft, StepsizeSchedule::class2(10.0), 10.0);
    CHECK_FALSE(sampled.L_f_closed_form);
    CHECK(sampled.L_f <= 1.0 + 1e-12);
    CHECK(sampled.L_f > 0.5);
}

TEST_CASE("learning on the reference instance approaches the optimal rate") {
    const SmdpModel m = generate_instance(reference_instance_spec());
    const auto eq = expected_quantities(m);
    const double r_star = testing::enumerated_optimum(eq)(0);
    RviQlConfig cfg;
    cfg.f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(6, 1.0 / 6.0));
    const double a_star = 2.0 / eq.t_min + 1.0;
    cfg.step = StepsizeSchedule::class1(2.1 * a_star);
    cfg.varsigma = 2.0 * a_star;
    cfg.T0 = Eigen::VectorXd::Ones(6);
    cfg.n_steps = 400000;
    cfg.seed = 5;
    const QlRun run = run_rvi_q(m, eq, cfg);
    const auto rep = convergence_report(run, eq, *cfg.f, r_star);
    CHECK(rep.rate_error.front() > 1.0);
    CHECK(rep.final_rate_error < 0.5 * rep.rate_error.front());
    CHECK(rep.final_holding_error < 0.05);
    CHECK(rep.n.size() == run.trace.snapshots());
}

TEST_CASE("runs are reproducible per seed") {
    const SmdpModel m = generate_instance(reference_instance_spec());
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    cfg.f = BiasFn::affine(0.0, Eigen::VectorXd::Constant(6, 1.0 / 6.0));
    cfg.n_steps = 5000;
    cfg.seed = 9;
    const QlRun a = run_rvi_q(m, eq, cfg);
    const QlRun b = run_rvi_q(m, eq, cfg);
    CHECK(a.trace.x == b.trace.x);
    CHECK(a.trace.aux == b.trace.aux);
    cfg.seed = 10;
    CHECK(run_rvi_q(m, eq, cfg).trace.x != a.trace.x);
}

TEST_CASE("configuration errors and divergence") {
    const SmdpModel m = generate_instance(reference_instance_spec());
    const auto eq = expected_quantities(m);
    RviQlConfig cfg;
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), std::invalid_argument);
    cfg.f = BiasFn::reference_component(0, 2);
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), std::invalid_argument);
    cfg.f = BiasFn::reference_component(0, 6);
    cfg.varsigma = 0.0;
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), std::invalid_argument);
    cfg.varsigma = 1.0;
    cfg.T0 = Eigen::VectorXd::Constant(6, -1.0);
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), std::invalid_argument);
    cfg.T0.resize(0);
    cfg.upd = UpdateSchedule::round_robin(5);
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), std::invalid_argument);
    cfg.upd.reset();

    cfg.step = StepsizeSchedule::class1(0.01);
    cfg.eta.fixed_bound = 1e-3;
    cfg.divergence_guard = 1e6;
    cfg.n_steps = 1000;
    CHECK_THROWS_AS(run_rvi_q(m, eq, cfg), DivergenceError);
}
