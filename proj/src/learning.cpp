#include "rviq/learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rviq/oracle.hpp"

namespace rviq {

double EtaRule::operator()(std::size_t n) const {
    if (fixed_bound) return *fixed_bound;
    return eta0 / std::pow(static_cast<double>(n) + 1.0, power);
}

namespace {

UpdateSchedule default_schedule(std::size_t d) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d),
                                                  1.0 / static_cast<double>(d));
    return UpdateSchedule::markov_chain(std::move(m));
}

}  // namespace

QlRun run_rvi_q(const SmdpModel& model, const ExpectedQuantities& eq, const RviQlConfig& cfg) {
    const std::size_t d = model.n_pairs();
    const auto dd = static_cast<Eigen::Index>(d);
    if (!cfg.f) throw std::invalid_argument("run_rvi_q: a bias function is required");
    const BiasFn& f = *cfg.f;
    if (f.dim() != d) throw std::invalid_argument("run_rvi_q: bias function dimension must equal |S||A|");
    if (!(cfg.varsigma > 0.0)) throw std::invalid_argument("run_rvi_q: varsigma must be positive");
    if (cfg.eta.fixed_bound ? !(*cfg.eta.fixed_bound > 0.0) : !(cfg.eta.eta0 > 0.0 && cfg.eta.power > 0.0))
        throw std::invalid_argument("run_rvi_q: eta must be positive and vanishing, or a positive fixed bound");
    if (cfg.n_steps == 0 || cfg.thinning == 0 || cfg.noise_stride == 0)
        throw std::invalid_argument("run_rvi_q: n_steps, thinning and noise_stride must be positive");
    cfg.step.validate();

    UpdateSchedule upd = cfg.upd ? *cfg.upd : default_schedule(d);
    if (upd.dim() != d) throw std::invalid_argument("run_rvi_q: update schedule must range over state-action pairs");

    Eigen::VectorXd Q = cfg.Q0.size() == 0 ? Eigen::VectorXd::Zero(dd) : cfg.Q0;
    Eigen::VectorXd T = cfg.T0.size() == 0 ? Eigen::VectorXd::Zero(dd) : cfg.T0;
    if (Q.size() != dd || T.size() != dd) throw std::invalid_argument("run_rvi_q: Q0/T0 have the wrong length");
    if ((T.array() < 0.0).any()) throw std::invalid_argument("run_rvi_q: T0 must be nonnegative");

    const double bar_alpha = cfg.bar_alpha.value_or(eq.t_min);
    Xoshiro256 sched_rng = substream(cfg.seed, StreamPurpose::schedule);
    std::vector<Xoshiro256> data_rng;
    data_rng.reserve(d);
    for (std::size_t i = 0; i < d; ++i) data_rng.push_back(substream(cfg.seed, StreamPurpose::transitions, i));

    QlRun out;
    out.noise.bar_alpha = bar_alpha;
    RunTrace& tr = out.trace;
    tr.dim = d;
    tr.thinning = cfg.thinning;
    tr.n_steps = cfg.n_steps;
    tr.step = cfg.step;
    tr.aux_dim = d + 2;
    for (std::size_t i = 0; i < d; ++i) tr.aux_names.push_back("T" + std::to_string(i));
    tr.aux_names.emplace_back("f");
    tr.aux_names.emplace_back("delta_hat");
    tr.metadata = {{"seed", cfg.seed},
                   {"n_steps", cfg.n_steps},
                   {"thinning", cfg.thinning},
                   {"stepsize", cfg.step.to_json()},
                   {"varsigma", cfg.varsigma},
                   {"update_schedule", upd.to_json()},
                   {"bias", bias_to_json(f)}};

    std::vector<std::uint64_t> nu(d, 0);
    double ode = 0.0;
    double base_sum = 0.0;
    std::size_t last_size = 0;

    auto delta_hat = [&](std::size_t n) {
        const double floor = cfg.eta(n);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < dd; ++i)
            worst = std::max(worst, std::abs(1.0 / std::max(T(i), floor) - 1.0 / eq.t(i)));
        return out.noise.k_bar_prime * worst;
    };
    auto snap = [&](std::size_t n, double fq) {
        tr.n.push_back(n);
        tr.x.insert(tr.x.end(), Q.data(), Q.data() + d);
        tr.ode_time.push_back(ode);
        tr.alpha_sum.push_back(base_sum);
        tr.nu.insert(tr.nu.end(), nu.begin(), nu.end());
        tr.last_set_size.push_back(last_size);
        tr.aux.insert(tr.aux.end(), T.data(), T.data() + d);
        tr.aux.push_back(fq);
        tr.aux.push_back(delta_hat(n));
    };
    snap(0, f.eval(Q));

    std::vector<std::size_t> Y;
    std::vector<double> newQ, newT;
    Eigen::VectorXd vmax(static_cast<Eigen::Index>(eq.n_states));
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
        upd.next(sched_rng, Y);
        const double fq = f.eval(Q);
        const double floor = cfg.eta(n);
        const bool log_noise = cfg.record_noise && n % cfg.noise_stride == 0;
        double dh = 0.0;
        if (log_noise) {
            dh = delta_hat(n);
            vmax = state_max(eq, Q);
        }
        newQ.resize(Y.size());
        newT.resize(Y.size());
        double agg = 0.0;
        for (std::size_t idx = 0; idx < Y.size(); ++idx) {
            const std::size_t i = Y[idx];
            const auto ii = static_cast<Eigen::Index>(i);
            const std::size_t s = i / model.n_actions();
            const std::size_t a = i % model.n_actions();
            const Transition tx = sample_transition(model, s, a, data_rng[i]);
            double next_max = Q(static_cast<Eigen::Index>(tx.next_state * model.n_actions()));
            for (std::size_t b = 1; b < model.n_actions(); ++b)
                next_max = std::max(next_max, Q(static_cast<Eigen::Index>(tx.next_state * model.n_actions() + b)));
            const double alpha = cfg.step(static_cast<std::size_t>(nu[i]));
            double beta = cfg.varsigma * alpha;
            if (beta > 1.0) {
                beta = 1.0;
                ++out.beta_clipped;
            }
            const double denom = std::max(T(ii), floor);
            const double inc = alpha * ((tx.reward + next_max - Q(ii)) / denom - fq);
            newQ[idx] = Q(ii) + inc;
            newT[idx] = T(ii) + beta * (tx.tau - T(ii));
            agg += alpha;
            if (log_noise) {
                const double r = eq.r(ii);
                const double t = eq.t(ii);
                const double expect = eq.p.row(ii).dot(vmax);
                const double mart = bar_alpha * ((tx.reward - r) / denom + (next_max - expect) / t);
                const double gap = r + next_max - Q(ii);
                const double bias = bar_alpha * (gap / denom - gap / t);
                const double drift = bar_alpha * ((r + expect - Q(ii)) / t - fq);
                out.noise.records.push_back({n, i, alpha, mart, bias, drift, inc, dh});
            }
        }
        for (std::size_t idx = 0; idx < Y.size(); ++idx) {
            const auto ii = static_cast<Eigen::Index>(Y[idx]);
            Q(ii) = newQ[idx];
            T(ii) = newT[idx];
            ++nu[Y[idx]];
        }
        ode += agg;
        base_sum += cfg.step(n);
        last_size = Y.size();
        const double norm = Q.cwiseAbs().maxCoeff();
        if (!(norm <= cfg.divergence_guard)) throw DivergenceError(n + 1, norm);
        if ((n + 1) % cfg.thinning == 0 || n + 1 == cfg.n_steps) snap(n + 1, f.eval(Q));
    }
    tr.metadata["beta_clipped"] = out.beta_clipped;
    out.final_T = T;
    return out;
}

bool ThresholdReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ThresholdCheck& c) { return c.pass; });
}

nlohmann::json ThresholdReport::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : checks) list.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
    return {{"L_f", L_f}, {"L_f_closed_form", L_f_closed_form}, {"t_min", t_min}, {"A_star", A_star},
            {"checks", list}, {"pass", pass()}};
}

ThresholdReport validate_thresholds(const ExpectedQuantities& eq, const BiasFn& f, const StepsizeSchedule& step,
                                    double varsigma, double gamma) {
    ThresholdReport rep;
    rep.t_min = eq.t_min;
    if (const auto lf = f.lipschitz_closed_form()) {
        rep.L_f = *lf;
    } else {
        Xoshiro256 rng = substream(0, StreamPurpose::probing);
        const auto d = static_cast<Eigen::Index>(f.dim());
        rep.L_f = lipschitz_estimate(f, Eigen::VectorXd::Constant(d, -10.0), Eigen::VectorXd::Constant(d, 10.0),
                                     20000, rng)
                      .sampled;
        rep.L_f_closed_form = false;
    }
    rep.A_star = 2.0 / rep.t_min + rep.L_f;
    switch (step.kind) {
        case StepsizeSchedule::Kind::class2:
            rep.checks.push_back({"A > A*", step.A, rep.A_star, step.A > rep.A_star});
            break;
        case StepsizeSchedule::Kind::class1:
            rep.checks.push_back({"A/2 > A*", step.A / 2.0, rep.A_star, step.A / 2.0 > rep.A_star});
            rep.checks.push_back({"gamma*A > A*", gamma * step.A, rep.A_star, gamma * step.A > rep.A_star});
            break;
        case StepsizeSchedule::Kind::power:
            rep.checks.push_back({"stepsize class 1 or 2", 0.0, 0.0, false});
            break;
    }
    rep.checks.push_back({"varsigma > A*", varsigma, rep.A_star, varsigma > rep.A_star});
    return rep;
}

ThresholdReport validate_thresholds(const ExpectedQuantities& eq, const BiasFn& f, const RviQlConfig& cfg) {
    return validate_thresholds(eq, f, cfg.step, cfg.varsigma, cfg.gamma);
}

double holding_error_at(const QlRun& run, const ExpectedQuantities& eq, std::size_t k) {
    const auto& tr = run.trace;
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.dim; ++i)
        worst = std::max(worst, std::abs(tr.aux_at(k, i) - eq.t(static_cast<Eigen::Index>(i))));
    return worst;
}

nlohmann::json ConvergenceReport::to_json() const {
    return {{"final_rate_error", final_rate_error},
            {"final_qf_residual", final_qf_residual},
            {"final_holding_error", final_holding_error},
            {"tail_oscillation", tail_oscillation},
            {"greedy_optimal", greedy_optimal},
            {"greedy_policy", greedy}};
}

ConvergenceReport convergence_report(const QlRun& run, const ExpectedQuantities& eq, const BiasFn& f, double r_star) {
    const auto& tr = run.trace;
    ConvergenceReport rep;
    const std::size_t K = tr.snapshots();
    for (std::size_t k = 0; k < K; ++k) {
        const Eigen::VectorXd q = tr.snapshot(k);
        rep.n.push_back(tr.n[k]);
        rep.rate_error.push_back(std::abs(f.eval(q) - r_star));
        rep.qf_residual.push_back(qf_residual(eq, f, q));
        rep.holding_error.push_back(holding_error_at(run, eq, k));
    }
    rep.final_rate_error = rep.rate_error.back();
    rep.final_qf_residual = rep.qf_residual.back();
    rep.final_holding_error = rep.holding_error.back();

    const Eigen::VectorXd q_end = tr.final_x();
    const double n_from = 0.9 * static_cast<double>(tr.n_steps);
    for (std::size_t k = 0; k < K; ++k)
        if (static_cast<double>(tr.n[k]) >= n_from)
            rep.tail_oscillation = std::max(rep.tail_oscillation, (tr.snapshot(k) - q_end).cwiseAbs().maxCoeff());

    rep.greedy = greedy_policy(eq, q_end);
    const Eigen::VectorXd rates = policy_rates(eq, StationaryPolicy::deterministic(rep.greedy, eq.n_actions));
    rep.greedy_optimal = (rates.array() - r_star).abs().maxCoeff() <= 1e-9 * (1.0 + std::abs(r_star));
    return rep;
}

HoldingRate holding_time_rate(const QlRun& run, const ExpectedQuantities& eq) {
    const auto& tr = run.trace;
    HoldingRate out;
    std::vector<double> n_axis, err, clock;
    bool nonzero = false;
    for (std::size_t k = 0; k < tr.snapshots(); ++k) {
        if (tr.n[k] == 0) continue;
        const double e = holding_error_at(run, eq, k);
        n_axis.push_back(static_cast<double>(tr.n[k]));
        err.push_back(e);
        clock.push_back(tr.alpha_sum[k] + tr.step(tr.n[k]));
        if (tr.n[k] >= 64 && e > 1e-15 * (1.0 + eq.t.cwiseAbs().maxCoeff())) nonzero = true;
    }
    if (!nonzero) {
        out.exact = true;
        return out;
    }
    std::vector<double> lx, ly;
    const double n_hi = n_axis.empty() ? 0.0 : n_axis.back();
    for (double lo = 64.0; 2.0 * lo <= n_hi * (1 + 1e-12); lo *= 2.0) {
        double peak = 0.0;
        double at = 0.0;
        bool found = false;
        for (std::size_t k = 0; k < n_axis.size(); ++k) {
            if (n_axis[k] < lo || n_axis[k] >= 2.0 * lo) continue;
            if (!found) {
                at = clock[k];
                found = true;
            }
            peak = std::max(peak, err[k]);
        }
        if (found && peak > 0.0) {
            lx.push_back(at);
            ly.push_back(std::log(peak));
        }
    }
    out.blocks = lx.size();
    if (lx.size() < 3) return out;
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    if (sxx > 0.0) out.slope = sxy / sxx;
    return out;
}

}  // namespace rviq
