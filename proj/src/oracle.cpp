#include "rviq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rviq {

namespace {

constexpr double pivot_floor = 1e-12;

Eigen::VectorXd lu_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const char* what) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const double smallest = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(smallest >= pivot_floor))
        throw std::runtime_error(std::string("singular linear solve in ") + what);
    return lu.solve(b);
}

void check_bar_alpha(const ExpectedQuantities& eq, double bar_alpha) {
    if (!(bar_alpha > 0.0) || bar_alpha > eq.t_min * (1.0 + 1e-12))
        throw std::invalid_argument("bar_alpha must lie in (0, t_min]");
}

Eigen::VectorXd apply_T_impl(const ExpectedQuantities& eq, double bar_alpha, const Eigen::VectorXd& q,
                             bool with_reward) {
    check_bar_alpha(eq, bar_alpha);
    if (static_cast<std::size_t>(q.size()) != eq.n_pairs()) throw std::invalid_argument("q has wrong length");
    const Eigen::VectorXd vmax = state_max(eq, q);
    const Eigen::VectorXd next = eq.p * vmax;
    Eigen::VectorXd out(q.size());
    for (Eigen::Index k = 0; k < q.size(); ++k) {
        const double w = bar_alpha / eq.t(k);
        out(k) = (with_reward ? w * eq.r(k) : 0.0) + w * next(k) + (1.0 - w) * q(k);
    }
    return out;
}

}  // namespace

Eigen::VectorXd state_max(const ExpectedQuantities& eq, const Eigen::VectorXd& q) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(eq.n_states));
    for (std::size_t s = 0; s < eq.n_states; ++s) {
        double best = q(static_cast<Eigen::Index>(eq.index(s, 0)));
        for (std::size_t a = 1; a < eq.n_actions; ++a) best = std::max(best, q(static_cast<Eigen::Index>(eq.index(s, a))));
        v(static_cast<Eigen::Index>(s)) = best;
    }
    return v;
}

std::vector<std::size_t> greedy_policy(const ExpectedQuantities& eq, const Eigen::VectorXd& q) {
    std::vector<std::size_t> pol(eq.n_states, 0);
    for (std::size_t s = 0; s < eq.n_states; ++s) {
        double best = q(static_cast<Eigen::Index>(eq.index(s, 0)));
        for (std::size_t a = 1; a < eq.n_actions; ++a) {
            const double v = q(static_cast<Eigen::Index>(eq.index(s, a)));
            if (v > best) {
                best = v;
                pol[s] = a;
            }
        }
    }
    return pol;
}

Eigen::VectorXd policy_rates(const ExpectedQuantities& eq, const StationaryPolicy& policy) {
    policy.check(eq.n_states, eq.n_actions);
    const auto n = static_cast<Eigen::Index>(eq.n_states);
    Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd reward = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd hold = Eigen::VectorXd::Zero(n);
    for (Eigen::Index s = 0; s < n; ++s)
        for (std::size_t a = 0; a < eq.n_actions; ++a) {
            const double w = policy.probs(s, static_cast<Eigen::Index>(a));
            if (w == 0.0) continue;
            const auto k = static_cast<Eigen::Index>(eq.index(static_cast<std::size_t>(s), a));
            chain.row(s) += w * eq.p.row(k);
            reward(s) += w * eq.r(k);
            hold(s) += w * eq.t(k);
        }

    std::vector<std::vector<std::size_t>> adj(eq.n_states);
    for (Eigen::Index s = 0; s < n; ++s)
        for (Eigen::Index j = 0; j < n; ++j)
            if (chain(s, j) > 0.0) adj[static_cast<std::size_t>(s)].push_back(static_cast<std::size_t>(j));
    const CommStructure comm = classify_digraph(adj);

    Eigen::VectorXd rate = Eigen::VectorXd::Zero(n);
    for (const auto& cls : comm.closed_classes) {
        const auto m = static_cast<Eigen::Index>(cls.size());
        // Stationary law: (P_C^T - I) mu = 0 with the last equation replaced
        // by the normalization sum(mu) = 1.
        Eigen::MatrixXd sys(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                sys(i, j) = chain(static_cast<Eigen::Index>(cls[static_cast<std::size_t>(j)]),
                                  static_cast<Eigen::Index>(cls[static_cast<std::size_t>(i)])) -
                            (i == j ? 1.0 : 0.0);
        sys.row(m - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        rhs(m - 1) = 1.0;
        const Eigen::VectorXd mu = lu_solve(sys, rhs, "stationary distribution");
        double num = 0.0;
        double den = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto s = static_cast<Eigen::Index>(cls[static_cast<std::size_t>(i)]);
            num += mu(i) * reward(s);
            den += mu(i) * hold(s);
        }
        for (auto s : cls) rate(static_cast<Eigen::Index>(s)) = num / den;
    }

    if (!comm.transient_states.empty()) {
        const auto& tr = comm.transient_states;
        const auto m = static_cast<Eigen::Index>(tr.size());
        std::vector<bool> is_transient(eq.n_states, false);
        for (auto s : tr) is_transient[s] = true;
        Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(m, m);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto s = static_cast<Eigen::Index>(tr[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < m; ++j) sys(i, j) -= chain(s, static_cast<Eigen::Index>(tr[static_cast<std::size_t>(j)]));
            for (Eigen::Index j = 0; j < n; ++j)
                if (!is_transient[static_cast<std::size_t>(j)]) rhs(i) += chain(s, j) * rate(j);
        }
        const Eigen::VectorXd v = lu_solve(sys, rhs, "absorption probabilities");
        for (Eigen::Index i = 0; i < m; ++i) rate(static_cast<Eigen::Index>(tr[static_cast<std::size_t>(i)])) = v(i);
    }
    return rate;
}

OptimalRates optimal_rate_bruteforce(const ExpectedQuantities& eq) {
    const double count = std::pow(static_cast<double>(eq.n_actions), static_cast<double>(eq.n_states));
    if (count > 1e6) throw std::invalid_argument("optimal_rate_bruteforce: more than 1e6 deterministic policies");
    const auto total = static_cast<std::size_t>(std::llround(count));
    OptimalRates best;
    best.r_star = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eq.n_states),
                                            -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> actions(eq.n_states, 0);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t rest = code;
        for (std::size_t s = 0; s < eq.n_states; ++s) {
            actions[s] = rest % eq.n_actions;
            rest /= eq.n_actions;
        }
        const Eigen::VectorXd rates = policy_rates(eq, StationaryPolicy::deterministic(actions, eq.n_actions));
        if (rates(0) > best.r_star(0)) best.best_policy = actions;
        best.r_star = best.r_star.cwiseMax(rates);
    }
    return best;
}

Eigen::VectorXd apply_T(const ExpectedQuantities& eq, double bar_alpha, const Eigen::VectorXd& q) {
    return apply_T_impl(eq, bar_alpha, q, true);
}

Eigen::VectorXd apply_T_zero_reward(const ExpectedQuantities& eq, double bar_alpha, const Eigen::VectorXd& q) {
    return apply_T_impl(eq, bar_alpha, q, false);
}

Eigen::VectorXd h_eval(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const Eigen::VectorXd& q) {
    if (f.dim() != eq.n_pairs()) throw std::invalid_argument("bias function dimension does not match the model");
    return (apply_T(eq, bar_alpha, q) - q).array() - bar_alpha * f.eval(q);
}

Eigen::VectorXd h_prime_eval(const ExpectedQuantities& eq, double bar_alpha, double r_star, const Eigen::VectorXd& q) {
    return (apply_T(eq, bar_alpha, q) - q).array() - bar_alpha * r_star;
}

Eigen::VectorXd h_infty_eval(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                             const Eigen::VectorXd& q) {
    if (f.dim() != eq.n_pairs()) throw std::invalid_argument("bias function dimension does not match the model");
    return (apply_T_zero_reward(eq, bar_alpha, q) - q).array() - bar_alpha * f.eval_infty(q);
}

RviResult schweitzer_rvi(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const Eigen::VectorXd& q0,
                         const RviOptions& opts) {
    if (static_cast<std::size_t>(q0.size()) != eq.n_pairs()) throw std::invalid_argument("q0 has wrong length");
    RviResult out;
    Eigen::VectorXd q = q0;
    double omega = opts.initial_damping;
    double best_res = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_q = q;
    std::size_t stall = 0;
    std::size_t it = 0;
    for (;; ++it) {
        const Eigen::VectorXd h = h_eval(eq, f, bar_alpha, q);
        const double res = h.cwiseAbs().maxCoeff();
        if (opts.record_history) out.residual_history.push_back(res);
        if (res < best_res) {
            best_res = res;
            best_q = q;
            stall = 0;
        } else if (++stall >= opts.patience) {
            omega *= 0.5;
            q = best_q;
            stall = 0;
            continue;
        }
        if (res <= opts.tol || it >= opts.max_iter || omega < 1e-12) break;
        q += omega * h;
    }
    out.converged = best_res <= opts.tol;
    out.q = best_q;
    out.final_residual = best_res;
    out.iterations = it;
    out.damping = omega;
    out.rate_estimate = f.eval(best_q);
    return out;
}

RviResult schweitzer_rvi(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const RviOptions& opts) {
    return schweitzer_rvi(eq, f, bar_alpha, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eq.n_pairs())), opts);
}

double solve_translation(const BiasFn& f, const Eigen::VectorXd& x, double target) {
    auto g = [&](double c) {
        const Eigen::VectorXd shifted = x.array() + c;
        return f.eval(shifted) - target;
    };
    double lo = -1.0;
    double hi = 1.0;
    double g_lo = g(lo);
    double g_hi = g(hi);
    while (g_hi < 0.0) {
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        if (hi > 1e9) throw std::runtime_error("solve_translation: bracket expansion exceeded 1e9");
        g_hi = g(hi);
    }
    while (g_lo > 0.0) {
        hi = lo;
        g_hi = g_lo;
        lo *= 2.0;
        if (lo < -1e9) throw std::runtime_error("solve_translation: bracket expansion exceeded 1e9");
        g_lo = g(lo);
    }
    double best_c = std::abs(g_lo) < std::abs(g_hi) ? lo : hi;
    double best_g = std::min(std::abs(g_lo), std::abs(g_hi));
    while (best_g > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double gm = g(mid);
        if (std::abs(gm) < best_g) {
            best_g = std::abs(gm);
            best_c = mid;
        }
        (gm < 0.0 ? lo : hi) = mid;
    }
    if (best_g > 1e-10) {
        const double glo = g(lo);
        const double ghi = g(hi);
        if (ghi != glo) {
            const double c = lo - glo * (hi - lo) / (ghi - glo);
            if (std::abs(g(c)) < best_g) best_c = c;
        }
    }
    return best_c;
}

double aoe_residual(const ExpectedQuantities& eq, const Eigen::VectorXd& q, double rbar) {
    const Eigen::VectorXd next = eq.p * state_max(eq, q);
    return (eq.r - eq.t * rbar + next - q).cwiseAbs().maxCoeff();
}

double qf_residual(const ExpectedQuantities& eq, const BiasFn& f, const Eigen::VectorXd& q) {
    return aoe_residual(eq, q, f.eval(q));
}

}  // namespace rviq
