#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "rviq/bias.hpp"
#include "rviq/smdp.hpp"

namespace rviq {

/// Average reward rate of a stationary policy from each start state, via the
/// recurrent-class decomposition of the induced chain.
Eigen::VectorXd policy_rates(const ExpectedQuantities& eq, const StationaryPolicy& policy);

struct OptimalRates {
    Eigen::VectorXd r_star;
    std::vector<std::size_t> best_policy;  // attains the maximum from state 0
};

OptimalRates optimal_rate_bruteforce(const ExpectedQuantities& eq);

/// Relative value operator with aperiodicity scaling bar_alpha.
Eigen::VectorXd apply_T(const ExpectedQuantities& eq, double bar_alpha, const Eigen::VectorXd& q);
/// Same operator with all rewards set to zero.
Eigen::VectorXd apply_T_zero_reward(const ExpectedQuantities& eq, double bar_alpha, const Eigen::VectorXd& q);

Eigen::VectorXd h_eval(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const Eigen::VectorXd& q);
Eigen::VectorXd h_prime_eval(const ExpectedQuantities& eq, double bar_alpha, double r_star, const Eigen::VectorXd& q);
Eigen::VectorXd h_infty_eval(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                             const Eigen::VectorXd& q);

struct RviOptions {
    double tol = 1e-11;
    std::size_t max_iter = 200000;
    double initial_damping = 1.0;
    std::size_t patience = 10;
    bool record_history = false;
};

struct RviResult {
    Eigen::VectorXd q;
    double rate_estimate = 0.0;
    std::size_t iterations = 0;
    double final_residual = 0.0;
    bool converged = false;
    double damping = 1.0;
    std::vector<double> residual_history;
};

/// Deterministic relative value iteration Q <- Q + w h(Q). The damping w is
/// halved whenever the residual fails to improve on its best value for
/// `patience` consecutive iterations. On non-convergence the best iterate is
/// returned with `converged == false`.
RviResult schweitzer_rvi(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                         const Eigen::VectorXd& q0, const RviOptions& opts = {});
RviResult schweitzer_rvi(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                         const RviOptions& opts = {});

/// Unique c with f(x + c) = target, by bracket expansion and bisection.
double solve_translation(const BiasFn& f, const Eigen::VectorXd& x, double target);

double aoe_residual(const ExpectedQuantities& eq, const Eigen::VectorXd& q, double rbar);
double qf_residual(const ExpectedQuantities& eq, const BiasFn& f, const Eigen::VectorXd& q);

/// Greedy action per state, ties broken by the lowest action index.
std::vector<std::size_t> greedy_policy(const ExpectedQuantities& eq, const Eigen::VectorXd& q);

/// Per state, the largest q over actions, ties to the lowest index.
Eigen::VectorXd state_max(const ExpectedQuantities& eq, const Eigen::VectorXd& q);

}  // namespace rviq
