#pragma once

// Reference computations used only by the tests. They reach the same
// quantities as the library through different algorithms.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "rviq/smdp.hpp"

namespace rviq::testing {

/// Cesaro limit of the chain matrix P via repeated squaring of the lazy chain
/// (I + P) / 2, which has the same limit and is aperiodic.
inline Eigen::MatrixXd cesaro_limit(const Eigen::MatrixXd& P) {
    const auto n = P.rows();
    Eigen::MatrixXd M = 0.5 * (Eigen::MatrixXd::Identity(n, n) + P);
    for (int k = 0; k < 80; ++k) {
        M = M * M;
        // Renormalize so row-sum rounding cannot compound across squarings.
        for (Eigen::Index i = 0; i < n; ++i) M.row(i) /= M.row(i).sum();
    }
    return M;
}

/// Long-run reward rate of a deterministic policy from each start state,
/// using the Cesaro limit matrix and grouping recurrent states by mutual
/// positive limit mass.
inline Eigen::VectorXd limit_matrix_rates(const ExpectedQuantities& eq, const std::vector<std::size_t>& actions) {
    const auto n = static_cast<Eigen::Index>(eq.n_states);
    Eigen::MatrixXd P(n, n);
    Eigen::VectorXd r(n), t(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto idx = static_cast<Eigen::Index>(eq.index(static_cast<std::size_t>(s), actions[s]));
        P.row(s) = eq.p.row(idx);
        r(s) = eq.r(idx);
        t(s) = eq.t(idx);
    }
    const Eigen::MatrixXd L = cesaro_limit(P);
    constexpr double eps = 1e-12;
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    int n_cls = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (L(j, j) <= eps || cls[j] >= 0) continue;
        for (Eigen::Index k = 0; k < n; ++k)
            if (L(j, k) > eps) cls[k] = n_cls;
        ++n_cls;
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        for (int c = 0; c < n_cls; ++c) {
            double mass = 0.0, num = 0.0, den = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (cls[j] == c) {
                    mass += L(s, j);
                    num += L(s, j) * r(j);
                    den += L(s, j) * t(j);
                }
            if (mass > eps) out(s) += mass * num / den;
        }
    }
    return out;
}

/// Optimal rate by enumerating deterministic policies with the limit-matrix oracle.
inline Eigen::VectorXd enumerated_optimum(const ExpectedQuantities& eq) {
    std::vector<std::size_t> actions(eq.n_states, 0);
    Eigen::VectorXd best = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eq.n_states), -1e300);
    for (;;) {
        best = best.cwiseMax(limit_matrix_rates(eq, actions));
        std::size_t k = 0;
        while (k < eq.n_states && ++actions[k] == eq.n_actions) actions[k++] = 0;
        if (k == eq.n_states) break;
    }
    return best;
}

/// Reachability closure of the union digraph by Floyd-Warshall.
inline std::vector<std::vector<bool>> reachability(const SmdpModel& m) {
    const std::size_t n = m.n_states();
    std::vector<std::vector<bool>> R(n, std::vector<bool>(n, false));
    for (std::size_t s = 0; s < n; ++s) {
        R[s][s] = true;
        for (std::size_t a = 0; a < m.n_actions(); ++a)
            for (const auto& o : m.outcomes(s, a))
                if (o.prob > 0.0) R[s][o.next_state] = true;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (R[i][k])
                for (std::size_t j = 0; j < n; ++j)
                    if (R[k][j]) R[i][j] = true;
    return R;
}

/// States whose reachable set only contains states that reach them back.
inline std::vector<bool> recurrent_states(const SmdpModel& m) {
    const auto R = reachability(m);
    const std::size_t n = m.n_states();
    std::vector<bool> rec(n, true);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (R[i][j] && !R[j][i]) rec[i] = false;
    return rec;
}

}  // namespace rviq::testing
