#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rviq/bias.hpp"
#include "rviq/sa.hpp"
#include "rviq/smdp.hpp"

namespace rviq {

/// Lower bound on the holding-time denominator at step n: either a decaying
/// floor eta0 / (n+1)^power or a fixed a-priori bound.
struct EtaRule {
    double eta0 = 0.01;
    double power = 0.1;
    std::optional<double> fixed_bound;

    double operator()(std::size_t n) const;
};

struct RviQlConfig {
    StepsizeSchedule step = StepsizeSchedule::class2(1.0);
    double varsigma = 1.0;
    EtaRule eta;
    std::optional<UpdateSchedule> upd;  // over state-action pairs; defaults to uniform iid singletons
    std::optional<BiasFn> f;
    Eigen::VectorXd Q0;                 // empty means zero
    Eigen::VectorXd T0;                 // empty means zero
    std::size_t n_steps = 100000;
    std::uint64_t seed = 0;
    std::size_t thinning = 1000;
    double gamma = 0.5;                 // declared asynchrony exponent, class-1 checks only
    std::optional<double> bar_alpha;    // noise decomposition; defaults to t_min
    bool record_noise = false;
    std::size_t noise_stride = 1;
    double divergence_guard = 1e12;
};

struct NoiseRecord {
    std::size_t n;
    std::size_t i;
    double alpha;
    double martingale;
    double bias;
    double drift;
    double increment;
    double delta_hat;
};

struct NoiseDecomposition {
    double bar_alpha = 0.0;
    double k_bar_prime = 1.0;
    std::vector<NoiseRecord> records;
};

struct QlRun {
    RunTrace trace;  // x = Q; aux = T per pair, f(Q), delta_hat
    NoiseDecomposition noise;
    std::size_t beta_clipped = 0;
    Eigen::VectorXd final_T;
};

QlRun run_rvi_q(const SmdpModel& model, const ExpectedQuantities& eq, const RviQlConfig& cfg);

struct ThresholdCheck {
    std::string name;
    double lhs;
    double rhs;
    bool pass;
};

struct ThresholdReport {
    double L_f = 0.0;
    bool L_f_closed_form = true;
    double t_min = 0.0;
    double A_star = 0.0;
    std::vector<ThresholdCheck> checks;
    bool pass() const;
    nlohmann::json to_json() const;
};

ThresholdReport validate_thresholds(const ExpectedQuantities& eq, const BiasFn& f, const StepsizeSchedule& step,
                                    double varsigma, double gamma = 0.5);
ThresholdReport validate_thresholds(const ExpectedQuantities& eq, const BiasFn& f, const RviQlConfig& cfg);

struct ConvergenceReport {
    std::vector<std::size_t> n;
    std::vector<double> rate_error;
    std::vector<double> qf_residual;
    std::vector<double> holding_error;
    double final_rate_error = 0.0;
    double final_qf_residual = 0.0;
    double final_holding_error = 0.0;
    double tail_oscillation = 0.0;
    bool greedy_optimal = false;
    std::vector<std::size_t> greedy;
    nlohmann::json to_json() const;
};

ConvergenceReport convergence_report(const QlRun& run, const ExpectedQuantities& eq, const BiasFn& f, double r_star);

struct HoldingRate {
    bool exact = false;
    std::optional<double> slope;
    std::size_t blocks = 0;
};

/// Slope of ln max|T_n - t| against the cumulative stepsize, from dyadic
/// block maxima over the trace.
HoldingRate holding_time_rate(const QlRun& run, const ExpectedQuantities& eq);

/// Largest holding-time error over pairs at snapshot k.
double holding_error_at(const QlRun& run, const ExpectedQuantities& eq, std::size_t k);

}  // namespace rviq
