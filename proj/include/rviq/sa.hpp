#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rviq/rng.hpp"

namespace rviq {

struct StepsizeSchedule {
    enum class Kind { class1, class2, power };
    Kind kind = Kind::class1;
    double A = 1.0;  // scaling for class1 / class2
    double c = 1.0;  // power: c / n^p
    double p = 1.0;

    static StepsizeSchedule class1(double A);
    static StepsizeSchedule class2(double A);
    static StepsizeSchedule power(double c, double p);

    double operator()(std::size_t n) const;
    void validate() const;
    std::string name() const;
    nlohmann::json to_json() const;
    static StepsizeSchedule from_json(const nlohmann::json& j);
};

/// Random rule for choosing which components move at each step.
class UpdateSchedule {
public:
    enum class Kind { synchronous, iid_subset, markov_chain, round_robin };

    static UpdateSchedule synchronous(std::size_t d);
    static UpdateSchedule iid_subset(std::vector<double> inclusion);
    static UpdateSchedule markov_chain(Eigen::MatrixXd transition, std::size_t start = 0);
    static UpdateSchedule round_robin(std::size_t d);

    Kind kind() const { return kind_; }
    std::size_t dim() const { return d_; }
    /// Draws Y_n into `out` (cleared first); sorted, nonempty.
    void next(Xoshiro256& rng, std::vector<std::size_t>& out);
    std::vector<std::size_t> next(Xoshiro256& rng);
    /// Long-run selection frequency of each component.
    Eigen::VectorXd limiting_frequencies() const;
    std::string name() const;
    nlohmann::json to_json() const;
    static UpdateSchedule from_json(const nlohmann::json& j, std::size_t d);

private:
    UpdateSchedule() = default;
    Kind kind_ = Kind::synchronous;
    std::size_t d_ = 0;
    std::vector<double> inclusion_;
    Eigen::MatrixXd transition_;
    std::vector<std::vector<double>> cumulative_;
    std::size_t position_ = 0;
};

/// Conditionally centered noise part.
struct CenteredNoise {
    enum class Kind { none, mds_bounded, mds_state_scaled, iid_fn };
    enum class Zeta { rademacher, uniform };
    Kind kind = Kind::none;
    double scale = 0.0;  // mds_bounded: scale * U[-1,1]
    double K = 0.0;      // mds_state_scaled: conditional std sqrt(K)(1 + |x|)
    Eigen::MatrixXd G;   // iid_fn: component i gets (G x + g)_i * zeta_i
    Eigen::VectorXd g;
    Zeta zeta = Zeta::rademacher;
};

/// Vanishing bias part, bounded by delta_{n+1} (1 + |x_n|).
struct BiasedNoise {
    enum class Delta { none, power, exp_time };
    enum class Direction { constant, alternating, random_sign };
    Delta delta = Delta::none;
    double c = 0.0;
    double kappa = 1.0;  // power: c (n+1)^-kappa
    double mu = 1.0;     // exp_time: c exp(-mu sum_{k<=n} alpha_k)
    Direction direction = Direction::constant;

    double delta_at(std::size_t n, double alpha_sum) const;
};

struct NoiseModel {
    CenteredNoise centered;
    BiasedNoise biased;

    static NoiseModel none() { return {}; }
    static NoiseModel mds_bounded(double scale);
    static NoiseModel mds_state_scaled(double K);
    nlohmann::json to_json() const;
    static NoiseModel from_json(const nlohmann::json& j, std::size_t d);
};

using DriftFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, double norm);
    std::size_t step() const { return step_; }
    double norm() const { return norm_; }

private:
    std::size_t step_;
    double norm_;
};

/// Columnar record of a run. Snapshots are taken every `thinning` steps and
/// at the final step; per-step update sets and stepsizes are kept in full
/// when `has_updates` is set.
struct RunTrace {
    std::size_t dim = 0;
    std::size_t thinning = 1;
    std::size_t n_steps = 0;

    std::vector<std::size_t> n;          // snapshot step index
    std::vector<double> x;               // snapshot iterates, row-major (snapshot, component)
    std::vector<double> ode_time;        // t~(n) at each snapshot
    std::vector<double> alpha_sum;       // sum_{k<n} alpha_k at each snapshot
    std::vector<std::uint64_t> nu;       // nu(n, i), row-major
    std::vector<std::size_t> last_set_size;  // |Y_{n-1}|, zero at n = 0

    bool has_updates = false;
    std::vector<std::size_t> set_offsets;  // CSR offsets, length n_steps + 1
    std::vector<std::size_t> set_members;
    std::vector<double> set_alphas;        // alpha_{nu(n,i)} for each member
    std::vector<double> step_alpha_sum;    // aggregated stepsize per step

    std::size_t aux_dim = 0;               // extra per-snapshot columns
    std::vector<std::string> aux_names;
    std::vector<double> aux;

    StepsizeSchedule step;
    nlohmann::json metadata;

    std::size_t snapshots() const { return n.size(); }
    Eigen::Map<const Eigen::VectorXd> snapshot(std::size_t k) const;
    Eigen::VectorXd final_x() const;
    std::uint64_t nu_at(std::size_t k, std::size_t i) const { return nu[k * dim + i]; }
    double aux_at(std::size_t k, std::size_t j) const { return aux[k * aux_dim + j]; }

    void write_csv(const std::string& path, const std::string& header_comment = "") const;
};

struct SaConfig {
    std::size_t dim = 1;
    DriftFn drift;
    NoiseModel noise;
    StepsizeSchedule step;
    std::optional<UpdateSchedule> upd;
    Eigen::VectorXd x0;
    std::size_t n_steps = 1;
    std::uint64_t seed = 0;
    std::size_t thinning = 1000;
    bool record_updates = false;
    double divergence_guard = 1e12;
    bool check_noise_contract = true;
};

/// Asynchronous SA recursion: only components in Y_n move, each with its
/// own stepsize alpha_{nu(n,i)}.
RunTrace run_sa(const SaConfig& cfg);

struct Interpolated {
    Eigen::VectorXd x;
    bool exact = true;
};

Interpolated interpolate(const RunTrace& trace, double t);

struct AsynchronyReport {
    Eigen::VectorXd relative_frequencies;
    double delta_proxy = 0.0;  // min_i nu(n,i)/n over the trace tail
    std::optional<double> gamma_hat;
    bool gamma_exact = false;  // frequencies matched the limit exactly on the window
    double stepsize_ratio_sup = 0.0;
    double alpha_sum = 0.0;
    double alpha_sq_sum = 0.0;
    double alpha_sum_tail_increment = 0.0;
    double alpha_sq_sum_tail_increment = 0.0;
    std::vector<std::size_t> ratio_steps;
    std::vector<std::vector<double>> ratio_trajectories;  // component i vs component 0
};

AsynchronyReport asynchrony_diagnostics(const RunTrace& trace,
                                        std::optional<Eigen::VectorXd> limit_frequencies = std::nullopt);

/// Fits log of the block maxima of |value| against log n over dyadic blocks.
std::optional<double> loglog_envelope_slope(const std::vector<double>& n, const std::vector<double>& value,
                                            double n_lo, double n_hi);

}  // namespace rviq
