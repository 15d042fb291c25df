#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rviq/bias.hpp"
#include "rviq/rng.hpp"
#include "rviq/sa.hpp"
#include "rviq/smdp.hpp"

namespace rviq {

struct VectorField {
    enum class Provenance { h, h_prime, h_infty, h_scaled, user };
    std::size_t dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;
    Provenance provenance = Provenance::user;

    static VectorField h(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha);
    static VectorField h_prime(const ExpectedQuantities& eq, double bar_alpha, double r_star);
    static VectorField h_infty(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha);
    /// x -> h(c x) / c
    static VectorField h_scaled(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, double c);
    static VectorField user(std::size_t dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn);

    std::string name() const;
};

struct OdePath {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> points;

    const Eigen::VectorXd& back() const { return points.back(); }
};

/// Fixed-step classical RK4 on [0, t_end]; the step count is round(t_end / dt).
OdePath integrate(const VectorField& field, const Eigen::VectorXd& x0, double t_end, double dt);

/// One RK4 step of size dt.
Eigen::VectorXd rk4_step(const VectorField& field, const Eigen::VectorXd& x, double dt);

struct DecompositionResult {
    double max_gap = 0.0;
    std::vector<double> gap;  // per grid time
    OdePath x;
    OdePath y;
    std::vector<double> z;
    std::vector<double> kink_times;  // grid times where a greedy action of x or y switched
};

/// Integrates x' = h(x), y' = h'(y) and z' = a r* - a f(y + z) separately and
/// measures sup_t |x - y - z 1|. The z equation reads y through cubic Hermite
/// interpolation of the y path.
DecompositionResult decomposition_check(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                                        double r_star, const Eigen::VectorXd& x0, double t_end, double dt);

struct OrderCheck {
    double segment_start = 0.0;
    double segment_length = 0.0;
    double gap_coarse = 0.0;
    double gap_fine = 0.0;
    double ratio = 0.0;
    bool kink_free = false;
};

/// Step-halving test of the decomposition gap on a segment that starts after
/// the last greedy-action switch seen on [0, t_end].
OrderCheck decomposition_order_check(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                                     double r_star, const Eigen::VectorXd& x0, double t_end, double dt_coarse,
                                     double segment_length);

struct MonotoneDistance {
    std::size_t violations = 0;
    double max_increase = 0.0;  // largest one-step increase of the distance
    double slack = 0.0;
    std::vector<double> distance;
};

MonotoneDistance monotone_distance_check(const ExpectedQuantities& eq, double bar_alpha, double r_star,
                                         const Eigen::VectorXd& y0, const Eigen::VectorXd& qbar, double t_end,
                                         double dt);

struct ScalingProbe {
    std::vector<double> c;
    std::vector<double> sup_gap;
    bool nonincreasing = true;
};

ScalingProbe scaling_limit_probe(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                                 const std::vector<Eigen::VectorXd>& grid, const std::vector<double>& c_list);

struct ShadowingSlopes {
    std::vector<int> j;
    std::vector<double> err_total;
    std::vector<double> err_noise;
    std::vector<double> err_async;
    std::optional<double> slope_total;  // empty when every error is at the floor
    std::optional<double> slope_noise;
    std::optional<double> slope_async;
    bool total_at_floor = false;
    bool noise_at_floor = false;
    bool async_at_floor = false;
};

/// Compares the interpolated trajectory of an asynchronous run with the flow
/// of (1/d) h and with the flow of the realized piecewise-constant weighting
/// over unit windows [j, j+1] for j0 <= j < j1. Needs thinning 1 and
/// recorded update sets.
ShadowingSlopes shadowing_rate(const RunTrace& trace, const DriftFn& drift, int j0, int j1, double dt = 1e-3);

/// sup_t |y_c(t) - c 1 - y(t)| for the h' flow started at y0 and y0 + c 1.
double translation_flow_gap(const ExpectedQuantities& eq, double bar_alpha, double r_star,
                            const Eigen::VectorXd& y0, double c, double t_end, double dt);

/// sup_t |x(t) - q| for the h flow started at q.
double equilibrium_drift(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const Eigen::VectorXd& q,
                         double t_end, double dt);

struct GasProbe {
    std::size_t n_starts = 0;
    double max_residual = 0.0;
    std::vector<double> residuals;
};

/// Integrates the h flow from n_starts points drawn uniformly in the sup-norm
/// ball of radius R and reports qf_residual at t_end.
GasProbe gas_probe(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, double radius,
                   std::size_t n_starts, double t_end, double dt, Xoshiro256& rng);

}  // namespace rviq
