#include "rviq/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rviq/oracle.hpp"

namespace rviq {

VectorField VectorField::h(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha) {
    return {eq.n_pairs(), [eq, f, bar_alpha](const Eigen::VectorXd& q) { return h_eval(eq, f, bar_alpha, q); },
            Provenance::h};
}

VectorField VectorField::h_prime(const ExpectedQuantities& eq, double bar_alpha, double r_star) {
    return {eq.n_pairs(),
            [eq, bar_alpha, r_star](const Eigen::VectorXd& q) { return h_prime_eval(eq, bar_alpha, r_star, q); },
            Provenance::h_prime};
}

VectorField VectorField::h_infty(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha) {
    return {eq.n_pairs(), [eq, f, bar_alpha](const Eigen::VectorXd& q) { return h_infty_eval(eq, f, bar_alpha, q); },
            Provenance::h_infty};
}

VectorField VectorField::h_scaled(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("h_scaled: scale must be positive");
    return {eq.n_pairs(),
            [eq, f, bar_alpha, c](const Eigen::VectorXd& q) {
                return Eigen::VectorXd(h_eval(eq, f, bar_alpha, c * q) / c);
            },
            Provenance::h_scaled};
}

VectorField VectorField::user(std::size_t dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn) {
    if (!fn) throw std::invalid_argument("VectorField::user: empty function");
    return {dim, std::move(fn), Provenance::user};
}

std::string VectorField::name() const {
    switch (provenance) {
        case Provenance::h: return "h";
        case Provenance::h_prime: return "h_prime";
        case Provenance::h_infty: return "h_infty";
        case Provenance::h_scaled: return "h_scaled";
        case Provenance::user: return "user";
    }
    return "user";
}

namespace {

std::size_t step_count(double t_end, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("integrate: dt must be positive");
    if (!(t_end >= dt * (1.0 - 1e-9))) throw std::invalid_argument("integrate: t_end must be at least dt");
    return static_cast<std::size_t>(std::llround(t_end / dt));
}

void require_finite(const Eigen::VectorXd& x, double t) {
    if (!x.allFinite()) throw std::runtime_error("integrate: non-finite state at t = " + std::to_string(t));
}

std::vector<std::size_t> pattern(const ExpectedQuantities& eq, const Eigen::VectorXd& q) {
    return greedy_policy(eq, q);
}

std::vector<double> kinks(const ExpectedQuantities& eq, const OdePath& path) {
    std::vector<double> out;
    auto prev = pattern(eq, path.points.front());
    for (std::size_t k = 1; k < path.points.size(); ++k) {
        auto cur = pattern(eq, path.points[k]);
        if (cur != prev) out.push_back(path.times[k]);
        prev = std::move(cur);
    }
    return out;
}

std::optional<double> fit_slope(const std::vector<int>& j, const std::vector<double>& err, double floor) {
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < j.size(); ++k)
        if (err[k] > floor) {
            lx.push_back(static_cast<double>(j[k]));
            ly.push_back(std::log(err[k]));
        }
    if (lx.size() < 2) return std::nullopt;
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    if (!(sxx > 0.0)) return std::nullopt;
    return sxy / sxx;
}

constexpr double kFloor = 1e-14;

}  // namespace

Eigen::VectorXd rk4_step(const VectorField& field, const Eigen::VectorXd& x, double dt) {
    const Eigen::VectorXd k1 = field.eval(x);
    const Eigen::VectorXd k2 = field.eval(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = field.eval(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = field.eval(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

OdePath integrate(const VectorField& field, const Eigen::VectorXd& x0, double t_end, double dt) {
    if (static_cast<std::size_t>(x0.size()) != field.dim)
        throw std::invalid_argument("integrate: initial condition has the wrong dimension");
    const std::size_t steps = step_count(t_end, dt);
    OdePath path;
    path.dt = dt;
    path.times.reserve(steps + 1);
    path.points.reserve(steps + 1);
    require_finite(x0, 0.0);
    path.times.push_back(0.0);
    path.points.push_back(x0);
    for (std::size_t k = 1; k <= steps; ++k) {
        Eigen::VectorXd next = rk4_step(field, path.points.back(), dt);
        const double t = static_cast<double>(k) * dt;
        require_finite(next, t);
        path.times.push_back(t);
        path.points.push_back(std::move(next));
    }
    return path;
}

DecompositionResult decomposition_check(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                                        double r_star, const Eigen::VectorXd& x0, double t_end, double dt) {
    DecompositionResult out;
    out.x = integrate(VectorField::h(eq, f, bar_alpha), x0, t_end, dt);
    const VectorField hp = VectorField::h_prime(eq, bar_alpha, r_star);
    out.y = integrate(hp, x0, t_end, dt);

    const std::size_t steps = out.y.points.size() - 1;
    std::vector<Eigen::VectorXd> slope(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) slope[k] = hp.eval(out.y.points[k]);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(x0.size());
    auto rhs = [&](const Eigen::VectorXd& y, double z) { return bar_alpha * r_star - bar_alpha * f.eval(y + z * ones); };

    out.z.reserve(steps + 1);
    out.z.push_back(0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        const Eigen::VectorXd& y0 = out.y.points[k];
        const Eigen::VectorXd& y1 = out.y.points[k + 1];
        const Eigen::VectorXd ymid = 0.5 * (y0 + y1) + (dt / 8.0) * (slope[k] - slope[k + 1]);
        const double z = out.z.back();
        const double k1 = rhs(y0, z);
        const double k2 = rhs(ymid, z + 0.5 * dt * k1);
        const double k3 = rhs(ymid, z + 0.5 * dt * k2);
        const double k4 = rhs(y1, z + dt * k3);
        out.z.push_back(z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }

    out.gap.reserve(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double g = (out.x.points[k] - out.y.points[k] - out.z[k] * ones).cwiseAbs().maxCoeff();
        out.gap.push_back(g);
        out.max_gap = std::max(out.max_gap, g);
    }
    out.kink_times = kinks(eq, out.x);
    const auto ky = kinks(eq, out.y);
    out.kink_times.insert(out.kink_times.end(), ky.begin(), ky.end());
    std::sort(out.kink_times.begin(), out.kink_times.end());
    out.kink_times.erase(std::unique(out.kink_times.begin(), out.kink_times.end()), out.kink_times.end());
    return out;
}

OrderCheck decomposition_order_check(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, double r_star,
                                     const Eigen::VectorXd& x0, double t_end, double dt_coarse,
                                     double segment_length) {
    const double dt_fine = 0.5 * dt_coarse;
    const DecompositionResult scout = decomposition_check(eq, f, bar_alpha, r_star, x0, t_end, dt_fine);
    OrderCheck out;
    std::size_t start_index = 0;
    if (!scout.kink_times.empty()) {
        const double last = scout.kink_times.back();
        const double aligned = std::ceil(last / dt_coarse + 1.0) * dt_coarse;
        start_index = std::min(static_cast<std::size_t>(std::llround(aligned / dt_fine)), scout.x.points.size() - 1);
    }
    out.segment_start = scout.x.times[start_index];
    out.segment_length = segment_length;
    const Eigen::VectorXd& start = scout.x.points[start_index];
    const DecompositionResult coarse = decomposition_check(eq, f, bar_alpha, r_star, start, segment_length, dt_coarse);
    const DecompositionResult fine = decomposition_check(eq, f, bar_alpha, r_star, start, segment_length, dt_fine);
    out.gap_coarse = coarse.max_gap;
    out.gap_fine = fine.max_gap;
    out.ratio = fine.max_gap > 0.0 ? coarse.max_gap / fine.max_gap : std::numeric_limits<double>::infinity();
    out.kink_free = coarse.kink_times.empty() && fine.kink_times.empty();
    return out;
}

MonotoneDistance monotone_distance_check(const ExpectedQuantities& eq, double bar_alpha, double r_star,
                                         const Eigen::VectorXd& y0, const Eigen::VectorXd& qbar, double t_end,
                                         double dt) {
    if (qbar.size() != y0.size()) throw std::invalid_argument("monotone_distance_check: dimension mismatch");
    const OdePath path = integrate(VectorField::h_prime(eq, bar_alpha, r_star), y0, t_end, dt);
    MonotoneDistance out;
    out.slack = 10.0 * dt * dt;
    out.distance.reserve(path.points.size());
    for (const auto& p : path.points) out.distance.push_back((p - qbar).cwiseAbs().maxCoeff());
    for (std::size_t k = 1; k < out.distance.size(); ++k) {
        const double inc = out.distance[k] - out.distance[k - 1];
        out.max_increase = std::max(out.max_increase, inc);
        if (inc > out.slack) ++out.violations;
    }
    return out;
}

ScalingProbe scaling_limit_probe(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha,
                                 const std::vector<Eigen::VectorXd>& grid, const std::vector<double>& c_list) {
    ScalingProbe out;
    double prev = 0.0;
    for (std::size_t k = 0; k < c_list.size(); ++k) {
        const double c = c_list[k];
        if (!(c >= 1.0) || (k > 0 && !(c > c_list[k - 1])))
            throw std::invalid_argument("scaling_limit_probe: scales must be increasing and at least 1");
        double sup = 0.0;
        for (const auto& x : grid) {
            const Eigen::VectorXd hc = h_eval(eq, f, bar_alpha, c * x) / c;
            sup = std::max(sup, (hc - h_infty_eval(eq, f, bar_alpha, x)).cwiseAbs().maxCoeff());
        }
        if (k > 0 && sup > prev + 1e-12) out.nonincreasing = false;
        out.c.push_back(c);
        out.sup_gap.push_back(sup);
        prev = sup;
    }
    return out;
}

ShadowingSlopes shadowing_rate(const RunTrace& trace, const DriftFn& drift, int j0, int j1, double dt) {
    if (trace.thinning != 1 || !trace.has_updates)
        throw std::invalid_argument("shadowing_rate: needs thinning 1 and recorded update sets");
    if (j0 < 0 || j1 <= j0) throw std::invalid_argument("shadowing_rate: empty window");
    if (trace.ode_time.back() < static_cast<double>(j1))
        throw std::out_of_range("shadowing_rate: window exceeds the ODE-time span of the trace");
    const std::size_t d = trace.dim;
    const double inv_d = 1.0 / static_cast<double>(d);
    const VectorField averaged = VectorField::user(d, [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(inv_d * drift(x));
    });
    const auto& times = trace.ode_time;

    ShadowingSlopes out;
    Eigen::VectorXd weights(static_cast<Eigen::Index>(d));
    for (int j = j0; j < j1; ++j) {
        const double t0 = j;
        const double t1 = j + 1.0;
        const Eigen::VectorXd start = interpolate(trace, t0).x;
        const Eigen::VectorXd bar_end = interpolate(trace, t1).x;
        const Eigen::VectorXd flow_end = integrate(averaged, start, 1.0, dt).back();

        auto seg = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t0) - times.begin());
        seg = seg == 0 ? 0 : seg - 1;
        Eigen::VectorXd x = start;
        double t = t0;
        while (t < t1 && seg < trace.n_steps) {
            const double end = std::min(times[seg + 1], t1);
            const double len = end - t;
            if (len > 0.0) {
                weights.setZero();
                for (std::size_t m = trace.set_offsets[seg]; m < trace.set_offsets[seg + 1]; ++m)
                    weights(static_cast<Eigen::Index>(trace.set_members[m])) =
                        trace.set_alphas[m] / trace.step_alpha_sum[seg];
                const VectorField weighted = VectorField::user(d, [&](const Eigen::VectorXd& y) {
                    return Eigen::VectorXd(weights.cwiseProduct(drift(y)));
                });
                const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(len / dt)));
                const double h = len / static_cast<double>(sub);
                for (std::size_t s = 0; s < sub; ++s) x = rk4_step(weighted, x, h);
            }
            t = end;
            ++seg;
        }
        out.j.push_back(j);
        out.err_total.push_back((bar_end - flow_end).cwiseAbs().maxCoeff());
        out.err_noise.push_back((bar_end - x).cwiseAbs().maxCoeff());
        out.err_async.push_back((x - flow_end).cwiseAbs().maxCoeff());
    }
    out.slope_total = fit_slope(out.j, out.err_total, kFloor);
    out.slope_noise = fit_slope(out.j, out.err_noise, kFloor);
    out.slope_async = fit_slope(out.j, out.err_async, kFloor);
    out.total_at_floor = !out.slope_total;
    out.noise_at_floor = !out.slope_noise;
    out.async_at_floor = !out.slope_async;
    return out;
}

double translation_flow_gap(const ExpectedQuantities& eq, double bar_alpha, double r_star, const Eigen::VectorXd& y0,
                            double c, double t_end, double dt) {
    const VectorField hp = VectorField::h_prime(eq, bar_alpha, r_star);
    const Eigen::VectorXd shift = Eigen::VectorXd::Constant(y0.size(), c);
    const OdePath base = integrate(hp, y0, t_end, dt);
    const OdePath moved = integrate(hp, y0 + shift, t_end, dt);
    double gap = 0.0;
    for (std::size_t k = 0; k < base.points.size(); ++k)
        gap = std::max(gap, (moved.points[k] - shift - base.points[k]).cwiseAbs().maxCoeff());
    return gap;
}

double equilibrium_drift(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, const Eigen::VectorXd& q,
                         double t_end, double dt) {
    const OdePath path = integrate(VectorField::h(eq, f, bar_alpha), q, t_end, dt);
    double gap = 0.0;
    for (const auto& p : path.points) gap = std::max(gap, (p - q).cwiseAbs().maxCoeff());
    return gap;
}

GasProbe gas_probe(const ExpectedQuantities& eq, const BiasFn& f, double bar_alpha, double radius,
                   std::size_t n_starts, double t_end, double dt, Xoshiro256& rng) {
    const VectorField field = VectorField::h(eq, f, bar_alpha);
    const auto d = static_cast<Eigen::Index>(eq.n_pairs());
    GasProbe out;
    out.n_starts = n_starts;
    for (std::size_t k = 0; k < n_starts; ++k) {
        Eigen::VectorXd x0(d);
        for (Eigen::Index i = 0; i < d; ++i) x0(i) = radius * rng.symmetric();
        const double res = qf_residual(eq, f, integrate(field, x0, t_end, dt).back());
        out.residuals.push_back(res);
        out.max_residual = std::max(out.max_residual, res);
    }
    return out;
}

}  // namespace rviq
