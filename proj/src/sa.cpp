#include "rviq/sa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rviq {

StepsizeSchedule StepsizeSchedule::class1(double A) {
    StepsizeSchedule s;
    s.kind = Kind::class1;
    s.A = A;
    s.validate();
    return s;
}

StepsizeSchedule StepsizeSchedule::class2(double A) {
    StepsizeSchedule s;
    s.kind = Kind::class2;
    s.A = A;
    s.validate();
    return s;
}

StepsizeSchedule StepsizeSchedule::power(double c, double p) {
    StepsizeSchedule s;
    s.kind = Kind::power;
    s.c = c;
    s.p = p;
    s.validate();
    return s;
}

void StepsizeSchedule::validate() const {
    switch (kind) {
        case Kind::class1:
        case Kind::class2:
            if (!(A > 0.0)) throw std::invalid_argument("stepsize: A must be positive");
            break;
        case Kind::power:
            if (!(c > 0.0)) throw std::invalid_argument("stepsize: c must be positive");
            if (!(p > 0.5 && p <= 1.0)) throw std::invalid_argument("stepsize: p must lie in (0.5, 1]");
            break;
    }
}

double StepsizeSchedule::operator()(std::size_t n) const {
    const auto nd = static_cast<double>(n);
    switch (kind) {
        case Kind::class1:
            return n == 0 ? 1.0 / A : 1.0 / (A * nd);
        case Kind::class2: {
            const double den = A * nd * std::log(nd);
            return n <= 1 ? 1.0 / A : 1.0 / den;
        }
        case Kind::power:
            return n == 0 ? c : c / std::pow(nd, p);
    }
    return 0.0;
}

std::string StepsizeSchedule::name() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::class1: os << "class1(A=" << A << ")"; break;
        case Kind::class2: os << "class2(A=" << A << ")"; break;
        case Kind::power: os << "power(c=" << c << ", p=" << p << ")"; break;
    }
    return os.str();
}

nlohmann::json StepsizeSchedule::to_json() const {
    switch (kind) {
        case Kind::class1: return {{"kind", "class1"}, {"A", A}};
        case Kind::class2: return {{"kind", "class2"}, {"A", A}};
        case Kind::power: return {{"kind", "power"}, {"c", c}, {"p", p}};
    }
    return {};
}

StepsizeSchedule StepsizeSchedule::from_json(const nlohmann::json& j) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "class1") return class1(j.at("A").get<double>());
    if (k == "class2") return class2(j.at("A").get<double>());
    if (k == "power") return power(j.value("c", 1.0), j.value("p", 1.0));
    throw std::invalid_argument("unknown stepsize kind " + k);
}

UpdateSchedule UpdateSchedule::synchronous(std::size_t d) {
    if (d == 0) throw std::invalid_argument("update schedule: dimension must be positive");
    UpdateSchedule u;
    u.kind_ = Kind::synchronous;
    u.d_ = d;
    return u;
}

UpdateSchedule UpdateSchedule::iid_subset(std::vector<double> inclusion) {
    if (inclusion.empty()) throw std::invalid_argument("update schedule: empty inclusion vector");
    for (double p : inclusion)
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("update schedule: inclusion probabilities must lie in (0,1]");
    UpdateSchedule u;
    u.kind_ = Kind::iid_subset;
    u.d_ = inclusion.size();
    u.inclusion_ = std::move(inclusion);
    return u;
}

UpdateSchedule UpdateSchedule::markov_chain(Eigen::MatrixXd transition, std::size_t start) {
    const auto d = transition.rows();
    if (d == 0 || transition.cols() != d) throw std::invalid_argument("update schedule: transition matrix must be square");
    if (start >= static_cast<std::size_t>(d)) throw std::invalid_argument("update schedule: start out of range");
    UpdateSchedule u;
    u.kind_ = Kind::markov_chain;
    u.d_ = static_cast<std::size_t>(d);
    u.cumulative_.resize(u.d_);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (transition.row(i).minCoeff() < 0.0 || std::abs(transition.row(i).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("update schedule: transition rows must be distributions");
        double acc = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            acc += transition(i, j);
            u.cumulative_[static_cast<std::size_t>(i)].push_back(acc);
        }
    }
    u.transition_ = std::move(transition);
    u.position_ = start;
    const Eigen::VectorXd freq = u.limiting_frequencies();
    if (!(freq.minCoeff() > 0.0))
        throw std::invalid_argument("update schedule: chain does not visit every component");
    return u;
}

UpdateSchedule UpdateSchedule::round_robin(std::size_t d) {
    if (d == 0) throw std::invalid_argument("update schedule: dimension must be positive");
    UpdateSchedule u;
    u.kind_ = Kind::round_robin;
    u.d_ = d;
    u.position_ = d - 1;
    return u;
}

void UpdateSchedule::next(Xoshiro256& rng, std::vector<std::size_t>& out) {
    out.clear();
    switch (kind_) {
        case Kind::synchronous:
            for (std::size_t i = 0; i < d_; ++i) out.push_back(i);
            return;
        case Kind::iid_subset:
            while (out.empty())
                for (std::size_t i = 0; i < d_; ++i)
                    if (rng.uniform() < inclusion_[i]) out.push_back(i);
            return;
        case Kind::markov_chain: {
            const auto& cdf = cumulative_[position_];
            const double u = rng.uniform();
            std::size_t j = 0;
            while (j + 1 < d_ && !(u < cdf[j])) ++j;
            // Skip zero-mass tail entries that rounding could land on.
            while (j > 0 && transition_(static_cast<Eigen::Index>(position_), static_cast<Eigen::Index>(j)) == 0.0) --j;
            position_ = j;
            out.push_back(position_);
            return;
        }
        case Kind::round_robin:
            position_ = (position_ + 1) % d_;
            out.push_back(position_);
            return;
    }
}

std::vector<std::size_t> UpdateSchedule::next(Xoshiro256& rng) {
    std::vector<std::size_t> out;
    next(rng, out);
    return out;
}

Eigen::VectorXd UpdateSchedule::limiting_frequencies() const {
    const auto d = static_cast<Eigen::Index>(d_);
    switch (kind_) {
        case Kind::synchronous:
            return Eigen::VectorXd::Ones(d);
        case Kind::round_robin:
            return Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d_));
        case Kind::iid_subset: {
            double none = 1.0;
            for (double p : inclusion_) none *= 1.0 - p;
            Eigen::VectorXd f(d);
            for (Eigen::Index i = 0; i < d; ++i) f(i) = inclusion_[static_cast<std::size_t>(i)] / (1.0 - none);
            return f;
        }
        case Kind::markov_chain: {
            Eigen::MatrixXd sys = transition_.transpose() - Eigen::MatrixXd::Identity(d, d);
            sys.row(d - 1).setOnes();
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
            rhs(d - 1) = 1.0;
            return sys.fullPivLu().solve(rhs);
        }
    }
    return {};
}

std::string UpdateSchedule::name() const {
    switch (kind_) {
        case Kind::synchronous: return "synchronous";
        case Kind::iid_subset: return "iid_subset";
        case Kind::markov_chain: return "markov_chain";
        case Kind::round_robin: return "round_robin";
    }
    return "?";
}

nlohmann::json UpdateSchedule::to_json() const {
    nlohmann::json j = {{"kind", name()}};
    if (kind_ == Kind::iid_subset) j["inclusion"] = inclusion_;
    if (kind_ == Kind::markov_chain) {
        std::vector<std::vector<double>> rows(d_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t k = 0; k < d_; ++k)
                rows[i].push_back(transition_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
        j["transition"] = rows;
    }
    return j;
}

UpdateSchedule UpdateSchedule::from_json(const nlohmann::json& j, std::size_t d) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "synchronous") return synchronous(d);
    if (k == "round_robin") return round_robin(d);
    if (k == "iid_subset") {
        if (j.contains("inclusion")) {
            auto v = j.at("inclusion").get<std::vector<double>>();
            if (v.size() != d) throw std::invalid_argument("iid_subset: inclusion vector has wrong length");
            return iid_subset(std::move(v));
        }
        return iid_subset(std::vector<double>(d, j.value("prob", 0.5)));
    }
    if (k == "markov_chain") {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        if (j.contains("transition")) {
            const auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
            if (rows.size() != d) throw std::invalid_argument("markov_chain: transition has wrong size");
            for (std::size_t i = 0; i < d; ++i) {
                if (rows[i].size() != d) throw std::invalid_argument("markov_chain: transition has wrong size");
                for (std::size_t c = 0; c < d; ++c)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
            }
        } else {
            // Lazy uniform walk: stay with probability `stay`, else jump uniformly.
            const double stay = j.value("stay", 0.0);
            m.setConstant((1.0 - stay) / static_cast<double>(d));
            m.diagonal().array() += stay;
        }
        return markov_chain(std::move(m), j.value("start", std::size_t{0}));
    }
    throw std::invalid_argument("unknown update schedule " + k);
}

double BiasedNoise::delta_at(std::size_t n, double alpha_sum) const {
    switch (delta) {
        case Delta::none: return 0.0;
        case Delta::power: return c * std::pow(static_cast<double>(n) + 1.0, -kappa);
        case Delta::exp_time: return c * std::exp(-mu * alpha_sum);
    }
    return 0.0;
}

NoiseModel NoiseModel::mds_bounded(double scale) {
    NoiseModel m;
    m.centered.kind = CenteredNoise::Kind::mds_bounded;
    m.centered.scale = scale;
    return m;
}

NoiseModel NoiseModel::mds_state_scaled(double K) {
    NoiseModel m;
    m.centered.kind = CenteredNoise::Kind::mds_state_scaled;
    m.centered.K = K;
    return m;
}

nlohmann::json NoiseModel::to_json() const {
    nlohmann::json j;
    switch (centered.kind) {
        case CenteredNoise::Kind::none: j["centered"] = {{"kind", "none"}}; break;
        case CenteredNoise::Kind::mds_bounded: j["centered"] = {{"kind", "mds_bounded"}, {"scale", centered.scale}}; break;
        case CenteredNoise::Kind::mds_state_scaled: j["centered"] = {{"kind", "mds_state_scaled"}, {"K", centered.K}}; break;
        case CenteredNoise::Kind::iid_fn: {
            std::vector<std::vector<double>> rows(static_cast<std::size_t>(centered.G.rows()));
            for (Eigen::Index i = 0; i < centered.G.rows(); ++i)
                for (Eigen::Index k = 0; k < centered.G.cols(); ++k) rows[static_cast<std::size_t>(i)].push_back(centered.G(i, k));
            j["centered"] = {{"kind", "iid_fn"},
                             {"G", rows},
                             {"g", std::vector<double>(centered.g.data(), centered.g.data() + centered.g.size())},
                             {"zeta", centered.zeta == CenteredNoise::Zeta::rademacher ? "rademacher" : "uniform"}};
            break;
        }
    }
    nlohmann::json b;
    switch (biased.delta) {
        case BiasedNoise::Delta::none: b = {{"delta", "none"}}; break;
        case BiasedNoise::Delta::power: b = {{"delta", "power"}, {"c", biased.c}, {"kappa", biased.kappa}}; break;
        case BiasedNoise::Delta::exp_time: b = {{"delta", "exp_time"}, {"c", biased.c}, {"mu", biased.mu}}; break;
    }
    const char* dir = biased.direction == BiasedNoise::Direction::constant      ? "constant"
                      : biased.direction == BiasedNoise::Direction::alternating ? "alternating"
                                                                                : "random_sign";
    b["direction"] = dir;
    j["biased"] = b;
    return j;
}

NoiseModel NoiseModel::from_json(const nlohmann::json& j, std::size_t d) {
    NoiseModel m;
    if (j.contains("centered")) {
        const auto& c = j.at("centered");
        const std::string k = c.at("kind").get<std::string>();
        if (k == "none") {
        } else if (k == "mds_bounded") {
            m.centered.kind = CenteredNoise::Kind::mds_bounded;
            m.centered.scale = c.at("scale").get<double>();
        } else if (k == "mds_state_scaled") {
            m.centered.kind = CenteredNoise::Kind::mds_state_scaled;
            m.centered.K = c.at("K").get<double>();
        } else if (k == "iid_fn") {
            m.centered.kind = CenteredNoise::Kind::iid_fn;
            const auto dd = static_cast<Eigen::Index>(d);
            m.centered.G = Eigen::MatrixXd::Zero(dd, dd);
            m.centered.g = Eigen::VectorXd::Zero(dd);
            if (c.contains("G")) {
                const auto rows = c.at("G").get<std::vector<std::vector<double>>>();
                if (rows.size() != d) throw std::invalid_argument("iid_fn: G has wrong size");
                for (std::size_t i = 0; i < d; ++i) {
                    if (rows[i].size() != d) throw std::invalid_argument("iid_fn: G has wrong size");
                    for (std::size_t q = 0; q < d; ++q)
                        m.centered.G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = rows[i][q];
                }
            }
            if (c.contains("g")) {
                const auto v = c.at("g").get<std::vector<double>>();
                if (v.size() != d) throw std::invalid_argument("iid_fn: g has wrong length");
                m.centered.g = Eigen::Map<const Eigen::VectorXd>(v.data(), dd);
            }
            m.centered.zeta = c.value("zeta", std::string("rademacher")) == "uniform" ? CenteredNoise::Zeta::uniform
                                                                                     : CenteredNoise::Zeta::rademacher;
        } else {
            throw std::invalid_argument("unknown centered noise kind " + k);
        }
    }
    if (j.contains("biased")) {
        const auto& b = j.at("biased");
        const std::string k = b.value("delta", std::string("none"));
        if (k == "power") {
            m.biased.delta = BiasedNoise::Delta::power;
            m.biased.kappa = b.value("kappa", 1.0);
        } else if (k == "exp_time") {
            m.biased.delta = BiasedNoise::Delta::exp_time;
            m.biased.mu = b.value("mu", 1.0);
        } else if (k != "none") {
            throw std::invalid_argument("unknown bias schedule " + k);
        }
        m.biased.c = b.value("c", 0.0);
        const std::string dir = b.value("direction", std::string("constant"));
        if (dir == "constant") m.biased.direction = BiasedNoise::Direction::constant;
        else if (dir == "alternating") m.biased.direction = BiasedNoise::Direction::alternating;
        else if (dir == "random_sign") m.biased.direction = BiasedNoise::Direction::random_sign;
        else throw std::invalid_argument("unknown bias direction " + dir);
    }
    return m;
}

DivergenceError::DivergenceError(std::size_t step, double norm)
    : std::runtime_error("iterate diverged at step " + std::to_string(step) + ": sup-norm " + std::to_string(norm)),
      step_(step),
      norm_(norm) {}

Eigen::Map<const Eigen::VectorXd> RunTrace::snapshot(std::size_t k) const {
    return {x.data() + k * dim, static_cast<Eigen::Index>(dim)};
}

Eigen::VectorXd RunTrace::final_x() const { return snapshot(snapshots() - 1); }

void RunTrace::write_csv(const std::string& path, const std::string& header_comment) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "n,ode_time,alpha_sum";
    for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
    out << ",set_size";
    for (const auto& name : aux_names) out << "," << name;
    out << "\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    for (std::size_t k = 0; k < snapshots(); ++k) {
        out << n[k];
        put(ode_time[k]);
        put(alpha_sum[k]);
        for (std::size_t i = 0; i < dim; ++i) put(x[k * dim + i]);
        out << ',' << last_set_size[k];
        for (std::size_t j = 0; j < aux_dim; ++j) put(aux[k * aux_dim + j]);
        out << "\n";
    }
}

RunTrace run_sa(const SaConfig& cfg) {
    const std::size_t d = cfg.dim;
    if (d == 0) throw std::invalid_argument("run_sa: dimension must be positive");
    if (!cfg.drift) throw std::invalid_argument("run_sa: drift is required");
    if (!cfg.upd || cfg.upd->dim() != d) throw std::invalid_argument("run_sa: update schedule dimension mismatch");
    if (static_cast<std::size_t>(cfg.x0.size()) != d || !cfg.x0.allFinite())
        throw std::invalid_argument("run_sa: x0 must be finite with the right dimension");
    if (cfg.n_steps == 0) throw std::invalid_argument("run_sa: n_steps must be positive");
    if (cfg.thinning == 0) throw std::invalid_argument("run_sa: thinning must be positive");
    cfg.step.validate();

    const auto& cn = cfg.noise.centered;
    if (cn.kind == CenteredNoise::Kind::iid_fn &&
        (cn.G.rows() != static_cast<Eigen::Index>(d) || cn.G.cols() != static_cast<Eigen::Index>(d) ||
         cn.g.size() != static_cast<Eigen::Index>(d)))
        throw std::invalid_argument("run_sa: iid_fn noise has wrong shape");

    UpdateSchedule upd = *cfg.upd;
    Xoshiro256 sched_rng = substream(cfg.seed, StreamPurpose::schedule);
    std::vector<Xoshiro256> noise_rng;
    std::vector<Xoshiro256> sign_rng;
    for (std::size_t i = 0; i < d; ++i) {
        noise_rng.push_back(substream(cfg.seed, StreamPurpose::noise, i));
        if (cfg.noise.biased.direction == BiasedNoise::Direction::random_sign)
            sign_rng.push_back(substream(cfg.seed, StreamPurpose::bias_sign, i));
    }

    RunTrace tr;
    tr.dim = d;
    tr.thinning = cfg.thinning;
    tr.n_steps = cfg.n_steps;
    tr.step = cfg.step;
    tr.has_updates = cfg.record_updates;
    tr.metadata = {{"seed", cfg.seed},
                   {"dim", d},
                   {"n_steps", cfg.n_steps},
                   {"thinning", cfg.thinning},
                   {"stepsize", cfg.step.to_json()},
                   {"update_schedule", upd.to_json()},
                   {"noise", cfg.noise.to_json()}};

    Eigen::VectorXd x = cfg.x0;
    Eigen::VectorXd next_vals(static_cast<Eigen::Index>(d));
    std::vector<std::uint64_t> nu(d, 0);
    double ode = 0.0;
    double base_sum = 0.0;
    std::size_t last_size = 0;

    auto snap = [&](std::size_t n) {
        tr.n.push_back(n);
        tr.x.insert(tr.x.end(), x.data(), x.data() + d);
        tr.ode_time.push_back(ode);
        tr.alpha_sum.push_back(base_sum);
        tr.nu.insert(tr.nu.end(), nu.begin(), nu.end());
        tr.last_set_size.push_back(last_size);
    };
    snap(0);
    if (cfg.record_updates) {
        tr.set_offsets.reserve(cfg.n_steps + 1);
        tr.set_offsets.push_back(0);
        tr.step_alpha_sum.reserve(cfg.n_steps);
    }

    std::vector<std::size_t> Y;
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
        upd.next(sched_rng, Y);
        const Eigen::VectorXd h = cfg.drift(x);
        const double xnorm = x.cwiseAbs().maxCoeff();
        const double alpha_n = cfg.step(n);
        const double delta = cfg.noise.biased.delta_at(n, base_sum + alpha_n);
        double agg = 0.0;
        for (std::size_t idx = 0; idx < Y.size(); ++idx) {
            const std::size_t i = Y[idx];
            const auto ii = static_cast<Eigen::Index>(i);
            const double a = cfg.step(static_cast<std::size_t>(nu[i]));
            double m = 0.0;
            switch (cn.kind) {
                case CenteredNoise::Kind::none:
                    break;
                case CenteredNoise::Kind::mds_bounded:
                    m = cn.scale * noise_rng[i].symmetric();
                    break;
                case CenteredNoise::Kind::mds_state_scaled:
                    m = std::sqrt(3.0 * cn.K) * (1.0 + xnorm) * noise_rng[i].symmetric();
                    break;
                case CenteredNoise::Kind::iid_fn: {
                    const double zeta = cn.zeta == CenteredNoise::Zeta::rademacher ? noise_rng[i].rademacher()
                                                                                  : noise_rng[i].symmetric();
                    m = (cn.G.row(ii).dot(x) + cn.g(ii)) * zeta;
                    break;
                }
            }
            double e = 0.0;
            if (delta > 0.0) {
                double dir = 1.0;
                switch (cfg.noise.biased.direction) {
                    case BiasedNoise::Direction::constant: break;
                    case BiasedNoise::Direction::alternating: dir = (n % 2 == 0) ? 1.0 : -1.0; break;
                    case BiasedNoise::Direction::random_sign: dir = sign_rng[i].rademacher(); break;
                }
                e = delta * (1.0 + xnorm) * dir;
                if (cfg.check_noise_contract && std::abs(e) > delta * (1.0 + xnorm) * (1.0 + 1e-12))
                    throw std::logic_error("biased noise exceeded its bound");
            }
            next_vals(static_cast<Eigen::Index>(idx)) = x(ii) + a * (h(ii) + m + e);
            agg += a;
            if (cfg.record_updates) {
                tr.set_members.push_back(i);
                tr.set_alphas.push_back(a);
            }
        }
        for (std::size_t idx = 0; idx < Y.size(); ++idx) {
            x(static_cast<Eigen::Index>(Y[idx])) = next_vals(static_cast<Eigen::Index>(idx));
            ++nu[Y[idx]];
        }
        ode += agg;
        base_sum += alpha_n;
        last_size = Y.size();
        if (cfg.record_updates) {
            tr.set_offsets.push_back(tr.set_members.size());
            tr.step_alpha_sum.push_back(agg);
        }
        const double norm = x.cwiseAbs().maxCoeff();
        if (!(norm <= cfg.divergence_guard)) throw DivergenceError(n + 1, norm);
        if ((n + 1) % cfg.thinning == 0 || n + 1 == cfg.n_steps) snap(n + 1);
    }
    return tr;
}

Interpolated interpolate(const RunTrace& trace, double t) {
    if (trace.snapshots() == 0) throw std::invalid_argument("interpolate: empty trace");
    const auto& times = trace.ode_time;
    if (!(t >= times.front() && t <= times.back())) throw std::out_of_range("interpolate: time outside the trace");
    Interpolated out;
    out.exact = trace.thinning == 1;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.end()) {
        out.x = trace.snapshot(trace.snapshots() - 1);
        return out;
    }
    const auto k1 = static_cast<std::size_t>(it - times.begin());
    const std::size_t k0 = k1 - 1;
    const double w = (t - times[k0]) / (times[k1] - times[k0]);
    out.x = (1.0 - w) * trace.snapshot(k0) + w * trace.snapshot(k1);
    return out;
}

std::optional<double> loglog_envelope_slope(const std::vector<double>& n, const std::vector<double>& value, double n_lo,
                                            double n_hi) {
    std::vector<double> lx, ly;
    for (double lo = std::exp2(std::ceil(std::log2(std::max(n_lo, 1.0)))); 2.0 * lo <= n_hi * (1 + 1e-12); lo *= 2.0) {
        double peak = 0.0;
        for (std::size_t k = 0; k < n.size(); ++k)
            if (n[k] >= lo && n[k] < 2.0 * lo) peak = std::max(peak, std::abs(value[k]));
        if (peak > 0.0) {
            lx.push_back(std::log(lo));
            ly.push_back(std::log(peak));
        }
    }
    if (lx.size() < 3) return std::nullopt;
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    return sxy / sxx;
}

AsynchronyReport asynchrony_diagnostics(const RunTrace& trace, std::optional<Eigen::VectorXd> limit_frequencies) {
    if (trace.n_steps < 1000) throw std::invalid_argument("asynchrony_diagnostics: need at least 1000 steps");
    const std::size_t d = trace.dim;
    const std::size_t last = trace.snapshots() - 1;
    const auto N = static_cast<double>(trace.n_steps);
    AsynchronyReport rep;
    rep.relative_frequencies.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
        rep.relative_frequencies(static_cast<Eigen::Index>(i)) = static_cast<double>(trace.nu_at(last, i)) / N;

    rep.delta_proxy = 1.0;
    for (std::size_t k = 0; k < trace.snapshots(); ++k) {
        if (static_cast<double>(trace.n[k]) < 0.5 * N) continue;
        for (std::size_t i = 0; i < d; ++i)
            rep.delta_proxy = std::min(rep.delta_proxy, static_cast<double>(trace.nu_at(k, i)) / static_cast<double>(trace.n[k]));
    }

    const bool given = limit_frequencies.has_value();
    const Eigen::VectorXd p = given ? *limit_frequencies : rep.relative_frequencies;
    const double n_hi = given ? N : 0.1 * N;
    std::vector<double> ns, dev;
    bool any_nonzero = false;
    for (std::size_t k = 0; k < trace.snapshots(); ++k) {
        const auto nk = static_cast<double>(trace.n[k]);
        if (nk < 1.0) continue;
        double worst = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            worst = std::max(worst, std::abs(static_cast<double>(trace.nu_at(k, i)) / nk - p(static_cast<Eigen::Index>(i))));
        ns.push_back(nk);
        dev.push_back(worst);
        if (nk >= 64.0 && nk <= n_hi && worst > 1e-15) any_nonzero = true;
    }
    if (!any_nonzero) {
        rep.gamma_exact = true;
    } else if (auto slope = loglog_envelope_slope(ns, dev, 64.0, n_hi)) {
        rep.gamma_hat = -*slope;
    }

    const auto& alpha = trace.step;
    for (std::size_t n = 1; n <= trace.n_steps; ++n)
        rep.stepsize_ratio_sup = std::max(rep.stepsize_ratio_sup, alpha(n / 2) / alpha(n));

    std::vector<double> prefix(trace.n_steps + 1, 0.0);
    for (std::size_t k = 0; k < trace.n_steps; ++k) {
        const double a = alpha(k);
        prefix[k + 1] = prefix[k] + a;
        rep.alpha_sq_sum += a * a;
        if (k >= trace.n_steps / 2) {
            rep.alpha_sum_tail_increment += a;
            rep.alpha_sq_sum_tail_increment += a * a;
        }
    }
    rep.alpha_sum = prefix.back();

    rep.ratio_trajectories.assign(d > 1 ? d - 1 : 0, {});
    for (std::size_t k = 0; k < trace.snapshots(); ++k) {
        const auto base = trace.nu_at(k, 0);
        if (base == 0) continue;
        rep.ratio_steps.push_back(trace.n[k]);
        for (std::size_t i = 1; i < d; ++i)
            rep.ratio_trajectories[i - 1].push_back(prefix[trace.nu_at(k, i)] / prefix[base]);
    }
    return rep;
}

}  // namespace rviq
