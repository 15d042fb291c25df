#include "rviq/bias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rviq/smdp.hpp"

namespace rviq {

namespace {

double combine(const Combinator& psi, const std::vector<double>& y) {
    switch (psi.kind) {
        case Combinator::Kind::weighted_sum: {
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) acc += psi.weights[i] * y[i];
            return acc;
        }
        case Combinator::Kind::max:
            return *std::max_element(y.begin(), y.end());
        case Combinator::Kind::min:
            return *std::min_element(y.begin(), y.end());
        case Combinator::Kind::logsumexp: {
            const double top = *std::max_element(y.begin(), y.end());
            double acc = 0.0;
            for (double v : y) acc += std::exp(psi.sharpness * (v - top));
            return top + std::log(acc) / psi.sharpness;
        }
    }
    throw std::logic_error("unknown combinator");
}

double phi(double a) { return 1.0 - 0.5 * std::exp(-a); }

double max_over_actions(const Eigen::VectorXd& q, std::size_t s, std::size_t n_actions) {
    return q.segment(static_cast<Eigen::Index>(s * n_actions), static_cast<Eigen::Index>(n_actions)).maxCoeff();
}

const char* combinator_name(Combinator::Kind k) {
    switch (k) {
        case Combinator::Kind::weighted_sum: return "weighted_sum";
        case Combinator::Kind::max: return "max";
        case Combinator::Kind::min: return "min";
        case Combinator::Kind::logsumexp: return "logsumexp";
    }
    return "?";
}

}  // namespace

DiagonalCoords diagonal_coords(const Eigen::VectorXd& x) {
    return {0.5 * (x(0) - x(1)), 0.5 * (x(0) + x(1))};
}

BiasFn BiasFn::affine(double b, Eigen::VectorXd theta) {
    if (theta.size() == 0) throw std::invalid_argument("affine bias: empty theta");
    if (!(theta.sum() > 0.0)) throw std::invalid_argument("affine bias: coefficients must have positive sum");
    BiasFn f;
    f.kind_ = BiasKind::affine;
    f.dim_ = static_cast<std::size_t>(theta.size());
    f.b_ = b;
    f.theta_ = std::move(theta);
    return f;
}

BiasFn BiasFn::extremum(double b, double beta, std::vector<std::size_t> subset, bool use_max, std::size_t dim) {
    if (!(beta > 0.0)) throw std::invalid_argument("extremum bias: beta must be positive");
    if (subset.empty()) throw std::invalid_argument("extremum bias: empty subset");
    for (auto i : subset)
        if (i >= dim) throw std::invalid_argument("extremum bias: subset index out of range");
    BiasFn f;
    f.kind_ = BiasKind::extremum;
    f.dim_ = dim;
    f.b_ = b;
    f.beta_ = beta;
    f.subset_ = std::move(subset);
    f.use_max_ = use_max;
    return f;
}

BiasFn BiasFn::reference_component(std::size_t index, std::size_t dim) {
    if (index >= dim) throw std::invalid_argument("reference bias: index out of range");
    BiasFn f;
    f.kind_ = BiasKind::reference_component;
    f.dim_ = dim;
    f.index_ = index;
    return f;
}

BiasFn BiasFn::composition(Combinator psi, std::vector<BiasFn> children) {
    if (children.empty()) throw std::invalid_argument("composition bias: no children");
    const std::size_t dim = children.front().dim();
    for (const auto& c : children)
        if (c.dim() != dim) throw std::invalid_argument("composition bias: children disagree on dimension");
    if (psi.kind == Combinator::Kind::weighted_sum) {
        if (psi.weights.empty()) psi.weights.assign(children.size(), 1.0 / static_cast<double>(children.size()));
        if (psi.weights.size() != children.size())
            throw std::invalid_argument("composition bias: one weight per child required");
        for (double w : psi.weights)
            if (!(w > 0.0)) throw std::invalid_argument("composition bias: weights must be positive");
    }
    if (psi.kind == Combinator::Kind::logsumexp && !(psi.sharpness > 0.0))
        throw std::invalid_argument("composition bias: sharpness must be positive");
    BiasFn f;
    f.kind_ = BiasKind::composition;
    f.dim_ = dim;
    f.psi_ = std::move(psi);
    f.children_ = std::make_shared<const std::vector<BiasFn>>(std::move(children));
    return f;
}

BiasFn BiasFn::counterexample2d() {
    BiasFn f;
    f.kind_ = BiasKind::counterexample2d;
    f.dim_ = 2;
    return f;
}

BiasFn BiasFn::classical_reference(const ExpectedQuantities& eq, std::size_t s, std::size_t a) {
    if (s >= eq.n_states || a >= eq.n_actions) throw std::invalid_argument("classical reference: pair out of range");
    BiasFn f;
    f.kind_ = BiasKind::classical_reference;
    f.dim_ = eq.n_pairs();
    f.index_ = eq.index(s, a);
    f.n_actions_ = eq.n_actions;
    f.ref_r_ = eq.r(static_cast<Eigen::Index>(f.index_));
    f.ref_t_ = eq.t(static_cast<Eigen::Index>(f.index_));
    f.ref_p_ = eq.p.row(static_cast<Eigen::Index>(f.index_)).transpose();
    return f;
}

BiasFn BiasFn::custom(std::size_t dim, Fn fn, std::optional<double> lipschitz, std::string name) {
    if (dim == 0) throw std::invalid_argument("custom bias: dimension must be positive");
    BiasFn f;
    f.kind_ = BiasKind::custom;
    f.dim_ = dim;
    f.custom_ = std::make_shared<const Fn>(std::move(fn));
    f.custom_lipschitz_ = lipschitz;
    f.name_ = std::move(name);
    return f;
}

void BiasFn::check_dim(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_)
        throw std::invalid_argument("bias function: expected dimension " + std::to_string(dim_) + ", got " +
                                    std::to_string(x.size()));
}

double BiasFn::eval(const Eigen::VectorXd& x) const {
    check_dim(x);
    switch (kind_) {
        case BiasKind::affine:
            return b_ + theta_.dot(x);
        case BiasKind::extremum: {
            double ext = x(static_cast<Eigen::Index>(subset_.front()));
            for (auto i : subset_) {
                const double v = x(static_cast<Eigen::Index>(i));
                ext = use_max_ ? std::max(ext, v) : std::min(ext, v);
            }
            return b_ + beta_ * ext;
        }
        case BiasKind::reference_component:
            return x(static_cast<Eigen::Index>(index_));
        case BiasKind::composition: {
            std::vector<double> y;
            y.reserve(children_->size());
            for (const auto& c : *children_) y.push_back(c.eval(x));
            return combine(psi_, y);
        }
        case BiasKind::counterexample2d: {
            const auto [xa, xc] = diagonal_coords(x);
            if (xa >= 0.0 && xc >= 0.0 && xc <= 0.5 * xa) return 2.0 * xc * phi(xa);
            if (xa >= 0.0 && xc > 0.5 * xa && xc <= xa) return 2.0 * (xa - xc) * phi(xa) + (2.0 * xc - xa);
            return xc;
        }
        case BiasKind::classical_reference: {
            const std::size_t n_states = dim_ / n_actions_;
            double expect = 0.0;
            for (std::size_t s = 0; s < n_states; ++s) {
                const double ps = ref_p_(static_cast<Eigen::Index>(s));
                if (ps != 0.0) expect += ps * max_over_actions(x, s, n_actions_);
            }
            return (ref_r_ + expect - x(static_cast<Eigen::Index>(index_))) / ref_t_;
        }
        case BiasKind::custom:
            return (*custom_)(x);
    }
    throw std::logic_error("unknown bias kind");
}

bool BiasFn::has_closed_form_limit() const {
    switch (kind_) {
        case BiasKind::custom:
            return false;
        case BiasKind::composition:
            return std::all_of(children_->begin(), children_->end(),
                               [](const BiasFn& c) { return c.has_closed_form_limit(); });
        default:
            return true;
    }
}

double BiasFn::numeric_limit(const Eigen::VectorXd& x) const {
    const double c_hi = std::ldexp(1.0, 20);
    const double c_lo = std::ldexp(1.0, 19);
    const Eigen::VectorXd hi = c_hi * x;
    const Eigen::VectorXd lo = c_lo * x;
    const double v_hi = eval(hi) / c_hi;
    const double v_lo = eval(lo) / c_lo;
    if (std::abs(v_hi - v_lo) > 1e-6 * (1.0 + std::abs(v_hi))) {
        std::ostringstream os;
        os << "scaling limit did not settle: " << v_lo << " at 2^19 vs " << v_hi << " at 2^20";
        throw std::runtime_error(os.str());
    }
    return v_hi;
}

double BiasFn::eval_infty(const Eigen::VectorXd& x) const {
    check_dim(x);
    switch (kind_) {
        case BiasKind::affine:
            return theta_.dot(x);
        case BiasKind::extremum:
            return eval(x) - b_;
        case BiasKind::reference_component:
            return x(static_cast<Eigen::Index>(index_));
        case BiasKind::composition: {
            std::vector<double> y;
            y.reserve(children_->size());
            for (const auto& c : *children_) y.push_back(c.eval_infty(x));
            Combinator lim = psi_;
            if (lim.kind == Combinator::Kind::logsumexp) lim.kind = Combinator::Kind::max;
            return combine(lim, y);
        }
        case BiasKind::counterexample2d: {
            const auto [xa, xc] = diagonal_coords(x);
            if (xa >= 0.0 && xc >= 0.0 && xc <= 0.5 * xa) return 2.0 * xc;
            if (xa >= 0.0 && xc > 0.5 * xa && xc <= xa) return xa;
            return xc;
        }
        case BiasKind::classical_reference: {
            const std::size_t n_states = dim_ / n_actions_;
            double expect = 0.0;
            for (std::size_t s = 0; s < n_states; ++s) {
                const double ps = ref_p_(static_cast<Eigen::Index>(s));
                if (ps != 0.0) expect += ps * max_over_actions(x, s, n_actions_);
            }
            return (expect - x(static_cast<Eigen::Index>(index_))) / ref_t_;
        }
        case BiasKind::custom:
            return numeric_limit(x);
    }
    throw std::logic_error("unknown bias kind");
}

std::optional<double> BiasFn::lipschitz_closed_form() const {
    switch (kind_) {
        case BiasKind::affine:
            return theta_.cwiseAbs().sum();
        case BiasKind::extremum:
            return beta_;
        case BiasKind::reference_component:
            return 1.0;
        case BiasKind::composition: {
            double acc = 0.0;
            for (std::size_t i = 0; i < children_->size(); ++i) {
                const auto li = (*children_)[i].lipschitz_closed_form();
                if (!li) return std::nullopt;
                if (psi_.kind == Combinator::Kind::weighted_sum)
                    acc += psi_.weights[i] * *li;
                else
                    acc = std::max(acc, *li);
            }
            return acc;
        }
        case BiasKind::counterexample2d:
            // In the diagonal basis, |dx_a| + |dx_c| equals the sup-norm of
            // dx, so the constant is the largest partial derivative, 2 phi < 2.
            return 2.0;
        case BiasKind::classical_reference:
            return 2.0 / ref_t_;
        case BiasKind::custom:
            return custom_lipschitz_;
    }
    return std::nullopt;
}

std::optional<double> BiasFn::translation_slope() const {
    switch (kind_) {
        case BiasKind::affine:
            return theta_.sum();
        case BiasKind::extremum:
            return beta_;
        case BiasKind::reference_component:
            return 1.0;
        case BiasKind::classical_reference:
            return 0.0;
        default:
            return std::nullopt;
    }
}

BiasFn BiasFn::limit() const {
    switch (kind_) {
        case BiasKind::affine:
            return affine(0.0, theta_);
        case BiasKind::extremum:
            return extremum(0.0, beta_, subset_, use_max_, dim_);
        case BiasKind::reference_component:
            return *this;
        case BiasKind::composition: {
            std::vector<BiasFn> kids;
            for (const auto& c : *children_) kids.push_back(c.limit());
            Combinator lim = psi_;
            if (lim.kind == Combinator::Kind::logsumexp) lim.kind = Combinator::Kind::max;
            return composition(lim, std::move(kids));
        }
        case BiasKind::classical_reference: {
            BiasFn f = *this;
            f.ref_r_ = 0.0;
            return f;
        }
        default: {
            BiasFn self = *this;
            return custom(
                dim_, [self](const Eigen::VectorXd& x) { return self.eval_infty(x); }, lipschitz_closed_form(),
                describe() + "_limit");
        }
    }
}

std::string BiasFn::describe() const {
    std::ostringstream os;
    switch (kind_) {
        case BiasKind::affine:
            os << "affine(b=" << b_ << ", sum_theta=" << theta_.sum() << ")";
            break;
        case BiasKind::extremum:
            os << "extremum(" << (use_max_ ? "max" : "min") << ", b=" << b_ << ", beta=" << beta_
               << ", |subset|=" << subset_.size() << ")";
            break;
        case BiasKind::reference_component:
            os << "reference(" << index_ << ")";
            break;
        case BiasKind::composition:
            os << combinator_name(psi_.kind) << "(";
            for (std::size_t i = 0; i < children_->size(); ++i) os << (i ? ", " : "") << (*children_)[i].describe();
            os << ")";
            break;
        case BiasKind::counterexample2d:
            os << "counterexample2d";
            break;
        case BiasKind::classical_reference:
            os << "classical_reference(" << index_ << ")";
            break;
        case BiasKind::custom:
            os << name_;
            break;
    }
    return os.str();
}

std::vector<double> SistrGrid::points() const {
    if (!(step > 0.0) || !(hi > lo)) throw std::invalid_argument("SISTr grid: need step > 0 and hi > lo");
    std::vector<double> out;
    const double inv = std::round(1.0 / step);
    const bool exact = std::abs(inv * step - 1.0) < 1e-12;
    const auto k0 = static_cast<long long>(std::ceil(lo / step - 1e-9));
    const auto k1 = static_cast<long long>(std::floor(hi / step + 1e-9));
    out.reserve(static_cast<std::size_t>(k1 - k0 + 1));
    for (long long k = k0; k <= k1; ++k)
        out.push_back(exact ? static_cast<double>(k) / inv : static_cast<double>(k) * step);
    return out;
}

SistrReport check_sistr(const BiasFn& f, const std::vector<Eigen::VectorXd>& probes, const std::vector<double>& c_grid,
                        double bound) {
    SistrReport report;
    for (std::size_t k = 1; k < c_grid.size(); ++k)
        if (!(c_grid[k] > c_grid[k - 1])) throw std::invalid_argument("check_sistr: grid must be strictly increasing");
    for (const auto& x : probes) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        double prev = 0.0;
        for (std::size_t k = 0; k < c_grid.size(); ++k) {
            const Eigen::VectorXd shifted = x.array() + c_grid[k];
            const double v = f.eval(shifted);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            if (k > 0 && !(v > prev) && !report.witness) {
                report.is_monotone_on_grid = false;
                report.witness = SistrWitness{x, c_grid[k - 1], c_grid[k]};
            }
            prev = v;
        }
        if (!(lo < -bound && hi > bound)) report.surjectivity_reached = false;
    }
    return report;
}

SistrReport check_sistr(const BiasFn& f, const std::vector<Eigen::VectorXd>& probes, const SistrGrid& grid) {
    return check_sistr(f, probes, grid.points(), grid.bound);
}

LipschitzEstimate lipschitz_estimate(const BiasFn& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                     std::size_t n_pairs, Xoshiro256& rng) {
    if (n_pairs == 0) throw std::invalid_argument("lipschitz_estimate: need at least one pair");
    const auto d = static_cast<Eigen::Index>(f.dim());
    if (lower.size() != d || upper.size() != d) throw std::invalid_argument("lipschitz_estimate: box dimension");
    auto draw = [&] {
        Eigen::VectorXd x(d);
        for (Eigen::Index i = 0; i < d; ++i) x(i) = lower(i) + (upper(i) - lower(i)) * rng.uniform();
        return x;
    };
    const double width = (upper - lower).maxCoeff();
    LipschitzEstimate est;
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const Eigen::VectorXd x = draw();
        Eigen::VectorXd y;
        if (k % 2 == 0) {
            y = draw();
        } else {
            // Local pairs resolve slopes that far-apart pairs average away.
            y = x;
            const double radius = width * 1e-3;
            for (Eigen::Index i = 0; i < d; ++i) y(i) += radius * rng.symmetric();
        }
        const double dist = (x - y).cwiseAbs().maxCoeff();
        if (dist <= 0.0) continue;
        est.sampled = std::max(est.sampled, std::abs(f.eval(x) - f.eval(y)) / dist);
    }
    est.closed_form = f.lipschitz_closed_form();
    return est;
}

double translation_gap(const BiasFn& f, const Eigen::VectorXd& x, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("translation_gap: delta must be positive");
    const double fx = f.eval(x);
    auto gap = [&](double eps) {
        const Eigen::VectorXd up = x.array() + eps;
        const Eigen::VectorXd down = x.array() - eps;
        return std::min(f.eval(up) - fx, fx - f.eval(down));
    };
    double hi = 1.0;
    while (gap(hi) < delta) {
        hi *= 2.0;
        if (hi > 1e9) throw std::runtime_error("translation_gap: expansion exceeded 1e9; function is not SISTr here");
    }
    double lo = 0.0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (gap(mid) >= delta ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

BiasFn bias_from_json(const nlohmann::json& spec, std::size_t dim, const ExpectedQuantities* eq) {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "affine") {
        Eigen::VectorXd theta;
        const auto& th = spec.contains("theta") ? spec.at("theta") : nlohmann::json("uniform");
        if (th.is_string()) {
            if (th.get<std::string>() != "uniform") throw std::invalid_argument("affine theta must be a list or \"uniform\"");
            theta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), 1.0 / static_cast<double>(dim));
        } else {
            const auto v = th.get<std::vector<double>>();
            if (v.size() != dim) throw std::invalid_argument("affine theta has wrong length");
            theta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        return BiasFn::affine(spec.value("b", 0.0), theta);
    }
    if (kind == "extremum") {
        std::vector<std::size_t> subset;
        if (spec.contains("subset")) {
            subset = spec.at("subset").get<std::vector<std::size_t>>();
        } else {
            for (std::size_t i = 0; i < dim; ++i) subset.push_back(i);
        }
        const std::string mode = spec.value("mode", std::string("max"));
        if (mode != "max" && mode != "min") throw std::invalid_argument("extremum mode must be max or min");
        return BiasFn::extremum(spec.value("b", 0.0), spec.value("beta", 1.0), subset, mode == "max", dim);
    }
    if (kind == "reference") return BiasFn::reference_component(spec.value("index", std::size_t{0}), dim);
    if (kind == "counterexample2d") {
        if (dim != 2) throw std::invalid_argument("counterexample2d requires dimension 2");
        return BiasFn::counterexample2d();
    }
    if (kind == "classical_reference") {
        if (!eq) throw std::invalid_argument("classical_reference needs model quantities");
        return BiasFn::classical_reference(*eq, spec.value("s", std::size_t{0}), spec.value("a", std::size_t{0}));
    }
    if (kind == "composition") {
        const auto& p = spec.at("psi");
        Combinator psi;
        const std::string pk = p.is_string() ? p.get<std::string>() : p.at("kind").get<std::string>();
        if (pk == "weighted_sum") psi.kind = Combinator::Kind::weighted_sum;
        else if (pk == "max") psi.kind = Combinator::Kind::max;
        else if (pk == "min") psi.kind = Combinator::Kind::min;
        else if (pk == "logsumexp") psi.kind = Combinator::Kind::logsumexp;
        else throw std::invalid_argument("unknown combinator " + pk);
        if (p.is_object()) {
            if (p.contains("weights")) psi.weights = p.at("weights").get<std::vector<double>>();
            psi.sharpness = p.value("sharpness", 1.0);
        }
        std::vector<BiasFn> kids;
        for (const auto& c : spec.at("children")) kids.push_back(bias_from_json(c, dim, eq));
        return BiasFn::composition(psi, std::move(kids));
    }
    throw std::invalid_argument("unknown bias kind " + kind);
}

nlohmann::json bias_to_json(const BiasFn& f) {
    switch (f.kind()) {
        case BiasKind::affine:
            return {{"kind", "affine"},
                    {"b", f.offset()},
                    {"theta", std::vector<double>(f.theta().data(), f.theta().data() + f.theta().size())}};
        case BiasKind::extremum:
            return {{"kind", "extremum"},
                    {"b", f.offset()},
                    {"beta", f.beta()},
                    {"subset", f.subset()},
                    {"mode", f.uses_max() ? "max" : "min"}};
        case BiasKind::reference_component:
            return {{"kind", "reference"}, {"index", f.reference_index()}};
        case BiasKind::composition: {
            nlohmann::json kids = nlohmann::json::array();
            for (const auto& c : f.children()) kids.push_back(bias_to_json(c));
            nlohmann::json psi = {{"kind", combinator_name(f.combinator().kind)}};
            if (f.combinator().kind == Combinator::Kind::weighted_sum) psi["weights"] = f.combinator().weights;
            if (f.combinator().kind == Combinator::Kind::logsumexp) psi["sharpness"] = f.combinator().sharpness;
            return {{"kind", "composition"}, {"psi", psi}, {"children", kids}};
        }
        case BiasKind::counterexample2d:
            return {{"kind", "counterexample2d"}};
        case BiasKind::classical_reference:
            return {{"kind", "classical_reference"},
                    {"s", f.reference_index() / f.reference_actions()},
                    {"a", f.reference_index() % f.reference_actions()}};
        case BiasKind::custom:
            return {{"kind", "custom"}, {"name", f.describe()}};
    }
    return {};
}

std::vector<BiasFn> shipped_family(std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("shipped_family: dimension must be at least 2");
    const auto d = static_cast<Eigen::Index>(dim);
    std::vector<std::size_t> all(dim), front;
    for (std::size_t i = 0; i < dim; ++i) all[i] = i;
    for (std::size_t i = 0; i < (dim + 1) / 2; ++i) front.push_back(i);

    const BiasFn mean = BiasFn::affine(0.0, Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(dim)));
    Eigen::VectorXd signed_theta = Eigen::VectorXd::Zero(d);
    signed_theta(0) = 1.5;
    signed_theta(1) = -0.5;
    const BiasFn mixed = BiasFn::affine(0.25, signed_theta);
    const BiasFn top = BiasFn::extremum(0.5, 1.0, all, true, dim);
    const BiasFn bottom = BiasFn::extremum(-0.5, 2.0, front, false, dim);
    const BiasFn ref = BiasFn::reference_component(0, dim);

    Combinator hard_max{Combinator::Kind::max, {}, 1.0};
    Combinator hard_min{Combinator::Kind::min, {}, 1.0};
    Combinator blend{Combinator::Kind::weighted_sum, {0.5, 0.5}, 1.0};
    Combinator smooth{Combinator::Kind::logsumexp, {}, 4.0};
    return {mean,
            mixed,
            top,
            bottom,
            ref,
            BiasFn::composition(hard_max, {mean, bottom}),
            BiasFn::composition(hard_min, {mixed, top}),
            BiasFn::composition(blend, {ref, top}),
            BiasFn::composition(smooth, {mean, top, bottom})};
}

}  // namespace rviq
