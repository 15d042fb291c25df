#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rviq/rng.hpp"

namespace rviq {

struct ExpectedQuantities;

enum class BiasKind {
    affine,
    extremum,
    reference_component,
    composition,
    counterexample2d,
    classical_reference,
    custom,
};

/// Strictly monotone combinator applied to the children of a composition.
/// `logsumexp` is the smooth maximum (1/k) log sum exp(k y_i); larger
/// sharpness k brings it closer to the hard max, within log(m)/k.
struct Combinator {
    enum class Kind { weighted_sum, max, min, logsumexp };
    Kind kind = Kind::max;
    std::vector<double> weights;
    double sharpness = 1.0;
};

/// Rate-estimating function f: R^d -> R together with its scaling limit.
/// Value type; children of compositions are shared immutably.
class BiasFn {
public:
    using Fn = std::function<double(const Eigen::VectorXd&)>;

    static BiasFn affine(double b, Eigen::VectorXd theta);
    static BiasFn extremum(double b, double beta, std::vector<std::size_t> subset, bool use_max,
                           std::size_t dim);
    static BiasFn reference_component(std::size_t index, std::size_t dim);
    static BiasFn composition(Combinator psi, std::vector<BiasFn> children);
    static BiasFn counterexample2d();
    /// The reference-pair estimate used by the classical relative value
    /// iteration. It is invariant under scalar translation, so it is a valid
    /// choice for the deterministic solver but not for the learning algorithm.
    static BiasFn classical_reference(const ExpectedQuantities& eq, std::size_t s, std::size_t a);
    static BiasFn custom(std::size_t dim, Fn f, std::optional<double> lipschitz = std::nullopt,
                         std::string name = "custom");

    BiasKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    std::string describe() const;

    double operator()(const Eigen::VectorXd& x) const { return eval(x); }
    double eval(const Eigen::VectorXd& x) const;
    double eval_infty(const Eigen::VectorXd& x) const;
    bool has_closed_form_limit() const;
    /// Sup-norm Lipschitz constant where it is known exactly or bounded in
    /// closed form.
    std::optional<double> lipschitz_closed_form() const;
    /// Translation slope u with f(x + c) = f(x) + c u, when such u exists.
    std::optional<double> translation_slope() const;

    /// The scaling limit as a function object, for probes that need f_inf
    /// in the place of f.
    BiasFn limit() const;

    // Parameter access, meaningful for the matching kinds only.
    double offset() const { return b_; }
    const Eigen::VectorXd& theta() const { return theta_; }
    double beta() const { return beta_; }
    const std::vector<std::size_t>& subset() const { return subset_; }
    bool uses_max() const { return use_max_; }
    std::size_t reference_index() const { return index_; }
    std::size_t reference_actions() const { return n_actions_; }
    const Combinator& combinator() const { return psi_; }
    const std::vector<BiasFn>& children() const { return *children_; }

private:
    BiasFn() = default;
    void check_dim(const Eigen::VectorXd& x) const;
    double numeric_limit(const Eigen::VectorXd& x) const;

    BiasKind kind_ = BiasKind::custom;
    std::size_t dim_ = 0;
    double b_ = 0.0;
    Eigen::VectorXd theta_;
    double beta_ = 1.0;
    std::vector<std::size_t> subset_;
    bool use_max_ = true;
    std::size_t index_ = 0;
    Combinator psi_;
    std::shared_ptr<const std::vector<BiasFn>> children_;
    std::shared_ptr<const Fn> custom_;
    std::optional<double> custom_lipschitz_;
    std::string name_;
    // Classical reference data: reward, holding time, transition row.
    double ref_r_ = 0.0;
    double ref_t_ = 1.0;
    Eigen::VectorXd ref_p_;
    std::size_t n_actions_ = 1;
};

/// Decompose x into the coordinates of the basis (1,-1), (1,1).
struct DiagonalCoords {
    double along_a;
    double along_c;
};
DiagonalCoords diagonal_coords(const Eigen::VectorXd& x);

struct SistrWitness {
    Eigen::VectorXd x;
    double c1;
    double c2;
};

struct SistrReport {
    bool is_monotone_on_grid = true;
    bool surjectivity_reached = true;
    std::optional<SistrWitness> witness;
    bool ok() const { return is_monotone_on_grid && surjectivity_reached; }
};

struct SistrGrid {
    double lo = -100.0;
    double hi = 100.0;
    double step = 1e-2;
    double bound = 50.0;

    std::vector<double> points() const;
};

SistrReport check_sistr(const BiasFn& f, const std::vector<Eigen::VectorXd>& probes,
                        const std::vector<double>& c_grid, double bound);
SistrReport check_sistr(const BiasFn& f, const std::vector<Eigen::VectorXd>& probes,
                        const SistrGrid& grid = {});

struct LipschitzEstimate {
    double sampled = 0.0;
    std::optional<double> closed_form;
    /// Closed form when available, otherwise the sampled value.
    double value() const { return closed_form.value_or(sampled); }
};

LipschitzEstimate lipschitz_estimate(const BiasFn& f, const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper, std::size_t n_pairs, Xoshiro256& rng);

/// Smallest eps with min{f(x+eps) - f(x), f(x) - f(x-eps)} = delta.
double translation_gap(const BiasFn& f, const Eigen::VectorXd& x, double delta);

BiasFn bias_from_json(const nlohmann::json& spec, std::size_t dim, const ExpectedQuantities* eq = nullptr);
nlohmann::json bias_to_json(const BiasFn& f);

/// Affine, extremum and composed members shipped with the library, sized for
/// dimension d.
std::vector<BiasFn> shipped_family(std::size_t dim);

}  // namespace rviq
