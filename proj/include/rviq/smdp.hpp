#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rviq/rng.hpp"

namespace rviq {

struct Outcome {
    double prob = 0.0;
    std::size_t next_state = 0;
    double tau = 0.0;
    double reward = 0.0;
};

/// Finite SMDP with a discrete joint law of (next state, holding time, reward)
/// for every state-action pair. The constructor only enforces shape; semantic
/// conditions are reported by `validate_model`.
class SmdpModel {
public:
    using OutcomeList = std::vector<Outcome>;

    SmdpModel(std::size_t n_states, std::size_t n_actions,
              std::vector<std::vector<OutcomeList>> outcomes);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_pairs() const { return n_states_ * n_actions_; }
    std::size_t index(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

    const OutcomeList& outcomes(std::size_t s, std::size_t a) const { return outcomes_[s][a]; }
    const std::vector<std::vector<OutcomeList>>& all_outcomes() const { return outcomes_; }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<std::vector<OutcomeList>> outcomes_;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_model(const SmdpModel& model);

struct ExpectedQuantities {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Eigen::VectorXd r;  // expected reward per pair, row-major (s, a)
    Eigen::VectorXd t;  // expected holding time per pair
    Eigen::MatrixXd p;  // rows: pairs, columns: next states
    double t_min = 0.0;

    std::size_t n_pairs() const { return n_states * n_actions; }
    std::size_t index(std::size_t s, std::size_t a) const { return s * n_actions + a; }
};

ExpectedQuantities expected_quantities(const SmdpModel& model);

struct CommStructure {
    std::vector<std::vector<std::size_t>> closed_classes;
    std::vector<std::size_t> transient_states;
    bool is_weakly_communicating = false;
};

/// Union-digraph classification: a closed class is a strongly connected
/// component with no outgoing edge, and the model counts as weakly
/// communicating when there is exactly one.
CommStructure classify_communication(const SmdpModel& model);
/// Exact weak communication: exactly one closed class, and no nonempty set of
/// states outside it can be kept closed by some choice of actions, so every
/// outside state is transient under every policy.
bool is_weakly_communicating_exact(const SmdpModel& model);
/// Closed classes and transient vertices of an arbitrary digraph given as
/// adjacency lists.
CommStructure classify_digraph(const std::vector<std::vector<std::size_t>>& adj);

/// Deterministic or randomized stationary policy; `probs` is |S| x |A|.
struct StationaryPolicy {
    Eigen::MatrixXd probs;

    static StationaryPolicy deterministic(const std::vector<std::size_t>& actions,
                                          std::size_t n_actions);
    bool is_deterministic() const;
    void check(std::size_t n_states, std::size_t n_actions) const;
};

struct Transition {
    std::size_t next_state;
    double tau;
    double reward;
};

/// Inverse-CDF draw over the outcome list. Consumes exactly one uniform.
Transition sample_transition(const SmdpModel& model, std::size_t s, std::size_t a, Xoshiro256& rng);

SmdpModel model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const SmdpModel& model);
SmdpModel load_model(const std::string& path, bool allow_invalid = false);
void save_model(const SmdpModel& model, const std::string& path);

}  // namespace rviq
