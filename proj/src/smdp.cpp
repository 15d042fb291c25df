#include "rviq/smdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rviq {

namespace {

std::string pair_label(std::size_t s, std::size_t a) {
    std::ostringstream os;
    os << "(" << s << "," << a << ")";
    return os.str();
}

}  // namespace

SmdpModel::SmdpModel(std::size_t n_states, std::size_t n_actions,
                     std::vector<std::vector<OutcomeList>> outcomes)
    : n_states_(n_states), n_actions_(n_actions), outcomes_(std::move(outcomes)) {
    if (n_states_ == 0 || n_actions_ == 0)
        throw std::invalid_argument("SmdpModel: n_states and n_actions must be positive");
    if (outcomes_.size() != n_states_)
        throw std::invalid_argument("SmdpModel: outcome table has wrong number of states");
    for (std::size_t s = 0; s < n_states_; ++s) {
        if (outcomes_[s].size() != n_actions_)
            throw std::invalid_argument("SmdpModel: outcome table has wrong number of actions at state " +
                                        std::to_string(s));
        for (std::size_t a = 0; a < n_actions_; ++a) {
            if (outcomes_[s][a].empty())
                throw std::invalid_argument("SmdpModel: empty outcome list at " + pair_label(s, a));
            for (const auto& o : outcomes_[s][a])
                if (o.next_state >= n_states_)
                    throw std::invalid_argument("SmdpModel: next state out of range at " + pair_label(s, a));
        }
    }
}

ValidationReport validate_model(const SmdpModel& model) {
    ValidationReport report;
    for (std::size_t s = 0; s < model.n_states(); ++s) {
        for (std::size_t a = 0; a < model.n_actions(); ++a) {
            const auto& list = model.outcomes(s, a);
            const std::string at = pair_label(s, a);
            double total = 0.0;
            bool negative = false;
            bool positive_tau = false;
            bool finite = true;
            for (const auto& o : list) {
                if (o.prob < 0.0) negative = true;
                total += o.prob;
                if (!std::isfinite(o.tau) || !std::isfinite(o.reward) || !std::isfinite(o.prob)) finite = false;
                if (o.tau < 0.0) report.violations.push_back("negative holding time at " + at);
                if (o.tau > 0.0 && o.prob > 0.0) positive_tau = true;
            }
            if (negative) report.violations.push_back("negative probability at " + at);
            if (std::abs(total - 1.0) > 1e-12) {
                std::ostringstream os;
                os << "probabilities sum to " << total << " at " << at;
                report.violations.push_back(os.str());
            }
            if (!positive_tau) report.violations.push_back("holding time a.s. zero at " + at);
            if (!finite) report.violations.push_back("non-finite value at " + at);
        }
    }
    return report;
}

ExpectedQuantities expected_quantities(const SmdpModel& model) {
    ExpectedQuantities eq;
    eq.n_states = model.n_states();
    eq.n_actions = model.n_actions();
    const std::size_t m = model.n_pairs();
    eq.r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    eq.t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    eq.p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(model.n_states()));
    for (std::size_t s = 0; s < model.n_states(); ++s) {
        for (std::size_t a = 0; a < model.n_actions(); ++a) {
            const auto k = static_cast<Eigen::Index>(model.index(s, a));
            for (const auto& o : model.outcomes(s, a)) {
                eq.r(k) += o.prob * o.reward;
                eq.t(k) += o.prob * o.tau;
                eq.p(k, static_cast<Eigen::Index>(o.next_state)) += o.prob;
            }
            if (!(eq.t(k) > 0.0))
                throw std::domain_error("expected holding time is not positive at " + pair_label(s, a));
        }
    }
    eq.t_min = eq.t.minCoeff();
    return eq;
}

CommStructure classify_communication(const SmdpModel& model) {
    const std::size_t n = model.n_states();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<bool> seen(n, false);
        for (std::size_t a = 0; a < model.n_actions(); ++a)
            for (const auto& o : model.outcomes(s, a))
                if (o.prob > 0.0 && !seen[o.next_state]) {
                    seen[o.next_state] = true;
                    adj[s].push_back(o.next_state);
                }
    }
    return classify_digraph(adj);
}

bool is_weakly_communicating_exact(const SmdpModel& model) {
    const CommStructure cs = classify_communication(model);
    if (!cs.is_weakly_communicating) return false;
    const std::size_t n = model.n_states();
    std::vector<bool> outside(n, true);
    for (auto s : cs.closed_classes.front()) outside[s] = false;
    // Peel off outside states that cannot avoid leaving the outside set.
    for (bool changed = true; changed;) {
        changed = false;
        for (auto s : cs.transient_states) {
            if (!outside[s]) continue;
            bool can_stay = false;
            for (std::size_t a = 0; a < model.n_actions() && !can_stay; ++a) {
                const auto& list = model.outcomes(s, a);
                can_stay = std::all_of(list.begin(), list.end(),
                                       [&](const Outcome& o) { return o.prob <= 0.0 || outside[o.next_state]; });
            }
            if (!can_stay) {
                outside[s] = false;
                changed = true;
            }
        }
    }
    return std::none_of(cs.transient_states.begin(), cs.transient_states.end(),
                        [&](std::size_t s) { return outside[s]; });
}

CommStructure classify_digraph(const std::vector<std::vector<std::size_t>>& adj) {
    const std::size_t n = adj.size();

    // Tarjan's SCC, iterative to stay safe on long chains.
    std::vector<long> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    long counter = 0;
    long n_comp = 0;
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> work{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!work.empty()) {
            auto& [v, next] = work.back();
            if (next < adj[v].size()) {
                const std::size_t w = adj[v][next++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    work.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            if (low[v] == index[v]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = n_comp;
                } while (w != v);
                ++n_comp;
            }
            const std::size_t done = v;
            work.pop_back();
            if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[done]);
        }
    }

    std::vector<bool> closed(static_cast<std::size_t>(n_comp), true);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t w : adj[s])
            if (comp[w] != comp[s]) closed[static_cast<std::size_t>(comp[s])] = false;

    CommStructure out;
    std::vector<long> class_slot(static_cast<std::size_t>(n_comp), -1);
    for (std::size_t s = 0; s < n; ++s) {
        const auto c = static_cast<std::size_t>(comp[s]);
        if (!closed[c]) {
            out.transient_states.push_back(s);
            continue;
        }
        if (class_slot[c] < 0) {
            class_slot[c] = static_cast<long>(out.closed_classes.size());
            out.closed_classes.emplace_back();
        }
        out.closed_classes[static_cast<std::size_t>(class_slot[c])].push_back(s);
    }
    out.is_weakly_communicating = out.closed_classes.size() == 1;
    return out;
}

StationaryPolicy StationaryPolicy::deterministic(const std::vector<std::size_t>& actions,
                                                 std::size_t n_actions) {
    StationaryPolicy pol;
    pol.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()),
                                      static_cast<Eigen::Index>(n_actions));
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] >= n_actions) throw std::invalid_argument("policy action out of range");
        pol.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
    }
    return pol;
}

bool StationaryPolicy::is_deterministic() const {
    for (Eigen::Index s = 0; s < probs.rows(); ++s)
        if (probs.row(s).maxCoeff() != 1.0) return false;
    return true;
}

void StationaryPolicy::check(std::size_t n_states, std::size_t n_actions) const {
    if (probs.rows() != static_cast<Eigen::Index>(n_states) || probs.cols() != static_cast<Eigen::Index>(n_actions))
        throw std::invalid_argument("policy shape does not match model");
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
        if (probs.row(s).minCoeff() < 0.0) throw std::invalid_argument("policy has negative probability");
        if (std::abs(probs.row(s).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("policy row does not sum to 1 at state " + std::to_string(s));
    }
}

Transition sample_transition(const SmdpModel& model, std::size_t s, std::size_t a, Xoshiro256& rng) {
    const auto& list = model.outcomes(s, a);
    const double u = rng.uniform();
    double cdf = 0.0;
    for (const auto& o : list) {
        cdf += o.prob;
        if (u < cdf) return {o.next_state, o.tau, o.reward};
    }
    // Rounding left u above the final cumulative sum; fall back to the last
    // outcome carrying mass.
    for (auto it = list.rbegin(); it != list.rend(); ++it)
        if (it->prob > 0.0) return {it->next_state, it->tau, it->reward};
    const auto& last = list.back();
    return {last.next_state, last.tau, last.reward};
}

SmdpModel model_from_json(const nlohmann::json& doc) {
    const auto n_states = doc.at("n_states").get<std::size_t>();
    const auto n_actions = doc.at("n_actions").get<std::size_t>();
    const auto& table = doc.at("outcomes");
    if (!table.is_array() || table.size() != n_states)
        throw std::invalid_argument("model JSON: outcomes must have n_states entries");
    std::vector<std::vector<SmdpModel::OutcomeList>> outcomes(n_states);
    for (std::size_t s = 0; s < n_states; ++s) {
        const auto& row = table[s];
        if (!row.is_array() || row.size() != n_actions)
            throw std::invalid_argument("model JSON: outcomes[" + std::to_string(s) + "] must have n_actions entries");
        outcomes[s].resize(n_actions);
        for (std::size_t a = 0; a < n_actions; ++a)
            for (const auto& o : row[a])
                outcomes[s][a].push_back({o.at("p").get<double>(), o.at("s").get<std::size_t>(),
                                          o.at("tau").get<double>(), o.at("r").get<double>()});
    }
    return SmdpModel(n_states, n_actions, std::move(outcomes));
}

nlohmann::json model_to_json(const SmdpModel& model) {
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t s = 0; s < model.n_states(); ++s) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t a = 0; a < model.n_actions(); ++a) {
            nlohmann::json list = nlohmann::json::array();
            for (const auto& o : model.outcomes(s, a))
                list.push_back({{"p", o.prob}, {"s", o.next_state}, {"tau", o.tau}, {"r", o.reward}});
            row.push_back(std::move(list));
        }
        table.push_back(std::move(row));
    }
    return {{"n_states", model.n_states()}, {"n_actions", model.n_actions()}, {"outcomes", std::move(table)}};
}

SmdpModel load_model(const std::string& path, bool allow_invalid) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path);
    nlohmann::json doc;
    in >> doc;
    SmdpModel model = model_from_json(doc);
    if (!allow_invalid) {
        const auto report = validate_model(model);
        if (!report.ok()) {
            std::string msg = "invalid model " + path + ":";
            for (const auto& v : report.violations) msg += " " + v + ";";
            throw std::invalid_argument(msg);
        }
    }
    return model;
}

void save_model(const SmdpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path);
    out << model_to_json(model).dump(2) << "\n";
}

}  // namespace rviq
