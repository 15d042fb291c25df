#include "rviq/generators.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rviq/rng.hpp"

namespace rviq {

GeneratorSpec GeneratorSpec::random_wcom(std::size_t n_states, std::size_t n_actions, std::uint64_t seed) {
    GeneratorSpec s;
    s.n_states = n_states;
    s.n_actions = n_actions;
    s.branching = std::min<std::size_t>(2, n_states);
    s.seed = seed;
    return s;
}

void GeneratorSpec::validate() const {
    if (kind != Kind::random_wcom) return;
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("generator: need at least one state and action");
    if (branching == 0 || branching > n_states)
        throw std::invalid_argument("generator: branching must be in [1, n_states]");
    if (!(tau_law.mean_lo > 0.0) || tau_law.mean_hi < tau_law.mean_lo)
        throw std::invalid_argument("generator: tau means must satisfy 0 < lo <= hi");
    if (!(tau_law.spread >= 0.0 && tau_law.spread < 1.0))
        throw std::invalid_argument("generator: tau spread must be in [0, 1)");
    if (reward_law.mean_hi < reward_law.mean_lo || !(reward_law.spread >= 0.0))
        throw std::invalid_argument("generator: reward law needs lo <= hi and spread >= 0");
}

namespace {

const char* kind_name(GeneratorSpec::Kind k) {
    switch (k) {
        case GeneratorSpec::Kind::random_wcom: return "random_wcom";
        case GeneratorSpec::Kind::loop_canonical: return "loop_canonical";
        case GeneratorSpec::Kind::cycle_canonical: return "cycle_canonical";
        case GeneratorSpec::Kind::transient_feeder: return "transient_feeder";
    }
    return "random_wcom";
}

SmdpModel draw_candidate(const GeneratorSpec& spec, Xoshiro256& rng) {
    std::vector<std::vector<SmdpModel::OutcomeList>> out(spec.n_states,
                                                         std::vector<SmdpModel::OutcomeList>(spec.n_actions));
    std::vector<std::size_t> states(spec.n_states);
    for (std::size_t s = 0; s < spec.n_states; ++s) {
        for (std::size_t a = 0; a < spec.n_actions; ++a) {
            std::iota(states.begin(), states.end(), std::size_t{0});
            for (std::size_t k = 0; k < spec.branching; ++k)
                std::swap(states[k], states[k + rng.below(spec.n_states - k)]);
            std::vector<double> w(spec.branching);
            for (auto& x : w) x = 0.1 + rng.uniform();
            const double total = std::accumulate(w.begin(), w.end(), 0.0);

            const double m = spec.tau_law.mean_lo + (spec.tau_law.mean_hi - spec.tau_law.mean_lo) * rng.uniform();
            const double mu =
                spec.reward_law.mean_lo + (spec.reward_law.mean_hi - spec.reward_law.mean_lo) * rng.uniform();
            std::vector<double> taus{m};
            if (spec.tau_law.spread > 0.0) taus = {m * (1.0 - spec.tau_law.spread), m * (1.0 + spec.tau_law.spread)};
            std::vector<double> rewards{mu};
            if (spec.reward_law.spread > 0.0) rewards = {mu - spec.reward_law.spread, mu + spec.reward_law.spread};
            const double share = 1.0 / static_cast<double>(taus.size() * rewards.size());

            auto& list = out[s][a];
            for (std::size_t k = 0; k < spec.branching; ++k)
                for (double tau : taus)
                    for (double r : rewards) list.push_back({w[k] / total * share, states[k], tau, r});
        }
    }
    return SmdpModel(spec.n_states, spec.n_actions, std::move(out));
}

}  // namespace

nlohmann::json GeneratorSpec::to_json() const {
    nlohmann::json j{{"kind", kind_name(kind)}};
    if (kind == Kind::random_wcom) {
        j["n_states"] = n_states;
        j["n_actions"] = n_actions;
        j["branching"] = branching;
        j["tau_law"] = {{"mean_lo", tau_law.mean_lo}, {"mean_hi", tau_law.mean_hi}, {"spread", tau_law.spread}};
        j["reward_law"] = {
            {"mean_lo", reward_law.mean_lo}, {"mean_hi", reward_law.mean_hi}, {"spread", reward_law.spread}};
        j["seed"] = seed;
    }
    return j;
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    const std::string kind = j.value("kind", std::string("random_wcom"));
    if (kind == "loop_canonical") {
        s.kind = Kind::loop_canonical;
    } else if (kind == "cycle_canonical") {
        s.kind = Kind::cycle_canonical;
    } else if (kind == "transient_feeder") {
        s.kind = Kind::transient_feeder;
    } else if (kind == "random_wcom") {
        s.kind = Kind::random_wcom;
    } else {
        throw std::invalid_argument("generator: unknown kind '" + kind + "'");
    }
    s.n_states = j.value("n_states", s.n_states);
    s.n_actions = j.value("n_actions", s.n_actions);
    s.branching = j.value("branching", std::min<std::size_t>(2, s.n_states));
    s.seed = j.value("seed", s.seed);
    if (j.contains("tau_law")) {
        const auto& t = j.at("tau_law");
        s.tau_law.mean_lo = t.value("mean_lo", s.tau_law.mean_lo);
        s.tau_law.mean_hi = t.value("mean_hi", s.tau_law.mean_hi);
        s.tau_law.spread = t.value("spread", s.tau_law.spread);
    }
    if (j.contains("reward_law")) {
        const auto& r = j.at("reward_law");
        s.reward_law.mean_lo = r.value("mean_lo", s.reward_law.mean_lo);
        s.reward_law.mean_hi = r.value("mean_hi", s.reward_law.mean_hi);
        s.reward_law.spread = r.value("spread", s.reward_law.spread);
    }
    s.validate();
    return s;
}

SmdpModel generate_instance(const GeneratorSpec& spec) {
    switch (spec.kind) {
        case GeneratorSpec::Kind::loop_canonical: return loop_canonical();
        case GeneratorSpec::Kind::cycle_canonical: return cycle_canonical();
        case GeneratorSpec::Kind::transient_feeder: return transient_feeder();
        case GeneratorSpec::Kind::random_wcom: break;
    }
    spec.validate();
    Xoshiro256 rng = substream(spec.seed, StreamPurpose::generator);
    for (int attempt = 0; attempt < 100; ++attempt) {
        SmdpModel m = draw_candidate(spec, rng);
        if (validate_model(m).ok() && is_weakly_communicating_exact(m)) return m;
    }
    throw GenerationError("generator: no weakly communicating instance after 100 attempts");
}

SmdpModel loop_canonical() {
    return SmdpModel(1, 1, {{{{1.0, 0, 2.0, 3.0}}}});
}

SmdpModel cycle_canonical() {
    return SmdpModel(2, 1, {{{{1.0, 1, 1.0, 1.0}}}, {{{1.0, 0, 2.0, 3.0}}}});
}

SmdpModel transient_feeder() {
    std::vector<std::vector<SmdpModel::OutcomeList>> o(3, std::vector<SmdpModel::OutcomeList>(2));
    o[0][0] = {{0.5, 0, 1.0, 0.0}, {0.5, 1, 1.0, 0.0}};
    o[0][1] = {{1.0, 2, 2.0, 1.0}};
    o[1][0] = {{1.0, 2, 1.0, 2.0}};
    o[1][1] = {{0.5, 1, 2.0, 1.0}, {0.5, 2, 2.0, 5.0}};
    o[2][0] = {{1.0, 1, 2.0, 1.0}};
    o[2][1] = {{0.5, 1, 1.0, 0.0}, {0.5, 2, 3.0, 4.0}};
    return SmdpModel(3, 2, std::move(o));
}

GeneratorSpec reference_instance_spec() {
    return GeneratorSpec::random_wcom(3, 2, 42);
}

}  // namespace rviq
