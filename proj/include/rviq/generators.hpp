#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "rviq/smdp.hpp"

namespace rviq {

/// Holding times take the values m(1 - spread) and m(1 + spread) with equal
/// probability, where the mean m is drawn per pair from [mean_lo, mean_hi].
struct TauLaw {
    double mean_lo = 1.0;
    double mean_hi = 3.0;
    double spread = 0.5;  // in [0, 1)
};

/// Rewards take the values mu - spread and mu + spread with equal
/// probability, where mu is drawn per pair from [mean_lo, mean_hi].
struct RewardLaw {
    double mean_lo = 0.0;
    double mean_hi = 4.0;
    double spread = 1.0;  // >= 0
};

struct GeneratorSpec {
    enum class Kind { random_wcom, loop_canonical, cycle_canonical, transient_feeder };
    Kind kind = Kind::random_wcom;
    std::size_t n_states = 3;
    std::size_t n_actions = 2;
    std::size_t branching = 2;  // successors per pair
    TauLaw tau_law;
    RewardLaw reward_law;
    std::uint64_t seed = 0;

    static GeneratorSpec random_wcom(std::size_t n_states, std::size_t n_actions, std::uint64_t seed);
    void validate() const;
    nlohmann::json to_json() const;
    static GeneratorSpec from_json(const nlohmann::json& j);
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SmdpModel generate_instance(const GeneratorSpec& spec);

/// One state, one action, holding time 2, reward 3.
SmdpModel loop_canonical();
/// Two states with one action each: (tau, R) = (1, 1) from state 0 to 1 and
/// (3, 2) from state 1 to 0.
SmdpModel cycle_canonical();
/// State 0 is transient under every policy and feeds the closed class {1, 2}.
SmdpModel transient_feeder();

/// The 3-state, 2-action random instance used by the reference experiments.
GeneratorSpec reference_instance_spec();

}  // namespace rviq
