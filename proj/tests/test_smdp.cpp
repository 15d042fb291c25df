#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "rviq/generators.hpp"
#include "rviq/smdp.hpp"

using namespace rviq;

namespace {

SmdpModel single(double tau, double reward, double prob = 1.0) {
    return SmdpModel(1, 1, {{{{prob, 0, tau, reward}}}});
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_CASE("validate_model reports each violated condition") {
    CHECK(validate_model(single(2.0, 3.0)).ok());
    CHECK(contains(validate_model(single(0.0, 3.0)).violations, "holding time a.s. zero at (0,0)"));

    const SmdpModel short_mass(1, 1, {{{{0.5, 0, 1.0, 0.0}, {0.4, 0, 1.0, 0.0}}}});
    CHECK(contains(validate_model(short_mass).violations, "probabilities sum to 0.9 at (0,0)"));

    const SmdpModel negative(1, 1, {{{{1.5, 0, 1.0, 0.0}, {-0.5, 0, -1.0, 0.0}}}});
    const auto v = validate_model(negative).violations;
    CHECK(contains(v, "negative probability at (0,0)"));
    CHECK(contains(v, "negative holding time at (0,0)"));
    CHECK(contains(validate_model(single(2.0, NAN)).violations, "non-finite value at (0,0)"));
}

TEST_CASE("constructor rejects malformed shapes") {
    CHECK_THROWS_AS(SmdpModel(0, 1, {}), std::invalid_argument);
    CHECK_THROWS_AS(SmdpModel(1, 1, {{{{1.0, 3, 1.0, 0.0}}}}), std::invalid_argument);
}

TEST_CASE("expected quantities of simple laws") {
    const auto eq = expected_quantities(single(2.0, 3.0));
    CHECK(eq.r(0) == 3.0);
    CHECK(eq.t(0) == 2.0);
    CHECK(eq.p(0, 0) == 1.0);
    CHECK(eq.t_min == 2.0);

    const SmdpModel mixed(2, 1,
                          {{{{0.5, 0, 1.0, 0.0}, {0.5, 1, 3.0, 4.0}}}, {{{1.0, 0, 0.5, 1.0}}}});
    const auto e2 = expected_quantities(mixed);
    CHECK(e2.r(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(e2.t(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(e2.p(0, 0) == 0.5);
    CHECK(e2.p(0, 1) == 0.5);
    CHECK(e2.t_min == 0.5);
}

TEST_CASE("expected rewards scale linearly") {
    const SmdpModel m = generate_instance(GeneratorSpec::random_wcom(4, 2, 5));
    auto scaled = m.all_outcomes();
    for (auto& row : scaled)
        for (auto& list : row)
            for (auto& o : list) o.reward *= -2.5;
    const auto e1 = expected_quantities(m);
    const auto e2 = expected_quantities(SmdpModel(4, 2, scaled));
    CHECK((e2.r + 2.5 * e1.r).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(e2.t == e1.t);
    CHECK(e2.p == e1.p);
    for (Eigen::Index i = 0; i < e1.p.rows(); ++i) CHECK(std::abs(e1.p.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("expected_quantities rejects a pair with zero mean holding time") {
    CHECK_THROWS_AS(expected_quantities(single(0.0, 1.0)), std::domain_error);
}

TEST_CASE("communication classes") {
    const SmdpModel absorbing(2, 1, {{{{1.0, 0, 1.0, 0.0}}}, {{{1.0, 1, 1.0, 0.0}}}});
    const auto c1 = classify_communication(absorbing);
    CHECK(c1.closed_classes.size() == 2);
    CHECK_FALSE(c1.is_weakly_communicating);

    const SmdpModel cycle = cycle_canonical();
    const auto c2 = classify_communication(cycle);
    REQUIRE(c2.closed_classes.size() == 1);
    CHECK(c2.closed_classes[0] == std::vector<std::size_t>{0, 1});
    CHECK(c2.is_weakly_communicating);

    const SmdpModel feeder(3, 2,
                           {{{{1.0, 1, 1.0, 0.0}}, {{1.0, 1, 1.0, 0.0}}},
                            {{{1.0, 0, 1.0, 0.0}}, {{1.0, 0, 1.0, 0.0}}},
                            {{{1.0, 0, 1.0, 0.0}}, {{0.5, 1, 1.0, 0.0}, {0.5, 0, 1.0, 0.0}}}});
    const auto c3 = classify_communication(feeder);
    const auto rec = testing::recurrent_states(feeder);
    REQUIRE(c3.closed_classes.size() == 1);
    CHECK(c3.closed_classes[0] == std::vector<std::size_t>{0, 1});
    CHECK(c3.transient_states == std::vector<std::size_t>{2});
    CHECK(rec == std::vector<bool>{true, true, false});
    CHECK(c3.is_weakly_communicating);
}

TEST_CASE("communication classes agree with the reachability closure and are relabeling invariant") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        GeneratorSpec spec = GeneratorSpec::random_wcom(5, 2, seed);
        spec.branching = 1;
        Xoshiro256 rng(seed);
        std::vector<std::vector<SmdpModel::OutcomeList>> o(5, std::vector<SmdpModel::OutcomeList>(2));
        for (std::size_t s = 0; s < 5; ++s)
            for (std::size_t a = 0; a < 2; ++a) o[s][a] = {{1.0, rng.below(5), 1.0, 0.0}};
        const SmdpModel m(5, 2, o);
        const auto cs = classify_communication(m);
        const auto rec = testing::recurrent_states(m);
        std::vector<bool> in_class(5, false);
        for (const auto& c : cs.closed_classes)
            for (auto s : c) in_class[s] = true;
        CHECK(in_class == rec);

        const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
        std::vector<std::vector<SmdpModel::OutcomeList>> po(5, std::vector<SmdpModel::OutcomeList>(2));
        for (std::size_t s = 0; s < 5; ++s)
            for (std::size_t a = 0; a < 2; ++a) {
                auto list = o[s][a];
                for (auto& x : list) x.next_state = perm[x.next_state];
                po[perm[s]][a] = list;
            }
        const auto pcs = classify_communication(SmdpModel(5, 2, po));
        CHECK(pcs.closed_classes.size() == cs.closed_classes.size());
        CHECK(pcs.transient_states.size() == cs.transient_states.size());
        for (const auto& c : cs.closed_classes) {
            std::vector<std::size_t> mapped;
            for (auto s : c) mapped.push_back(perm[s]);
            std::sort(mapped.begin(), mapped.end());
            CHECK(std::find(pcs.closed_classes.begin(), pcs.closed_classes.end(), mapped) != pcs.closed_classes.end());
        }
    }
}

TEST_CASE("sampling by inverse CDF") {
    const SmdpModel point = single(2.0, 3.0);
    Xoshiro256 rng(1);
    for (int k = 0; k < 10; ++k) {
        const auto tr = sample_transition(point, 0, 0, rng);
        CHECK(tr.next_state == 0);
        CHECK(tr.tau == 2.0);
        CHECK(tr.reward == 3.0);
    }

    const SmdpModel two(2, 1, {{{{0.5, 0, 1.0, 0.0}, {0.5, 1, 3.0, 4.0}}}, {{{1.0, 0, 1.0, 0.0}}}});
    // Find a seed whose first uniform is below one half and check the first outcome is chosen.
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        Xoshiro256 probe(seed);
        const double u = probe.uniform();
        Xoshiro256 draw(seed);
        const auto tr = sample_transition(two, 0, 0, draw);
        CHECK(tr.next_state == (u < 0.5 ? 0u : 1u));
        CHECK(draw == probe);  // exactly one draw consumed
    }
}

TEST_CASE("Monte Carlo mean reward matches the expected reward") {
    const SmdpModel m = generate_instance(GeneratorSpec::random_wcom(3, 2, 42));
    const auto eq = expected_quantities(m);
    Xoshiro256 rng(2024);
    const int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
        const double r = sample_transition(m, 1, 1, rng).reward;
        sum += r;
        sq += r * r;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean - eq.r(eq.index(1, 1))) <= 3.0 * sd / 1000.0);
}

TEST_CASE("sampling is reproducible for identical seeds") {
    const SmdpModel m = generate_instance(GeneratorSpec::random_wcom(3, 2, 1));
    Xoshiro256 a(77), b(77);
    for (int k = 0; k < 1000; ++k) {
        const auto x = sample_transition(m, k % 3, k % 2, a);
        const auto y = sample_transition(m, k % 3, k % 2, b);
        CHECK(x.next_state == y.next_state);
        CHECK(x.tau == y.tau);
        CHECK(x.reward == y.reward);
    }
}

TEST_CASE("model JSON round trip and loader validation") {
    const SmdpModel m = generate_instance(GeneratorSpec::random_wcom(3, 2, 9));
    const auto j = model_to_json(m);
    CHECK(j.at("n_states") == 3);
    CHECK(j.at("outcomes")[0][0][0].contains("p"));
    const SmdpModel back = model_from_json(j);
    CHECK(model_to_json(back) == j);

    const auto dir = std::filesystem::temp_directory_path() / "rviq_test_smdp";
    std::filesystem::create_directories(dir);
    save_model(single(0.0, 1.0), (dir / "bad.json").string());
    CHECK_THROWS(load_model((dir / "bad.json").string()));
    CHECK_NOTHROW(load_model((dir / "bad.json").string(), true));
    std::filesystem::remove_all(dir);
}

TEST_CASE("stationary policies") {
    const auto pol = StationaryPolicy::deterministic({1, 0}, 2);
    CHECK(pol.is_deterministic());
    CHECK_NOTHROW(pol.check(2, 2));
    StationaryPolicy bad = pol;
    bad.probs(0, 0) = 0.5;
    CHECK_THROWS(bad.check(2, 2));
    CHECK_THROWS(StationaryPolicy::deterministic({2}, 2));
}
