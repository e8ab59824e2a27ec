#include "doctest.h"

#include <cmath>

#include "cocoa/error.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"
#include "oracles.hpp"

using namespace cocoa;
using namespace cocoa::testing;

TEST_CASE("mdp: delayed bandit fixture validates") {
    const TabularMDP mdp = build_delayed_bandit();
    CHECK_NOTHROW(validate_mdp(mdp));
    CHECK(mdp.mean_reward(1, 0) == doctest::Approx(0.5));
    CHECK(mdp.mean_reward(0, 0) == 0.0);
    const std::vector<double> support = mdp.reward_support();
    REQUIRE(support.size() == 2);
    CHECK(support[0] == 0.0);
    CHECK(support[1] == 1.0);
}

TEST_CASE("mdp: validation catches structural defects") {
    TabularMDP mdp = build_delayed_bandit();

    SUBCASE("transition row not summing to one") {
        mdp.transitions[mdp.sa(0, 0)] = {{1, 0.7}};
        CHECK_THROWS_AS(validate_mdp(mdp), Error);
        try {
            validate_mdp(mdp);
        } catch (const Error& e) {
            CHECK(e.code() == "mdp-bad-probability");
        }
    }
    SUBCASE("negative reward probability") {
        mdp.rewards[mdp.sa(1, 0)] = {{1.0, 1.5}, {0.0, -0.5}};
        CHECK_THROWS_AS(validate_mdp(mdp), Error);
    }
    SUBCASE("rewarding absorbing state") {
        mdp.rewards[mdp.sa(3, 0)] = {{1.0, 1.0}};
        try {
            validate_mdp(mdp);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == "mdp-bad-absorbing");
        }
    }
    SUBCASE("absorbing state leaking mass") {
        mdp.transitions[mdp.sa(3, 1)] = {{0, 1.0}};
        CHECK_THROWS_AS(validate_mdp(mdp), Error);
    }
    SUBCASE("horizon too short to absorb") {
        mdp.horizon = 1;
        try {
            validate_mdp(mdp);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == "mdp-not-absorbing");
        }
    }
    SUBCASE("state index out of range") {
        mdp.transitions[mdp.sa(0, 0)] = {{9, 1.0}};
        CHECK_THROWS_AS(validate_mdp(mdp), Error);
    }
}

TEST_CASE("mdp: sampled episodes follow the chain and stop at absorption") {
    const TabularMDP mdp = build_three_chain();
    const Policy policy = Policy::tabular(4, 2, 0.0);
    Rng rng(5);
    const Trajectory traj = sample_trajectory(mdp, policy, rng);
    REQUIRE(traj.steps.size() == 3);
    CHECK(traj.steps[0].state == 0);
    CHECK(traj.steps[1].state == 1);
    CHECK(traj.steps[2].state == 2);
    CHECK(traj.total_return() == 0.0);
}

TEST_CASE("mdp: sampling is reproducible per seed") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    Rng a(123), b(123), c(124);
    bool saw_difference = false;
    for (int i = 0; i < 50; ++i) {
        const Trajectory ta = sample_trajectory(mdp, policy, a);
        const Trajectory tb = sample_trajectory(mdp, policy, b);
        const Trajectory tc = sample_trajectory(mdp, policy, c);
        REQUIRE(ta.steps.size() == tb.steps.size());
        for (size_t k = 0; k < ta.steps.size(); ++k) {
            CHECK(ta.steps[k].state == tb.steps[k].state);
            CHECK(ta.steps[k].action == tb.steps[k].action);
            CHECK(ta.steps[k].reward == tb.steps[k].reward);
        }
        if (ta.steps.size() != tc.steps.size() || ta.steps[0].action != tc.steps[0].action ||
            ta.total_return() != tc.total_return())
            saw_difference = true;
    }
    CHECK(saw_difference);
}

TEST_CASE("mdp: empirical action frequencies match the policy") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    Rng rng(7);
    int arm0 = 0, paid = 0;
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
        const Trajectory traj = sample_trajectory(mdp, policy, rng);
        REQUIRE(traj.steps.size() == 2);
        if (traj.steps[0].action == 0) {
            ++arm0;
            if (traj.steps[1].reward == 1.0) ++paid;
        }
    }
    CHECK(std::fabs(arm0 / static_cast<double>(n) - 2.0 / 3.0) < 0.01);
    CHECK(std::fabs(paid / static_cast<double>(arm0) - 0.5) < 0.02);
}

TEST_CASE("mdp: trajectory enumeration sums to probability one") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const std::vector<WeightedTrajectory> all = enumerate_trajectories(mdp, policy);
    double total = 0.0;
    for (const WeightedTrajectory& wt : all) total += wt.prob;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    double value = 0.0;
    for (const WeightedTrajectory& wt : all) value += wt.prob * wt.traj.total_return();
    CHECK(value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}
