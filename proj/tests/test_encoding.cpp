#include "doctest.h"

#include <set>

#include "cocoa/encoding.hpp"
#include "cocoa/envs.hpp"
#include "cocoa/error.hpp"
#include "oracles.hpp"

using namespace cocoa;
using namespace cocoa::testing;

TEST_CASE("encoding: reward outcomes index the sorted support") {
    const TabularMDP mdp = build_delayed_bandit();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    CHECK(enc.kind() == EncodingKind::Reward);
    CHECK(enc.num_outcomes() == 2);
    CHECK(enc.encode(1, 0, 0.0) == 0);
    CHECK(enc.encode(1, 1, 1.0) == 1);
    CHECK(enc.outcome_reward(0) == 0.0);
    CHECK(enc.outcome_reward(1) == 1.0);
    CHECK_THROWS_AS(enc.encode(1, 0, 0.5), Error);
    try {
        enc.encode(1, 0, 2.0);
    } catch (const Error& e) {
        CHECK(e.code() == "encoding-unknown-triple");
    }
}

TEST_CASE("encoding: explicit reward support deduplicates and sorts") {
    const OutcomeEncoding enc = OutcomeEncoding::reward_values({3.0, -1.0, 3.0, 0.0, -1.0});
    CHECK(enc.num_outcomes() == 3);
    CHECK(enc.outcome_reward(0) == -1.0);
    CHECK(enc.outcome_reward(1) == 0.0);
    CHECK(enc.outcome_reward(2) == 3.0);
    CHECK(enc.encode(5, 1, 3.0) == 2); // state and action are irrelevant
    CHECK_THROWS_AS(OutcomeEncoding::reward_values({}), Error);
}

TEST_CASE("encoding: state outcomes are state ids without reward semantics") {
    const TabularMDP mdp = build_delayed_bandit();
    const OutcomeEncoding enc = OutcomeEncoding::state(mdp);
    CHECK(enc.kind() == EncodingKind::State);
    CHECK(enc.num_outcomes() == mdp.num_states);
    CHECK(enc.encode(2, 1, 0.0) == 2);
    CHECK_THROWS_AS(enc.outcome_reward(2), Error);
    try {
        enc.outcome_reward(0);
    } catch (const Error& e) {
        CHECK(e.code() == "encoding-reward-undefined");
    }
}

TEST_CASE("encoding: tree grouping refines the reward residue") {
    TreeConfig cfg;
    cfg.depth = 3;
    cfg.num_actions = 3;
    cfg.overlap = 1;
    cfg.num_rewards = 5;
    cfg.num_groups = 4;
    cfg.reward_seed = 2;
    const TreeEnv tree = build_tree(cfg);
    const OutcomeEncoding enc = tree.group_encoding();
    CHECK(enc.num_outcomes() == 20);

    const Policy policy = Policy::tabular(tree.mdp.num_states, cfg.num_actions, 0.0);
    Rng rng(4);
    for (int e = 0; e < 50; ++e) {
        const Trajectory traj = sample_trajectory(tree.mdp, policy, rng);
        for (const Step& st : traj.steps) {
            const int u = enc.encode(st.state, st.action, st.reward);
            CHECK(u >= 0);
            CHECK(u < 20);
            // the group refines the reward: residue part must match
            CHECK(enc.outcome_reward(u) == doctest::Approx(st.reward));
        }
    }

    // coarser grouping folds several outcomes onto each reward value
    const OutcomeEncoding coarse = tree.group_encoding(1);
    CHECK(coarse.num_outcomes() == 5);
}

TEST_CASE("encoding: table encoding maps state-action cells directly") {
    const OutcomeEncoding enc = OutcomeEncoding::table(
        2, {0, 1, 1, 0}, {{1.0, 0.0}, {0.0, 1.0}}, {0.5, -0.5}, "paired");
    CHECK(enc.kind() == EncodingKind::Table);
    CHECK(enc.num_outcomes() == 2);
    CHECK(enc.name() == "paired");
    CHECK(enc.encode(0, 0, 123.0) == 0); // reward is ignored by table lookups
    CHECK(enc.encode(0, 1, 0.0) == 1);
    CHECK(enc.encode(1, 0, 0.0) == 1);
    CHECK(enc.encode(1, 1, 0.0) == 0);
    CHECK(enc.outcome_reward(1) == -0.5);
    const std::vector<double> f = enc.outcome_features(0);
    REQUIRE(f.size() == 2);
    CHECK(f[0] == 1.0);
    CHECK_THROWS_AS(enc.encode(2, 0, 0.0), Error);
}

TEST_CASE("encoding: outcome features have a consistent dimension") {
    const TabularMDP mdp = build_delayed_bandit();
    for (const OutcomeEncoding& enc :
         {OutcomeEncoding::reward(mdp), OutcomeEncoding::state(mdp)}) {
        for (int u = 0; u < enc.num_outcomes(); ++u)
            CHECK(static_cast<int>(enc.outcome_features(u).size()) == enc.feature_dim());
    }
}

TEST_CASE("encoding: reward encodings are fully predictive on deterministic-reward trees") {
    TreeConfig cfg;
    cfg.depth = 2;
    cfg.num_actions = 3;
    const TreeEnv tree = build_tree(cfg);
    const FullyPredictiveReport rep =
        fully_predictive_report(tree.mdp, OutcomeEncoding::reward(tree.mdp));
    CHECK(rep.ok);
    CHECK(rep.collisions.empty());

    const FullyPredictiveReport grouped =
        fully_predictive_report(tree.mdp, tree.group_encoding());
    CHECK(grouped.ok);
}

TEST_CASE("encoding: aliasing across reward distributions is reported") {
    // two cells share outcome 0 but pay differently: not fully predictive
    TabularMDP mdp = build_delayed_bandit();
    const OutcomeEncoding enc = OutcomeEncoding::table(
        2, {0, 0, 0, 0, 1, 1, 1, 1}, {{1.0}, {0.0}}, {0.25, 0.0}, "aliased");
    const FullyPredictiveReport rep = fully_predictive_report(mdp, enc);
    CHECK_FALSE(rep.ok);
    CHECK_FALSE(rep.collisions.empty());
}

TEST_CASE("encoding: the predictiveness check rejects state encodings") {
    const TabularMDP mdp = build_delayed_bandit();
    CHECK_THROWS_AS(fully_predictive_report(mdp, OutcomeEncoding::state(mdp)), Error);
}
