#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cocoa/dp.hpp"
#include "cocoa/envs.hpp"
#include "cocoa/error.hpp"
#include "oracles.hpp"

using namespace cocoa;
using namespace cocoa::testing;

namespace {

TreeEnv small_tree() {
    TreeConfig cfg;
    cfg.depth = 2;
    cfg.num_actions = 3;
    cfg.overlap = 1;
    cfg.reward_seed = 3;
    return build_tree(cfg);
}

Policy random_policy(const TabularMDP& mdp, uint64_t seed) {
    Policy p = Policy::tabular(mdp.num_states, mdp.num_actions, 0.0);
    Rng rng(seed);
    for (double& v : p.params()) v = rng.next_double() - 0.5;
    return p;
}

// Two-state stochastic loop: each state either hops to the other or absorbs.
TabularMDP cyclic_mdp() {
    TabularMDP mdp;
    mdp.name = "loop";
    mdp.num_states = 3;
    mdp.num_actions = 1;
    mdp.start_state = 0;
    mdp.absorbing_state = 2;
    mdp.horizon = 70; // 2^-70 residual mass is inside the absorption tolerance
    mdp.transitions = {{{1, 0.5}, {2, 0.5}}, {{0, 0.5}, {2, 0.5}}, {{2, 1.0}}};
    mdp.rewards = {{{1.0, 1.0}}, {{0.0, 1.0}}, {{0.0, 1.0}}};
    mdp.state_features = {{1, 0}, {0, 1}, {0, 0}};
    return mdp;
}

} // namespace

TEST_CASE("dp: successor matrix matches exhaustive future-state mass") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 11);
    const OutcomeEncoding state_enc = OutcomeEncoding::state(tree.mdp);

    for (const double gamma : {1.0, 0.9}) {
        CAPTURE(gamma);
        const SuccessorMatrix succ = successor_matrix(tree.mdp, policy, -1, gamma);
        for (int s = 0; s < tree.mdp.num_states; ++s) {
            if (s == tree.mdp.absorbing_state) continue;
            for (int a = 0; a < tree.mdp.num_actions; ++a) {
                const std::vector<double> mass =
                    brute_future_outcome_mass(tree.mdp, policy, state_enc, s, a, gamma);
                for (int sp = 0; sp < tree.mdp.num_states; ++sp) {
                    if (sp == tree.mdp.absorbing_state) continue;
                    CHECK(succ.at(s, a, sp) == doctest::Approx(mass[sp]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("dp: contribution coefficients match the brute-force definition") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 13);

    for (const OutcomeEncoding& enc :
         {OutcomeEncoding::reward(tree.mdp), tree.group_encoding()}) {
        CAPTURE(enc.name());
        const CoefficientTable table = contribution_coefficients(tree.mdp, policy, enc);
        const BruteCoefficients brute = brute_coefficients(tree.mdp, policy, enc);
        for (int s = 0; s < tree.mdp.num_states; ++s) {
            if (s == tree.mdp.absorbing_state) continue;
            for (int u = 0; u < enc.num_outcomes(); ++u) {
                CHECK(table.is_reachable(s, u) == brute.is_reachable(s, u));
                for (int a = 0; a < tree.mdp.num_actions; ++a)
                    CHECK(table.at(s, a, u) ==
                          doctest::Approx(brute.at(s, a, u)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("dp: delayed bandit coefficients are one half and minus one") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    const CoefficientTable table = contribution_coefficients(mdp, policy, enc);

    REQUIRE(table.is_reachable(0, 1));
    CHECK(table.at(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(table.at(0, 1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    // one step down, the reward outcome is no longer in the strict future
    CHECK_FALSE(table.is_reachable(1, 1));
    CHECK(table.at(1, 0, 1) == 0.0);
}

TEST_CASE("dp: a one-step environment has no strictly-future outcomes") {
    const TabularMDP mdp = build_bandit();
    const Policy policy = bandit_reference_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    const CoefficientTable table = contribution_coefficients(mdp, policy, enc);
    for (int u = 0; u < enc.num_outcomes(); ++u) {
        CHECK_FALSE(table.is_reachable(mdp.start_state, u));
        for (int a = 0; a < mdp.num_actions; ++a) CHECK(table.at(mdp.start_state, a, u) == 0.0);
    }
}

TEST_CASE("dp: hindsight table matches counts and normalizes") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    const HindsightTable table = hindsight_table(mdp, policy, enc);

    REQUIRE(table.is_reachable(0, 1));
    CHECK(table.at(0, 1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(table.at(0, 1, 1) == doctest::Approx(0.0));
    for (int s = 0; s < mdp.num_states; ++s)
        for (int u = 0; u < enc.num_outcomes(); ++u) {
            if (!table.is_reachable(s, u)) continue;
            double sum = 0.0;
            for (int a = 0; a < mdp.num_actions; ++a) sum += table.at(s, u, a);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("dp: value functions agree with recursive expectations") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 17);
    const SuccessorMatrix succ = successor_matrix(tree.mdp, policy);
    const GroundTruth gt = value_functions(tree.mdp, policy, succ);
    for (int s = 0; s < tree.mdp.num_states; ++s) {
        CHECK(gt.v[s] == doctest::Approx(brute_value(tree.mdp, policy, s)).epsilon(1e-12));
        for (int a = 0; a < tree.mdp.num_actions; ++a)
            CHECK(gt.q[tree.mdp.sa(s, a)] ==
                  doctest::Approx(brute_qvalue(tree.mdp, policy, s, a)).epsilon(1e-12));
    }

    const TabularMDP bandit = build_delayed_bandit();
    const Policy ref = delayed_bandit_policy();
    const GroundTruth bg = value_functions(bandit, ref, successor_matrix(bandit, ref));
    CHECK(bg.v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(bg.q[bandit.sa(0, 0)] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(bg.q[bandit.sa(0, 1)] == doctest::Approx(0.0));
}

TEST_CASE("dp: gradient of the expected return matches finite differences") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 19);
    const SuccessorMatrix succ = successor_matrix(tree.mdp, policy);
    const std::vector<double> dp_grad = ground_truth_gradient(tree.mdp, policy, succ);
    const std::vector<double> fd_grad = brute_value_gradient(tree.mdp, policy);
    CHECK(max_abs_diff(dp_grad, fd_grad) < 1e-6);

    // the same gradient assembled from true advantages
    const GroundTruth gt = value_functions(tree.mdp, policy, succ);
    const std::vector<double> via_adv =
        expected_policy_gradient(tree.mdp, policy, succ, advantage_true(tree.mdp, gt));
    CHECK(max_abs_diff(dp_grad, via_adv) < 1e-12);
}

TEST_CASE("dp: occupancy and visit weights are consistent") {
    const TabularMDP chain = build_three_chain();
    const Policy policy = Policy::tabular(4, 2, 0.0);
    const std::vector<std::vector<double>> occ = occupancy(chain, policy, 3);
    REQUIRE(occ.size() == 4);
    CHECK(occ[0][0] == doctest::Approx(1.0));
    CHECK(occ[1][1] == doctest::Approx(1.0));
    CHECK(occ[2][2] == doctest::Approx(1.0));
    CHECK(occ[3][3] == doctest::Approx(1.0)); // absorbed

    const std::vector<double> w_all = state_visit_weights(chain, policy, 1.0);
    for (int s = 0; s < 3; ++s) CHECK(w_all[s] == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> w_one = state_visit_weights(chain, policy, 1.0, 1);
    CHECK(w_one[0] == doctest::Approx(1.0));
    CHECK(w_one[1] == doctest::Approx(0.0));
    const std::vector<double> w_disc = state_visit_weights(chain, policy, 0.5);
    CHECK(w_disc[1] == doctest::Approx(0.5));
    CHECK(w_disc[2] == doctest::Approx(0.25));
}

TEST_CASE("dp: n-step transition kernel walks the chain") {
    const TabularMDP chain = build_three_chain();
    const Policy policy = Policy::tabular(4, 2, 0.0);
    const SuccessorMatrix p2 = nstep_transition(chain, policy, 2);
    CHECK(p2.at(0, 0, 2) == doctest::Approx(1.0));
    CHECK(p2.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(p2.at(1, 1, 3) == doctest::Approx(1.0)); // falls into absorption
}

TEST_CASE("dp: return distributions match enumeration on the delayed bandit") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const ReturnTable table = return_table(mdp, policy);

    const int s0 = mdp.start_state;
    const int z1 = table.find(s0, 1.0);
    const int z0 = table.find(s0, 0.0);
    REQUIRE(z1 >= 0);
    REQUIRE(z0 >= 0);
    CHECK(table.p_state[s0][z1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(table.p_state[s0][z0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(table.hindsight(policy, s0, 0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(table.hindsight(policy, s0, 1, 1.0) == doctest::Approx(0.0));
    CHECK(table.find(s0, 0.5) == -1);
    CHECK_THROWS_AS(table.hindsight(policy, s0, 0, 0.25), Error);
}

TEST_CASE("dp: cyclic graphs are rejected by the return table") {
    const TabularMDP loop = cyclic_mdp();
    CHECK_NOTHROW(validate_mdp(loop));
    const Policy policy = Policy::tabular(3, 1, 0.0);
    try {
        return_table(loop, policy);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "dp-cyclic");
    }
    // the successor machinery itself is fine with cycles
    const SuccessorMatrix succ = successor_matrix(loop, policy);
    const GroundTruth gt = value_functions(loop, policy, succ);
    // V(0) = sum_k (1/2)^k over the returns to state 0: E[visits to 0] = 4/3
    CHECK(gt.v[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("dp: bandit return-conditioned advantages reproduce the known biased pair") {
    const TabularMDP mdp = build_bandit();
    const Policy policy = bandit_reference_policy();
    const ReturnTable table = return_table(mdp, policy);
    const std::vector<double> hca = advantage_hca_return(mdp, policy, table);
    const std::vector<double> cf = advantage_counterfactual_return(mdp, policy, table);
    const int s0 = mdp.start_state;

    CHECK(std::fabs(hca[mdp.sa(s0, 0)] - 1.0 / 3.0) <= 1e-12);
    CHECK(std::fabs(hca[mdp.sa(s0, 1)] + 4.0 / 3.0) <= 1e-12);
    CHECK(std::fabs(cf[mdp.sa(s0, 0)] - 1.0) <= 1e-12);
    CHECK(std::fabs(cf[mdp.sa(s0, 1)] + 2.0) <= 1e-12);
}

TEST_CASE("dp: counterfactual-return advantages equal true advantages off the bandit") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 23);
    const ReturnTable table = return_table(tree.mdp, policy);
    const std::vector<double> cf = advantage_counterfactual_return(tree.mdp, policy, table);
    const GroundTruth gt =
        value_functions(tree.mdp, policy, successor_matrix(tree.mdp, policy));
    CHECK(max_abs_diff(cf, advantage_true(tree.mdp, gt)) < 1e-9);
}

TEST_CASE("dp: counterfactual advantages equal true advantages") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 29);
    const SuccessorMatrix succ = successor_matrix(tree.mdp, policy);
    const GroundTruth gt = value_functions(tree.mdp, policy, succ);
    const std::vector<double> truth = advantage_true(tree.mdp, gt);

    for (const OutcomeEncoding& enc :
         {OutcomeEncoding::reward(tree.mdp), tree.group_encoding()}) {
        CAPTURE(enc.name());
        const CoefficientTable coeffs = contribution_coefficients(tree.mdp, policy, enc);
        const std::vector<double> adv = advantage_cocoa(tree.mdp, policy, succ, coeffs, enc);
        CHECK(max_abs_diff(adv, truth) < 1e-9);
    }

    const TabularMDP bandit = build_delayed_bandit();
    const Policy ref = delayed_bandit_policy();
    const SuccessorMatrix bsucc = successor_matrix(bandit, ref);
    const OutcomeEncoding enc = OutcomeEncoding::reward(bandit);
    const std::vector<double> adv = advantage_cocoa(
        bandit, ref, bsucc, contribution_coefficients(bandit, ref, enc), enc);
    CHECK(adv[bandit.sa(0, 0)] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(adv[bandit.sa(0, 1)] == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("dp: reward-model advantages with exact rewards equal true advantages") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 31);
    const SuccessorMatrix succ = successor_matrix(tree.mdp, policy);
    const GroundTruth gt = value_functions(tree.mdp, policy, succ);
    const OutcomeEncoding state_enc = OutcomeEncoding::state(tree.mdp);
    const CoefficientTable coeffs = contribution_coefficients(tree.mdp, policy, state_enc);
    const std::vector<double> adv =
        advantage_reward_model(tree.mdp, policy, succ, coeffs, state_enc, gt.mean_reward);
    CHECK(max_abs_diff(adv, advantage_true(tree.mdp, gt)) < 1e-9);
}

TEST_CASE("dp: n-step advantages collapse to the exact forms at the endpoints") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 37);
    const SuccessorMatrix succ = successor_matrix(tree.mdp, policy);
    const GroundTruth gt = value_functions(tree.mdp, policy, succ);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);

    // n at or past the horizon with gamma 1: the full counterfactual advantage
    // (the bootstrap term sees no non-absorbing mass, so zeros are fine)
    const NstepOracle full = nstep_oracle(tree.mdp, policy, enc, tree.mdp.horizon, 1.0, 1.0);
    const std::vector<double> adv_full = advantage_nstep(
        tree.mdp, policy, full, enc, std::vector<double>(tree.mdp.num_states, 0.0));
    const CoefficientTable coeffs = contribution_coefficients(tree.mdp, policy, enc);
    const std::vector<double> cocoa = advantage_cocoa(tree.mdp, policy, succ, coeffs, enc);
    CHECK(max_abs_diff(adv_full, cocoa) < 1e-9);

    // an exact bootstrap value makes every n unbiased
    for (const int n : {1, 2}) {
        CAPTURE(n);
        const NstepOracle oracle = nstep_oracle(tree.mdp, policy, enc, n, 1.0, 1.0);
        const std::vector<double> adv = advantage_nstep(tree.mdp, policy, oracle, enc, gt.v);
        CHECK(max_abs_diff(adv, advantage_true(tree.mdp, gt)) < 1e-9);
    }
}

TEST_CASE("dp: occurrence gradients align with finite differences") {
    // The DP expression treats each step's outcome as fixed once the state is
    // entered, so it is an exact gradient for the state encoding. Encodings
    // that let the action at a state change that step's own outcome add a
    // present-step term the expression intentionally leaves out.
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 41);
    const OutcomeEncoding enc = OutcomeEncoding::state(tree.mdp);
    const CoefficientTable coeffs = contribution_coefficients(tree.mdp, policy, enc);
    int checked = 0;
    for (int u = 0; u < enc.num_outcomes(); ++u) {
        if (!coeffs.is_reachable(tree.mdp.start_state, u)) continue;
        const OccurrenceCheck check = occurrence_gradient_check(tree.mdp, policy, enc, u);
        CHECK(check.cosine >= 0.999);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("dp: coefficient export writes one row per reachable entry") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const CoefficientTable table =
        contribution_coefficients(mdp, policy, OutcomeEncoding::reward(mdp));
    const std::string path = "test_coeffs_export.csv";
    export_coefficients_csv(table, path);

    std::ifstream in(path);
    REQUIRE(in.good());
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    in.close();
    std::remove(path.c_str());

    int reachable_pairs = 0;
    for (int s = 0; s < mdp.num_states; ++s)
        for (int u = 0; u < table.num_outcomes; ++u)
            if (table.is_reachable(s, u)) ++reachable_pairs;
    // a header line plus A rows per reachable (state, outcome) pair
    CHECK(rows == 1 + reachable_pairs * mdp.num_actions);
}

TEST_CASE("dp: dense allocation caps are enforced") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 43);
    try {
        successor_matrix(tree.mdp, policy, -1, 1.0, 8);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "dp-cap-exceeded");
    }
}
