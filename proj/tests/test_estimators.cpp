#include "doctest.h"

#include <cmath>
#include <vector>

#include "cocoa/analysis.hpp"
#include "cocoa/envs.hpp"
#include "cocoa/error.hpp"
#include "cocoa/estimators.hpp"
#include "oracles.hpp"

using namespace cocoa;
using namespace cocoa::testing;

namespace {

std::vector<double> expectation_over_trajectories(EstimatorKind kind, const TabularMDP& mdp,
                                                  const Policy& policy,
                                                  const OutcomeEncoding& encoding,
                                                  const EstimatorModels& models,
                                                  const EstimatorOptions& opts) {
    std::vector<double> mean(policy.param_count(), 0.0);
    for (const WeightedTrajectory& wt : enumerate_trajectories(mdp, policy)) {
        const std::vector<double> g =
            estimate(kind, mdp, policy, encoding, wt.traj, models, opts);
        for (size_t i = 0; i < mean.size(); ++i) mean[i] += wt.prob * g[i];
    }
    return mean;
}

Policy random_policy(const TabularMDP& mdp, uint64_t seed) {
    Policy p = Policy::tabular(mdp.num_states, mdp.num_actions, 0.0);
    Rng rng(seed);
    for (double& v : p.params()) v = rng.next_double() - 0.5;
    return p;
}

TreeEnv small_tree() {
    TreeConfig cfg;
    cfg.depth = 2;
    cfg.num_actions = 3;
    cfg.overlap = 1;
    cfg.reward_seed = 3;
    return build_tree(cfg);
}

const std::vector<EstimatorKind> kDeterministicKinds = {
    EstimatorKind::Reinforce,      EstimatorKind::Advantage,
    EstimatorKind::QCritic,        EstimatorKind::TrajCv,
    EstimatorKind::HcaPlus,        EstimatorKind::HcaReturn,
    EstimatorKind::HcaRewardModel, EstimatorKind::CounterfactualReturn,
    EstimatorKind::Cocoa,          EstimatorKind::CocoaNstep,
};

} // namespace

TEST_CASE("estimators: names round-trip") {
    CHECK(all_estimators().size() == 11);
    for (EstimatorKind kind : all_estimators())
        CHECK(estimator_from_name(estimator_name(kind)) == kind);
    CHECK(estimator_name(EstimatorKind::Cocoa) == "cocoa");
    CHECK(estimator_name(EstimatorKind::TrajCv) == "trajcv");
    CHECK(estimator_name(EstimatorKind::HcaPlus) == "hca-plus");
    CHECK_THROWS_AS(estimator_from_name("gradient-descent"), Error);
}

TEST_CASE("estimators: the likelihood-ratio estimate matches a hand computation") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);

    Trajectory traj;
    traj.steps = {{0, 0, 0.0}, {1, 0, 1.0}};

    const std::vector<double> p0 = policy.probs(0);
    const std::vector<double> p1 = policy.probs(1);

    SUBCASE("full undiscounted sum") {
        const std::vector<double> g =
            estimate(EstimatorKind::Reinforce, mdp, policy, enc, traj, {}, {});
        // suffix returns are 1 at both steps
        CHECK(g[0] == doctest::Approx((1.0 - p0[0]) * 1.0).epsilon(1e-12));
        CHECK(g[1] == doctest::Approx(-p0[1] * 1.0).epsilon(1e-12));
        CHECK(g[2] == doctest::Approx((1.0 - p1[0]) * 1.0).epsilon(1e-12));
        CHECK(g[3] == doctest::Approx(-p1[1] * 1.0).epsilon(1e-12));
        for (size_t i = 4; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }

    SUBCASE("outer window keeps only the first step") {
        EstimatorOptions opts;
        opts.t_limit = 1;
        const std::vector<double> g =
            estimate(EstimatorKind::Reinforce, mdp, policy, enc, traj, {}, opts);
        CHECK(g[0] == doctest::Approx((1.0 - p0[0]) * 1.0).epsilon(1e-12));
        CHECK(g[2] == 0.0);
        CHECK(g[3] == 0.0);
    }

    SUBCASE("discounting scales suffix and outer factors") {
        EstimatorOptions opts;
        opts.gamma = 0.5;
        const std::vector<double> g =
            estimate(EstimatorKind::Reinforce, mdp, policy, enc, traj, {}, opts);
        // z[0] = 0 + 0.5 * 1, outer(1) = 0.5
        CHECK(g[0] == doctest::Approx((1.0 - p0[0]) * 0.5).epsilon(1e-12));
        CHECK(g[2] == doctest::Approx((1.0 - p1[0]) * 0.5).epsilon(1e-12));
    }
}

TEST_CASE("estimators: missing models and options are reported") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    Rng rng(3);
    const Trajectory traj = sample_trajectory(mdp, policy, rng);

    auto code_of = [&](EstimatorKind kind, const EstimatorModels& models,
                       const EstimatorOptions& opts, Rng* r) {
        try {
            estimate(kind, mdp, policy, enc, traj, models, opts, r);
        } catch (const Error& e) {
            return std::string(e.code());
        }
        return std::string("no-error");
    };

    CHECK(code_of(EstimatorKind::Advantage, {}, {}, nullptr) == "estimator-missing-model");
    CHECK(code_of(EstimatorKind::QCritic, {}, {}, nullptr) == "estimator-missing-model");
    CHECK(code_of(EstimatorKind::Cocoa, {}, {}, nullptr) == "estimator-missing-model");
    CHECK(code_of(EstimatorKind::HcaReturn, {}, {}, nullptr) == "estimator-missing-model");

    EstimatorModels coeff_only;
    coeff_only.coefficient = [](int, int, int) { return 0.0; };
    CHECK(code_of(EstimatorKind::CocoaSampled, coeff_only, {}, nullptr) ==
          "estimator-missing-model");
    EstimatorOptions bad;
    bad.sampled_actions = 0;
    CHECK(code_of(EstimatorKind::CocoaSampled, coeff_only, bad, &rng) == "estimator-bad-option");

    EstimatorModels nstep_partial;
    nstep_partial.coefficient = [](int, int, int) { return 0.0; };
    nstep_partial.nstep_state_coeff = [](int, int, int) { return 0.0; };
    nstep_partial.reward = [](int, int) { return 0.0; };
    nstep_partial.value = [](int) { return 0.0; };
    EstimatorOptions no_n;
    no_n.nstep = 0;
    CHECK(code_of(EstimatorKind::CocoaNstep, nstep_partial, no_n, nullptr) ==
          "estimator-bad-option");
}

TEST_CASE("estimators: sample expectations equal the exact expected gradients") {
    struct Scene {
        std::string label;
        TabularMDP mdp;
        Policy policy;
    };
    const TreeEnv tree = small_tree();
    std::vector<Scene> scenes;
    scenes.push_back({"tree", tree.mdp, random_policy(tree.mdp, 11)});
    scenes.push_back({"delayed-bandit", build_delayed_bandit(), delayed_bandit_policy()});

    for (const Scene& scene : scenes) {
        CAPTURE(scene.label);
        const OutcomeEncoding enc = OutcomeEncoding::reward(scene.mdp);
        DpBundleOptions bopts;
        bopts.with_returns = true;
        bopts.nstep = 2;
        const DpBundle bundle = make_dp_bundle(scene.mdp, scene.policy, enc, bopts);

        EstimatorOptions opts;
        opts.nstep = 2;
        for (EstimatorKind kind : kDeterministicKinds) {
            CAPTURE(estimator_name(kind));
            const EstimatorModels models =
                bundle_models(bundle, scene.mdp, scene.policy, kind);
            const OutcomeEncoding& used = bundle_encoding(bundle, kind);
            const std::vector<double> brute = expectation_over_trajectories(
                kind, scene.mdp, scene.policy, used, models, opts);
            const std::vector<double> exact =
                expected_estimator_gradient(bundle, scene.mdp, scene.policy, kind, opts);
            CHECK(max_abs_diff(brute, exact) < 1e-9);
        }
    }
}

TEST_CASE("estimators: expectations honor the outer window and discounting") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 13);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);
    DpBundleOptions bopts;

    for (const double gamma : {1.0, 0.9}) {
        bopts.gamma = gamma;
        const DpBundle bundle = make_dp_bundle(tree.mdp, policy, enc, bopts);
        for (const int t_limit : {-1, 1}) {
            EstimatorOptions opts;
            opts.gamma = gamma;
            opts.t_limit = t_limit;
            for (EstimatorKind kind :
                 {EstimatorKind::Reinforce, EstimatorKind::QCritic, EstimatorKind::Cocoa}) {
                CAPTURE(gamma);
                CAPTURE(t_limit);
                CAPTURE(estimator_name(kind));
                const EstimatorModels models = bundle_models(bundle, tree.mdp, policy, kind);
                const std::vector<double> brute = expectation_over_trajectories(
                    kind, tree.mdp, policy, bundle_encoding(bundle, kind), models, opts);
                const std::vector<double> exact =
                    expected_estimator_gradient(bundle, tree.mdp, policy, kind, opts);
                CHECK(max_abs_diff(brute, exact) < 1e-9);
            }
        }
    }
}

TEST_CASE("estimators: single-action sampling agrees with the all-action form on average") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 17);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);
    const DpBundle bundle = make_dp_bundle(tree.mdp, policy, enc);
    const EstimatorModels models =
        bundle_models(bundle, tree.mdp, policy, EstimatorKind::CocoaSampled);
    const std::vector<double> exact = expected_estimator_gradient(
        bundle, tree.mdp, policy, EstimatorKind::CocoaSampled, {});

    const int n = 4000;
    const std::vector<Trajectory> batch = sample_batch(tree.mdp, policy, n, 19, 1000);
    Rng rng(21, 777);
    std::vector<double> mean(policy.param_count(), 0.0), sq(policy.param_count(), 0.0);
    for (const Trajectory& traj : batch) {
        const std::vector<double> g = estimate(EstimatorKind::CocoaSampled, tree.mdp, policy,
                                               enc, traj, models, {}, &rng);
        for (size_t i = 0; i < mean.size(); ++i) {
            mean[i] += g[i];
            sq[i] += g[i] * g[i];
        }
    }
    for (size_t i = 0; i < mean.size(); ++i) {
        mean[i] /= n;
        const double var = std::max(0.0, sq[i] / n - mean[i] * mean[i]);
        const double se = std::sqrt(var / n);
        CHECK(std::fabs(mean[i] - exact[i]) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("estimators: batch mean averages per-trajectory estimates") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();
    const OutcomeEncoding enc = OutcomeEncoding::reward(mdp);
    const std::vector<Trajectory> batch = sample_batch(mdp, policy, 5, 23, 0);

    std::vector<double> manual(policy.param_count(), 0.0);
    for (const Trajectory& traj : batch) {
        const std::vector<double> g =
            estimate(EstimatorKind::Reinforce, mdp, policy, enc, traj, {}, {});
        for (size_t i = 0; i < manual.size(); ++i) manual[i] += g[i] / batch.size();
    }
    const std::vector<double> mean =
        estimate_batch_mean(EstimatorKind::Reinforce, mdp, policy, enc, batch, {}, {});
    CHECK(max_abs_diff(manual, mean) < 1e-12);

    const std::vector<double> empty =
        estimate_batch_mean(EstimatorKind::Reinforce, mdp, policy, enc, {}, {}, {});
    for (double v : empty) CHECK(v == 0.0);
}
