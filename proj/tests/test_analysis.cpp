#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "cocoa/analysis.hpp"
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

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
    if (a.steps.size() != b.steps.size()) return false;
    for (size_t i = 0; i < a.steps.size(); ++i)
        if (a.steps[i].state != b.steps[i].state || a.steps[i].action != b.steps[i].action ||
            a.steps[i].reward != b.steps[i].reward)
            return false;
    return true;
}

} // namespace

TEST_CASE("analysis: decibel conversion pins") {
    CHECK(to_decibels(1.0) == 0.0);
    CHECK(to_decibels(100.0) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(to_decibels(0.1) == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK(to_decibels(0.0) == -999.0);
    CHECK(to_decibels(-3.0) == -999.0);
    CHECK(to_decibels(std::numeric_limits<double>::quiet_NaN()) == -999.0);
    CHECK(to_decibels(std::numeric_limits<double>::infinity()) == 999.0);
    CHECK(to_decibels(-std::numeric_limits<double>::infinity()) == -999.0);
    CHECK(to_decibels(1e200) == 999.0);
    CHECK(to_decibels(1e-200) == -999.0);
}

TEST_CASE("analysis: sampled batches replay per seed and stream") {
    const TabularMDP mdp = build_delayed_bandit();
    const Policy policy = delayed_bandit_policy();

    const std::vector<Trajectory> a = sample_batch(mdp, policy, 6, 7, 100);
    const std::vector<Trajectory> b = sample_batch(mdp, policy, 6, 7, 100);
    REQUIRE(a.size() == 6);
    for (size_t i = 0; i < a.size(); ++i) CHECK(same_trajectory(a[i], b[i]));

    // each index draws from its own child stream, so a prefix is stable
    const std::vector<Trajectory> shorter = sample_batch(mdp, policy, 3, 7, 100);
    for (size_t i = 0; i < shorter.size(); ++i) CHECK(same_trajectory(a[i], shorter[i]));

    const std::vector<Trajectory> other = sample_batch(mdp, policy, 6, 8, 100);
    bool differs = false;
    for (size_t i = 0; i < other.size(); ++i)
        if (!same_trajectory(a[i], other[i])) differs = true;
    CHECK(differs);
}

TEST_CASE("analysis: estimator metrics are internally consistent") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 11);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);
    const DpBundle bundle = make_dp_bundle(tree.mdp, policy, enc);
    const std::vector<Trajectory> batch = sample_batch(tree.mdp, policy, 256, 13, 500);

    for (EstimatorKind kind : {EstimatorKind::Reinforce, EstimatorKind::Cocoa}) {
        CAPTURE(estimator_name(kind));
        const MetricsRecord rec =
            evaluate_estimator(tree.mdp, policy, bundle, kind, {}, batch, 17);
        CHECK(rec.samples == 256);
        CHECK(rec.estimator == estimator_name(kind));
        CHECK(rec.true_norm_sq > 0.0);
        CHECK(rec.mean_sq_error > 0.0);
        CHECK(rec.snr == doctest::Approx(rec.true_norm_sq / rec.mean_sq_error).epsilon(1e-12));
        CHECK(rec.snr_db == to_decibels(rec.snr));
        CHECK(rec.bias_db == to_decibels(rec.bias));
        CHECK(rec.var_db == to_decibels(rec.variance));
        // both estimators are exact in expectation here, so the bias is null
        CHECK(rec.bias < 1e-18);
        // per-sample error decomposition residual is centered on zero
        CHECK(std::fabs(rec.residual_mean) <= 4.0 * rec.residual_se + 1e-12);
    }

    const MetricsRecord r1 = evaluate_estimator(tree.mdp, policy, bundle,
                                                EstimatorKind::Reinforce, {}, batch, 17);
    const MetricsRecord r2 = evaluate_estimator(tree.mdp, policy, bundle,
                                                EstimatorKind::Reinforce, {}, batch, 17);
    CHECK(r1.snr_db == r2.snr_db);
    CHECK(r1.mean_sq_error == r2.mean_sq_error);
}

TEST_CASE("analysis: the restricted true gradient matches the window") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 19);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);
    const DpBundle bundle = make_dp_bundle(tree.mdp, policy, enc);

    const std::vector<double> full = true_gradient_for(bundle, tree.mdp, policy, {});
    const std::vector<double> whole =
        ground_truth_gradient(tree.mdp, policy, successor_matrix(tree.mdp, policy));
    CHECK(max_abs_diff(full, whole) < 1e-12);

    EstimatorOptions first;
    first.t_limit = 1;
    const std::vector<double> head = true_gradient_for(bundle, tree.mdp, policy, first);
    const GroundTruth gt = value_functions(tree.mdp, policy, bundle.succ);
    std::vector<double> manual(policy.param_count(), 0.0);
    const std::vector<double> adv = advantage_true(tree.mdp, gt);
    for (int a = 0; a < tree.mdp.num_actions; ++a)
        policy.add_grad_pi(tree.mdp.start_state, a, adv[tree.mdp.sa(tree.mdp.start_state, a)],
                           manual);
    CHECK(max_abs_diff(head, manual) < 1e-12);
}

TEST_CASE("analysis: shadow training replays checkpoints deterministically") {
    KeyToDoorConfig kcfg;
    kcfg.length = 6;
    const KeyToDoorEnv env = build_key_to_door(kcfg);
    const OutcomeEncoding enc = OutcomeEncoding::reward(env.mdp);

    std::vector<ShadowProbe> probes;
    probes.push_back({EstimatorKind::Reinforce, {}, ""});
    probes.push_back({EstimatorKind::Cocoa, {}, ""});

    ShadowConfig cfg;
    cfg.steps = 10;
    cfg.batch_size = 4;
    cfg.eval_batch = 32;
    cfg.checkpoints = {0, 5, 10};
    cfg.entropy = 0.01;
    cfg.epsilon = 0.05;
    cfg.seed = 5;

    const std::vector<ShadowCheckpoint> run1 = shadow_training(env.mdp, enc, probes, cfg);
    const std::vector<ShadowCheckpoint> run2 = shadow_training(env.mdp, enc, probes, cfg);

    REQUIRE(run1.size() == 3);
    CHECK(run1[0].step == 0);
    CHECK(run1[1].step == 5);
    CHECK(run1[2].step == 10);
    for (size_t c = 0; c < run1.size(); ++c) {
        REQUIRE(run1[c].records.size() == 2);
        CHECK(run1[c].mean_return == run2[c].mean_return);
        for (size_t p = 0; p < run1[c].records.size(); ++p) {
            CHECK(run1[c].records[p].snr_db == run2[c].records[p].snr_db);
            CHECK(run1[c].records[p].mean_sq_error == run2[c].records[p].mean_sq_error);
            CHECK(std::isfinite(run1[c].records[p].snr_db));
        }
    }

    // probes must agree on the bootstrap horizon
    std::vector<ShadowProbe> clash;
    EstimatorOptions n1, n2;
    n1.nstep = 1;
    n2.nstep = 2;
    clash.push_back({EstimatorKind::CocoaNstep, n1, ""});
    clash.push_back({EstimatorKind::CocoaNstep, n2, ""});
    try {
        shadow_training(env.mdp, enc, clash, cfg);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "analysis-bad-probes");
    }
}

TEST_CASE("analysis: perturbation sweep is exact at zero noise") {
    const TreeEnv tree = small_tree();
    const Policy policy = random_policy(tree.mdp, 23);
    const OutcomeEncoding enc = OutcomeEncoding::reward(tree.mdp);
    const DpBundle bundle = make_dp_bundle(tree.mdp, policy, enc);

    PerturbationConfig cfg;
    cfg.sigmas = {0.0, 0.1};
    cfg.noise_seeds = 3;
    cfg.eval_batch = 64;
    cfg.seed = 9;
    const std::vector<PerturbationResult> sweep = perturbation_sweep(
        tree.mdp, policy, bundle, {EstimatorKind::Cocoa}, {}, cfg);
    REQUIRE(sweep.size() == 6);

    // rows come out kind-major, then sigma, then noise seed
    for (int j = 0; j < 3; ++j) {
        CHECK(sweep[j].sigma == 0.0);
        CHECK(sweep[j].noise_seed == j);
        CHECK(sweep[j].record.snr_db == sweep[0].record.snr_db);
        CHECK(sweep[j].record.bias < 1e-18);
    }
    bool moved = false;
    for (int j = 3; j < 6; ++j) {
        CHECK(sweep[j].sigma == 0.1);
        if (sweep[j].record.snr_db != sweep[0].record.snr_db) moved = true;
    }
    CHECK(moved);

    try {
        perturbation_sweep(tree.mdp, policy, bundle, {EstimatorKind::HcaReturn}, {}, cfg);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == "analysis-unsupported");
    }
}
