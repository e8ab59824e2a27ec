#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cocoa/encoding.hpp"
#include "cocoa/estimators.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"

namespace cocoa {

// --- online training engine ----------------------------------------------

// One policy-optimization run: sample a batch, update the learned models on
// it (hindsight counts, critics, reward means), compute the estimator
// gradient with those models, then apply an entropy-regularized AdamW update
// with global-norm clipping. Supported estimator kinds are the ones whose
// models the engine can learn online: reinforce, advantage, q-critic, trajcv,
// hca-plus, hca-reward-model, cocoa and cocoa-sampled. The return-conditioned
// and n-step kinds have no online learner here and are rejected.
struct TrainConfig {
    EstimatorKind kind = EstimatorKind::Reinforce;
    int batches = 500;     // number of policy updates
    int batch_size = 8;
    int eval_batch = 512;
    int eval_every = 25;   // checkpoint cadence; <= 0 evaluates only at 0 and the end
    double lr_policy = 3e-4;
    double clip_norm = 1.0; // global-norm clip on the policy gradient (0 = off)
    double lr_value = 1e-3;
    double td_lambda_value = 1.0;
    double lr_qvalue = 3e-3;
    double td_lambda_qvalue = 0.9;
    double entropy = 0.01;
    double epsilon = 0.05;      // exploration floor while training
    double eval_epsilon = 0.0;
    double gamma = 1.0;
    // Per-update multiplier on the stored hindsight counts; 1 keeps lifetime
    // counts, below 1 forgets stale on-policy data at that geometric rate.
    double hindsight_decay = 1.0;
    int sampled_actions = 1; // cocoa-sampled
    uint64_t seed = 0;
    std::vector<int> policy_hidden; // empty: tabular policy
    std::vector<int> critic_hidden; // empty: tabular critics
    // Swap to the alternate environment before this update (see train_policy's
    // switch_mdp); < 0 disables.
    int switch_batch = -1;
};

struct TrainPoint {
    int batch = 0;       // updates applied when this evaluation ran
    double mean_return = 0.0;
    double metric = 0.0; // scenario metric (e.g. treasure rate); NaN when absent
};

struct TrainResult {
    std::vector<TrainPoint> curve;
    std::optional<Policy> policy; // final training policy (epsilon still set)
    bool diverged = false;        // non-finite parameters; training stopped early
    int diverged_at = -1;
};

// Extra per-trajectory evaluation statistic, averaged over the eval batch
// (NaN values are skipped).
using TrajectoryMetric = std::function<double(const Trajectory&)>;

// `switch_mdp`, combined with cfg.switch_batch, replaces the sampling
// environment mid-run (same state/action space); learners keep their state
// across the switch. A zero-batch budget returns an empty curve.
TrainResult train_policy(const TabularMDP& mdp, const OutcomeEncoding& encoding,
                         const TrainConfig& cfg, const TrajectoryMetric& metric = {},
                         const TabularMDP* switch_mdp = nullptr);

// Entropy-regularization strength used for the key-to-door track, matching
// the log-log interpolation between 0.03 at L=20 and 0.01 at L=100 (the
// aliased variant at L=100 uses its own lower value).
double key_to_door_entropy(int length, bool aliased);

// Default policy learning rate per estimator kind.
double default_policy_lr(EstimatorKind kind);

// --- scenario runner -------------------------------------------------------

// Names accepted by run_scenario, in documentation order.
std::vector<std::string> scenario_names();

// Built-in defaults for one scenario as a JSON object (serialized text).
std::string scenario_default_config(const std::string& name);

// Runs a named scenario and writes results.csv, summary.json,
// config.snapshot and plots/*.csv into out_dir (default
// "cocoa-lab-<name>"). `config_path` (optional) is a JSON file overriding a
// subset of the defaults; unknown keys are rejected. `overrides` are
// key=value pairs applied after the file; `seed_override` >= 0 replaces the
// seed. Returns 0 when every scenario assertion passed, 1 otherwise.
int run_scenario(const std::string& name, const std::string& config_path,
                 const std::string& out_dir, long long seed_override,
                 const std::vector<std::string>& overrides);

} // namespace cocoa
