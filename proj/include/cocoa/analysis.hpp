#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cocoa/dp.hpp"
#include "cocoa/encoding.hpp"
#include "cocoa/estimators.hpp"
#include "cocoa/learners.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"

namespace cocoa {

// 10 log10(ratio), clamped to [-999, 999]; nonpositive or non-finite ratios
// land on the matching sentinel.
double to_decibels(double ratio);

// Every exact quantity the estimator zoo can be backed by, computed for one
// (mdp, policy, encoding) triple. Model closures hand out pointers into this
// struct, so it must outlive them.
struct DpBundleOptions {
    double gamma = 1.0;
    bool with_returns = false; // exact return distributions (acyclic graphs only)
    int nstep = 0;             // build the n-step oracle when >= 1
    double nstep_beta = 1.0;
    size_t dense_cap = kDenseCap;
};

struct DpBundle {
    DpBundleOptions opts;
    OutcomeEncoding encoding; // the scenario's outcome encoding
    OutcomeEncoding state_encoding;
    SuccessorMatrix succ;
    GroundTruth gt;
    CoefficientTable outcome_coeffs;
    CoefficientTable state_coeffs;
    std::shared_ptr<ReturnTable> returns;
    std::shared_ptr<NstepOracle> nstep;
};

DpBundle make_dp_bundle(const TabularMDP& mdp, const Policy& policy,
                        const OutcomeEncoding& encoding, const DpBundleOptions& opts = {});

// The encoding whose outcomes the estimator consumes: the state encoding for
// the state-outcome variants, the scenario encoding otherwise.
const OutcomeEncoding& bundle_encoding(const DpBundle& bundle, EstimatorKind kind);

// Exact models backing `kind` (values, coefficients, return ratios) read
// straight from the bundle.
EstimatorModels bundle_models(const DpBundle& bundle, const TabularMDP& mdp,
                              const Policy& policy, EstimatorKind kind);

// The estimator's exact expected gradient, honoring gamma and t_limit.
std::vector<double> expected_estimator_gradient(const DpBundle& bundle, const TabularMDP& mdp,
                                                const Policy& policy, EstimatorKind kind,
                                                const EstimatorOptions& opts);

// Gradient of the expected return restricted to the same outer time window.
std::vector<double> true_gradient_for(const DpBundle& bundle, const TabularMDP& mdp,
                                      const Policy& policy, const EstimatorOptions& opts);

// Trajectories sampled on independent child streams (seed, stream_base + i),
// so a batch is reproducible no matter where it is consumed.
std::vector<Trajectory> sample_batch(const TabularMDP& mdp, const Policy& policy, int count,
                                     uint64_t seed, uint64_t stream_base);

// Monte Carlo quality metrics of one estimator against exact references:
//   snr      = |grad V|^2 / E |g - grad V|^2
//   bias     = |E g - grad V|^2 / |grad V|^2
//   variance = E |g - E g|^2 / |grad V|^2
// The error decomposition |g - grad V|^2 = |g - E g|^2 + |E g - grad V|^2
// holds in expectation; residual_mean / residual_se track it per sample.
struct MetricsRecord {
    std::string estimator;
    int samples = 0;
    double snr = 0.0, bias = 0.0, variance = 0.0;
    double snr_db = 0.0, bias_db = 0.0, var_db = 0.0;
    double true_norm_sq = 0.0;
    double mean_sq_error = 0.0;
    double residual_mean = 0.0, residual_se = 0.0;
};

MetricsRecord evaluate_with(const TabularMDP& mdp, const Policy& policy,
                            const OutcomeEncoding& encoding, EstimatorKind kind,
                            const EstimatorModels& models, const EstimatorOptions& opts,
                            const std::vector<Trajectory>& batch,
                            const std::vector<double>& expected_grad,
                            const std::vector<double>& true_grad, uint64_t rng_seed);

MetricsRecord evaluate_estimator(const TabularMDP& mdp, const Policy& policy,
                                 const DpBundle& bundle, EstimatorKind kind,
                                 const EstimatorOptions& opts,
                                 const std::vector<Trajectory>& batch, uint64_t rng_seed);

// --- shadow training ---------------------------------------------------------

// Trains a policy with the exact all-action critic (ground-truth Q recomputed
// for the current policy before every update) and scores a set of probe
// estimators at checkpoints, all probes sharing the checkpoint's evaluation
// batch. Exploration uses the training epsilon floor; checkpoints evaluate
// the greedy-mixture policy at eval_epsilon.
struct ShadowProbe {
    EstimatorKind kind;
    EstimatorOptions opts;
    std::string label; // defaults to the estimator name when empty
};

struct ShadowConfig {
    int steps = 100;
    int batch_size = 8;
    int eval_batch = 512;
    std::vector<int> checkpoints; // update counts at which to evaluate
    double lr = 3e-4;
    double entropy = 0.01;
    double epsilon = 0.05;
    double eval_epsilon = 0.0;
    double gamma = 1.0;
    uint64_t seed = 0;
    std::vector<int> policy_hidden; // empty: tabular policy
};

struct ShadowCheckpoint {
    int step = 0;
    double mean_return = 0.0; // mean eval-batch return
    std::vector<MetricsRecord> records;
};

std::vector<ShadowCheckpoint> shadow_training(const TabularMDP& mdp,
                                              const OutcomeEncoding& encoding,
                                              const std::vector<ShadowProbe>& probes,
                                              const ShadowConfig& cfg);

// --- model perturbation ------------------------------------------------------

// Multiplies every model table entry by (1 + sigma * eps), eps standard
// normal, and measures how the estimator's bias and variance respond.
struct PerturbationConfig {
    std::vector<double> sigmas = {0.001, 0.003, 0.01, 0.03, 0.1, 0.3};
    int noise_seeds = 30;
    int eval_batch = 512;
    uint64_t seed = 0;
};

struct PerturbationResult {
    std::string estimator;
    double sigma = 0.0;
    int noise_seed = 0;
    MetricsRecord record;
};

std::vector<PerturbationResult> perturbation_sweep(const TabularMDP& mdp, const Policy& policy,
                                                   const DpBundle& bundle,
                                                   const std::vector<EstimatorKind>& kinds,
                                                   const EstimatorOptions& opts,
                                                   const PerturbationConfig& cfg);

} // namespace cocoa
