#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cocoa/encoding.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"
#include "cocoa/rng.hpp"

namespace cocoa {

enum class EstimatorKind {
    Reinforce,
    Advantage,
    QCritic,
    TrajCv,
    HcaPlus,
    HcaReturn,
    HcaRewardModel,
    CounterfactualReturn,
    Cocoa,
    CocoaSampled,
    CocoaNstep,
};

const std::vector<EstimatorKind>& all_estimators();
std::string estimator_name(EstimatorKind kind);
EstimatorKind estimator_from_name(const std::string& name);

// Models an estimator may consult. Only the entries the chosen kind reads
// need to be set; a missing required model raises estimator-missing-model.
struct EstimatorModels {
    std::function<double(int)> value;                      // V(s)
    std::function<double(int, int)> qvalue;                // Q(s, a)
    std::function<double(int, int)> reward;                // r(s, a)
    std::function<double(int, int, int)> coefficient;      // w(s, a, u)
    std::function<double(int, int, int)> nstep_state_coeff; // w_n(s, a, s')
    // p(Z = z | s, a) / p(Z = z | s), for the return-conditioned estimators
    std::function<double(int, int, double)> return_ratio;
};

struct EstimatorOptions {
    double gamma = 1.0;
    // Restrict the outer time sum to t < t_limit (< 0 keeps every step);
    // inner sums still run over the full future.
    int t_limit = -1;
    int sampled_actions = 1; // cocoa-sampled
    int nstep = 0;           // cocoa-nstep
};

// Policy-gradient estimate from a single trajectory, flat over
// policy.params(). cocoa-sampled is the only kind that draws randomness and
// requires `rng`.
std::vector<double> estimate(EstimatorKind kind, const TabularMDP& mdp, const Policy& policy,
                             const OutcomeEncoding& encoding, const Trajectory& traj,
                             const EstimatorModels& models, const EstimatorOptions& opts,
                             Rng* rng = nullptr);

std::vector<double> estimate_batch_mean(EstimatorKind kind, const TabularMDP& mdp,
                                        const Policy& policy, const OutcomeEncoding& encoding,
                                        const std::vector<Trajectory>& batch,
                                        const EstimatorModels& models,
                                        const EstimatorOptions& opts, Rng* rng = nullptr);

} // namespace cocoa
