#pragma once

#include <vector>

#include "cocoa/encoding.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/nets.hpp"
#include "cocoa/policy.hpp"

namespace cocoa {

// Hindsight distribution from visitation counts: every pair (S_t, U_{t+k}),
// k >= 1, contributes gamma^k to count(s, u, A_t). The ratio of counts
// estimates p(a | s, future outcome u).
class TabularHindsight {
public:
    TabularHindsight(int num_states, int num_actions, int num_outcomes);

    void observe(const Trajectory& traj, const OutcomeEncoding& encoding, double gamma = 1.0);

    bool seen(int s, int u) const;
    double hindsight(int s, int u, int a) const; // 0 when (s, u) was never seen
    // w-hat = h / pi - 1, falling back to 0 for unseen (s, u).
    double coefficient(const Policy& policy, int s, int a, int u) const;

    // Same coefficient read in the forward direction: the per-action outcome
    // rate from the table divided by the outcome rate the *current* policy
    // would induce, i.e. the policy mixture of those per-action rates. Stale
    // state-conditional factors cancel between numerator and denominator, so
    // outcome bins whose probability does not depend on the action at s drop
    // to w = 0 even while the behavior policy keeps moving, and the policy
    // mixture of the returned coefficients is identically zero.
    double forward_coefficient(const Policy& policy, int s, int a, int u) const;

    // Multiplies every stored count by `factor` (recency weighting). With a
    // drifting behavior policy this bounds how long dead data can keep
    // distorting the per-action rates; factor 1 keeps plain lifetime counts.
    void decay(double factor);

private:
    double forward_ratio(int s, int a, int u) const;

    int num_states_, num_actions_, num_outcomes_;
    std::vector<double> counts_;        // [(s * U + u) * A + a]
    std::vector<double> totals_;        // [s * U + u]
    std::vector<double> action_pairs_;  // [s * A + a], same pair stream
    std::vector<double> state_pairs_;   // [s]
};

// Contrastive score x(s, a, u) trained to discriminate the action that was
// taken from policy samples, given that u occurred later. At the optimum
// sigmoid(x) = p / (p + pi) with p the hindsight probability, so
// exp(x) - 1 recovers the contribution coefficient.
class ContrastiveTabular {
public:
    ContrastiveTabular(int num_states, int num_actions, int num_outcomes, double lr);

    void observe(const Trajectory& traj, const OutcomeEncoding& encoding, const Policy& policy,
                 double gamma = 1.0);

    double score(int s, int a, int u) const;
    double coefficient(int s, int a, int u) const; // exp(score) - 1

private:
    int num_states_, num_actions_, num_outcomes_;
    double lr_;
    std::vector<double> x_; // [(s * U + u) * A + a]
};

// Parametric hindsight model: cross-entropy training of the hypernetwork
// head on observed (state, outcome, action) pairs, one optimizer step per
// batch of trajectories.
struct HypernetHindsightConfig {
    int trunk_hidden = 64;
    int gated_hidden = 64; // halved by the gated ReLU
    bool with_complement = false;
    double lr = 3e-3;
    double clip_norm = 0.0;
    uint64_t init_seed = 0;
};

class HypernetHindsight {
public:
    HypernetHindsight() = default;
    HypernetHindsight(const TabularMDP& mdp, const OutcomeEncoding& encoding,
                      const HypernetHindsightConfig& cfg);

    void update(const std::vector<Trajectory>& batch, const OutcomeEncoding& encoding,
                const Policy& policy, double gamma = 1.0);

    double hindsight(const Policy& policy, int s, int u, int a) const;
    double coefficient(const Policy& policy, int s, int a, int u) const;
    const HindsightHyperNet& net() const { return net_; }

private:
    std::vector<double> action_probs(const Policy& policy, int s, int u) const;

    HindsightHyperNet net_;
    AdamW opt_;
    std::vector<std::vector<double>> state_features_;
    std::vector<std::vector<double>> outcome_features_;
};

// TD(0) successor representation over undiscounted visit counts:
//   M(s, a, .) <- M + lr * (e_{s'} + sum_a' pi(a'|s') M(s', a', .) - M),
// with an all-zero target from the absorbing state and a nonnegativity
// projection after each update.
class SRLearner {
public:
    SRLearner(int num_states, int num_actions, int absorbing_state, double lr);

    void observe(const Trajectory& traj, const Policy& policy);

    double at(int s, int a, int sp) const;
    const std::vector<double>& matrix() const { return m_; } // [(s*A+a)*S + s']

private:
    int num_states_, num_actions_, absorbing_state_;
    double lr_;
    std::vector<double> m_;
};

// Lambda-return TD critic, state values or action values, tabular table or
// MLP on state features. Targets for a batch are computed with the critic
// frozen, then applied (tabular: per-visit steps, optionally with harmonic
// 1/N(s) step sizes so lambda = 1 reproduces running Monte Carlo means;
// MLP: one optimizer step on the mean squared error).
struct TdCriticConfig {
    bool q_flavor = false;
    bool tabular = true;
    double lr = 1e-3;
    bool harmonic_lr = false;
    double gamma = 1.0;
    double lambda = 1.0;
    std::vector<int> hidden;  // MLP hidden sizes
    double clip_norm = 0.0;
    uint64_t init_seed = 0;
};

class TdCritic {
public:
    TdCritic() = default;
    TdCritic(const TabularMDP& mdp, const TdCriticConfig& cfg);

    bool q_flavor() const { return cfg_.q_flavor; }
    double value(int s) const;                       // v flavor only
    double value(int s, const Policy& policy) const; // q flavor: sum_a pi(a|s) Q(s,a)
    double qvalue(int s, int a) const;               // q flavor only

    void update(const std::vector<Trajectory>& batch, const Policy& policy);

    std::vector<double> v_table() const; // [s], v flavor
    std::vector<double> q_table() const; // [s * A + a], q flavor

private:
    double raw_value(int s) const;
    double raw_qvalue(int s, int a) const;

    TdCriticConfig cfg_;
    int num_states_ = 0, num_actions_ = 0, absorbing_state_ = 0;
    std::vector<double> table_;
    std::vector<int> visits_;
    Mlp net_;
    AdamW opt_;
    std::vector<std::vector<double>> state_features_;
};

// Learns a sparse masked reward model on data from a frozen behavior policy,
// then groups (state, action) pairs by their active-feature bit patterns into
// a reward-independent outcome encoding. Outcome rewards are the empirical
// means of the buffer rewards falling into each group.
struct RewardFeatureConfig {
    int pretrain_batches = 30;
    int batch_size = 8;
    int train_steps = 20000;
    double lr = 3e-3;
    double l1_mask = 0.001;
    double l2_readout = 0.03;
    double bit_threshold = 0.05;
    uint64_t seed = 0;
};

struct RewardFeatureResult {
    OutcomeEncoding encoding;
    MaskedRewardModel model;
    int num_outcomes = 0;
    double final_loss = 0.0;
};

RewardFeatureResult learn_reward_features(const TabularMDP& mdp, const Policy& behavior,
                                          const RewardFeatureConfig& cfg);

} // namespace cocoa
