#pragma once

#include <string>
#include <vector>

#include "cocoa/mdp.hpp"

namespace cocoa {

enum class EncodingKind { State, Reward, TreeGroup, Table };

// Deterministic map u = f(s, a, r) from a step's triple to a finite outcome
// id. Outcomes are only taken at non-absorbing steps (the absorbing state's
// zero-reward self-loop is never an outcome). Each encoding also offers
// per-outcome features (for hindsight networks) and, except for the state
// encoding, the expected reward attached to an outcome.
class OutcomeEncoding {
public:
    // u = state id. Outcome reward is undefined here (it would depend on the
    // policy's action mix at that state); code paths that need expectations
    // for state outcomes work with successor quantities directly.
    static OutcomeEncoding state(const TabularMDP& mdp);

    // u indexes the sorted finite reward support; lookup is by exact equality.
    static OutcomeEncoding reward(const TabularMDP& mdp);

    // Same, over an explicit support (e.g. the union of supports when the
    // reward structure changes between phases of a run).
    static OutcomeEncoding reward_values(std::vector<double> values);

    // u = (idx(s) + a * prime + seed) mod (num_rewards * num_groups), which
    // refines the reward residue: outcome_reward(u) = (u mod num_rewards)
    // minus num_rewards/2. State ids must equal the tree's enumeration index.
    static OutcomeEncoding tree_group(int num_rewards, int num_groups, long long prime,
                                      long long seed);

    // Explicit (s, a) -> outcome table (reward-independent), used by learned
    // feature encodings. `features` and `rewards` are per-outcome.
    static OutcomeEncoding table(int num_actions, std::vector<int> sa_to_outcome,
                                 std::vector<std::vector<double>> features,
                                 std::vector<double> rewards, std::string name);

    EncodingKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    int num_outcomes() const { return num_outcomes_; }
    int feature_dim() const { return feature_dim_; }

    // Throws Error("encoding-unknown-triple") for values outside the support.
    int encode(int state, int action, double reward) const;

    // E[R | U = u]. Throws Error("encoding-reward-undefined") for state kind.
    double outcome_reward(int outcome) const;

    std::vector<double> outcome_features(int outcome) const;

private:
    EncodingKind kind_ = EncodingKind::Reward;
    std::string name_;
    int num_outcomes_ = 0;
    int feature_dim_ = 0;

    std::vector<double> reward_values_;              // Reward: sorted support
    int num_rewards_ = 0, num_groups_ = 0;           // TreeGroup
    long long prime_ = 0, seed_ = 0;                 // TreeGroup
    int num_actions_ = 0;                            // Table
    std::vector<int> sa_to_outcome_;                 // Table
    std::vector<std::vector<double>> feature_rows_;  // State/Table
    std::vector<double> outcome_rewards_;            // all but State
};

struct FullyPredictiveReport {
    bool ok = true;
    // One line per violating outcome: the two state-action pairs whose
    // conditional reward distributions differ.
    std::vector<std::string> collisions;
};

// Exhaustive Definition-style check on an enumerable MDP: for every outcome
// id, all (s, a) pairs that can produce it must attach the same conditional
// reward distribution given the outcome. Applies to reward-carrying encodings;
// the state encoding is exempt by construction (its conditional is defined
// with actions marginalized under the policy) and is rejected here.
FullyPredictiveReport fully_predictive_report(const TabularMDP& mdp,
                                              const OutcomeEncoding& encoding);

} // namespace cocoa
