#pragma once

#include <string>
#include <vector>

#include "cocoa/rng.hpp"

namespace cocoa {

struct TransitionAtom {
    int next_state = 0;
    double prob = 0.0;
};

struct RewardAtom {
    double value = 0.0;
    double prob = 0.0;
};

// Finite MDP with explicit transition and reward tables, a single start state
// and a single absorbing state. All episodes must be absorbed within
// `horizon` steps under any policy; validate_mdp checks this along with the
// structural invariants.
struct TabularMDP {
    std::string name;
    int num_states = 0;
    int num_actions = 0;
    int start_state = 0;
    int absorbing_state = 0;
    int horizon = 0;

    // Indexed by s * num_actions + a.
    std::vector<std::vector<TransitionAtom>> transitions;
    std::vector<std::vector<RewardAtom>> rewards;
    // Indexed by state; all rows share one dimension.
    std::vector<std::vector<double>> state_features;

    int sa(int s, int a) const { return s * num_actions + a; }

    double mean_reward(int s, int a) const {
        double m = 0.0;
        for (const auto& atom : rewards[sa(s, a)]) m += atom.value * atom.prob;
        return m;
    }

    // Sorted distinct reward values over non-absorbing state-action pairs.
    std::vector<double> reward_support() const;

    int feature_dim() const { return state_features.empty() ? 0 : static_cast<int>(state_features[0].size()); }
};

// Throws Error on structural problems:
//   mdp-bad-shape        sizes/indices inconsistent
//   mdp-bad-probability  negative mass or row not summing to 1 (tol 1e-12)
//   mdp-bad-absorbing    absorbing state not a zero-reward self-loop, or start==absorbing
//   mdp-not-absorbing    uniform-policy absorption mass at t=horizon below 1-1e-9
void validate_mdp(const TabularMDP& mdp);

struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;
};

struct Trajectory {
    std::vector<Step> steps;

    double total_return() const {
        double z = 0.0;
        for (const auto& s : steps) z += s.reward;
        return z;
    }
};

class Policy;

// Samples one episode. Steps record the visited non-absorbing states; the
// final transition enters the absorbing state, which is never recorded as a
// step. Throws Error("mdp-not-absorbing") if the horizon passes without
// absorption.
Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, Rng& rng);

} // namespace cocoa
