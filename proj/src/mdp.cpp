#include "cocoa/mdp.hpp"

#include <algorithm>
#include <cmath>

#include "cocoa/policy.hpp"

namespace cocoa {

std::vector<double> TabularMDP::reward_support() const {
    std::vector<double> values;
    for (int s = 0; s < num_states; ++s) {
        if (s == absorbing_state) continue;
        for (int a = 0; a < num_actions; ++a)
            for (const auto& atom : rewards[sa(s, a)])
                if (atom.prob > 0.0) values.push_back(atom.value);
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

void validate_mdp(const TabularMDP& mdp) {
    require(mdp.num_states >= 2 && mdp.num_actions >= 1, "mdp-bad-shape",
            "need at least one real state plus the absorbing state");
    require(mdp.start_state >= 0 && mdp.start_state < mdp.num_states, "mdp-bad-shape",
            "start state out of range");
    require(mdp.absorbing_state >= 0 && mdp.absorbing_state < mdp.num_states, "mdp-bad-shape",
            "absorbing state out of range");
    require(mdp.start_state != mdp.absorbing_state, "mdp-bad-absorbing",
            "start state must differ from the absorbing state");
    require(mdp.horizon >= 1, "mdp-bad-shape", "horizon must be positive");
    const size_t pairs = static_cast<size_t>(mdp.num_states) * mdp.num_actions;
    require(mdp.transitions.size() == pairs && mdp.rewards.size() == pairs, "mdp-bad-shape",
            "transition/reward tables must cover every state-action pair");
    require(mdp.state_features.size() == static_cast<size_t>(mdp.num_states), "mdp-bad-shape",
            "feature table must cover every state");
    const size_t fdim = mdp.state_features[0].size();
    for (const auto& row : mdp.state_features)
        require(row.size() == fdim, "mdp-bad-shape", "feature rows must share one dimension");

    const double tol = 1e-12;
    for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) {
            double tmass = 0.0;
            for (const auto& atom : mdp.transitions[mdp.sa(s, a)]) {
                require(atom.next_state >= 0 && atom.next_state < mdp.num_states, "mdp-bad-shape",
                        "transition target out of range");
                require(atom.prob >= 0.0, "mdp-bad-probability", "negative transition probability");
                tmass += atom.prob;
            }
            require(std::fabs(tmass - 1.0) <= tol, "mdp-bad-probability",
                    "transition probabilities must sum to 1");
            double rmass = 0.0;
            for (const auto& atom : mdp.rewards[mdp.sa(s, a)]) {
                require(atom.prob >= 0.0, "mdp-bad-probability", "negative reward probability");
                rmass += atom.prob;
            }
            require(std::fabs(rmass - 1.0) <= tol, "mdp-bad-probability",
                    "reward probabilities must sum to 1");
        }
    }
    for (int a = 0; a < mdp.num_actions; ++a) {
        const auto& trans = mdp.transitions[mdp.sa(mdp.absorbing_state, a)];
        require(trans.size() == 1 && trans[0].next_state == mdp.absorbing_state,
                "mdp-bad-absorbing", "absorbing state must self-loop");
        for (const auto& atom : mdp.rewards[mdp.sa(mdp.absorbing_state, a)])
            require(atom.value == 0.0 || atom.prob == 0.0, "mdp-bad-absorbing",
                    "absorbing state must emit zero reward");
    }

    // Uniform-policy forward pass: absorption mass at t = horizon must be 1.
    std::vector<double> occ(mdp.num_states, 0.0), next(mdp.num_states, 0.0);
    occ[mdp.start_state] = 1.0;
    const double uniform = 1.0 / mdp.num_actions;
    for (int t = 0; t < mdp.horizon; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < mdp.num_states; ++s) {
            if (occ[s] == 0.0) continue;
            for (int a = 0; a < mdp.num_actions; ++a)
                for (const auto& atom : mdp.transitions[mdp.sa(s, a)])
                    next[atom.next_state] += occ[s] * uniform * atom.prob;
        }
        occ.swap(next);
    }
    require(occ[mdp.absorbing_state] >= 1.0 - 1e-9, "mdp-not-absorbing",
            "uniform policy does not reach the absorbing state within the horizon");
}

Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, Rng& rng) {
    Trajectory traj;
    int s = mdp.start_state;
    for (int t = 0; t < mdp.horizon && s != mdp.absorbing_state; ++t) {
        const std::vector<double> pi = policy.probs(s);
        const int a = rng.pick(pi);
        const auto& ratoms = mdp.rewards[mdp.sa(s, a)];
        double reward = 0.0;
        if (ratoms.size() == 1) {
            reward = ratoms[0].value;
        } else {
            const double u = rng.next_double();
            double acc = 0.0;
            reward = ratoms.back().value;
            for (const auto& atom : ratoms) {
                acc += atom.prob;
                if (u < acc) {
                    reward = atom.value;
                    break;
                }
            }
        }
        const auto& tatoms = mdp.transitions[mdp.sa(s, a)];
        int next_state;
        if (tatoms.size() == 1) {
            next_state = tatoms[0].next_state;
        } else {
            const double u = rng.next_double();
            double acc = 0.0;
            next_state = tatoms.back().next_state;
            for (const auto& atom : tatoms) {
                acc += atom.prob;
                if (u < acc) {
                    next_state = atom.next_state;
                    break;
                }
            }
        }
        traj.steps.push_back({s, a, reward});
        s = next_state;
    }
    require(s == mdp.absorbing_state, "mdp-not-absorbing",
            "episode passed the horizon without reaching the absorbing state");
    return traj;
}

} // namespace cocoa
