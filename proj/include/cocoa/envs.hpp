#pragma once

#include <string>
#include <vector>

#include "cocoa/encoding.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"

namespace cocoa {

// ---------------------------------------------------------------------------
// Key-to-door track. Positions 0..length-1, one step per position (every
// action advances). Position 0 holds the key (pick-key stores it), positions
// 1..length-3 hold one apple each on a seeded side (picking the matching side
// yields the low/high distractor reward with probability 1/2 each), position
// length-2 holds the door, and the final position delivers the treasure
// automatically iff the key was taken at step 0 and (when required) the door
// was opened at the penultimate step. Distractors are 2/L and 18/L; the
// treasure is 4/L, or 2/L in the aliased variant (equal to the low
// distractor).
//
// Features (9): relative position pos/(L-1); item-at-position booleans
// (empty, apple-left, apple-right, door, key, treasure); has-key; not-has-key.
// The treasure boolean at the final position is shown only when the treasure
// is actually obtainable, keeping features reward-sufficient.
// ---------------------------------------------------------------------------

struct KeyToDoorConfig {
    int length = 20;
    bool door_required = true;
    bool aliased = false;
    double treasure_sign = 1.0; // -1 flips the treasure reward (switching phase)
    uint64_t env_seed = 0;
};

struct KeyToDoorEnv {
    TabularMDP mdp;
    KeyToDoorConfig config;
    std::vector<int> apple_side; // indexed by position; 0 = left, 1 = right
    double low_reward = 0.0, high_reward = 0.0, treasure_reward = 0.0;

    static constexpr int kPickKey = 0, kPickLeft = 1, kPickRight = 2, kOpenDoor = 3;

    int state_id(int pos, bool has_key, bool door_open) const;
    // Episodes always run the full track, so the last step sits on the final
    // position and its reward is nonzero exactly when the treasure was taken.
    bool treasure_collected(const Trajectory& traj) const {
        return !traj.steps.empty() && traj.steps.back().reward != 0.0;
    }
};

KeyToDoorEnv build_key_to_door(const KeyToDoorConfig& config);

// ---------------------------------------------------------------------------
// Reward tree. States (level i, index j), i < depth; action a moves to
// (i+1, j*(num_actions-overlap)+a), so consecutive actions reach overlapping
// child sets when overlap > 0. State ids are level offset plus j, which is the
// index used by the reward rule
//   r(s, a) = ((id(s) + a*prime + reward_seed) mod num_rewards) - num_rewards/2
// and by the grouped outcome encoding (see OutcomeEncoding::tree_group).
// Features: [ (i+1)/depth, (j+0.5)/width(i) ].
// ---------------------------------------------------------------------------

struct TreeConfig {
    int depth = 4;
    int num_actions = 6;
    int overlap = 0;
    int num_rewards = 5;
    int num_groups = 4;
    long long prime = 999331;
    long long reward_seed = 0;
};

struct TreeEnv {
    TabularMDP mdp;
    TreeConfig config;
    std::vector<int> level_offset; // level i occupies [level_offset[i], level_offset[i+1])

    OutcomeEncoding group_encoding() const {
        return OutcomeEncoding::tree_group(config.num_rewards, config.num_groups, config.prime,
                                           config.reward_seed);
    }
    OutcomeEncoding group_encoding(int num_groups) const {
        return OutcomeEncoding::tree_group(config.num_rewards, num_groups, config.prime,
                                           config.reward_seed);
    }
};

TreeEnv build_tree(const TreeConfig& config);

// ---------------------------------------------------------------------------
// Two-armed bandit: one decision state, arm 0 pays +1, arm 1 pays -2,
// absorption after the single step.
// ---------------------------------------------------------------------------

TabularMDP build_bandit();

// Softmax policy playing arm 0 with probability 2/3 (logits ln 2 and 0).
Policy bandit_reference_policy();

// ---------------------------------------------------------------------------
// Task interleaving. Contexts open via query rooms (two objects shown, one
// rewarding per the seeded assignment; choosing its side stores that
// context's key) and close via answer rooms (the context reward is paid iff
// the key is held; no action matters). After each room the next is an answer
// room for a uniform open context with probability open_count/max_open, else
// a query room for a uniform closed context with a uniform object layout.
// Every post-room transition kills the episode with probability 1-gamma. A
// synthetic zero-reward lobby state provides the single start state (uniform
// over initial query rooms, no death on this first transition).
//
// Features: [query-flag, answer-flag, one-hot context, one-hot left object,
// one-hot right object, per-context status one-hot (closed/open+key/
// open+no-key)]; the lobby is all zeros. Actions: 0 = left, 1 = right.
// ---------------------------------------------------------------------------

struct InterleavingConfig {
    int num_contexts = 5;  // C
    int max_open = 3;      // B
    int num_rewarding = 2; // O rewarding and O unrewarding objects per context
    double gamma = 0.95;   // per-step survival probability
    double context_reward = 1.0;
    uint64_t env_seed = 0;
    int max_states = 200000;
};

// Tiny enumerable preset (C=2, B=2, O=1) for oracle-grade tests.
InterleavingConfig interleaving_tiny_config();

struct InterleavingEnv {
    TabularMDP mdp;
    InterleavingConfig config;
    // Correct action (0 = left, 1 = right) per query-room state; -1 for
    // non-query states.
    std::vector<int> correct_action;
    // Fraction of query-room steps in the trajectory that chose the
    // rewarding side; NaN if the trajectory visited no query room.
    double fraction_correct(const Trajectory& traj) const;
};

InterleavingEnv build_interleaving(const InterleavingConfig& config);

} // namespace cocoa
