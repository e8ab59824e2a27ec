#include "cocoa/envs.hpp"

#include <cmath>
#include <map>

namespace cocoa {

namespace {

std::vector<RewardAtom> certain(double value) { return {{value, 1.0}}; }
std::vector<TransitionAtom> goto_state(int s) { return {{s, 1.0}}; }

} // namespace

// --------------------------------------------------------------------------
// key-to-door

int KeyToDoorEnv::state_id(int pos, bool has_key, bool door_open) const {
    const int length = config.length;
    require(pos >= 0 && pos < length, "env-bad-state", "position out of range");
    if (pos == 0) {
        require(!has_key && !door_open, "env-bad-state", "no key or door bits at the start");
        return 0;
    }
    if (pos < length - 1) {
        require(!door_open, "env-bad-state", "door bit only exists at the final position");
        return 1 + 2 * (pos - 1) + (has_key ? 1 : 0);
    }
    return 1 + 2 * (length - 2) + (has_key ? 2 : 0) + (door_open ? 1 : 0);
}

KeyToDoorEnv build_key_to_door(const KeyToDoorConfig& config) {
    require(config.length >= 4, "env-bad-config", "track needs key, apple, door and treasure slots");
    const int length = config.length;
    KeyToDoorEnv env;
    env.config = config;
    env.low_reward = 2.0 / length;
    env.high_reward = 18.0 / length;
    env.treasure_reward = config.treasure_sign * (config.aliased ? 2.0 : 4.0) / length;
    env.apple_side.assign(length, 0);
    for (int pos = 1; pos <= length - 3; ++pos)
        env.apple_side[pos] = static_cast<int>(child_seed(config.env_seed, pos) & 1ull);

    TabularMDP& mdp = env.mdp;
    mdp.name = config.aliased ? "key-to-door-aliased" : "key-to-door";
    mdp.num_actions = 4;
    mdp.num_states = 1 + 2 * (length - 2) + 4 + 1;
    mdp.absorbing_state = mdp.num_states - 1;
    mdp.start_state = 0;
    mdp.horizon = length;
    mdp.transitions.assign(static_cast<size_t>(mdp.num_states) * mdp.num_actions, {});
    mdp.rewards.assign(static_cast<size_t>(mdp.num_states) * mdp.num_actions, {});
    mdp.state_features.assign(mdp.num_states, std::vector<double>(9, 0.0));

    auto features = [&](int pos, bool has_key, bool door_open) {
        std::vector<double> f(9, 0.0);
        f[0] = static_cast<double>(pos) / (length - 1);
        bool treasure_here = false;
        if (pos == 0)
            f[5] = 1.0; // key item
        else if (pos <= length - 3)
            f[env.apple_side[pos] == 0 ? 2 : 3] = 1.0; // apple left/right
        else if (pos == length - 2)
            f[4] = 1.0; // door item
        else {
            treasure_here = has_key && (door_open || !config.door_required);
            f[treasure_here ? 6 : 1] = 1.0; // treasure item or empty slot
        }
        f[has_key ? 7 : 8] = 1.0;
        return f;
    };

    for (int pos = 0; pos < length; ++pos) {
        const int keys = pos == 0 ? 1 : 2;
        const int doors = pos == length - 1 ? 2 : 1;
        for (int k = 0; k < keys; ++k) {
            for (int d = 0; d < doors; ++d) {
                const bool has_key = pos == 0 ? false : k == 1;
                const bool door_open = pos == length - 1 && d == 1;
                const int s = env.state_id(pos, has_key, door_open);
                mdp.state_features[s] = features(pos, has_key, door_open);
                for (int a = 0; a < mdp.num_actions; ++a) {
                    // reward
                    std::vector<RewardAtom> r = certain(0.0);
                    if (pos >= 1 && pos <= length - 3) {
                        const int matching =
                            env.apple_side[pos] == 0 ? KeyToDoorEnv::kPickLeft : KeyToDoorEnv::kPickRight;
                        if (a == matching)
                            r = {{env.low_reward, 0.5}, {env.high_reward, 0.5}};
                    } else if (pos == length - 1) {
                        const bool obtainable = has_key && (door_open || !config.door_required);
                        if (obtainable) r = certain(env.treasure_reward);
                    }
                    mdp.rewards[mdp.sa(s, a)] = r;
                    // transition
                    int next;
                    if (pos == length - 1) {
                        next = mdp.absorbing_state;
                    } else if (pos == 0) {
                        next = env.state_id(1, a == KeyToDoorEnv::kPickKey, false);
                    } else if (pos == length - 2) {
                        next = env.state_id(length - 1, has_key, a == KeyToDoorEnv::kOpenDoor);
                    } else {
                        next = env.state_id(pos + 1, has_key, false);
                    }
                    mdp.transitions[mdp.sa(s, a)] = goto_state(next);
                }
            }
        }
    }
    for (int a = 0; a < mdp.num_actions; ++a) {
        mdp.transitions[mdp.sa(mdp.absorbing_state, a)] = goto_state(mdp.absorbing_state);
        mdp.rewards[mdp.sa(mdp.absorbing_state, a)] = certain(0.0);
    }
    validate_mdp(mdp);
    return env;
}

// --------------------------------------------------------------------------
// reward tree

TreeEnv build_tree(const TreeConfig& config) {
    require(config.depth >= 1, "env-bad-config", "tree depth must be positive");
    require(config.num_actions >= 1, "env-bad-config", "tree needs actions");
    require(config.overlap >= 0 && config.overlap < config.num_actions, "env-bad-config",
            "overlap must lie in [0, num_actions)");
    require(config.num_rewards >= 1, "env-bad-config", "need a positive reward modulus");

    TreeEnv env;
    env.config = config;
    env.level_offset.assign(config.depth + 1, 0);
    long long width = 1;
    for (int i = 0; i < config.depth; ++i) {
        env.level_offset[i + 1] = env.level_offset[i] + static_cast<int>(width);
        width = width * (config.num_actions - config.overlap) + config.overlap;
        require(env.level_offset[i + 1] + width < (1ll << 30), "env-too-large",
                "tree state space exceeds builder limits");
    }
    const int real_states = env.level_offset[config.depth];

    TabularMDP& mdp = env.mdp;
    mdp.name = "tree";
    mdp.num_actions = config.num_actions;
    mdp.num_states = real_states + 1;
    mdp.absorbing_state = real_states;
    mdp.start_state = 0;
    mdp.horizon = config.depth;
    mdp.transitions.assign(static_cast<size_t>(mdp.num_states) * mdp.num_actions, {});
    mdp.rewards.assign(static_cast<size_t>(mdp.num_states) * mdp.num_actions, {});
    mdp.state_features.assign(mdp.num_states, std::vector<double>(2, 0.0));

    const long long modulus = config.num_rewards;
    const int shift = config.num_rewards / 2;
    for (int level = 0; level < config.depth; ++level) {
        const int begin = env.level_offset[level], end = env.level_offset[level + 1];
        const int level_width = end - begin;
        for (int s = begin; s < end; ++s) {
            const int j = s - begin;
            mdp.state_features[s] = {static_cast<double>(level + 1) / config.depth,
                                     (j + 0.5) / level_width};
            for (int a = 0; a < mdp.num_actions; ++a) {
                long long raw = (static_cast<long long>(s) +
                                 static_cast<long long>(a) * config.prime + config.reward_seed) %
                                modulus;
                if (raw < 0) raw += modulus;
                mdp.rewards[mdp.sa(s, a)] = certain(static_cast<double>(raw - shift));
                int next;
                if (level == config.depth - 1) {
                    next = mdp.absorbing_state;
                } else {
                    const int child = j * (config.num_actions - config.overlap) + a;
                    next = env.level_offset[level + 1] + child;
                }
                mdp.transitions[mdp.sa(s, a)] = goto_state(next);
            }
        }
    }
    for (int a = 0; a < mdp.num_actions; ++a) {
        mdp.transitions[mdp.sa(mdp.absorbing_state, a)] = goto_state(mdp.absorbing_state);
        mdp.rewards[mdp.sa(mdp.absorbing_state, a)] = certain(0.0);
    }
    validate_mdp(mdp);
    return env;
}

// --------------------------------------------------------------------------
// bandit

TabularMDP build_bandit() {
    TabularMDP mdp;
    mdp.name = "bandit";
    mdp.num_states = 2;
    mdp.num_actions = 2;
    mdp.start_state = 0;
    mdp.absorbing_state = 1;
    mdp.horizon = 1;
    mdp.transitions.assign(4, goto_state(1));
    mdp.rewards = {certain(1.0), certain(-2.0), certain(0.0), certain(0.0)};
    mdp.state_features = {{1.0}, {0.0}};
    validate_mdp(mdp);
    return mdp;
}

Policy bandit_reference_policy() {
    Policy policy = Policy::tabular(2, 2);
    policy.params()[0] = std::log(2.0);
    return policy;
}

// --------------------------------------------------------------------------
// task interleaving

namespace {

struct RoomState {
    // status per context: 0 closed, 1 open with key, 2 open without key
    std::vector<int> status;
    // room: 0 lobby, 1 query, 2 answer
    int room = 0;
    int context = -1;
    int rewarding_index = -1, unrewarding_index = -1, side = -1; // query layout

    bool operator<(const RoomState& other) const {
        if (status != other.status) return status < other.status;
        if (room != other.room) return room < other.room;
        if (context != other.context) return context < other.context;
        if (rewarding_index != other.rewarding_index) return rewarding_index < other.rewarding_index;
        if (unrewarding_index != other.unrewarding_index)
            return unrewarding_index < other.unrewarding_index;
        return side < other.side;
    }
};

} // namespace

InterleavingConfig interleaving_tiny_config() {
    InterleavingConfig config;
    config.num_contexts = 2;
    config.max_open = 2;
    config.num_rewarding = 1;
    return config;
}

double InterleavingEnv::fraction_correct(const Trajectory& traj) const {
    int queries = 0, correct = 0;
    for (const auto& step : traj.steps) {
        const int want = correct_action[step.state];
        if (want < 0) continue;
        ++queries;
        if (step.action == want) ++correct;
    }
    if (queries == 0) return std::nan("");
    return static_cast<double>(correct) / queries;
}

InterleavingEnv build_interleaving(const InterleavingConfig& config) {
    require(config.num_contexts >= 1 && config.max_open >= 1 && config.num_rewarding >= 1,
            "env-bad-config", "need positive context, open and object counts");
    require(config.max_open <= config.num_contexts, "env-bad-config",
            "cannot hold more open contexts than exist");
    require(config.gamma > 0.0 && config.gamma < 1.0, "env-bad-config",
            "survival probability must lie in (0, 1)");
    const int C = config.num_contexts, B = config.max_open, O = config.num_rewarding;
    const int num_objects = 2 * O;

    // Seeded object identities: which object ids are rewarding per context.
    std::vector<std::vector<int>> rewarding_ids(C), unrewarding_ids(C);
    for (int c = 0; c < C; ++c) {
        std::vector<int> ids(num_objects);
        for (int i = 0; i < num_objects; ++i) ids[i] = i;
        Rng shuffle_rng(config.env_seed, 2000 + c);
        for (int i = num_objects - 1; i > 0; --i) {
            const int j = shuffle_rng.next_int(i + 1);
            std::swap(ids[i], ids[j]);
        }
        rewarding_ids[c].assign(ids.begin(), ids.begin() + O);
        unrewarding_ids[c].assign(ids.begin() + O, ids.end());
    }

    InterleavingEnv env;
    env.config = config;
    TabularMDP& mdp = env.mdp;
    mdp.name = "interleaving";
    mdp.num_actions = 2;
    // Horizon: survival mass gamma^(t-1) must drop below 1e-9 (the lobby step
    // is deterministic, death starts with the first room transition).
    mdp.horizon = 2 + static_cast<int>(std::ceil(std::log(1e-9) / std::log(config.gamma)));

    std::map<RoomState, int> ids;
    std::vector<RoomState> states;
    auto intern = [&](const RoomState& rs) {
        auto it = ids.find(rs);
        if (it != ids.end()) return it->second;
        const int id = static_cast<int>(states.size());
        require(id < config.max_states, "env-too-large",
                "interleaving state space exceeds the configured cap");
        ids.emplace(rs, id);
        states.push_back(rs);
        return id;
    };

    RoomState lobby;
    lobby.status.assign(C, 0);
    const int lobby_id = intern(lobby);

    // Distribution over successor rooms given the post-step status.
    auto room_distribution = [&](const std::vector<int>& status) {
        std::vector<std::pair<RoomState, double>> out;
        int open_count = 0;
        for (int v : status)
            if (v != 0) ++open_count;
        std::vector<int> open_list, closed_list;
        for (int c = 0; c < C; ++c) (status[c] != 0 ? open_list : closed_list).push_back(c);
        double p_answer = static_cast<double>(open_count) / B;
        if (closed_list.empty()) p_answer = 1.0;
        if (open_list.empty()) p_answer = 0.0;
        if (p_answer > 0.0) {
            for (int c : open_list) {
                RoomState rs;
                rs.status = status;
                rs.room = 2;
                rs.context = c;
                out.emplace_back(rs, p_answer / open_list.size());
            }
        }
        if (p_answer < 1.0) {
            const double share = (1.0 - p_answer) / (closed_list.size() * O * O * 2);
            for (int c : closed_list)
                for (int i = 0; i < O; ++i)
                    for (int j = 0; j < O; ++j)
                        for (int side = 0; side < 2; ++side) {
                            RoomState rs;
                            rs.status = status;
                            rs.room = 1;
                            rs.context = c;
                            rs.rewarding_index = i;
                            rs.unrewarding_index = j;
                            rs.side = side;
                            out.emplace_back(rs, share);
                        }
        }
        return out;
    };

    // BFS over reachable room states; transition rows are filled after ids
    // stabilize, so store the raw expansion first.
    struct Expansion {
        std::vector<RewardAtom> reward[2];
        std::vector<std::pair<RoomState, double>> next[2];
        bool death[2] = {false, false};
    };
    std::vector<Expansion> expansions;
    for (size_t cursor = 0; cursor < states.size(); ++cursor) {
        const RoomState rs = states[cursor];
        Expansion ex;
        for (int a = 0; a < 2; ++a) {
            if (rs.room == 0) {
                ex.reward[a] = certain(0.0);
                std::vector<int> fresh(C, 0);
                ex.next[a] = room_distribution(fresh);
                ex.death[a] = false; // synthetic start transition
            } else if (rs.room == 1) {
                ex.reward[a] = certain(0.0);
                std::vector<int> status = rs.status;
                const int correct = rs.side == 0 ? 0 : 1;
                status[rs.context] = a == correct ? 1 : 2;
                ex.next[a] = room_distribution(status);
                ex.death[a] = true;
            } else {
                const bool has_key = rs.status[rs.context] == 1;
                ex.reward[a] = certain(has_key ? config.context_reward : 0.0);
                std::vector<int> status = rs.status;
                status[rs.context] = 0;
                ex.next[a] = room_distribution(status);
                ex.death[a] = true;
            }
            for (const auto& [next_rs, prob] : ex.next[a]) {
                (void)prob;
                intern(next_rs);
            }
        }
        expansions.push_back(std::move(ex));
    }

    const int real_states = static_cast<int>(states.size());
    mdp.num_states = real_states + 1;
    mdp.absorbing_state = real_states;
    mdp.start_state = lobby_id;
    mdp.transitions.assign(static_cast<size_t>(mdp.num_states) * 2, {});
    mdp.rewards.assign(static_cast<size_t>(mdp.num_states) * 2, {});
    const int feat_dim = 2 + C + 2 * num_objects + 3 * C;
    mdp.state_features.assign(mdp.num_states, std::vector<double>(feat_dim, 0.0));
    env.correct_action.assign(mdp.num_states, -1);

    for (int s = 0; s < real_states; ++s) {
        const RoomState& rs = states[s];
        auto& f = mdp.state_features[s];
        if (rs.room != 0) {
            f[rs.room == 1 ? 0 : 1] = 1.0;
            f[2 + rs.context] = 1.0;
            if (rs.room == 1) {
                const int robj = rewarding_ids[rs.context][rs.rewarding_index];
                const int uobj = unrewarding_ids[rs.context][rs.unrewarding_index];
                const int left = rs.side == 0 ? robj : uobj;
                const int right = rs.side == 0 ? uobj : robj;
                f[2 + C + left] = 1.0;
                f[2 + C + num_objects + right] = 1.0;
                env.correct_action[s] = rs.side == 0 ? 0 : 1;
            }
            for (int c = 0; c < C; ++c) f[2 + C + 2 * num_objects + 3 * c + rs.status[c]] = 1.0;
        }
        for (int a = 0; a < 2; ++a) {
            const Expansion& ex = expansions[s];
            mdp.rewards[mdp.sa(s, a)] = ex.reward[a];
            std::vector<TransitionAtom> row;
            const double survive = ex.death[a] ? config.gamma : 1.0;
            for (const auto& [next_rs, prob] : ex.next[a])
                row.push_back({ids.at(next_rs), prob * survive});
            if (ex.death[a]) row.push_back({mdp.absorbing_state, 1.0 - config.gamma});
            mdp.transitions[mdp.sa(s, a)] = std::move(row);
        }
    }
    for (int a = 0; a < 2; ++a) {
        mdp.transitions[mdp.sa(mdp.absorbing_state, a)] = goto_state(mdp.absorbing_state);
        mdp.rewards[mdp.sa(mdp.absorbing_state, a)] = certain(0.0);
    }
    validate_mdp(mdp);
    return env;
}

} // namespace cocoa
