#include "cocoa/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace cocoa {

OutcomeEncoding OutcomeEncoding::state(const TabularMDP& mdp) {
    OutcomeEncoding e;
    e.kind_ = EncodingKind::State;
    e.name_ = "state";
    e.num_outcomes_ = mdp.num_states;
    e.feature_rows_ = mdp.state_features;
    e.feature_dim_ = mdp.feature_dim();
    return e;
}

OutcomeEncoding OutcomeEncoding::reward(const TabularMDP& mdp) {
    return reward_values(mdp.reward_support());
}

OutcomeEncoding OutcomeEncoding::reward_values(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    OutcomeEncoding e;
    e.kind_ = EncodingKind::Reward;
    e.name_ = "reward";
    e.reward_values_ = std::move(values);
    require(!e.reward_values_.empty(), "encoding-empty-support", "MDP has no reward atoms");
    e.num_outcomes_ = static_cast<int>(e.reward_values_.size());
    e.outcome_rewards_ = e.reward_values_;
    e.feature_dim_ = 1;
    return e;
}

OutcomeEncoding OutcomeEncoding::tree_group(int num_rewards, int num_groups, long long prime,
                                            long long seed) {
    require(num_rewards > 0 && num_groups > 0, "encoding-bad-config",
            "group encoding needs positive reward and group counts");
    OutcomeEncoding e;
    e.kind_ = EncodingKind::TreeGroup;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "group%d", num_groups);
    e.name_ = buf;
    e.num_rewards_ = num_rewards;
    e.num_groups_ = num_groups;
    e.prime_ = prime;
    e.seed_ = seed;
    e.num_outcomes_ = num_rewards * num_groups;
    e.outcome_rewards_.resize(e.num_outcomes_);
    for (int u = 0; u < e.num_outcomes_; ++u)
        e.outcome_rewards_[u] = static_cast<double>(u % num_rewards - num_rewards / 2);
    e.feature_dim_ = 2;
    return e;
}

OutcomeEncoding OutcomeEncoding::table(int num_actions, std::vector<int> sa_to_outcome,
                                       std::vector<std::vector<double>> features,
                                       std::vector<double> rewards, std::string name) {
    OutcomeEncoding e;
    e.kind_ = EncodingKind::Table;
    e.name_ = std::move(name);
    e.num_actions_ = num_actions;
    e.num_outcomes_ = static_cast<int>(rewards.size());
    e.sa_to_outcome_ = std::move(sa_to_outcome);
    e.feature_rows_ = std::move(features);
    e.outcome_rewards_ = std::move(rewards);
    e.feature_dim_ = e.feature_rows_.empty() ? 0 : static_cast<int>(e.feature_rows_[0].size());
    for (int u : e.sa_to_outcome_)
        require(u >= 0 && u < e.num_outcomes_, "encoding-bad-config", "table outcome id out of range");
    return e;
}

int OutcomeEncoding::encode(int state, int action, double reward) const {
    switch (kind_) {
    case EncodingKind::State:
        require(state >= 0 && state < num_outcomes_, "encoding-unknown-triple",
                "state id outside encoding range");
        return state;
    case EncodingKind::Reward: {
        const auto it = std::lower_bound(reward_values_.begin(), reward_values_.end(), reward);
        require(it != reward_values_.end() && *it == reward, "encoding-unknown-triple",
                "reward value outside the finite support");
        return static_cast<int>(it - reward_values_.begin());
    }
    case EncodingKind::TreeGroup: {
        const long long span = static_cast<long long>(num_outcomes_);
        long long raw = (static_cast<long long>(state) + static_cast<long long>(action) * prime_ +
                         seed_) % span;
        if (raw < 0) raw += span;
        return static_cast<int>(raw);
    }
    case EncodingKind::Table: {
        const size_t idx = static_cast<size_t>(state) * num_actions_ + action;
        require(idx < sa_to_outcome_.size(), "encoding-unknown-triple",
                "state-action pair outside encoding table");
        return sa_to_outcome_[idx];
    }
    }
    throw Error("encoding-bad-config", "unreachable encoding kind");
}

double OutcomeEncoding::outcome_reward(int outcome) const {
    require(kind_ != EncodingKind::State, "encoding-reward-undefined",
            "state outcomes have no policy-free expected reward");
    require(outcome >= 0 && outcome < num_outcomes_, "encoding-unknown-outcome",
            "outcome id out of range");
    return outcome_rewards_[outcome];
}

std::vector<double> OutcomeEncoding::outcome_features(int outcome) const {
    require(outcome >= 0 && outcome < num_outcomes_, "encoding-unknown-outcome",
            "outcome id out of range");
    switch (kind_) {
    case EncodingKind::State:
    case EncodingKind::Table:
        return feature_rows_[outcome];
    case EncodingKind::Reward:
        return {outcome_rewards_[outcome]};
    case EncodingKind::TreeGroup:
        return {static_cast<double>(outcome) / num_outcomes_, outcome_rewards_[outcome]};
    }
    throw Error("encoding-bad-config", "unreachable encoding kind");
}

FullyPredictiveReport fully_predictive_report(const TabularMDP& mdp,
                                              const OutcomeEncoding& encoding) {
    require(encoding.kind() != EncodingKind::State, "encoding-check-not-applicable",
            "state encoding is fully predictive by the Markov property; check applies to "
            "reward-carrying encodings");
    FullyPredictiveReport report;
    // canonical conditional reward distribution per outcome: (value -> prob)
    struct Owner {
        int s, a;
        std::map<double, double> dist;
    };
    std::map<int, Owner> seen;
    char buf[160];
    for (int s = 0; s < mdp.num_states; ++s) {
        if (s == mdp.absorbing_state) continue;
        for (int a = 0; a < mdp.num_actions; ++a) {
            // conditional p(r | s, a, u) for each outcome this pair can hit
            std::map<int, std::map<double, double>> by_outcome;
            std::map<int, double> mass;
            for (const auto& atom : mdp.rewards[mdp.sa(s, a)]) {
                if (atom.prob <= 0.0) continue;
                const int u = encoding.encode(s, a, atom.value);
                by_outcome[u][atom.value] += atom.prob;
                mass[u] += atom.prob;
            }
            for (auto& [u, dist] : by_outcome) {
                for (auto& [value, prob] : dist) prob /= mass[u];
                auto it = seen.find(u);
                if (it == seen.end()) {
                    seen.emplace(u, Owner{s, a, dist});
                    continue;
                }
                bool same = it->second.dist.size() == dist.size();
                if (same) {
                    auto jt = it->second.dist.begin();
                    for (auto kt = dist.begin(); kt != dist.end(); ++kt, ++jt) {
                        if (std::fabs(kt->first - jt->first) > 1e-12 ||
                            std::fabs(kt->second - jt->second) > 1e-12) {
                            same = false;
                            break;
                        }
                    }
                }
                if (!same) {
                    report.ok = false;
                    std::snprintf(buf, sizeof(buf),
                                  "outcome %d: conditional rewards differ between (s=%d,a=%d) and "
                                  "(s=%d,a=%d)",
                                  u, it->second.s, it->second.a, s, a);
                    report.collisions.push_back(buf);
                }
            }
        }
    }
    return report;
}

} // namespace cocoa
