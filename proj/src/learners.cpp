#include "cocoa/learners.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "cocoa/error.hpp"

namespace cocoa {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

// --- TabularHindsight --------------------------------------------------------

TabularHindsight::TabularHindsight(int num_states, int num_actions, int num_outcomes)
    : num_states_(num_states), num_actions_(num_actions), num_outcomes_(num_outcomes),
      counts_(static_cast<size_t>(num_states) * num_outcomes * num_actions, 0.0),
      totals_(static_cast<size_t>(num_states) * num_outcomes, 0.0),
      action_pairs_(static_cast<size_t>(num_states) * num_actions, 0.0),
      state_pairs_(num_states, 0.0) {}

void TabularHindsight::observe(const Trajectory& traj, const OutcomeEncoding& encoding,
                               double gamma) {
    const int len = static_cast<int>(traj.steps.size());
    for (int t = 0; t < len; ++t) {
        const int s = traj.steps[t].state;
        const int a = traj.steps[t].action;
        double wk = 1.0;
        for (int k = 1; t + k < len; ++k) {
            wk *= gamma;
            const Step& fut = traj.steps[t + k];
            const int u = encoding.encode(fut.state, fut.action, fut.reward);
            const size_t su = static_cast<size_t>(s) * num_outcomes_ + u;
            counts_[su * num_actions_ + a] += wk;
            totals_[su] += wk;
            action_pairs_[static_cast<size_t>(s) * num_actions_ + a] += wk;
            state_pairs_[s] += wk;
        }
    }
}

bool TabularHindsight::seen(int s, int u) const {
    return totals_[static_cast<size_t>(s) * num_outcomes_ + u] > 0.0;
}

double TabularHindsight::hindsight(int s, int u, int a) const {
    const size_t su = static_cast<size_t>(s) * num_outcomes_ + u;
    if (totals_[su] <= 0.0) return 0.0;
    return counts_[su * num_actions_ + a] / totals_[su];
}

double TabularHindsight::coefficient(const Policy& policy, int s, int a, int u) const {
    if (!seen(s, u)) return 0.0;
    const double pa = policy.probs(s)[a];
    require(pa > 0.0, "policy-zero-probability", "hindsight ratio needs pi(a|s) > 0");
    return hindsight(s, u, a) / pa - 1.0;
}

// Empirical P(u later | s, a) / P(u later | s) from the shared pair stream.
// 1 (no evidence either way) when the action has never been tried from s.
double TabularHindsight::forward_ratio(int s, int a, int u) const {
    const size_t su = static_cast<size_t>(s) * num_outcomes_ + u;
    const double na = action_pairs_[static_cast<size_t>(s) * num_actions_ + a];
    if (totals_[su] <= 0.0 || na <= 0.0) return 1.0;
    const double per_action = counts_[su * num_actions_ + a] / na;
    const double marginal = totals_[su] / state_pairs_[s];
    return per_action / marginal;
}

double TabularHindsight::forward_coefficient(const Policy& policy, int s, int a, int u) const {
    if (!seen(s, u)) return 0.0;
    const std::vector<double> probs = policy.probs(s);
    double mixture = 0.0;
    for (int b = 0; b < num_actions_; ++b) mixture += probs[b] * forward_ratio(s, b, u);
    if (mixture <= 0.0) return 0.0;
    return forward_ratio(s, a, u) / mixture - 1.0;
}

void TabularHindsight::decay(double factor) {
    require(factor > 0.0 && factor <= 1.0, "hindsight-bad-decay",
            "count decay factor must lie in (0, 1]");
    if (factor == 1.0) return;
    for (double& v : counts_) v *= factor;
    for (double& v : totals_) v *= factor;
    for (double& v : action_pairs_) v *= factor;
    for (double& v : state_pairs_) v *= factor;
}

// --- ContrastiveTabular ------------------------------------------------------

ContrastiveTabular::ContrastiveTabular(int num_states, int num_actions, int num_outcomes,
                                       double lr)
    : num_states_(num_states), num_actions_(num_actions), num_outcomes_(num_outcomes), lr_(lr),
      x_(static_cast<size_t>(num_states) * num_outcomes * num_actions, 0.0) {}

void ContrastiveTabular::observe(const Trajectory& traj, const OutcomeEncoding& encoding,
                                 const Policy& policy, double gamma) {
    const int len = static_cast<int>(traj.steps.size());
    for (int t = 0; t < len; ++t) {
        const int s = traj.steps[t].state;
        const int a_obs = traj.steps[t].action;
        const std::vector<double> probs = policy.probs(s);
        double wk = 1.0;
        for (int k = 1; t + k < len; ++k) {
            wk *= gamma;
            const Step& fut = traj.steps[t + k];
            const int u = encoding.encode(fut.state, fut.action, fut.reward);
            double* row = &x_[(static_cast<size_t>(s) * num_outcomes_ + u) * num_actions_];
            // gradient of -log sig(x_obs) - sum_a pi(a) log(1 - sig(x_a)),
            // evaluated before either update lands
            const double pos = 1.0 - sigmoid(row[a_obs]);
            std::vector<double> neg(num_actions_);
            for (int a = 0; a < num_actions_; ++a) neg[a] = probs[a] * sigmoid(row[a]);
            row[a_obs] += lr_ * wk * pos;
            for (int a = 0; a < num_actions_; ++a) row[a] -= lr_ * wk * neg[a];
        }
    }
}

double ContrastiveTabular::score(int s, int a, int u) const {
    return x_[(static_cast<size_t>(s) * num_outcomes_ + u) * num_actions_ + a];
}

double ContrastiveTabular::coefficient(int s, int a, int u) const {
    return std::exp(score(s, a, u)) - 1.0;
}

// --- HypernetHindsight -------------------------------------------------------

HypernetHindsight::HypernetHindsight(const TabularMDP& mdp, const OutcomeEncoding& encoding,
                                     const HypernetHindsightConfig& cfg) {
    Rng rng(cfg.init_seed, 7001);
    net_ = HindsightHyperNet(mdp.feature_dim(), encoding.feature_dim(), mdp.num_actions,
                             cfg.trunk_hidden, cfg.gated_hidden, cfg.with_complement, rng);
    opt_ = AdamW(net_.param_count(), cfg.lr, 0.0, cfg.clip_norm);
    state_features_ = mdp.state_features;
    outcome_features_.resize(encoding.num_outcomes());
    for (int u = 0; u < encoding.num_outcomes(); ++u)
        outcome_features_[u] = encoding.outcome_features(u);
}

void HypernetHindsight::update(const std::vector<Trajectory>& batch,
                               const OutcomeEncoding& encoding, const Policy& policy,
                               double gamma) {
    std::vector<double> grad(net_.param_count(), 0.0);
    HindsightHyperNet::Workspace ws;
    double total_weight = 0.0;
    for (const Trajectory& traj : batch) {
        const int len = static_cast<int>(traj.steps.size());
        for (int t = 0; t < len; ++t) {
            double wk = 1.0;
            for (int k = 1; t + k < len; ++k) {
                wk *= gamma;
                total_weight += wk;
            }
        }
    }
    if (total_weight == 0.0) return;

    for (const Trajectory& traj : batch) {
        const int len = static_cast<int>(traj.steps.size());
        for (int t = 0; t < len; ++t) {
            const int s = traj.steps[t].state;
            const int a_obs = traj.steps[t].action;
            const std::vector<double> logits = policy.logits(s);
            double wk = 1.0;
            for (int k = 1; t + k < len; ++k) {
                wk *= gamma;
                const Step& fut = traj.steps[t + k];
                const int u = encoding.encode(fut.state, fut.action, fut.reward);
                const std::vector<double> out =
                    net_.forward(state_features_[s], outcome_features_[u], logits, ws);
                // softmax cross-entropy cotangent: p - onehot(a_obs)
                double mx = out[0];
                for (double v : out) mx = std::max(mx, v);
                double z = 0.0;
                std::vector<double> dout(out.size());
                for (size_t i = 0; i < out.size(); ++i) {
                    dout[i] = std::exp(out[i] - mx);
                    z += dout[i];
                }
                for (size_t i = 0; i < out.size(); ++i) dout[i] = dout[i] / z * wk / total_weight;
                dout[a_obs] -= wk / total_weight;
                net_.backward(ws, dout, grad);
            }
        }
    }
    opt_.step(net_.params(), grad);
}

std::vector<double> HypernetHindsight::action_probs(const Policy& policy, int s, int u) const {
    const std::vector<double> out =
        net_.forward(state_features_[s], outcome_features_[u], policy.logits(s));
    double mx = out[0];
    for (double v : out) mx = std::max(mx, v);
    double z = 0.0;
    std::vector<double> p(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        p[i] = std::exp(out[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

double HypernetHindsight::hindsight(const Policy& policy, int s, int u, int a) const {
    return action_probs(policy, s, u)[a];
}

double HypernetHindsight::coefficient(const Policy& policy, int s, int a, int u) const {
    const double pa = policy.probs(s)[a];
    require(pa > 0.0, "policy-zero-probability", "hindsight ratio needs pi(a|s) > 0");
    return hindsight(policy, s, u, a) / pa - 1.0;
}

// --- SRLearner ----------------------------------------------------------------

SRLearner::SRLearner(int num_states, int num_actions, int absorbing_state, double lr)
    : num_states_(num_states), num_actions_(num_actions), absorbing_state_(absorbing_state),
      lr_(lr), m_(static_cast<size_t>(num_states) * num_actions * num_states, 0.0) {}

void SRLearner::observe(const Trajectory& traj, const Policy& policy) {
    const int len = static_cast<int>(traj.steps.size());
    std::vector<double> target(num_states_);
    for (int t = 0; t < len; ++t) {
        const int s = traj.steps[t].state;
        const int a = traj.steps[t].action;
        const int sp = (t + 1 < len) ? traj.steps[t + 1].state : absorbing_state_;
        std::fill(target.begin(), target.end(), 0.0);
        if (sp != absorbing_state_) {
            target[sp] = 1.0;
            const std::vector<double> probs = policy.probs(sp);
            for (int ap = 0; ap < num_actions_; ++ap) {
                if (probs[ap] == 0.0) continue;
                const double* row = &m_[(static_cast<size_t>(sp) * num_actions_ + ap) *
                                        num_states_];
                for (int c = 0; c < num_states_; ++c) target[c] += probs[ap] * row[c];
            }
        }
        double* row = &m_[(static_cast<size_t>(s) * num_actions_ + a) * num_states_];
        for (int c = 0; c < num_states_; ++c) {
            row[c] += lr_ * (target[c] - row[c]);
            if (row[c] < 0.0) row[c] = 0.0;
        }
    }
}

double SRLearner::at(int s, int a, int sp) const {
    return m_[(static_cast<size_t>(s) * num_actions_ + a) * num_states_ + sp];
}

// --- TdCritic -------------------------------------------------------------------

TdCritic::TdCritic(const TabularMDP& mdp, const TdCriticConfig& cfg)
    : cfg_(cfg), num_states_(mdp.num_states), num_actions_(mdp.num_actions),
      absorbing_state_(mdp.absorbing_state) {
    if (cfg_.tabular) {
        const size_t n = cfg_.q_flavor
                             ? static_cast<size_t>(num_states_) * num_actions_
                             : static_cast<size_t>(num_states_);
        table_.assign(n, 0.0);
        visits_.assign(n, 0);
    } else {
        Rng rng(cfg_.init_seed, 7101);
        std::vector<int> sizes;
        sizes.push_back(mdp.feature_dim());
        for (int h : cfg_.hidden) sizes.push_back(h);
        sizes.push_back(cfg_.q_flavor ? num_actions_ : 1);
        net_ = Mlp(sizes, rng);
        opt_ = AdamW(net_.param_count(), cfg_.lr, 0.0, cfg_.clip_norm);
        state_features_ = mdp.state_features;
    }
}

double TdCritic::raw_value(int s) const {
    if (s == absorbing_state_) return 0.0;
    if (cfg_.tabular) return table_[s];
    return net_.forward(state_features_[s])[0];
}

double TdCritic::raw_qvalue(int s, int a) const {
    if (s == absorbing_state_) return 0.0;
    if (cfg_.tabular) return table_[static_cast<size_t>(s) * num_actions_ + a];
    return net_.forward(state_features_[s])[a];
}

double TdCritic::value(int s) const {
    require(!cfg_.q_flavor, "critic-wrong-flavor", "state-value query on an action-value critic");
    return raw_value(s);
}

double TdCritic::value(int s, const Policy& policy) const {
    if (!cfg_.q_flavor) return raw_value(s);
    if (s == absorbing_state_) return 0.0;
    const std::vector<double> probs = policy.probs(s);
    std::vector<double> q(num_actions_);
    if (cfg_.tabular)
        for (int a = 0; a < num_actions_; ++a)
            q[a] = table_[static_cast<size_t>(s) * num_actions_ + a];
    else
        q = net_.forward(state_features_[s]);
    double v = 0.0;
    for (int a = 0; a < num_actions_; ++a) v += probs[a] * q[a];
    return v;
}

double TdCritic::qvalue(int s, int a) const {
    require(cfg_.q_flavor, "critic-wrong-flavor", "action-value query on a state-value critic");
    return raw_qvalue(s, a);
}

void TdCritic::update(const std::vector<Trajectory>& batch, const Policy& policy) {
    // lambda-return targets with the critic frozen
    std::vector<std::vector<double>> targets(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const Trajectory& traj = batch[i];
        const int len = static_cast<int>(traj.steps.size());
        targets[i].assign(len, 0.0);
        double g = 0.0;
        for (int t = len - 1; t >= 0; --t) {
            const int sp = (t + 1 < len) ? traj.steps[t + 1].state : absorbing_state_;
            const double boot = cfg_.q_flavor ? value(sp, policy) : raw_value(sp);
            g = traj.steps[t].reward +
                cfg_.gamma * ((1.0 - cfg_.lambda) * boot + cfg_.lambda * g);
            targets[i][t] = g;
        }
    }

    if (cfg_.tabular) {
        for (size_t i = 0; i < batch.size(); ++i) {
            const Trajectory& traj = batch[i];
            for (size_t t = 0; t < traj.steps.size(); ++t) {
                const size_t idx =
                    cfg_.q_flavor ? static_cast<size_t>(traj.steps[t].state) * num_actions_ +
                                        traj.steps[t].action
                                  : static_cast<size_t>(traj.steps[t].state);
                visits_[idx] += 1;
                const double lr = cfg_.harmonic_lr ? 1.0 / visits_[idx] : cfg_.lr;
                table_[idx] += lr * (targets[i][t] - table_[idx]);
            }
        }
        return;
    }

    size_t num_steps = 0;
    for (const Trajectory& traj : batch) num_steps += traj.steps.size();
    if (num_steps == 0) return;
    std::vector<double> grad(net_.param_count(), 0.0);
    Mlp::Workspace ws;
    for (size_t i = 0; i < batch.size(); ++i) {
        const Trajectory& traj = batch[i];
        for (size_t t = 0; t < traj.steps.size(); ++t) {
            const int s = traj.steps[t].state;
            const std::vector<double> out = net_.forward(state_features_[s], ws);
            std::vector<double> dout(out.size(), 0.0);
            const int a = cfg_.q_flavor ? traj.steps[t].action : 0;
            dout[a] = (out[a] - targets[i][t]) / static_cast<double>(num_steps);
            net_.backward(ws, dout, grad);
        }
    }
    opt_.step(net_.params(), grad);
}

std::vector<double> TdCritic::v_table() const {
    require(!cfg_.q_flavor && cfg_.tabular, "critic-wrong-flavor",
            "v_table needs a tabular state-value critic");
    return table_;
}

std::vector<double> TdCritic::q_table() const {
    require(cfg_.q_flavor && cfg_.tabular, "critic-wrong-flavor",
            "q_table needs a tabular action-value critic");
    return table_;
}

// --- reward feature pipeline ----------------------------------------------------

RewardFeatureResult learn_reward_features(const TabularMDP& mdp, const Policy& behavior,
                                          const RewardFeatureConfig& cfg) {
    struct Sample {
        int state, action;
        double reward;
    };
    std::vector<Sample> buffer;
    const int episodes = cfg.pretrain_batches * cfg.batch_size;
    for (int e = 0; e < episodes; ++e) {
        Rng rng(cfg.seed, 100000 + e);
        const Trajectory traj = sample_trajectory(mdp, behavior, rng);
        for (const Step& st : traj.steps) buffer.push_back({st.state, st.action, st.reward});
    }
    require(!buffer.empty(), "reward-features-empty", "behavior policy produced no steps");

    Rng init_rng(cfg.seed, 99);
    RewardFeatureResult result;
    result.model = MaskedRewardModel(mdp.feature_dim(), mdp.num_actions, init_rng);
    AdamW opt(result.model.param_count(), cfg.lr);
    std::vector<double> grad(result.model.param_count());
    const double inv_n = 1.0 / static_cast<double>(buffer.size());
    for (int step = 0; step < cfg.train_steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (const Sample& smp : buffer) {
            const std::vector<double>& feat = mdp.state_features[smp.state];
            const double pred = result.model.predict(feat, smp.action);
            const double err = pred - smp.reward;
            loss += err * err * inv_n;
            result.model.backward(feat, smp.action, 2.0 * err * inv_n, grad);
        }
        opt.step(result.model.params(), grad);
        result.model.apply_decay(cfg.lr, cfg.l1_mask, cfg.l2_readout);
        result.final_loss = loss;
    }

    // group (s, a) pairs by their active-bit pattern, ids in scan order
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<int> sa_to_outcome(static_cast<size_t>(S) * A, -1);
    std::map<std::string, int> ids;
    std::vector<std::vector<double>> outcome_features;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const std::vector<uint8_t> bits =
                result.model.encode_bits(mdp.state_features[s], a, cfg.bit_threshold);
            std::string key(bits.begin(), bits.end());
            auto [it, inserted] = ids.try_emplace(key, static_cast<int>(ids.size()));
            if (inserted) outcome_features.emplace_back(bits.begin(), bits.end());
            sa_to_outcome[static_cast<size_t>(s) * A + a] = it->second;
        }
    result.num_outcomes = static_cast<int>(ids.size());

    std::vector<double> sums(result.num_outcomes, 0.0), counts(result.num_outcomes, 0.0);
    for (const Sample& smp : buffer) {
        const int u = sa_to_outcome[static_cast<size_t>(smp.state) * A + smp.action];
        sums[u] += smp.reward;
        counts[u] += 1.0;
    }
    std::vector<double> outcome_rewards(result.num_outcomes, 0.0);
    for (int u = 0; u < result.num_outcomes; ++u)
        if (counts[u] > 0.0) outcome_rewards[u] = sums[u] / counts[u];

    result.encoding = OutcomeEncoding::table(A, sa_to_outcome, outcome_features, outcome_rewards,
                                             "reward-features");
    return result;
}

} // namespace cocoa
