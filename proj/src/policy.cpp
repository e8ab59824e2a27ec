#include "cocoa/policy.hpp"

#include <algorithm>
#include <cmath>

namespace cocoa {

Policy Policy::tabular(int num_states, int num_actions, double epsilon) {
    require(num_states > 0 && num_actions > 0, "policy-bad-shape", "need positive state/action counts");
    require(epsilon >= 0.0 && epsilon <= 1.0, "policy-bad-epsilon", "epsilon must lie in [0, 1]");
    Policy p;
    p.tabular_ = true;
    p.num_states_ = num_states;
    p.num_actions_ = num_actions;
    p.epsilon_ = epsilon;
    p.table_.assign(static_cast<size_t>(num_states) * num_actions, 0.0);
    return p;
}

Policy Policy::mlp(std::vector<std::vector<double>> state_features, int num_actions,
                   const std::vector<int>& hidden, uint64_t init_seed, double epsilon) {
    require(!state_features.empty(), "policy-bad-shape", "need per-state features");
    require(num_actions > 0, "policy-bad-shape", "need positive action count");
    require(epsilon >= 0.0 && epsilon <= 1.0, "policy-bad-epsilon", "epsilon must lie in [0, 1]");
    Policy p;
    p.tabular_ = false;
    p.num_states_ = static_cast<int>(state_features.size());
    p.num_actions_ = num_actions;
    p.epsilon_ = epsilon;
    std::vector<int> sizes;
    sizes.push_back(static_cast<int>(state_features[0].size()));
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(num_actions);
    Rng rng(init_seed);
    p.net_ = Mlp(sizes, rng);
    p.features_ = std::make_shared<const std::vector<std::vector<double>>>(std::move(state_features));
    return p;
}

std::vector<double>& Policy::params() { return tabular_ ? table_ : net_.params(); }
const std::vector<double>& Policy::params() const { return tabular_ ? table_ : net_.params(); }

std::vector<double> Policy::logits(int state) const {
    require(state >= 0 && state < num_states_, "policy-unknown-state", "state id out of range");
    if (tabular_)
        return std::vector<double>(table_.begin() + static_cast<size_t>(state) * num_actions_,
                                   table_.begin() + static_cast<size_t>(state + 1) * num_actions_);
    return net_.forward((*features_)[state]);
}

std::vector<double> Policy::softmax_probs(int state) const {
    std::vector<double> l = logits(state);
    const double peak = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    for (double& v : l) {
        v = std::exp(v - peak);
        z += v;
    }
    for (double& v : l) v /= z;
    return l;
}

std::vector<double> Policy::probs(int state) const {
    std::vector<double> p = softmax_probs(state);
    const double floor = epsilon_ / num_actions_;
    for (double& v : p) v = (1.0 - epsilon_) * v + floor;
    return p;
}

void Policy::add_logit_grad(int state, const std::vector<double>& dlogits,
                            std::vector<double>& grad) const {
    if (tabular_) {
        double* row = grad.data() + static_cast<size_t>(state) * num_actions_;
        for (int a = 0; a < num_actions_; ++a) row[a] += dlogits[a];
        return;
    }
    Mlp::Workspace ws;
    net_.forward((*features_)[state], ws);
    net_.backward(ws, dlogits, grad);
}

void Policy::add_grad_pi(int state, int action, double coeff, std::vector<double>& grad) const {
    // d pi(a|s) / d logit_b = (1 - eps) * p_a (delta_ab - p_b) with p = softmax.
    const std::vector<double> p = softmax_probs(state);
    std::vector<double> dlogits(num_actions_);
    const double scale = coeff * (1.0 - epsilon_) * p[action];
    for (int b = 0; b < num_actions_; ++b)
        dlogits[b] = scale * ((b == action ? 1.0 : 0.0) - p[b]);
    add_logit_grad(state, dlogits, grad);
}

void Policy::add_grad_log_pi(int state, int action, double coeff, std::vector<double>& grad) const {
    const std::vector<double> pi = probs(state);
    require(pi[action] > 0.0, "policy-zero-probability", "log-gradient at zero-probability action");
    add_grad_pi(state, action, coeff / pi[action], grad);
}

void Policy::add_grad_entropy(int state, double coeff, std::vector<double>& grad) const {
    // H = -sum_a pi_a log pi_a; dH/dlogit_b = -(1-eps) p_b [ (log pi_b + 1)
    //   - sum_a p_a (log pi_a + 1) ] with p = softmax, pi the mixed probs.
    const std::vector<double> p = softmax_probs(state);
    const std::vector<double> pi = probs(state);
    std::vector<double> term(num_actions_);
    double mean = 0.0;
    for (int a = 0; a < num_actions_; ++a) {
        term[a] = std::log(pi[a]) + 1.0;
        mean += p[a] * term[a];
    }
    std::vector<double> dlogits(num_actions_);
    for (int b = 0; b < num_actions_; ++b)
        dlogits[b] = -coeff * (1.0 - epsilon_) * p[b] * (term[b] - mean);
    add_logit_grad(state, dlogits, grad);
}

} // namespace cocoa
