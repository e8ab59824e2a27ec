#pragma once

#include <memory>
#include <vector>

#include "cocoa/nets.hpp"

namespace cocoa {

// Stochastic softmax policy with an optional epsilon floor:
//   pi(a|s) = (1 - eps) * softmax(logits(s))_a + eps / num_actions.
// Two parameterizations share the interface: a logit table over
// (state, action), or an MLP from state features to action logits. Gradients
// are accumulated into caller-provided flat vectors aligned with params().
class Policy {
public:
    static Policy tabular(int num_states, int num_actions, double epsilon = 0.0);
    static Policy mlp(std::vector<std::vector<double>> state_features, int num_actions,
                      const std::vector<int>& hidden, uint64_t init_seed, double epsilon = 0.0);

    bool is_tabular() const { return tabular_; }
    int num_actions() const { return num_actions_; }
    int param_count() const { return static_cast<int>(params().size()); }
    std::vector<double>& params();
    const std::vector<double>& params() const;

    double epsilon() const { return epsilon_; }
    void set_epsilon(double eps) { epsilon_ = eps; }

    std::vector<double> logits(int state) const;
    std::vector<double> probs(int state) const;

    // grad += coeff * d pi(action|state) / d theta
    void add_grad_pi(int state, int action, double coeff, std::vector<double>& grad) const;
    // grad += coeff * d log pi(action|state) / d theta
    void add_grad_log_pi(int state, int action, double coeff, std::vector<double>& grad) const;
    // grad += coeff * d H(pi(.|state)) / d theta, H = -sum_a pi log pi
    void add_grad_entropy(int state, double coeff, std::vector<double>& grad) const;

private:
    Policy() = default;

    // Pushes a cotangent w.r.t. the pre-softmax logits into parameter space.
    void add_logit_grad(int state, const std::vector<double>& dlogits,
                        std::vector<double>& grad) const;
    std::vector<double> softmax_probs(int state) const;

    bool tabular_ = true;
    int num_states_ = 0;
    int num_actions_ = 0;
    double epsilon_ = 0.0;
    std::vector<double> table_; // tabular logits, [s * A + a]
    Mlp net_;                   // value semantics: copies are independent
    std::shared_ptr<const std::vector<std::vector<double>>> features_; // immutable, shared
};

} // namespace cocoa
