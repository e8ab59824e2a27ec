#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cocoa/rng.hpp"

namespace cocoa {

// Gated ReLU: splits x in half and returns relu(front) - relu(back).
// Input dimension must be even; output has half the size.
std::vector<double> relu_g(const std::vector<double>& x);

// Plain fully-connected net, ReLU hidden units, linear output. Parameters are
// a flat vector (per layer: row-major weights, then biases) so optimizers and
// finite-difference checks can treat every model uniformly.
// Init: weights truncated normal (2 sigma) with std 1/sqrt(fan_in), biases 0.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<int> sizes, Rng& rng);

    int in_dim() const { return sizes_.front(); }
    int out_dim() const { return sizes_.back(); }
    int param_count() const { return static_cast<int>(params_.size()); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    struct Workspace {
        std::vector<std::vector<double>> pre;  // pre-activations per layer
        std::vector<std::vector<double>> act;  // act[0] = input, act[l] = output of layer l
    };

    std::vector<double> forward(const std::vector<double>& x) const;
    std::vector<double> forward(const std::vector<double>& x, Workspace& ws) const;

    // Accumulates dL/dparams into grad (size param_count) given dL/dy.
    // If dx is non-null, also writes dL/dx.
    void backward(const Workspace& ws, const std::vector<double>& dy,
                  std::vector<double>& grad, std::vector<double>* dx = nullptr) const;

private:
    std::vector<int> sizes_;
    std::vector<int> w_offsets_, b_offsets_;
    std::vector<double> params_;
};

// Hindsight network h(a | s, u'). A trunk MLP reads concat(state features,
// outcome features); a gated-ReLU layer follows; the head emits a matrix M
// (num_actions x stream_dim) and a bias c (num_actions), and the output
// logits are M * stream + c, where `stream` is built from the policy logits
// (the multiplicative head selects combinations of policy logits to add to
// the output channel). The policy-logit stream is treated as an input:
// hindsight training never backpropagates into the policy.
// with_complement=true feeds [logits, 1 - logits] (stream_dim = 2A), used by
// the state-outcome variant; otherwise the stream is the logits (dim A).
class HindsightHyperNet {
public:
    HindsightHyperNet() = default;
    HindsightHyperNet(int state_dim, int outcome_dim, int num_actions,
                      int trunk_hidden, int gated_hidden, bool with_complement, Rng& rng);

    int param_count() const { return static_cast<int>(params_.size()); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int num_actions() const { return num_actions_; }
    bool with_complement() const { return with_complement_; }

    struct Workspace {
        std::vector<double> input;     // concat(state, outcome)
        std::vector<double> stream;    // logit stream
        std::vector<double> pre1, h1;  // trunk layer
        std::vector<double> pre2, g2;  // gated layer (g2 has half of pre2's dim)
        std::vector<double> matrix;    // head matrix, row-major A x stream_dim
        std::vector<double> out;       // logits over actions
    };

    std::vector<double> forward(const std::vector<double>& state_feat,
                                const std::vector<double>& outcome_feat,
                                const std::vector<double>& policy_logits,
                                Workspace& ws) const;
    std::vector<double> forward(const std::vector<double>& state_feat,
                                const std::vector<double>& outcome_feat,
                                const std::vector<double>& policy_logits) const;

    void backward(const Workspace& ws, const std::vector<double>& dout,
                  std::vector<double>& grad) const;

private:
    int state_dim_ = 0, outcome_dim_ = 0, num_actions_ = 0;
    int trunk_hidden_ = 0, gated_hidden_ = 0;
    bool with_complement_ = false;
    int stream_dim_ = 0;
    // parameter block offsets
    int w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, wm_ = 0, bm_ = 0, wc_ = 0, bc_ = 0;
    std::vector<double> params_;
};

// Reward model r(s, a) = readout . st_relu(mask_a^2 * features). The squared
// mask keeps the effective gate nonnegative; the straight-through ReLU passes
// gradients unchanged. Masks init to 1, readout to Gaussian std 1/sqrt(dim).
// The induced outcome bits are 1[mask_a^2 * features > threshold], computed on
// the pre-ReLU gated input.
class MaskedRewardModel {
public:
    MaskedRewardModel() = default;
    MaskedRewardModel(int feature_dim, int num_actions, Rng& rng);

    int param_count() const { return static_cast<int>(params_.size()); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int feature_dim() const { return dim_; }
    int num_actions() const { return num_actions_; }

    double predict(const std::vector<double>& features, int action) const;
    // Accumulates dL/dparams for L = upstream * r_hat.
    void backward(const std::vector<double>& features, int action, double upstream,
                  std::vector<double>& grad) const;

    std::vector<uint8_t> encode_bits(const std::vector<double>& features, int action,
                                     double threshold) const;

    // Decoupled regularization applied after the optimizer step: proximal
    // soft-threshold (L1) on mask parameters, multiplicative decay (L2) on
    // the readout.
    void apply_decay(double lr, double l1_mask, double l2_readout);

private:
    int dim_ = 0, num_actions_ = 0;
    std::vector<double> params_; // masks (A x dim) then readout (dim)
};

// AdamW with optional global-norm gradient clipping. Weight decay is
// decoupled: applied after the Adam update.
class AdamW {
public:
    AdamW() = default;
    AdamW(int dim, double lr, double weight_decay = 0.0, double clip_norm = 0.0,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(std::vector<double>& params, std::vector<double>& grad);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_ = 1e-3, weight_decay_ = 0.0, clip_norm_ = 0.0;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

// Central-difference gradient check. `loss` is evaluated against the current
// content of `params`; `analytic` is dL/dparams at the unperturbed point.
// Checks `num_coords` coordinates (deterministically chosen via rng) and
// returns the maximum relative error |fd - an| / max(|fd|, |an|, 1e-6).
double finite_diff_check(const std::function<double()>& loss, std::vector<double>& params,
                         const std::vector<double>& analytic, int num_coords, double step,
                         Rng& rng);

// Plain text parameter snapshots (count line, then one %.17g value per line).
void save_params(const std::string& path, const std::vector<double>& params);
std::vector<double> load_params(const std::string& path);

} // namespace cocoa
