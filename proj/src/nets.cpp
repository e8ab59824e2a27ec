#include "cocoa/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cocoa {

std::vector<double> relu_g(const std::vector<double>& x) {
    require(x.size() % 2 == 0, "gated-relu-odd-dim", "gated relu input dimension must be even");
    const size_t n = x.size() / 2;
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double a = x[i] > 0.0 ? x[i] : 0.0;
        const double b = x[n + i] > 0.0 ? x[n + i] : 0.0;
        out[i] = a - b;
    }
    return out;
}

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    require(sizes_.size() >= 2, "mlp-bad-shape", "need at least input and output sizes");
    int count = 0;
    for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
        w_offsets_.push_back(count);
        count += sizes_[l + 1] * sizes_[l];
        b_offsets_.push_back(count);
        count += sizes_[l + 1];
    }
    params_.assign(count, 0.0);
    for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const double std = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
        for (int i = 0; i < sizes_[l + 1] * sizes_[l]; ++i)
            params_[w_offsets_[l] + i] = rng.next_truncated_normal(std);
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
    Workspace ws;
    return forward(x, ws);
}

std::vector<double> Mlp::forward(const std::vector<double>& x, Workspace& ws) const {
    require(static_cast<int>(x.size()) == sizes_.front(), "mlp-bad-input", "input dimension mismatch");
    const size_t layers = sizes_.size() - 1;
    ws.pre.assign(layers, {});
    ws.act.assign(layers + 1, {});
    ws.act[0] = x;
    for (size_t l = 0; l < layers; ++l) {
        const int nin = sizes_[l], nout = sizes_[l + 1];
        const double* w = params_.data() + w_offsets_[l];
        const double* b = params_.data() + b_offsets_[l];
        ws.pre[l].assign(nout, 0.0);
        for (int i = 0; i < nout; ++i) {
            double acc = b[i];
            const double* row = w + i * nin;
            for (int j = 0; j < nin; ++j) acc += row[j] * ws.act[l][j];
            ws.pre[l][i] = acc;
        }
        ws.act[l + 1] = ws.pre[l];
        if (l + 1 < layers)
            for (double& v : ws.act[l + 1])
                if (v < 0.0) v = 0.0;
    }
    return ws.act.back();
}

void Mlp::backward(const Workspace& ws, const std::vector<double>& dy,
                   std::vector<double>& grad, std::vector<double>* dx) const {
    const size_t layers = sizes_.size() - 1;
    std::vector<double> delta = dy;
    for (size_t li = layers; li-- > 0;) {
        const int nin = sizes_[li], nout = sizes_[li + 1];
        if (li + 1 < layers) // ReLU derivative of this layer's output
            for (int i = 0; i < nout; ++i)
                if (ws.pre[li][i] <= 0.0) delta[i] = 0.0;
        const double* w = params_.data() + w_offsets_[li];
        double* gw = grad.data() + w_offsets_[li];
        double* gb = grad.data() + b_offsets_[li];
        for (int i = 0; i < nout; ++i) {
            gb[i] += delta[i];
            double* grow = gw + i * nin;
            for (int j = 0; j < nin; ++j) grow[j] += delta[i] * ws.act[li][j];
        }
        if (li > 0 || dx != nullptr) {
            std::vector<double> dprev(nin, 0.0);
            for (int i = 0; i < nout; ++i) {
                const double* row = w + i * nin;
                for (int j = 0; j < nin; ++j) dprev[j] += delta[i] * row[j];
            }
            if (li == 0) {
                if (dx) *dx = dprev;
                break;
            }
            delta = std::move(dprev);
        }
    }
}

HindsightHyperNet::HindsightHyperNet(int state_dim, int outcome_dim, int num_actions,
                                     int trunk_hidden, int gated_hidden, bool with_complement,
                                     Rng& rng)
    : state_dim_(state_dim), outcome_dim_(outcome_dim), num_actions_(num_actions),
      trunk_hidden_(trunk_hidden), gated_hidden_(gated_hidden), with_complement_(with_complement) {
    require(gated_hidden_ % 2 == 0, "hypernet-bad-shape", "gated layer width must be even");
    stream_dim_ = with_complement_ ? 2 * num_actions_ : num_actions_;
    const int in = state_dim_ + outcome_dim_;
    const int half = gated_hidden_ / 2;
    int count = 0;
    auto block = [&count](int n) { int off = count; count += n; return off; };
    w1_ = block(trunk_hidden_ * in);
    b1_ = block(trunk_hidden_);
    w2_ = block(gated_hidden_ * trunk_hidden_);
    b2_ = block(gated_hidden_);
    wm_ = block(num_actions_ * stream_dim_ * half);
    bm_ = block(num_actions_ * stream_dim_);
    wc_ = block(num_actions_ * half);
    bc_ = block(num_actions_);
    params_.assign(count, 0.0);
    auto init_w = [&](int off, int rows, int cols) {
        const double std = 1.0 / std::sqrt(static_cast<double>(cols));
        for (int i = 0; i < rows * cols; ++i) params_[off + i] = rng.next_truncated_normal(std);
    };
    init_w(w1_, trunk_hidden_, in);
    init_w(w2_, gated_hidden_, trunk_hidden_);
    init_w(wm_, num_actions_ * stream_dim_, half);
    init_w(wc_, num_actions_, half);
}

std::vector<double> HindsightHyperNet::forward(const std::vector<double>& state_feat,
                                               const std::vector<double>& outcome_feat,
                                               const std::vector<double>& policy_logits,
                                               Workspace& ws) const {
    require(static_cast<int>(state_feat.size()) == state_dim_ &&
                static_cast<int>(outcome_feat.size()) == outcome_dim_ &&
                static_cast<int>(policy_logits.size()) == num_actions_,
            "hypernet-bad-input", "input dimension mismatch");
    ws.input.clear();
    ws.input.insert(ws.input.end(), state_feat.begin(), state_feat.end());
    ws.input.insert(ws.input.end(), outcome_feat.begin(), outcome_feat.end());
    ws.stream = policy_logits;
    if (with_complement_)
        for (double l : policy_logits) ws.stream.push_back(1.0 - l);

    const int in = state_dim_ + outcome_dim_;
    const int half = gated_hidden_ / 2;
    auto affine = [this](int woff, int boff, const std::vector<double>& x, int rows,
                         std::vector<double>& out) {
        const int cols = static_cast<int>(x.size());
        out.assign(rows, 0.0);
        for (int i = 0; i < rows; ++i) {
            double acc = params_[boff + i];
            const double* row = params_.data() + woff + i * cols;
            for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
            out[i] = acc;
        }
    };
    (void)in;
    affine(w1_, b1_, ws.input, trunk_hidden_, ws.pre1);
    ws.h1 = ws.pre1;
    for (double& v : ws.h1)
        if (v < 0.0) v = 0.0;
    affine(w2_, b2_, ws.h1, gated_hidden_, ws.pre2);
    ws.g2 = relu_g(ws.pre2);
    affine(wm_, bm_, ws.g2, num_actions_ * stream_dim_, ws.matrix);
    std::vector<double> bias_head;
    affine(wc_, bc_, ws.g2, num_actions_, bias_head);
    ws.out.assign(num_actions_, 0.0);
    for (int i = 0; i < num_actions_; ++i) {
        double acc = bias_head[i];
        const double* row = ws.matrix.data() + i * stream_dim_;
        for (int j = 0; j < stream_dim_; ++j) acc += row[j] * ws.stream[j];
        ws.out[i] = acc;
    }
    (void)half;
    return ws.out;
}

std::vector<double> HindsightHyperNet::forward(const std::vector<double>& state_feat,
                                               const std::vector<double>& outcome_feat,
                                               const std::vector<double>& policy_logits) const {
    Workspace ws;
    return forward(state_feat, outcome_feat, policy_logits, ws);
}

void HindsightHyperNet::backward(const Workspace& ws, const std::vector<double>& dout,
                                 std::vector<double>& grad) const {
    const int half = gated_hidden_ / 2;
    // Head: out_i = sum_j M_ij stream_j + c_i, with M and c affine in g2.
    std::vector<double> dmatrix(num_actions_ * stream_dim_, 0.0);
    for (int i = 0; i < num_actions_; ++i)
        for (int j = 0; j < stream_dim_; ++j) dmatrix[i * stream_dim_ + j] = dout[i] * ws.stream[j];
    std::vector<double> dg2(half, 0.0);
    auto affine_back = [this, &grad](int woff, int boff, const std::vector<double>& x,
                                     const std::vector<double>& dy, std::vector<double>& dx) {
        const int rows = static_cast<int>(dy.size());
        const int cols = static_cast<int>(x.size());
        for (int i = 0; i < rows; ++i) {
            grad[boff + i] += dy[i];
            double* grow = grad.data() + woff + i * cols;
            const double* wrow = params_.data() + woff + i * cols;
            for (int j = 0; j < cols; ++j) {
                grow[j] += dy[i] * x[j];
                dx[j] += dy[i] * wrow[j];
            }
        }
    };
    affine_back(wm_, bm_, ws.g2, dmatrix, dg2);
    affine_back(wc_, bc_, ws.g2, dout, dg2);
    // Gated ReLU: g2_i = relu(pre2_i) - relu(pre2_{half+i}).
    std::vector<double> dpre2(gated_hidden_, 0.0);
    for (int i = 0; i < half; ++i) {
        if (ws.pre2[i] > 0.0) dpre2[i] = dg2[i];
        if (ws.pre2[half + i] > 0.0) dpre2[half + i] = -dg2[i];
    }
    std::vector<double> dh1(trunk_hidden_, 0.0);
    affine_back(w2_, b2_, ws.h1, dpre2, dh1);
    std::vector<double> dpre1 = dh1;
    for (int i = 0; i < trunk_hidden_; ++i)
        if (ws.pre1[i] <= 0.0) dpre1[i] = 0.0;
    std::vector<double> dinput(ws.input.size(), 0.0);
    affine_back(w1_, b1_, ws.input, dpre1, dinput);
}

MaskedRewardModel::MaskedRewardModel(int feature_dim, int num_actions, Rng& rng)
    : dim_(feature_dim), num_actions_(num_actions) {
    params_.assign(num_actions_ * dim_ + dim_, 1.0);
    const double std = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (int j = 0; j < dim_; ++j) params_[num_actions_ * dim_ + j] = rng.next_normal() * std;
}

double MaskedRewardModel::predict(const std::vector<double>& features, int action) const {
    const double* mask = params_.data() + action * dim_;
    const double* readout = params_.data() + num_actions_ * dim_;
    double acc = 0.0;
    for (int j = 0; j < dim_; ++j) {
        const double z = mask[j] * mask[j] * features[j];
        acc += readout[j] * (z > 0.0 ? z : 0.0);
    }
    return acc;
}

void MaskedRewardModel::backward(const std::vector<double>& features, int action, double upstream,
                                 std::vector<double>& grad) const {
    const double* mask = params_.data() + action * dim_;
    const double* readout = params_.data() + num_actions_ * dim_;
    double* gmask = grad.data() + action * dim_;
    double* gread = grad.data() + num_actions_ * dim_;
    for (int j = 0; j < dim_; ++j) {
        const double z = mask[j] * mask[j] * features[j];
        // Straight-through: d relu(z)/dz treated as 1.
        gread[j] += upstream * (z > 0.0 ? z : 0.0);
        gmask[j] += upstream * readout[j] * 2.0 * mask[j] * features[j];
    }
}

std::vector<uint8_t> MaskedRewardModel::encode_bits(const std::vector<double>& features, int action,
                                                    double threshold) const {
    const double* mask = params_.data() + action * dim_;
    std::vector<uint8_t> bits(dim_, 0);
    for (int j = 0; j < dim_; ++j)
        bits[j] = mask[j] * mask[j] * features[j] > threshold ? 1 : 0;
    return bits;
}

void MaskedRewardModel::apply_decay(double lr, double l1_mask, double l2_readout) {
    const double shrink = lr * l1_mask;
    for (int i = 0; i < num_actions_ * dim_; ++i) {
        double& p = params_[i];
        if (p > shrink)
            p -= shrink;
        else if (p < -shrink)
            p += shrink;
        else
            p = 0.0;
    }
    const double keep = 1.0 - lr * l2_readout;
    for (int j = 0; j < dim_; ++j) params_[num_actions_ * dim_ + j] *= keep;
}

AdamW::AdamW(int dim, double lr, double weight_decay, double clip_norm, double beta1, double beta2,
             double eps)
    : lr_(lr), weight_decay_(weight_decay), clip_norm_(clip_norm), beta1_(beta1), beta2_(beta2),
      eps_(eps), m_(dim, 0.0), v_(dim, 0.0) {}

void AdamW::step(std::vector<double>& params, std::vector<double>& grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "optimizer-bad-shape",
            "parameter/gradient size mismatch");
    if (clip_norm_ > 0.0) {
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > clip_norm_) {
            const double scale = clip_norm_ / norm;
            for (double& g : grad) g *= scale;
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    if (weight_decay_ > 0.0)
        for (double& p : params) p -= lr_ * weight_decay_ * p;
}

double finite_diff_check(const std::function<double()>& loss, std::vector<double>& params,
                         const std::vector<double>& analytic, int num_coords, double step,
                         Rng& rng) {
    require(params.size() == analytic.size(), "gradcheck-bad-shape", "gradient size mismatch");
    const int n = static_cast<int>(params.size());
    double worst = 0.0;
    for (int c = 0; c < num_coords; ++c) {
        const int i = num_coords >= n ? c % n : rng.next_int(n);
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss();
        params[i] = saved - step;
        const double down = loss();
        params[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double an = analytic[i];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
        worst = std::max(worst, std::fabs(fd - an) / denom);
    }
    return worst;
}

void save_params(const std::string& path, const std::vector<double>& params) {
    std::ofstream out(path);
    require(out.good(), "io-open-failed", "cannot open " + path);
    out << params.size() << "\n";
    char buf[64];
    for (double p : params) {
        std::snprintf(buf, sizeof(buf), "%.17g", p);
        out << buf << "\n";
    }
    require(out.good(), "io-write-failed", "write failed for " + path);
}

std::vector<double> load_params(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "io-open-failed", "cannot open " + path);
    size_t n = 0;
    in >> n;
    std::vector<double> params(n, 0.0);
    for (size_t i = 0; i < n; ++i) in >> params[i];
    require(in.good() || in.eof(), "io-read-failed", "truncated parameter file " + path);
    return params;
}

} // namespace cocoa
