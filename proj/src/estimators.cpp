#include "cocoa/estimators.hpp"

#include <cmath>

#include "cocoa/error.hpp"

namespace cocoa {

namespace {

const char* kNames[] = {
    "reinforce",        "advantage",             "q-critic",
    "trajcv",           "hca-plus",              "hca-return",
    "hca-reward-model", "counterfactual-return", "cocoa",
    "cocoa-sampled",    "cocoa-nstep",
};

} // namespace

const std::vector<EstimatorKind>& all_estimators() {
    static const std::vector<EstimatorKind> kinds = {
        EstimatorKind::Reinforce,
        EstimatorKind::Advantage,
        EstimatorKind::QCritic,
        EstimatorKind::TrajCv,
        EstimatorKind::HcaPlus,
        EstimatorKind::HcaReturn,
        EstimatorKind::HcaRewardModel,
        EstimatorKind::CounterfactualReturn,
        EstimatorKind::Cocoa,
        EstimatorKind::CocoaSampled,
        EstimatorKind::CocoaNstep,
    };
    return kinds;
}

std::string estimator_name(EstimatorKind kind) { return kNames[static_cast<int>(kind)]; }

EstimatorKind estimator_from_name(const std::string& name) {
    for (EstimatorKind kind : all_estimators())
        if (name == kNames[static_cast<int>(kind)]) return kind;
    throw Error("estimator-unknown", "unknown estimator name: " + name);
}

namespace {

void need(bool present, const char* what) {
    require(present, "estimator-missing-model", std::string("estimator needs ") + what);
}

} // namespace

std::vector<double> estimate(EstimatorKind kind, const TabularMDP& mdp, const Policy& policy,
                             const OutcomeEncoding& encoding, const Trajectory& traj,
                             const EstimatorModels& models, const EstimatorOptions& opts,
                             Rng* rng) {
    (void)mdp;
    std::vector<double> grad(policy.param_count(), 0.0);
    const int len = static_cast<int>(traj.steps.size());
    if (len == 0) return grad;
    const double gamma = opts.gamma;

    // discounted suffix returns z[t] = sum_{k>=0} gamma^k R_{t+k}
    std::vector<double> z(len);
    z[len - 1] = traj.steps[len - 1].reward;
    for (int t = len - 2; t >= 0; --t) z[t] = traj.steps[t].reward + gamma * z[t + 1];

    const int t_stop = (opts.t_limit >= 0) ? std::min(opts.t_limit, len) : len;
    auto outer = [&](int t) { return std::pow(gamma, t); };

    const bool needs_outcomes =
        kind == EstimatorKind::HcaPlus || kind == EstimatorKind::HcaRewardModel ||
        kind == EstimatorKind::Cocoa || kind == EstimatorKind::CocoaSampled ||
        kind == EstimatorKind::CocoaNstep;
    std::vector<int> u(needs_outcomes ? len : 0);
    if (needs_outcomes)
        for (int t = 0; t < len; ++t)
            u[t] = encoding.encode(traj.steps[t].state, traj.steps[t].action,
                                   traj.steps[t].reward);

    switch (kind) {
    case EstimatorKind::Reinforce: {
        for (int t = 0; t < t_stop; ++t)
            policy.add_grad_log_pi(traj.steps[t].state, traj.steps[t].action, outer(t) * z[t],
                                   grad);
        break;
    }
    case EstimatorKind::Advantage: {
        need(static_cast<bool>(models.value), "a state-value model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            policy.add_grad_log_pi(s, traj.steps[t].action,
                                   outer(t) * (z[t] - models.value(s)), grad);
        }
        break;
    }
    case EstimatorKind::QCritic: {
        need(static_cast<bool>(models.qvalue), "an action-value model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            for (int a = 0; a < policy.num_actions(); ++a)
                policy.add_grad_pi(s, a, outer(t) * models.qvalue(s, a), grad);
        }
        break;
    }
    case EstimatorKind::TrajCv: {
        need(static_cast<bool>(models.qvalue), "an action-value model");
        // cv[t] = sum_{t'>t} gamma^(t'-t) (Q(S_t',A_t') - sum_a pi Q(S_t',a))
        std::vector<double> qa(len), vbar(len);
        for (int t = 0; t < len; ++t) {
            const int s = traj.steps[t].state;
            qa[t] = models.qvalue(s, traj.steps[t].action);
            const std::vector<double> probs = policy.probs(s);
            double v = 0.0;
            for (int a = 0; a < policy.num_actions(); ++a) v += probs[a] * models.qvalue(s, a);
            vbar[t] = v;
        }
        std::vector<double> cv(len, 0.0);
        for (int t = len - 2; t >= 0; --t)
            cv[t] = gamma * (qa[t + 1] - vbar[t + 1] + cv[t + 1]);
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            policy.add_grad_log_pi(s, traj.steps[t].action,
                                   outer(t) * (z[t] - qa[t] - cv[t]), grad);
            for (int a = 0; a < policy.num_actions(); ++a)
                policy.add_grad_pi(s, a, outer(t) * models.qvalue(s, a), grad);
        }
        break;
    }
    case EstimatorKind::HcaPlus:
    case EstimatorKind::Cocoa: {
        need(static_cast<bool>(models.coefficient), "a contribution-coefficient model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            policy.add_grad_log_pi(s, traj.steps[t].action, outer(t) * traj.steps[t].reward,
                                   grad);
            for (int a = 0; a < policy.num_actions(); ++a) {
                double acc = 0.0;
                double gk = 1.0;
                for (int k = 1; t + k < len; ++k) {
                    gk *= gamma;
                    acc += gk * models.coefficient(s, a, u[t + k]) * traj.steps[t + k].reward;
                }
                if (acc != 0.0) policy.add_grad_pi(s, a, outer(t) * acc, grad);
            }
        }
        break;
    }
    case EstimatorKind::HcaRewardModel: {
        need(static_cast<bool>(models.coefficient), "a contribution-coefficient model");
        need(static_cast<bool>(models.reward), "a reward model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            for (int a = 0; a < policy.num_actions(); ++a) {
                double acc = models.reward(s, a);
                double gk = 1.0;
                for (int k = 1; t + k < len; ++k) {
                    gk *= gamma;
                    acc += gk * models.coefficient(s, a, u[t + k]) * traj.steps[t + k].reward;
                }
                policy.add_grad_pi(s, a, outer(t) * acc, grad);
            }
        }
        break;
    }
    case EstimatorKind::CocoaSampled: {
        need(static_cast<bool>(models.coefficient), "a contribution-coefficient model");
        require(rng != nullptr, "estimator-missing-model",
                "cocoa-sampled needs a random stream for its action samples");
        require(opts.sampled_actions >= 1, "estimator-bad-option",
                "cocoa-sampled needs sampled_actions >= 1");
        const double inv_m = 1.0 / opts.sampled_actions;
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            policy.add_grad_log_pi(s, traj.steps[t].action, outer(t) * traj.steps[t].reward,
                                   grad);
            const std::vector<double> probs = policy.probs(s);
            for (int m = 0; m < opts.sampled_actions; ++m) {
                const int a = rng->pick(probs);
                double acc = 0.0;
                double gk = 1.0;
                for (int k = 1; t + k < len; ++k) {
                    gk *= gamma;
                    acc += gk * models.coefficient(s, a, u[t + k]) * traj.steps[t + k].reward;
                }
                if (acc != 0.0) policy.add_grad_log_pi(s, a, outer(t) * inv_m * acc, grad);
            }
        }
        break;
    }
    case EstimatorKind::HcaReturn: {
        need(static_cast<bool>(models.return_ratio), "a return-ratio model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            const int a = traj.steps[t].action;
            const double ratio = models.return_ratio(s, a, z[t]);
            require(ratio > 0.0, "estimator-bad-ratio",
                    "observed return has zero conditional probability");
            policy.add_grad_log_pi(s, a, outer(t) * (1.0 - 1.0 / ratio) * z[t], grad);
        }
        break;
    }
    case EstimatorKind::CounterfactualReturn: {
        need(static_cast<bool>(models.return_ratio), "a return-ratio model");
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            for (int a = 0; a < policy.num_actions(); ++a) {
                const double ratio = models.return_ratio(s, a, z[t]);
                policy.add_grad_pi(s, a, outer(t) * (ratio - 1.0) * z[t], grad);
            }
        }
        break;
    }
    case EstimatorKind::CocoaNstep: {
        need(static_cast<bool>(models.coefficient), "a truncated-coefficient model");
        need(static_cast<bool>(models.nstep_state_coeff), "an n-step state-coefficient model");
        need(static_cast<bool>(models.reward), "a reward model");
        need(static_cast<bool>(models.value), "a state-value model");
        require(opts.nstep >= 1, "estimator-bad-option", "cocoa-nstep needs nstep >= 1");
        const int n = opts.nstep;
        const double gn = std::pow(gamma, n);
        for (int t = 0; t < t_stop; ++t) {
            const int s = traj.steps[t].state;
            const std::vector<double> probs = policy.probs(s);
            double rpi = 0.0;
            for (int a = 0; a < policy.num_actions(); ++a) rpi += probs[a] * models.reward(s, a);
            for (int a = 0; a < policy.num_actions(); ++a) {
                double acc = models.reward(s, a) - rpi;
                double gk = 1.0;
                for (int k = 1; k <= n - 1 && t + k < len; ++k) {
                    gk *= gamma;
                    acc += gk * models.coefficient(s, a, u[t + k]) * traj.steps[t + k].reward;
                }
                // bootstrap only when the n-th step is a real state; after
                // absorption the value is zero by construction
                if (t + n < len) {
                    const int sn = traj.steps[t + n].state;
                    acc += gn * models.nstep_state_coeff(s, a, sn) * models.value(sn);
                }
                policy.add_grad_pi(s, a, outer(t) * acc, grad);
            }
        }
        break;
    }
    }
    return grad;
}

std::vector<double> estimate_batch_mean(EstimatorKind kind, const TabularMDP& mdp,
                                        const Policy& policy, const OutcomeEncoding& encoding,
                                        const std::vector<Trajectory>& batch,
                                        const EstimatorModels& models,
                                        const EstimatorOptions& opts, Rng* rng) {
    std::vector<double> mean(policy.param_count(), 0.0);
    if (batch.empty()) return mean;
    for (const Trajectory& traj : batch) {
        const std::vector<double> g = estimate(kind, mdp, policy, encoding, traj, models, opts, rng);
        for (size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& v : mean) v *= inv;
    return mean;
}

} // namespace cocoa
