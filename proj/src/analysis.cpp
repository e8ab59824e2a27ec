#include "cocoa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cocoa/error.hpp"

namespace cocoa {

double to_decibels(double ratio) {
    if (std::isnan(ratio)) return -999.0;
    if (std::isinf(ratio)) return ratio > 0 ? 999.0 : -999.0;
    if (ratio <= 0.0) return -999.0;
    const double db = 10.0 * std::log10(ratio);
    return std::clamp(db, -999.0, 999.0);
}

DpBundle make_dp_bundle(const TabularMDP& mdp, const Policy& policy,
                        const OutcomeEncoding& encoding, const DpBundleOptions& opts) {
    DpBundle b;
    b.opts = opts;
    b.encoding = encoding;
    b.state_encoding = OutcomeEncoding::state(mdp);
    b.succ = successor_matrix(mdp, policy, -1, opts.gamma, opts.dense_cap);
    b.gt = value_functions(mdp, policy, b.succ);
    b.outcome_coeffs =
        contribution_coefficients(mdp, policy, b.encoding, -1, opts.gamma, opts.dense_cap);
    b.state_coeffs =
        contribution_coefficients(mdp, policy, b.state_encoding, -1, opts.gamma, opts.dense_cap);
    if (opts.with_returns) b.returns = std::make_shared<ReturnTable>(return_table(mdp, policy));
    if (opts.nstep >= 1)
        b.nstep = std::make_shared<NstepOracle>(nstep_oracle(
            mdp, policy, b.encoding, opts.nstep, opts.nstep_beta, opts.gamma, opts.dense_cap));
    return b;
}

const OutcomeEncoding& bundle_encoding(const DpBundle& bundle, EstimatorKind kind) {
    if (kind == EstimatorKind::HcaPlus || kind == EstimatorKind::HcaRewardModel)
        return bundle.state_encoding;
    return bundle.encoding;
}

EstimatorModels bundle_models(const DpBundle& bundle, const TabularMDP& mdp,
                              const Policy& policy, EstimatorKind kind) {
    (void)policy;
    const DpBundle* b = &bundle;
    const int A = mdp.num_actions, S = mdp.num_states;
    EstimatorModels m;
    m.value = [b](int s) { return b->gt.v[s]; };
    m.qvalue = [b, A](int s, int a) { return b->gt.q[static_cast<size_t>(s) * A + a]; };
    m.reward = [b, A](int s, int a) { return b->gt.mean_reward[static_cast<size_t>(s) * A + a]; };

    const CoefficientTable* coeffs = nullptr;
    if (kind == EstimatorKind::HcaPlus || kind == EstimatorKind::HcaRewardModel)
        coeffs = &b->state_coeffs;
    else if (kind == EstimatorKind::Cocoa || kind == EstimatorKind::CocoaSampled)
        coeffs = &b->outcome_coeffs;
    else if (kind == EstimatorKind::CocoaNstep) {
        require(b->nstep != nullptr, "analysis-missing-oracle",
                "bundle was built without the n-step oracle");
        coeffs = &b->nstep->outcome_coeffs;
    }
    if (coeffs != nullptr)
        m.coefficient = [coeffs](int s, int a, int u) { return coeffs->at(s, a, u); };

    if (b->nstep != nullptr) {
        const NstepOracle* oracle = b->nstep.get();
        m.nstep_state_coeff = [oracle, S](int s, int a, int sp) {
            const double ps = oracle->pn_state[static_cast<size_t>(s) * S + sp];
            if (ps <= 0.0) return 0.0;
            return oracle->pn.at(s, a, sp) / ps - 1.0;
        };
    }
    if (b->returns != nullptr) {
        const ReturnTable* rt = b->returns.get();
        m.return_ratio = [rt](int s, int a, double z) {
            const int i = rt->find(s, z);
            require(i >= 0, "dp-unknown-return", "return value not in the computed support");
            const double ps = rt->p_state[s][i];
            require(ps > 0.0, "dp-unknown-return",
                    "return value has zero probability from this state");
            return rt->p_sa[s][static_cast<size_t>(a) * rt->support[s].size() + i] / ps;
        };
    }
    return m;
}

namespace {

std::vector<double> advantage_for(const DpBundle& b, const TabularMDP& mdp,
                                  const Policy& policy, EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::Reinforce:
        return advantage_with_baseline(mdp, b.gt, {});
    case EstimatorKind::Advantage:
        return advantage_with_baseline(mdp, b.gt, b.gt.v);
    case EstimatorKind::QCritic:
    case EstimatorKind::TrajCv:
        return advantage_qcritic(mdp, policy, b.gt.q);
    case EstimatorKind::HcaPlus:
        return advantage_cocoa(mdp, policy, b.succ, b.state_coeffs, b.state_encoding);
    case EstimatorKind::HcaRewardModel:
        return advantage_reward_model(mdp, policy, b.succ, b.state_coeffs, b.state_encoding,
                                      b.gt.mean_reward);
    case EstimatorKind::Cocoa:
    case EstimatorKind::CocoaSampled:
        return advantage_cocoa(mdp, policy, b.succ, b.outcome_coeffs, b.encoding);
    case EstimatorKind::HcaReturn:
        require(b.returns != nullptr, "analysis-missing-oracle",
                "bundle was built without return distributions");
        return advantage_hca_return(mdp, policy, *b.returns);
    case EstimatorKind::CounterfactualReturn:
        require(b.returns != nullptr, "analysis-missing-oracle",
                "bundle was built without return distributions");
        return advantage_counterfactual_return(mdp, policy, *b.returns);
    case EstimatorKind::CocoaNstep:
        require(b.nstep != nullptr, "analysis-missing-oracle",
                "bundle was built without the n-step oracle");
        return advantage_nstep(mdp, policy, *b.nstep, b.encoding, b.gt.v);
    }
    throw Error("estimator-unknown", "unhandled estimator kind");
}

} // namespace

std::vector<double> expected_estimator_gradient(const DpBundle& bundle, const TabularMDP& mdp,
                                                const Policy& policy, EstimatorKind kind,
                                                const EstimatorOptions& opts) {
    const std::vector<double> adv = advantage_for(bundle, mdp, policy, kind);
    const std::vector<double> weights =
        state_visit_weights(mdp, policy, opts.gamma, opts.t_limit);
    return weighted_policy_gradient(mdp, policy, weights, adv);
}

std::vector<double> true_gradient_for(const DpBundle& bundle, const TabularMDP& mdp,
                                      const Policy& policy, const EstimatorOptions& opts) {
    const std::vector<double> adv = advantage_true(mdp, bundle.gt);
    const std::vector<double> weights =
        state_visit_weights(mdp, policy, opts.gamma, opts.t_limit);
    return weighted_policy_gradient(mdp, policy, weights, adv);
}

std::vector<Trajectory> sample_batch(const TabularMDP& mdp, const Policy& policy, int count,
                                     uint64_t seed, uint64_t stream_base) {
    std::vector<Trajectory> batch;
    batch.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(seed, stream_base + static_cast<uint64_t>(i));
        batch.push_back(sample_trajectory(mdp, policy, rng));
    }
    return batch;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double sq_norm(const std::vector<double>& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return acc;
}

} // namespace

MetricsRecord evaluate_with(const TabularMDP& mdp, const Policy& policy,
                            const OutcomeEncoding& encoding, EstimatorKind kind,
                            const EstimatorModels& models, const EstimatorOptions& opts,
                            const std::vector<Trajectory>& batch,
                            const std::vector<double>& expected_grad,
                            const std::vector<double>& true_grad, uint64_t rng_seed) {
    MetricsRecord rec;
    rec.estimator = estimator_name(kind);
    rec.samples = static_cast<int>(batch.size());
    rec.true_norm_sq = sq_norm(true_grad);
    const double bias_sq = sq_dist(expected_grad, true_grad);

    Rng rng(rng_seed, 4242);
    double err_true = 0.0, err_exp = 0.0;
    std::vector<double> resid(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const std::vector<double> g =
            estimate(kind, mdp, policy, encoding, batch[i], models, opts, &rng);
        const double d_true = sq_dist(g, true_grad);
        const double d_exp = sq_dist(g, expected_grad);
        err_true += d_true;
        err_exp += d_exp;
        resid[i] = d_true - d_exp - bias_sq;
    }
    const double n = std::max<size_t>(batch.size(), 1);
    err_true /= n;
    err_exp /= n;

    rec.mean_sq_error = err_true;
    rec.snr = err_true > 0.0 ? rec.true_norm_sq / err_true
                             : std::numeric_limits<double>::infinity();
    rec.bias = rec.true_norm_sq > 0.0 ? bias_sq / rec.true_norm_sq
                                      : std::numeric_limits<double>::infinity();
    rec.variance = rec.true_norm_sq > 0.0 ? err_exp / rec.true_norm_sq
                                          : std::numeric_limits<double>::infinity();
    rec.snr_db = to_decibels(rec.snr);
    rec.bias_db = to_decibels(rec.bias);
    rec.var_db = to_decibels(rec.variance);

    if (batch.size() >= 2) {
        double mean = 0.0;
        for (double d : resid) mean += d;
        mean /= batch.size();
        double var = 0.0;
        for (double d : resid) var += (d - mean) * (d - mean);
        var /= (batch.size() - 1);
        rec.residual_mean = mean;
        rec.residual_se = std::sqrt(var / batch.size());
    }
    return rec;
}

MetricsRecord evaluate_estimator(const TabularMDP& mdp, const Policy& policy,
                                 const DpBundle& bundle, EstimatorKind kind,
                                 const EstimatorOptions& opts,
                                 const std::vector<Trajectory>& batch, uint64_t rng_seed) {
    const EstimatorModels models = bundle_models(bundle, mdp, policy, kind);
    const std::vector<double> expected =
        expected_estimator_gradient(bundle, mdp, policy, kind, opts);
    const std::vector<double> truth = true_gradient_for(bundle, mdp, policy, opts);
    return evaluate_with(mdp, policy, bundle_encoding(bundle, kind), kind, models, opts, batch,
                         expected, truth, rng_seed);
}

// --- shadow training -----------------------------------------------------------

std::vector<ShadowCheckpoint> shadow_training(const TabularMDP& mdp,
                                              const OutcomeEncoding& encoding,
                                              const std::vector<ShadowProbe>& probes,
                                              const ShadowConfig& cfg) {
    Policy policy =
        cfg.policy_hidden.empty()
            ? Policy::tabular(mdp.num_states, mdp.num_actions, cfg.epsilon)
            : Policy::mlp(mdp.state_features, mdp.num_actions, cfg.policy_hidden,
                          child_seed(cfg.seed, 11), cfg.epsilon);
    AdamW opt(policy.param_count(), cfg.lr);

    bool need_returns = false;
    int nstep = 0;
    double nstep_beta = 1.0;
    for (const ShadowProbe& probe : probes) {
        if (probe.kind == EstimatorKind::HcaReturn ||
            probe.kind == EstimatorKind::CounterfactualReturn)
            need_returns = true;
        if (probe.kind == EstimatorKind::CocoaNstep) {
            require(nstep == 0 || nstep == probe.opts.nstep, "analysis-bad-probes",
                    "shadow probes disagree on the n-step horizon");
            nstep = probe.opts.nstep;
        }
    }

    std::vector<ShadowCheckpoint> out;
    for (int step = 0; step <= cfg.steps; ++step) {
        if (std::find(cfg.checkpoints.begin(), cfg.checkpoints.end(), step) !=
            cfg.checkpoints.end()) {
            Policy eval_policy = policy;
            eval_policy.set_epsilon(cfg.eval_epsilon);
            DpBundleOptions bo;
            bo.gamma = cfg.gamma;
            bo.with_returns = need_returns;
            bo.nstep = nstep;
            bo.nstep_beta = nstep_beta;
            const DpBundle bundle = make_dp_bundle(mdp, eval_policy, encoding, bo);
            const std::vector<Trajectory> batch =
                sample_batch(mdp, eval_policy, cfg.eval_batch, cfg.seed,
                             1000000 + static_cast<uint64_t>(step) * 10000);
            ShadowCheckpoint cp;
            cp.step = step;
            for (const Trajectory& traj : batch) cp.mean_return += traj.total_return();
            cp.mean_return /= std::max<size_t>(batch.size(), 1);
            for (const ShadowProbe& probe : probes) {
                MetricsRecord rec =
                    evaluate_estimator(mdp, eval_policy, bundle, probe.kind, probe.opts, batch,
                                       child_seed(cfg.seed, 900000 + step));
                if (!probe.label.empty()) rec.estimator = probe.label;
                cp.records.push_back(std::move(rec));
            }
            out.push_back(std::move(cp));
        }
        if (step == cfg.steps) break;

        // exact all-action critic update: ground-truth Q for the current policy
        const SuccessorMatrix succ = successor_matrix(mdp, policy, -1, cfg.gamma);
        const GroundTruth gt = value_functions(mdp, policy, succ);
        EstimatorModels models;
        const int A = mdp.num_actions;
        models.qvalue = [&gt, A](int s, int a) {
            return gt.q[static_cast<size_t>(s) * A + a];
        };
        const std::vector<Trajectory> batch =
            sample_batch(mdp, policy, cfg.batch_size, cfg.seed,
                         500000000 + static_cast<uint64_t>(step) * 1000);
        EstimatorOptions opts;
        opts.gamma = cfg.gamma;
        std::vector<double> grad = estimate_batch_mean(EstimatorKind::QCritic, mdp, policy,
                                                       encoding, batch, models, opts, nullptr);
        if (cfg.entropy != 0.0 && !batch.empty()) {
            const double coeff = cfg.entropy / static_cast<double>(batch.size());
            for (const Trajectory& traj : batch)
                for (const Step& st : traj.steps) policy.add_grad_entropy(st.state, coeff, grad);
        }
        for (double& v : grad) v = -v; // optimizer minimizes
        opt.step(policy.params(), grad);
    }
    return out;
}

// --- model perturbation ----------------------------------------------------------

namespace {

struct PerturbedTables {
    std::vector<double> vhat, qhat, rhat;
    CoefficientTable state_coeffs, outcome_coeffs;
};

void scale_noise(std::vector<double>& values, double sigma, Rng& rng) {
    for (double& v : values) v *= 1.0 + sigma * rng.next_normal();
}

PerturbedTables perturb_tables(const DpBundle& b, double sigma, Rng& rng) {
    PerturbedTables pt;
    pt.vhat = b.gt.v;
    pt.qhat = b.gt.q;
    pt.rhat = b.gt.mean_reward;
    pt.state_coeffs = b.state_coeffs;
    pt.outcome_coeffs = b.outcome_coeffs;
    scale_noise(pt.vhat, sigma, rng);
    scale_noise(pt.qhat, sigma, rng);
    scale_noise(pt.rhat, sigma, rng);
    scale_noise(pt.state_coeffs.w, sigma, rng);
    scale_noise(pt.outcome_coeffs.w, sigma, rng);
    return pt;
}

EstimatorModels perturbed_models(const PerturbedTables& pt, const TabularMDP& mdp,
                                 EstimatorKind kind) {
    const int A = mdp.num_actions;
    EstimatorModels m;
    m.value = [&pt](int s) { return pt.vhat[s]; };
    m.qvalue = [&pt, A](int s, int a) { return pt.qhat[static_cast<size_t>(s) * A + a]; };
    m.reward = [&pt, A](int s, int a) { return pt.rhat[static_cast<size_t>(s) * A + a]; };
    const CoefficientTable* coeffs =
        (kind == EstimatorKind::HcaPlus || kind == EstimatorKind::HcaRewardModel)
            ? &pt.state_coeffs
            : &pt.outcome_coeffs;
    m.coefficient = [coeffs](int s, int a, int u) { return coeffs->at(s, a, u); };
    return m;
}

std::vector<double> perturbed_advantage(const DpBundle& b, const PerturbedTables& pt,
                                        const TabularMDP& mdp, const Policy& policy,
                                        EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::Reinforce:
        return advantage_with_baseline(mdp, b.gt, {});
    case EstimatorKind::Advantage:
        return advantage_with_baseline(mdp, b.gt, pt.vhat);
    case EstimatorKind::QCritic:
    case EstimatorKind::TrajCv:
        return advantage_qcritic(mdp, policy, pt.qhat);
    case EstimatorKind::HcaPlus:
        return advantage_cocoa(mdp, policy, b.succ, pt.state_coeffs, b.state_encoding);
    case EstimatorKind::HcaRewardModel:
        return advantage_reward_model(mdp, policy, b.succ, pt.state_coeffs, b.state_encoding,
                                      pt.rhat);
    case EstimatorKind::Cocoa:
    case EstimatorKind::CocoaSampled:
        return advantage_cocoa(mdp, policy, b.succ, pt.outcome_coeffs, b.encoding);
    default:
        throw Error("analysis-unsupported",
                    "perturbation sweep covers the model-backed estimators only");
    }
}

} // namespace

std::vector<PerturbationResult> perturbation_sweep(const TabularMDP& mdp, const Policy& policy,
                                                   const DpBundle& bundle,
                                                   const std::vector<EstimatorKind>& kinds,
                                                   const EstimatorOptions& opts,
                                                   const PerturbationConfig& cfg) {
    const std::vector<Trajectory> batch =
        sample_batch(mdp, policy, cfg.eval_batch, cfg.seed, 70000);
    const std::vector<double> truth = true_gradient_for(bundle, mdp, policy, opts);
    const std::vector<double> weights =
        state_visit_weights(mdp, policy, opts.gamma, opts.t_limit);

    std::vector<PerturbationResult> out;
    for (size_t ki = 0; ki < kinds.size(); ++ki)
        for (size_t si = 0; si < cfg.sigmas.size(); ++si)
            for (int j = 0; j < cfg.noise_seeds; ++j) {
                const uint64_t stream =
                    40000 + (ki * cfg.sigmas.size() + si) * 1000 + static_cast<uint64_t>(j);
                Rng noise(cfg.seed, stream);
                const PerturbedTables pt = perturb_tables(bundle, cfg.sigmas[si], noise);
                const EstimatorModels models = perturbed_models(pt, mdp, kinds[ki]);
                const std::vector<double> adv =
                    perturbed_advantage(bundle, pt, mdp, policy, kinds[ki]);
                const std::vector<double> expected =
                    weighted_policy_gradient(mdp, policy, weights, adv);
                PerturbationResult res;
                res.estimator = estimator_name(kinds[ki]);
                res.sigma = cfg.sigmas[si];
                res.noise_seed = j;
                res.record = evaluate_with(mdp, policy, bundle_encoding(bundle, kinds[ki]),
                                           kinds[ki], models, opts, batch, expected, truth,
                                           child_seed(cfg.seed, stream + 500));
                out.push_back(std::move(res));
            }
    return out;
}

} // namespace cocoa
