#include "cocoa/dp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cocoa/error.hpp"

namespace cocoa {

namespace {

// Policy probabilities flattened to [s * A + a] so the DP sweeps avoid
// re-running softmax per visit.
std::vector<double> flat_probs(const TabularMDP& mdp, const Policy& policy) {
    std::vector<double> out(static_cast<size_t>(mdp.num_states) * mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
        std::vector<double> p = policy.probs(s);
        for (int a = 0; a < mdp.num_actions; ++a)
            out[static_cast<size_t>(s) * mdp.num_actions + a] = p[a];
    }
    return out;
}

int resolve_steps(const TabularMDP& mdp, int steps) {
    if (steps < 0) return mdp.horizon;
    return steps;
}

// pi-averaged rows: avg[s * S + s'] = sum_a pi(a|s) m[(s*A+a)*S + s'].
void pi_average(const TabularMDP& mdp, const std::vector<double>& pprobs,
                const std::vector<double>& m, std::vector<double>& avg) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::fill(avg.begin(), avg.end(), 0.0);
    for (int s = 0; s < S; ++s) {
        double* arow = &avg[static_cast<size_t>(s) * S];
        for (int a = 0; a < A; ++a) {
            const double pa = pprobs[static_cast<size_t>(s) * A + a];
            if (pa == 0.0) continue;
            const double* mrow = &m[(static_cast<size_t>(s) * A + a) * S];
            for (int sp = 0; sp < S; ++sp) arow[sp] += pa * mrow[sp];
        }
    }
}

// Per future state s', the outcome distribution induced by one step there:
// q(s', u) = sum_a' pi(a'|s') sum_r p(r) 1[encode(s',a',r) = u]. The
// absorbing state's row stays empty.
std::vector<std::vector<std::pair<int, double>>> outcome_mix(const TabularMDP& mdp,
                                                             const std::vector<double>& pprobs,
                                                             const OutcomeEncoding& encoding) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<std::vector<std::pair<int, double>>> q(S);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        std::map<int, double> acc;
        for (int a = 0; a < A; ++a) {
            const double pa = pprobs[static_cast<size_t>(s) * A + a];
            if (pa == 0.0) continue;
            for (const RewardAtom& r : mdp.rewards[mdp.sa(s, a)])
                acc[encoding.encode(s, a, r.value)] += pa * r.prob;
        }
        q[s].assign(acc.begin(), acc.end());
    }
    return q;
}

// Like outcome_mix but weighted by the reward value instead of counted:
// rho(s', u) = sum_a' pi(a'|s') sum_r p(r) r 1[encode(s',a',r) = u].
std::vector<std::vector<std::pair<int, double>>> reward_mix(const TabularMDP& mdp,
                                                            const std::vector<double>& pprobs,
                                                            const OutcomeEncoding& encoding) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<std::vector<std::pair<int, double>>> rho(S);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        std::map<int, double> acc;
        for (int a = 0; a < A; ++a) {
            const double pa = pprobs[static_cast<size_t>(s) * A + a];
            if (pa == 0.0) continue;
            for (const RewardAtom& r : mdp.rewards[mdp.sa(s, a)])
                acc[encoding.encode(s, a, r.value)] += pa * r.prob * r.value;
        }
        rho[s].assign(acc.begin(), acc.end());
    }
    return rho;
}

// Shared body of the counterfactual advantages: for every (s, a),
// sum_{s'} [pi-avg successor mass s -> s'] * sum_u rho(s', u) w(s, a, u).
// The successor matrix carries the discount, so this is the exact
// expectation of sum_{k>=1} gamma^k w(s, a, U_k) R_k over trajectories
// drawn from s under the policy.
std::vector<double> joint_future_sum(const TabularMDP& mdp, const std::vector<double>& pprobs,
                                     const SuccessorMatrix& succ, const CoefficientTable& coeffs,
                                     const OutcomeEncoding& encoding) {
    const int S = mdp.num_states, A = mdp.num_actions, U = coeffs.num_outcomes;
    auto rho = reward_mix(mdp, pprobs, encoding);
    std::vector<double> adv(static_cast<size_t>(S) * A, 0.0);
    std::vector<double> avg(S);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        std::fill(avg.begin(), avg.end(), 0.0);
        for (int a = 0; a < A; ++a) {
            const double pa = pprobs[static_cast<size_t>(s) * A + a];
            if (pa == 0.0) continue;
            const double* mrow = &succ.m[(static_cast<size_t>(s) * A + a) * S];
            for (int sp = 0; sp < S; ++sp) avg[sp] += pa * mrow[sp];
        }
        for (int sp = 0; sp < S; ++sp) {
            if (avg[sp] == 0.0 || sp == mdp.absorbing_state) continue;
            for (const auto& [u, wt] : rho[sp]) {
                const double scale = avg[sp] * wt;
                const double* wrow = &coeffs.w[static_cast<size_t>(s) * A * U + u];
                for (int a = 0; a < A; ++a)
                    adv[static_cast<size_t>(s) * A + a] += scale * wrow[static_cast<size_t>(a) * U];
            }
        }
    }
    return adv;
}

std::vector<double> mean_rewards(const TabularMDP& mdp) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<double> out(static_cast<size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) out[mdp.sa(s, a)] = mdp.mean_reward(s, a);
    return out;
}

} // namespace

SuccessorMatrix successor_matrix(const TabularMDP& mdp, const Policy& policy, int steps,
                                 double gamma, size_t dense_cap) {
    const int S = mdp.num_states, A = mdp.num_actions;
    steps = resolve_steps(mdp, steps);
    const size_t total = static_cast<size_t>(S) * A * S;
    require(total <= dense_cap, "dp-cap-exceeded",
            "successor matrix needs " + std::to_string(total) + " entries");
    SuccessorMatrix out;
    out.num_states = S;
    out.num_actions = A;
    out.steps = steps;
    out.gamma = gamma;
    out.m.assign(total, 0.0);
    if (steps == 0) return out;

    const std::vector<double> pprobs = flat_probs(mdp, policy);
    std::vector<double> avg(static_cast<size_t>(S) * S, 0.0);
    std::vector<double> next(total);
    for (int t = 1; t <= steps; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double* row = &next[(static_cast<size_t>(s) * A + a) * S];
                for (const TransitionAtom& tr : mdp.transitions[mdp.sa(s, a)]) {
                    const double pg = tr.prob * gamma;
                    row[tr.next_state] += pg;
                    const double* arow = &avg[static_cast<size_t>(tr.next_state) * S];
                    for (int sp = 0; sp < S; ++sp) row[sp] += pg * arow[sp];
                }
            }
        }
        out.m.swap(next);
        if (t < steps) pi_average(mdp, pprobs, out.m, avg);
    }
    return out;
}

SuccessorMatrix nstep_transition(const TabularMDP& mdp, const Policy& policy, int n,
                                 size_t dense_cap) {
    require(n >= 1, "dp-bad-steps", "n-step transition needs n >= 1");
    const int S = mdp.num_states, A = mdp.num_actions;
    const size_t total = static_cast<size_t>(S) * A * S;
    require(total <= dense_cap, "dp-cap-exceeded",
            "n-step transition needs " + std::to_string(total) + " entries");
    SuccessorMatrix out;
    out.num_states = S;
    out.num_actions = A;
    out.steps = n;
    out.gamma = 1.0;
    out.m.assign(total, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double* row = &out.m[(static_cast<size_t>(s) * A + a) * S];
            for (const TransitionAtom& tr : mdp.transitions[mdp.sa(s, a)])
                row[tr.next_state] += tr.prob;
        }

    const std::vector<double> pprobs = flat_probs(mdp, policy);
    std::vector<double> avg(static_cast<size_t>(S) * S);
    std::vector<double> next(total);
    for (int k = 2; k <= n; ++k) {
        pi_average(mdp, pprobs, out.m, avg);
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double* row = &next[(static_cast<size_t>(s) * A + a) * S];
                for (const TransitionAtom& tr : mdp.transitions[mdp.sa(s, a)]) {
                    const double* arow = &avg[static_cast<size_t>(tr.next_state) * S];
                    for (int sp = 0; sp < S; ++sp) row[sp] += tr.prob * arow[sp];
                }
            }
        out.m.swap(next);
    }
    return out;
}

std::vector<std::vector<double>> occupancy(const TabularMDP& mdp, const Policy& policy,
                                           int steps) {
    const int S = mdp.num_states, A = mdp.num_actions;
    steps = resolve_steps(mdp, steps);
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    std::vector<std::vector<double>> occ(steps + 1, std::vector<double>(S, 0.0));
    occ[0][mdp.start_state] = 1.0;
    for (int t = 0; t < steps; ++t)
        for (int s = 0; s < S; ++s) {
            if (occ[t][s] == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                const double w = occ[t][s] * pprobs[static_cast<size_t>(s) * A + a];
                if (w == 0.0) continue;
                for (const TransitionAtom& tr : mdp.transitions[mdp.sa(s, a)])
                    occ[t + 1][tr.next_state] += w * tr.prob;
            }
        }
    return occ;
}

OutcomeSuccessor outcome_successor(const TabularMDP& mdp, const Policy& policy,
                                   const SuccessorMatrix& succ, const OutcomeEncoding& encoding,
                                   size_t dense_cap) {
    const int S = mdp.num_states, A = mdp.num_actions, U = encoding.num_outcomes();
    const size_t total = static_cast<size_t>(S) * A * U;
    require(total <= dense_cap, "dp-cap-exceeded",
            "outcome successor needs " + std::to_string(total) + " entries");
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    auto q = outcome_mix(mdp, pprobs, encoding);
    OutcomeSuccessor out;
    out.num_states = S;
    out.num_actions = A;
    out.num_outcomes = U;
    out.m.assign(total, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double* mrow = &succ.m[(static_cast<size_t>(s) * A + a) * S];
            double* urow = &out.m[(static_cast<size_t>(s) * A + a) * U];
            for (int sp = 0; sp < S; ++sp) {
                if (mrow[sp] == 0.0 || sp == mdp.absorbing_state) continue;
                for (const auto& [u, pu] : q[sp]) urow[u] += mrow[sp] * pu;
            }
        }
    return out;
}

CoefficientTable contribution_coefficients(const TabularMDP& mdp, const Policy& policy,
                                           const OutcomeEncoding& encoding, int steps,
                                           double gamma, size_t dense_cap) {
    const SuccessorMatrix succ = successor_matrix(mdp, policy, steps, gamma, dense_cap);
    const OutcomeSuccessor mu = outcome_successor(mdp, policy, succ, encoding, dense_cap);
    const int S = mdp.num_states, A = mdp.num_actions, U = mu.num_outcomes;
    const std::vector<double> pprobs = flat_probs(mdp, policy);

    CoefficientTable table;
    table.num_states = S;
    table.num_actions = A;
    table.num_outcomes = U;
    table.w.assign(static_cast<size_t>(S) * A * U, 0.0);
    table.reachable.assign(static_cast<size_t>(S) * U, 0);
    for (int s = 0; s < S; ++s)
        for (int u = 0; u < U; ++u) {
            double denom = 0.0;
            for (int a = 0; a < A; ++a)
                denom += pprobs[static_cast<size_t>(s) * A + a] * mu.at(s, a, u);
            if (denom <= 0.0) continue; // unreachable under the policy: w stays 0
            table.reachable[static_cast<size_t>(s) * U + u] = 1;
            for (int a = 0; a < A; ++a)
                table.w[(static_cast<size_t>(s) * A + a) * U + u] = mu.at(s, a, u) / denom - 1.0;
        }
    return table;
}

void export_coefficients_csv(const CoefficientTable& table, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "io-open-failed", "cannot write " + path);
    std::fprintf(f, "s,a,u,w\r\n");
    for (int s = 0; s < table.num_states; ++s)
        for (int u = 0; u < table.num_outcomes; ++u) {
            if (!table.is_reachable(s, u)) continue;
            for (int a = 0; a < table.num_actions; ++a)
                std::fprintf(f, "%d,%d,%d,%.17g\r\n", s, a, u, table.at(s, a, u));
        }
    std::fclose(f);
}

HindsightTable hindsight_table(const TabularMDP& mdp, const Policy& policy,
                               const OutcomeEncoding& encoding, int steps, double gamma,
                               size_t dense_cap) {
    const SuccessorMatrix succ = successor_matrix(mdp, policy, steps, gamma, dense_cap);
    const OutcomeSuccessor mu = outcome_successor(mdp, policy, succ, encoding, dense_cap);
    const int S = mdp.num_states, A = mdp.num_actions, U = mu.num_outcomes;
    const std::vector<double> pprobs = flat_probs(mdp, policy);

    HindsightTable table;
    table.num_states = S;
    table.num_actions = A;
    table.num_outcomes = U;
    table.h.assign(static_cast<size_t>(S) * U * A, 0.0);
    table.reachable.assign(static_cast<size_t>(S) * U, 0);
    for (int s = 0; s < S; ++s)
        for (int u = 0; u < U; ++u) {
            double denom = 0.0;
            for (int a = 0; a < A; ++a)
                denom += pprobs[static_cast<size_t>(s) * A + a] * mu.at(s, a, u);
            if (denom <= 0.0) continue;
            table.reachable[static_cast<size_t>(s) * U + u] = 1;
            for (int a = 0; a < A; ++a)
                table.h[(static_cast<size_t>(s) * U + u) * A + a] =
                    pprobs[static_cast<size_t>(s) * A + a] * mu.at(s, a, u) / denom;
        }
    return table;
}

GroundTruth value_functions(const TabularMDP& mdp, const Policy& policy,
                            const SuccessorMatrix& succ) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    GroundTruth gt;
    gt.mean_reward = mean_rewards(mdp);
    std::vector<double> rpi(S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            rpi[s] += pprobs[static_cast<size_t>(s) * A + a] * gt.mean_reward[mdp.sa(s, a)];

    gt.q.assign(static_cast<size_t>(S) * A, 0.0);
    gt.v.assign(S, 0.0);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double q = gt.mean_reward[mdp.sa(s, a)];
            const double* mrow = &succ.m[(static_cast<size_t>(s) * A + a) * S];
            for (int sp = 0; sp < S; ++sp) q += mrow[sp] * rpi[sp];
            gt.q[mdp.sa(s, a)] = q;
            gt.v[s] += pprobs[static_cast<size_t>(s) * A + a] * q;
        }
    }
    return gt;
}

std::vector<double> expected_policy_gradient(const TabularMDP& mdp, const Policy& policy,
                                             const SuccessorMatrix& succ,
                                             const std::vector<double>& adv) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    // visit weight of s: 1[s = start] plus the discounted mass of later visits
    std::vector<double> weights(S, 0.0);
    for (int s = 0; s < S; ++s) {
        double occ = (s == mdp.start_state) ? 1.0 : 0.0;
        for (int a0 = 0; a0 < A; ++a0)
            occ += pprobs[static_cast<size_t>(mdp.start_state) * A + a0] *
                   succ.at(mdp.start_state, a0, s);
        weights[s] = occ;
    }
    return weighted_policy_gradient(mdp, policy, weights, adv);
}

std::vector<double> weighted_policy_gradient(const TabularMDP& mdp, const Policy& policy,
                                             const std::vector<double>& weights,
                                             const std::vector<double>& adv) {
    const int S = mdp.num_states, A = mdp.num_actions;
    require(adv.size() == static_cast<size_t>(S) * A, "dp-bad-shape",
            "advantage table shape mismatch");
    require(weights.size() == static_cast<size_t>(S), "dp-bad-shape",
            "weight table shape mismatch");
    std::vector<double> grad(policy.param_count(), 0.0);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state || weights[s] == 0.0) continue;
        for (int a = 0; a < A; ++a)
            policy.add_grad_pi(s, a, weights[s] * adv[mdp.sa(s, a)], grad);
    }
    return grad;
}

std::vector<double> state_visit_weights(const TabularMDP& mdp, const Policy& policy,
                                        double gamma, int t_stop) {
    if (t_stop < 0 || t_stop > mdp.horizon + 1) t_stop = mdp.horizon + 1;
    const auto occ = occupancy(mdp, policy, t_stop > 0 ? t_stop - 1 : 0);
    std::vector<double> weights(mdp.num_states, 0.0);
    double gt = 1.0;
    for (int t = 0; t < t_stop; ++t) {
        for (int s = 0; s < mdp.num_states; ++s) weights[s] += gt * occ[t][s];
        gt *= gamma;
    }
    return weights;
}

std::vector<double> ground_truth_gradient(const TabularMDP& mdp, const Policy& policy,
                                          const SuccessorMatrix& succ) {
    const GroundTruth gt = value_functions(mdp, policy, succ);
    return expected_policy_gradient(mdp, policy, succ, advantage_true(mdp, gt));
}

std::vector<double> advantage_true(const TabularMDP& mdp, const GroundTruth& gt) {
    std::vector<double> adv(gt.q.size());
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
            adv[mdp.sa(s, a)] = gt.q[mdp.sa(s, a)] - gt.v[s];
    return adv;
}

std::vector<double> advantage_with_baseline(const TabularMDP& mdp, const GroundTruth& gt,
                                            const std::vector<double>& vhat) {
    std::vector<double> adv(gt.q.size());
    for (int s = 0; s < mdp.num_states; ++s) {
        const double b = vhat.empty() ? 0.0 : vhat[s];
        for (int a = 0; a < mdp.num_actions; ++a) adv[mdp.sa(s, a)] = gt.q[mdp.sa(s, a)] - b;
    }
    return adv;
}

std::vector<double> advantage_qcritic(const TabularMDP& mdp, const Policy& policy,
                                      const std::vector<double>& qhat) {
    const int S = mdp.num_states, A = mdp.num_actions;
    require(qhat.size() == static_cast<size_t>(S) * A, "dp-bad-shape",
            "q table shape mismatch");
    std::vector<double> adv(qhat.size());
    for (int s = 0; s < S; ++s) {
        const std::vector<double> p = policy.probs(s);
        double vbar = 0.0;
        for (int a = 0; a < A; ++a) vbar += p[a] * qhat[mdp.sa(s, a)];
        for (int a = 0; a < A; ++a) adv[mdp.sa(s, a)] = qhat[mdp.sa(s, a)] - vbar;
    }
    return adv;
}

std::vector<double> advantage_cocoa(const TabularMDP& mdp, const Policy& policy,
                                    const SuccessorMatrix& succ, const CoefficientTable& coeffs,
                                    const OutcomeEncoding& encoding) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    std::vector<double> adv = joint_future_sum(mdp, pprobs, succ, coeffs, encoding);
    const std::vector<double> rbar = mean_rewards(mdp);
    for (int s = 0; s < S; ++s) {
        double rpi = 0.0;
        for (int a = 0; a < A; ++a)
            rpi += pprobs[static_cast<size_t>(s) * A + a] * rbar[mdp.sa(s, a)];
        for (int a = 0; a < A; ++a) adv[mdp.sa(s, a)] += rbar[mdp.sa(s, a)] - rpi;
    }
    return adv;
}

std::vector<double> advantage_reward_model(const TabularMDP& mdp, const Policy& policy,
                                           const SuccessorMatrix& succ,
                                           const CoefficientTable& state_coeffs,
                                           const OutcomeEncoding& state_encoding,
                                           const std::vector<double>& rhat) {
    require(rhat.size() == static_cast<size_t>(mdp.num_states) * mdp.num_actions, "dp-bad-shape",
            "reward model table shape mismatch");
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    std::vector<double> adv = joint_future_sum(mdp, pprobs, succ, state_coeffs, state_encoding);
    // Center by the policy-mixed model reward. The all-action estimator is
    // blind to per-state constants, so this leaves its gradient alone while
    // making the exact-model table equal Q - V.
    for (int s = 0; s < S; ++s) {
        double rpi = 0.0;
        for (int a = 0; a < A; ++a) rpi += pprobs[static_cast<size_t>(s) * A + a] * rhat[mdp.sa(s, a)];
        for (int a = 0; a < A; ++a) adv[mdp.sa(s, a)] += rhat[mdp.sa(s, a)] - rpi;
    }
    return adv;
}

// --- return distributions ---------------------------------------------------

namespace {

constexpr double kSupportTol = 1e-9;

struct Dist {
    std::vector<double> z, p;
};

int locate(const std::vector<double>& zs, double z, double tol) {
    auto it = std::lower_bound(zs.begin(), zs.end(), z);
    int best = -1;
    double best_gap = tol;
    const int idx = static_cast<int>(it - zs.begin());
    for (int cand : {idx - 1, idx}) {
        if (cand < 0 || cand >= static_cast<int>(zs.size())) continue;
        const double gap = std::abs(zs[cand] - z);
        if (gap <= best_gap) {
            best = cand;
            best_gap = gap;
        }
    }
    return best;
}

void add_mass(Dist& d, double z, double p) {
    const int i = locate(d.z, z, kSupportTol);
    if (i >= 0) {
        d.p[i] += p;
        return;
    }
    auto it = std::lower_bound(d.z.begin(), d.z.end(), z);
    const size_t pos = it - d.z.begin();
    d.z.insert(it, z);
    d.p.insert(d.p.begin() + pos, p);
}

} // namespace

int ReturnTable::find(int s, double z, double tol) const { return locate(support[s], z, tol); }

double ReturnTable::hindsight(const Policy& policy, int s, int a, double z) const {
    const int i = find(s, z);
    require(i >= 0, "dp-unknown-return", "return value not in the computed support");
    const double ps = p_state[s][i];
    require(ps > 0.0, "dp-unknown-return", "return value has zero probability from this state");
    const size_t k = support[s].size();
    return policy.probs(s)[a] * p_sa[s][static_cast<size_t>(a) * k + i] / ps;
}

ReturnTable return_table(const TabularMDP& mdp, const Policy& policy) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);

    std::vector<int> status(S, 0); // 0 new, 1 on stack, 2 done
    std::vector<Dist> state_dist(S);
    std::vector<std::vector<Dist>> act_dist(S);

    auto recurse = [&](auto&& self, int s) -> void {
        if (status[s] == 2) return;
        require(status[s] != 1, "dp-cyclic",
                "return distributions need an acyclic state graph");
        status[s] = 1;
        if (s == mdp.absorbing_state) {
            state_dist[s] = Dist{{0.0}, {1.0}};
            status[s] = 2;
            return;
        }
        act_dist[s].resize(A);
        for (int a = 0; a < A; ++a) {
            Dist& da = act_dist[s][a];
            for (const RewardAtom& r : mdp.rewards[mdp.sa(s, a)])
                for (const TransitionAtom& tr : mdp.transitions[mdp.sa(s, a)]) {
                    self(self, tr.next_state);
                    const Dist& child = state_dist[tr.next_state];
                    const double w = r.prob * tr.prob;
                    for (size_t i = 0; i < child.z.size(); ++i)
                        add_mass(da, r.value + child.z[i], w * child.p[i]);
                }
        }
        Dist& ds = state_dist[s];
        for (int a = 0; a < A; ++a)
            for (size_t i = 0; i < act_dist[s][a].z.size(); ++i)
                add_mass(ds, act_dist[s][a].z[i],
                         pprobs[static_cast<size_t>(s) * A + a] * act_dist[s][a].p[i]);
        // keep zero-probability support points so every action distribution
        // maps onto the state support
        for (int a = 0; a < A; ++a)
            for (double z : act_dist[s][a].z)
                if (locate(ds.z, z, kSupportTol) < 0) add_mass(ds, z, 0.0);
        status[s] = 2;
    };
    for (int s = 0; s < S; ++s) recurse(recurse, s);

    ReturnTable table;
    table.num_states = S;
    table.num_actions = A;
    table.support.resize(S);
    table.p_state.resize(S);
    table.p_sa.resize(S);
    for (int s = 0; s < S; ++s) {
        table.support[s] = state_dist[s].z;
        table.p_state[s] = state_dist[s].p;
        const size_t k = table.support[s].size();
        table.p_sa[s].assign(static_cast<size_t>(A) * k, 0.0);
        if (s == mdp.absorbing_state) continue;
        for (int a = 0; a < A; ++a)
            for (size_t i = 0; i < act_dist[s][a].z.size(); ++i) {
                const int j = locate(table.support[s], act_dist[s][a].z[i], kSupportTol);
                require(j >= 0, "dp-unknown-return", "action support escaped the state support");
                table.p_sa[s][static_cast<size_t>(a) * k + j] += act_dist[s][a].p[i];
            }
    }
    return table;
}

std::vector<double> advantage_hca_return(const TabularMDP& mdp, const Policy& policy,
                                         const ReturnTable& returns) {
    const int S = mdp.num_states, A = mdp.num_actions;
    (void)policy;
    std::vector<double> adv(static_cast<size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        const size_t k = returns.support[s].size();
        for (int a = 0; a < A; ++a) {
            double acc = 0.0;
            for (size_t i = 0; i < k; ++i) {
                const double psa = returns.p_sa[s][static_cast<size_t>(a) * k + i];
                // z values this action cannot produce contribute nothing,
                // which is where the bias of the ratio form comes from
                if (psa <= 0.0) continue;
                acc += (psa - returns.p_state[s][i]) * returns.support[s][i];
            }
            adv[mdp.sa(s, a)] = acc;
        }
    }
    return adv;
}

std::vector<double> advantage_counterfactual_return(const TabularMDP& mdp, const Policy& policy,
                                                    const ReturnTable& returns) {
    const int S = mdp.num_states, A = mdp.num_actions;
    (void)policy;
    std::vector<double> adv(static_cast<size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        const size_t k = returns.support[s].size();
        for (int a = 0; a < A; ++a) {
            double acc = 0.0;
            for (size_t i = 0; i < k; ++i)
                acc += (returns.p_sa[s][static_cast<size_t>(a) * k + i] -
                        returns.p_state[s][i]) *
                       returns.support[s][i];
            adv[mdp.sa(s, a)] = acc;
        }
    }
    return adv;
}

// --- n-step oracle -----------------------------------------------------------

NstepOracle nstep_oracle(const TabularMDP& mdp, const Policy& policy,
                         const OutcomeEncoding& encoding, int n, double beta, double gamma,
                         size_t dense_cap) {
    require(n >= 1, "dp-bad-steps", "n-step oracle needs n >= 1");
    NstepOracle oracle;
    oracle.n = n;
    oracle.beta = beta;
    oracle.gamma = gamma;
    oracle.outcome_coeffs =
        contribution_coefficients(mdp, policy, encoding, n - 1, beta, dense_cap);
    oracle.pn = nstep_transition(mdp, policy, n, dense_cap);
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> pprobs = flat_probs(mdp, policy);
    oracle.pn_state.assign(static_cast<size_t>(S) * S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double pa = pprobs[static_cast<size_t>(s) * A + a];
            if (pa == 0.0) continue;
            const double* row = &oracle.pn.m[(static_cast<size_t>(s) * A + a) * S];
            for (int sp = 0; sp < S; ++sp)
                oracle.pn_state[static_cast<size_t>(s) * S + sp] += pa * row[sp];
        }
    return oracle;
}

std::vector<double> advantage_nstep(const TabularMDP& mdp, const Policy& policy,
                                    const NstepOracle& oracle, const OutcomeEncoding& encoding,
                                    const std::vector<double>& vhat) {
    const int S = mdp.num_states, A = mdp.num_actions;
    require(vhat.size() == static_cast<size_t>(S), "dp-bad-shape", "value table shape mismatch");
    const std::vector<double> pprobs = flat_probs(mdp, policy);

    // own-step correction plus the truncated coefficient-weighted future sum
    const SuccessorMatrix mg =
        successor_matrix(mdp, policy, oracle.n - 1, oracle.gamma);
    std::vector<double> adv =
        joint_future_sum(mdp, pprobs, mg, oracle.outcome_coeffs, encoding);
    const std::vector<double> rbar = mean_rewards(mdp);
    for (int s = 0; s < S; ++s) {
        double rpi = 0.0;
        for (int a = 0; a < A; ++a)
            rpi += pprobs[static_cast<size_t>(s) * A + a] * rbar[mdp.sa(s, a)];
        for (int a = 0; a < A; ++a) adv[mdp.sa(s, a)] += rbar[mdp.sa(s, a)] - rpi;
    }

    // bootstrap through the exact n-step state coefficients
    const double gn = std::pow(oracle.gamma, oracle.n);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        for (int sp = 0; sp < S; ++sp) {
            if (sp == mdp.absorbing_state) continue;
            const double ps = oracle.pn_state[static_cast<size_t>(s) * S + sp];
            if (ps <= 0.0) continue;
            for (int a = 0; a < A; ++a) {
                const double wn = oracle.pn.at(s, a, sp) / ps - 1.0;
                adv[mdp.sa(s, a)] += gn * ps * wn * vhat[sp];
            }
        }
    }
    return adv;
}

// --- occurrence gradient check ----------------------------------------------

OccurrenceCheck occurrence_gradient_check(const TabularMDP& mdp, const Policy& policy,
                                          const OutcomeEncoding& encoding, int outcome,
                                          double fd_step) {
    const int S = mdp.num_states, A = mdp.num_actions;
    require(outcome >= 0 && outcome < encoding.num_outcomes(), "dp-bad-outcome",
            "outcome id out of range");

    auto occurrence_from_start = [&](const Policy& pol) {
        const SuccessorMatrix succ = successor_matrix(mdp, pol);
        const OutcomeSuccessor mu = outcome_successor(mdp, pol, succ, encoding);
        const std::vector<double> p = pol.probs(mdp.start_state);
        double o = 0.0;
        for (int a = 0; a < A; ++a) o += p[a] * mu.at(mdp.start_state, a, outcome);
        return o;
    };

    const SuccessorMatrix succ = successor_matrix(mdp, policy);
    const OutcomeSuccessor mu = outcome_successor(mdp, policy, succ, encoding);
    const CoefficientTable coeffs = contribution_coefficients(mdp, policy, encoding);
    const std::vector<double> pprobs = flat_probs(mdp, policy);

    std::vector<double> o_here(S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            o_here[s] += pprobs[static_cast<size_t>(s) * A + a] * mu.at(s, a, outcome);

    OccurrenceCheck check;
    check.dp_grad.assign(policy.param_count(), 0.0);
    for (int s = 0; s < S; ++s) {
        if (s == mdp.absorbing_state) continue;
        double occ = (s == mdp.start_state) ? 1.0 : 0.0;
        for (int a0 = 0; a0 < A; ++a0)
            occ += pprobs[static_cast<size_t>(mdp.start_state) * A + a0] *
                   succ.at(mdp.start_state, a0, s);
        if (occ == 0.0 || o_here[s] == 0.0) continue;
        for (int a = 0; a < A; ++a)
            policy.add_grad_pi(s, a, occ * coeffs.at(s, a, outcome) * o_here[s], check.dp_grad);
    }

    Policy probe = policy;
    std::vector<double>& params = probe.params();
    check.fd_grad.assign(params.size(), 0.0);
    for (size_t i = 0; i < params.size(); ++i) {
        const double base = params[i];
        params[i] = base + fd_step;
        const double up = occurrence_from_start(probe);
        params[i] = base - fd_step;
        const double down = occurrence_from_start(probe);
        params[i] = base;
        check.fd_grad[i] = (up - down) / (2.0 * fd_step);
    }

    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        dot += check.dp_grad[i] * check.fd_grad[i];
        na += check.dp_grad[i] * check.dp_grad[i];
        nb += check.fd_grad[i] * check.fd_grad[i];
    }
    check.cosine = (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
    return check;
}

} // namespace cocoa
