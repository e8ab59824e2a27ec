#pragma once

#include <string>
#include <vector>

#include "cocoa/encoding.hpp"
#include "cocoa/mdp.hpp"
#include "cocoa/policy.hpp"

namespace cocoa {

// Dense DP arrays refuse to allocate beyond this many entries unless the
// caller raises the cap explicitly.
inline constexpr size_t kDenseCap = 20'000'000;

// M(s, a, s') = sum_{k=1..steps} gamma^k p(S_k = s' | S_0 = s, A_0 = a),
// actions after the first drawn from the policy. Computed by the backward
// recursion M_t(s,a,s') = sum_{s''} p(s''|s,a) gamma (1[s''=s'] +
// sum_{a''} pi(a''|s'') M_{t-1}(s'',a'',s')).
struct SuccessorMatrix {
    int num_states = 0, num_actions = 0, steps = 0;
    double gamma = 1.0;
    std::vector<double> m; // [(s * A + a) * S + s']

    double at(int s, int a, int sp) const {
        return m[(static_cast<size_t>(s) * num_actions + a) * num_states + sp];
    }
};

SuccessorMatrix successor_matrix(const TabularMDP& mdp, const Policy& policy, int steps = -1,
                                 double gamma = 1.0, size_t dense_cap = kDenseCap);

// Exact n-step transition probabilities p(S_n = s' | S_0 = s, A_0 = a).
SuccessorMatrix nstep_transition(const TabularMDP& mdp, const Policy& policy, int n,
                                 size_t dense_cap = kDenseCap);

// occupancy[t][s] = p(S_t = s | S_0 = start) under the policy.
std::vector<std::vector<double>> occupancy(const TabularMDP& mdp, const Policy& policy, int steps);

// M(s, a, u) = sum_{k>=1} gamma^k p(U_k = u | s, a): successor mass routed
// through the outcome encoding at the future step's (state, action, reward).
// The absorbing state's pseudo-steps are never outcomes.
struct OutcomeSuccessor {
    int num_states = 0, num_actions = 0, num_outcomes = 0;
    std::vector<double> m; // [(s * A + a) * U + u]

    double at(int s, int a, int u) const {
        return m[(static_cast<size_t>(s) * num_actions + a) * num_outcomes + u];
    }
};

OutcomeSuccessor outcome_successor(const TabularMDP& mdp, const Policy& policy,
                                   const SuccessorMatrix& succ, const OutcomeEncoding& encoding,
                                   size_t dense_cap = kDenseCap);

// Contribution coefficients w(s, a, u) = M(s,a,u) / sum_a' pi(a'|s) M(s,a',u)
// - 1. Entries whose denominator is zero are unreachable: flagged, w = 0.
struct CoefficientTable {
    int num_states = 0, num_actions = 0, num_outcomes = 0;
    std::vector<double> w;          // [(s * A + a) * U + u]
    std::vector<uint8_t> reachable; // [s * U + u]

    double at(int s, int a, int u) const {
        return w[(static_cast<size_t>(s) * num_actions + a) * num_outcomes + u];
    }
    bool is_reachable(int s, int u) const {
        return reachable[static_cast<size_t>(s) * num_outcomes + u] != 0;
    }
};

CoefficientTable contribution_coefficients(const TabularMDP& mdp, const Policy& policy,
                                           const OutcomeEncoding& encoding, int steps = -1,
                                           double gamma = 1.0, size_t dense_cap = kDenseCap);

// Writes "s,a,u,w" rows (reachable entries only) with %.17g values.
void export_coefficients_csv(const CoefficientTable& table, const std::string& path);

// Hindsight distribution p(a | s, u') = pi(a|s) M(s,a,u') / sum_a' pi M.
struct HindsightTable {
    int num_states = 0, num_actions = 0, num_outcomes = 0;
    std::vector<double> h;          // [(s * U + u) * A + a]
    std::vector<uint8_t> reachable; // [s * U + u]

    double at(int s, int u, int a) const {
        return h[(static_cast<size_t>(s) * num_outcomes + u) * num_actions + a];
    }
    bool is_reachable(int s, int u) const {
        return reachable[static_cast<size_t>(s) * num_outcomes + u] != 0;
    }
};

HindsightTable hindsight_table(const TabularMDP& mdp, const Policy& policy,
                               const OutcomeEncoding& encoding, int steps = -1,
                               double gamma = 1.0, size_t dense_cap = kDenseCap);

// Ground-truth values under the policy: Q(s,a) = r(s,a) + sum_s' M(s,a,s')
// r^pi(s'), V(s) = sum_a pi(a|s) Q(s,a). Pass a discounted successor matrix
// for discounted values.
struct GroundTruth {
    std::vector<double> v;           // [s]
    std::vector<double> q;           // [s * A + a]
    std::vector<double> mean_reward; // [s * A + a]
};

GroundTruth value_functions(const TabularMDP& mdp, const Policy& policy,
                            const SuccessorMatrix& succ);

// Expected policy gradient sum_a grad pi(a|s0) A(s0,a) + sum_s occ+(s)
// sum_a grad pi(a|s) A(s,a), where occ+(s) = sum_{a0} pi(a0|s0) M(s0,a0,s)
// counts discounted visits after t=0. `adv` is indexed s * A + a.
std::vector<double> expected_policy_gradient(const TabularMDP& mdp, const Policy& policy,
                                             const SuccessorMatrix& succ,
                                             const std::vector<double>& adv);

// sum_s weights[s] sum_a grad pi(a|s) adv(s,a).
std::vector<double> weighted_policy_gradient(const TabularMDP& mdp, const Policy& policy,
                                             const std::vector<double>& weights,
                                             const std::vector<double>& adv);

// weights[s] = sum_{t < t_stop} gamma^t p(S_t = s), the discounted visit
// weights an estimator's outer time sum assigns to each state. t_stop < 0
// covers the whole horizon.
std::vector<double> state_visit_weights(const TabularMDP& mdp, const Policy& policy,
                                        double gamma, int t_stop = -1);

// Gradient of the undiscounted (or gamma-discounted, via succ) expected
// return, assembled from the true advantages Q - V.
std::vector<double> ground_truth_gradient(const TabularMDP& mdp, const Policy& policy,
                                          const SuccessorMatrix& succ);

// --- expected per-(s,a) advantages for the estimator zoo -------------------

// True advantages Q - V.
std::vector<double> advantage_true(const TabularMDP& mdp, const GroundTruth& gt);

// Advantage estimator with baseline V-hat: Q - V-hat (REINFORCE: vhat = {}).
std::vector<double> advantage_with_baseline(const TabularMDP& mdp, const GroundTruth& gt,
                                            const std::vector<double>& vhat);

// Q-critic / TrajCV expected form: Qhat(s,a) - sum_a' pi(a'|s) Qhat(s,a').
std::vector<double> advantage_qcritic(const TabularMDP& mdp, const Policy& policy,
                                      const std::vector<double>& qhat);

// Counterfactual advantage r(s,a) - r^pi(s) + E_{traj from s} [sum_{k>=1}
// gamma^k w(s,a,U_k) R_k], evaluated jointly over the future (state, action,
// reward) triples so it stays the estimator's true expectation even for
// encodings that are not fully predictive. Used by the single-action and
// all-action variants alike (their expected gradients coincide).
std::vector<double> advantage_cocoa(const TabularMDP& mdp, const Policy& policy,
                                    const SuccessorMatrix& succ, const CoefficientTable& coeffs,
                                    const OutcomeEncoding& encoding);

// All-action estimator with a learned/DP reward model instead of the sampled
// own-step term: rhat(s,a) + joint future sum (state outcomes).
std::vector<double> advantage_reward_model(const TabularMDP& mdp, const Policy& policy,
                                           const SuccessorMatrix& succ,
                                           const CoefficientTable& state_coeffs,
                                           const OutcomeEncoding& state_encoding,
                                           const std::vector<double>& rhat);

// --- exact return distributions (DAG MDPs) ---------------------------------

// Finite-support distributions of the forward return Z from each state
// (inclusive of the current step's reward). Support values within 1e-9 are
// merged. Throws Error("dp-cyclic") when the MDP graph has cycles among
// non-absorbing states.
struct ReturnTable {
    int num_states = 0, num_actions = 0;
    std::vector<std::vector<double>> support; // [s], sorted
    std::vector<std::vector<double>> p_state; // [s][zi]
    std::vector<std::vector<double>> p_sa;    // [s][a * |support(s)| + zi]

    // Index of z in support[s] within tolerance, -1 if absent.
    int find(int s, double z, double tol = 1e-9) const;
    // p^pi(a | s, Z = z); Error("dp-unknown-return") if z is not in support.
    double hindsight(const Policy& policy, int s, int a, double z) const;
};

ReturnTable return_table(const TabularMDP& mdp, const Policy& policy);

// Expected HCA-return advantage sum_z p(z|s,a) (1 - pi(a|s)/p(a|s,z)) z.
std::vector<double> advantage_hca_return(const TabularMDP& mdp, const Policy& policy,
                                         const ReturnTable& returns);

// Expected counterfactual-return advantage sum_z p(z|s) (p(z|s,a)/p(z|s) - 1) z
// (equal to Q - V; computed from the distributions, not assumed).
std::vector<double> advantage_counterfactual_return(const TabularMDP& mdp, const Policy& policy,
                                                    const ReturnTable& returns);

// --- n-step advantage (bootstrapped coefficients) ---------------------------

// A(s,a) = r(s,a) - r^pi(s) + sum_{k=1}^{n-1} gamma^k E[w_{n,beta}(s,a,U_k)
// R_k] + gamma^n E[w_n(s,a,S_n) V(S_n)], with w_{n,beta} built from the
// beta-discounted (n-1)-step outcome successors and w_n from exact n-step
// state transitions.
struct NstepOracle {
    int n = 0;
    double beta = 1.0, gamma = 1.0;
    CoefficientTable outcome_coeffs; // w_{n,beta}
    SuccessorMatrix pn;              // exact n-step transitions
    std::vector<double> pn_state;    // [s * S + s'] marginal p(S_n=s'|s)
};

NstepOracle nstep_oracle(const TabularMDP& mdp, const Policy& policy,
                         const OutcomeEncoding& encoding, int n, double beta, double gamma,
                         size_t dense_cap = kDenseCap);

std::vector<double> advantage_nstep(const TabularMDP& mdp, const Policy& policy,
                                    const NstepOracle& oracle, const OutcomeEncoding& encoding,
                                    const std::vector<double>& vhat);

// --- occurrence-probability gradient check ----------------------------------

// Compares the DP expression sum_s occ(s) sum_a grad pi(a|s) w(s,a,u) O(u,s)
// against the finite-difference gradient of O(u, s0) = sum_a pi(a|s0)
// M(s0,a,u) with respect to the policy parameters.
struct OccurrenceCheck {
    double cosine = 0.0;
    std::vector<double> dp_grad, fd_grad;
};

OccurrenceCheck occurrence_gradient_check(const TabularMDP& mdp, const Policy& policy,
                                          const OutcomeEncoding& encoding, int outcome,
                                          double fd_step = 1e-6);

} // namespace cocoa
