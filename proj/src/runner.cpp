#include "cocoa/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "cocoa/analysis.hpp"
#include "cocoa/dp.hpp"
#include "cocoa/envs.hpp"
#include "cocoa/error.hpp"
#include "cocoa/learners.hpp"
#include "cocoa/nets.hpp"

namespace cocoa {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// --- artifact formatting -----------------------------------------------------

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::string num_cell(double v) { return std::isnan(v) ? std::string() : g17(v); }
std::string int_cell(long long v) { return v < 0 ? std::string() : std::to_string(v); }

// One row of the scenario-independent results table. Every scenario writes the
// same superset of columns; fields that do not apply stay empty (NaN doubles,
// negative counters).
struct ResultRow {
    std::string experiment_id, env, estimator;
    long long seed = -1, checkpoint = -1;
    double snr_db = kNaN, bias_db = kNaN, var_db = kNaN;
    long long samples = -1;
    std::string metric;
    double value = kNaN;
};

const char* kResultsHeader =
    "experiment_id,env,estimator,seed,checkpoint,snr_db,bias_db,var_db,samples,metric,value";

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "runner-io", "cannot write " + path.string());
    out << kResultsHeader << "\r\n";
    for (const ResultRow& r : rows) {
        out << csv_field(r.experiment_id) << ',' << csv_field(r.env) << ','
            << csv_field(r.estimator) << ',' << int_cell(r.seed) << ',' << int_cell(r.checkpoint)
            << ',' << num_cell(r.snr_db) << ',' << num_cell(r.bias_db) << ','
            << num_cell(r.var_db) << ',' << int_cell(r.samples) << ',' << csv_field(r.metric)
            << ',' << num_cell(r.value) << "\r\n";
    }
}

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Artifacts {
    std::filesystem::path dir;
    std::vector<ResultRow> rows;
    std::vector<Assertion> checks;
    ordered_json extra = ordered_json::object();

    void check(const std::string& name, bool pass, const std::string& detail) {
        checks.push_back({name, pass, detail});
    }

    void plot(const std::string& file, const std::string& header,
              const std::vector<std::vector<std::string>>& data) const {
        std::ofstream out(dir / "plots" / file, std::ios::binary);
        require(out.good(), "runner-io", "cannot write plot " + file);
        out << header << "\r\n";
        for (const auto& cols : data) {
            for (size_t i = 0; i < cols.size(); ++i) {
                if (i) out << ',';
                out << csv_field(cols[i]);
            }
            out << "\r\n";
        }
    }
};

ResultRow metrics_row(const std::string& id, const std::string& env, const std::string& label,
                      long long seed, long long checkpoint, const MetricsRecord& rec) {
    ResultRow r;
    r.experiment_id = id;
    r.env = env;
    r.estimator = label;
    r.seed = seed;
    r.checkpoint = checkpoint;
    r.snr_db = rec.snr_db;
    r.bias_db = rec.bias_db;
    r.var_db = rec.var_db;
    r.samples = rec.samples;
    return r;
}

ResultRow value_row(const std::string& id, const std::string& env, const std::string& label,
                    long long seed, long long checkpoint, const std::string& metric, double value,
                    long long samples = -1) {
    ResultRow r;
    r.experiment_id = id;
    r.env = env;
    r.estimator = label;
    r.seed = seed;
    r.checkpoint = checkpoint;
    r.samples = samples;
    r.metric = metric;
    r.value = value;
    return r;
}

// --- config plumbing ---------------------------------------------------------

ordered_json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("runner-bad-config", source + ": " + e.what());
    }
}

// Patches must stay inside the default schema: unknown keys are config bugs
// and value kinds must match (any number may replace any number).
void merge_into(ordered_json& base, const ordered_json& patch, const std::string& source) {
    require(patch.is_object(), "runner-bad-config", source + ": config must be a JSON object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        require(base.contains(it.key()), "runner-bad-config",
                source + ": unknown key '" + it.key() + "'");
        const ordered_json& cur = base.at(it.key());
        const bool ok = cur.type() == it.value().type() ||
                        (cur.is_number() && it.value().is_number());
        require(ok, "runner-bad-config",
                source + ": key '" + it.key() + "' has the wrong value type");
        base[it.key()] = it.value();
    }
}

void apply_override(ordered_json& cfg, const std::string& kv) {
    const size_t eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "runner-bad-config",
            "--override expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    ordered_json value;
    try {
        value = ordered_json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw; // bare strings need no quoting on the command line
    }
    ordered_json patch = ordered_json::object();
    patch[key] = value;
    merge_into(cfg, patch, "--override " + key);
}

template <typename T>
T get_as(const ordered_json& cfg, const char* key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("runner-bad-config", std::string("key '") + key + "': " + e.what());
    }
}

int geti(const ordered_json& c, const char* k) { return get_as<int>(c, k); }
double getd(const ordered_json& c, const char* k) { return get_as<double>(c, k); }
bool getb(const ordered_json& c, const char* k) { return get_as<bool>(c, k); }
std::vector<int> getvi(const ordered_json& c, const char* k) {
    return get_as<std::vector<int>>(c, k);
}
std::vector<double> getvd(const ordered_json& c, const char* k) {
    return get_as<std::vector<double>>(c, k);
}
std::vector<std::string> getvs(const ordered_json& c, const char* k) {
    return get_as<std::vector<std::string>>(c, k);
}

uint64_t seed_of(const ordered_json& cfg) {
    const long long s = get_as<long long>(cfg, "seed");
    require(s >= 0, "runner-bad-config", "seed must be >= 0");
    return static_cast<uint64_t>(s);
}

// --- shared scenario helpers --------------------------------------------------

Policy uniform_policy(const TabularMDP& mdp) {
    return Policy::tabular(mdp.num_states, mdp.num_actions, 0.0);
}

// Non-uniform logits make the expected-gradient identities sensitive to the
// full pi-weighting, which a uniform policy would partially mask.
Policy random_logit_policy(const TabularMDP& mdp, uint64_t seed) {
    Policy p = Policy::tabular(mdp.num_states, mdp.num_actions, 0.0);
    Rng rng(seed, 5);
    for (double& v : p.params()) v = rng.next_double() - 0.5;
    return p;
}

double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double diff = 0.0, norm = 0.0;
    for (size_t i = 0; i < want.size(); ++i) {
        const double d = got[i] - want[i];
        diff += d * d;
        norm += want[i] * want[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / (static_cast<double>(v.size()) - 1.0) /
                     static_cast<double>(v.size()));
}

double default_qvalue_lr(EstimatorKind kind) {
    return kind == EstimatorKind::TrajCv ? 1e-2 : 3e-3;
}

} // namespace

// --- online training engine ----------------------------------------------

double key_to_door_entropy(int length, bool aliased) {
    require(length >= 4, "runner-bad-config", "key-to-door length too small");
    if (aliased && length == 100) return 0.0062;
    switch (length) {
    case 20: return 0.03;
    case 40: return 0.0187;
    case 60: return 0.0142;
    case 80: return 0.0116;
    case 100: return 0.01;
    default: break;
    }
    // log-log interpolation through the anchors 0.03 at L=20 and 0.01 at L=100
    const double t = (std::log(static_cast<double>(length)) - std::log(20.0)) /
                     (std::log(100.0) - std::log(20.0));
    return std::exp(std::log(0.03) + t * (std::log(0.01) - std::log(0.03)));
}

double default_policy_lr(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::Advantage: return 1e-3;
    case EstimatorKind::TrajCv: return 3e-3;
    case EstimatorKind::HcaReturn:
    case EstimatorKind::CounterfactualReturn: return 1e-4;
    default: return 3e-4;
    }
}

TrainResult train_policy(const TabularMDP& mdp, const OutcomeEncoding& encoding,
                         const TrainConfig& cfg, const TrajectoryMetric& metric,
                         const TabularMDP* switch_mdp) {
    const EstimatorKind kind = cfg.kind;
    require(cfg.batches >= 0, "runner-bad-config", "batch budget must be >= 0");
    require(cfg.batch_size > 0 && cfg.eval_batch > 0, "runner-bad-config",
            "batch sizes must be positive");
    switch (kind) {
    case EstimatorKind::HcaReturn:
    case EstimatorKind::CounterfactualReturn:
    case EstimatorKind::CocoaNstep:
        throw Error("runner-unsupported-training",
                    std::string(estimator_name(kind)) +
                        " has no online learner in the training engine");
    default: break;
    }
    if (switch_mdp)
        require(switch_mdp->num_states == mdp.num_states &&
                    switch_mdp->num_actions == mdp.num_actions,
                "runner-bad-config", "switch environment must share the state/action space");

    const int S = mdp.num_states, A = mdp.num_actions;
    Policy policy = cfg.policy_hidden.empty()
                        ? Policy::tabular(S, A, cfg.epsilon)
                        : Policy::mlp(mdp.state_features, A, cfg.policy_hidden,
                                      child_seed(cfg.seed, 11), cfg.epsilon);
    AdamW opt(policy.param_count(), cfg.lr_policy, 0.0, cfg.clip_norm);

    // Estimator-facing outcome encoding: the state-outcome variants always run
    // on the state encoding, everything else uses the scenario's.
    const bool state_kind =
        kind == EstimatorKind::HcaPlus || kind == EstimatorKind::HcaRewardModel;
    std::optional<OutcomeEncoding> state_enc;
    if (state_kind) state_enc.emplace(OutcomeEncoding::state(mdp));
    const OutcomeEncoding& est_enc = state_kind ? *state_enc : encoding;

    std::optional<TabularHindsight> hindsight;
    if (state_kind || kind == EstimatorKind::Cocoa || kind == EstimatorKind::CocoaSampled)
        hindsight.emplace(S, A, est_enc.num_outcomes());

    std::optional<TdCritic> critic;
    if (kind == EstimatorKind::Advantage) {
        TdCriticConfig tc;
        tc.q_flavor = false;
        tc.tabular = cfg.critic_hidden.empty();
        tc.lr = cfg.lr_value;
        tc.gamma = cfg.gamma;
        tc.lambda = cfg.td_lambda_value;
        tc.hidden = cfg.critic_hidden;
        tc.init_seed = child_seed(cfg.seed, 12);
        critic.emplace(mdp, tc);
    } else if (kind == EstimatorKind::QCritic || kind == EstimatorKind::TrajCv) {
        TdCriticConfig tc;
        tc.q_flavor = true;
        tc.tabular = cfg.critic_hidden.empty();
        tc.lr = cfg.lr_qvalue;
        tc.gamma = cfg.gamma;
        tc.lambda = cfg.td_lambda_qvalue;
        tc.hidden = cfg.critic_hidden;
        tc.init_seed = child_seed(cfg.seed, 12);
        critic.emplace(mdp, tc);
    }

    // running reward means, only for the reward-model variant
    std::vector<double> rsum, rcnt;
    if (kind == EstimatorKind::HcaRewardModel) {
        rsum.assign(S * A, 0.0);
        rcnt.assign(S * A, 0.0);
    }

    EstimatorModels models;
    if (kind == EstimatorKind::Advantage)
        models.value = [&critic](int s) { return critic->value(s); };
    if (kind == EstimatorKind::QCritic || kind == EstimatorKind::TrajCv)
        models.qvalue = [&critic](int s, int a) { return critic->qvalue(s, a); };
    // The training loop reads the count table through the policy-renormalized
    // forward ratio: the same w-hat on converged counts, but action-neutral
    // outcome bins cancel to w = 0 while the policy is still moving instead of
    // dragging every action toward the stale behavior average.
    if (hindsight)
        models.coefficient = [&hindsight, &policy](int s, int a, int u) {
            return hindsight->forward_coefficient(policy, s, a, u);
        };
    if (kind == EstimatorKind::HcaRewardModel)
        models.reward = [&rsum, &rcnt, A](int s, int a) {
            const double c = rcnt[s * A + a];
            return c > 0.0 ? rsum[s * A + a] / c : 0.0;
        };

    EstimatorOptions opts;
    opts.gamma = cfg.gamma;
    opts.sampled_actions = cfg.sampled_actions;

    TrainResult result;
    if (cfg.batches == 0) { // zero budget: no updates, no curve
        result.policy = std::move(policy);
        return result;
    }

    const auto evaluate = [&](int b, const TabularMDP& env) {
        Policy eval_policy = policy;
        eval_policy.set_epsilon(cfg.eval_epsilon);
        const std::vector<Trajectory> batch =
            sample_batch(env, eval_policy, cfg.eval_batch, cfg.seed,
                         1000000ull + static_cast<uint64_t>(b) * 10000ull);
        double ret = 0.0, met = 0.0;
        int met_n = 0;
        for (const Trajectory& traj : batch) {
            ret += traj.total_return();
            if (metric) {
                const double m = metric(traj);
                if (!std::isnan(m)) {
                    met += m;
                    ++met_n;
                }
            }
        }
        TrainPoint pt;
        pt.batch = b;
        pt.mean_return = ret / static_cast<double>(cfg.eval_batch);
        pt.metric = met_n > 0 ? met / static_cast<double>(met_n) : kNaN;
        result.curve.push_back(pt);
    };

    Rng action_rng(cfg.seed, 31337); // cocoa-sampled draws
    const TabularMDP* env = &mdp;
    for (int b = 0; b <= cfg.batches; ++b) {
        if (switch_mdp && cfg.switch_batch >= 0 && b == cfg.switch_batch) env = switch_mdp;
        if (b == 0 || b == cfg.batches || (cfg.eval_every > 0 && b % cfg.eval_every == 0))
            evaluate(b, *env);
        if (b == cfg.batches) break;

        const std::vector<Trajectory> batch =
            sample_batch(*env, policy, cfg.batch_size, cfg.seed,
                         500000000ull + static_cast<uint64_t>(b) * 1000ull);

        // learners first, so the gradient uses the models updated on this batch
        if (hindsight) {
            hindsight->decay(cfg.hindsight_decay);
            for (const Trajectory& traj : batch) hindsight->observe(traj, est_enc, cfg.gamma);
        }
        if (critic) critic->update(batch, policy);
        if (kind == EstimatorKind::HcaRewardModel)
            for (const Trajectory& traj : batch)
                for (const Step& st : traj.steps) {
                    rsum[st.state * A + st.action] += st.reward;
                    rcnt[st.state * A + st.action] += 1.0;
                }

        std::vector<double> grad =
            estimate_batch_mean(kind, *env, policy, est_enc, batch, models, opts, &action_rng);
        const double ecoeff = cfg.entropy / static_cast<double>(cfg.batch_size);
        if (ecoeff != 0.0)
            for (const Trajectory& traj : batch)
                for (const Step& st : traj.steps)
                    policy.add_grad_entropy(st.state, ecoeff, grad);
        for (double& g : grad) g = -g; // optimizer minimizes
        opt.step(policy.params(), grad);

        bool finite = true;
        for (const double p : policy.params())
            if (!std::isfinite(p)) {
                finite = false;
                break;
            }
        if (!finite) {
            result.diverged = true;
            result.diverged_at = b + 1;
            break;
        }
    }
    result.policy = std::move(policy);
    return result;
}

// --- scenarios ---------------------------------------------------------------

namespace {

void scenario_bandit_bias(const ordered_json& cfg, Artifacts& art) {
    (void)cfg; // fully deterministic: the study is exact dynamic programming
    const TabularMDP mdp = build_bandit();
    const Policy policy = bandit_reference_policy();
    DpBundleOptions bo;
    bo.with_returns = true;
    const DpBundle bundle = make_dp_bundle(mdp, policy, OutcomeEncoding::reward(mdp), bo);

    const std::vector<double> truth = advantage_true(mdp, bundle.gt);
    const std::vector<double> hca = advantage_hca_return(mdp, policy, *bundle.returns);
    const std::vector<double> cf = advantage_counterfactual_return(mdp, policy, *bundle.returns);

    const int s0 = mdp.start_state, A = mdp.num_actions;
    std::vector<std::vector<std::string>> plot;
    for (int a = 0; a < A; ++a) {
        const std::string arm = "advantage/arm" + std::to_string(a);
        art.rows.push_back(
            value_row("bandit-bias", "bandit", "hca-return", -1, -1, arm, hca[s0 * A + a]));
        art.rows.push_back(value_row("bandit-bias", "bandit", "counterfactual-return", -1, -1,
                                     arm, cf[s0 * A + a]));
        art.rows.push_back(
            value_row("bandit-bias", "bandit", "exact", -1, -1, arm, truth[s0 * A + a]));
        plot.push_back({std::to_string(a), g17(hca[s0 * A + a]), g17(cf[s0 * A + a]),
                        g17(truth[s0 * A + a])});
    }
    art.plot("bandit_advantages.csv", "action,hca_return,counterfactual_return,true_advantage",
             plot);

    const EstimatorOptions opts;
    const std::vector<double> tg = true_gradient_for(bundle, mdp, policy, opts);
    for (const EstimatorKind kind : {EstimatorKind::Reinforce, EstimatorKind::HcaReturn,
                                     EstimatorKind::CounterfactualReturn}) {
        const std::vector<double> g = expected_estimator_gradient(bundle, mdp, policy, kind, opts);
        double dn = 0.0, tn = 0.0;
        for (size_t i = 0; i < tg.size(); ++i) {
            dn += (g[i] - tg[i]) * (g[i] - tg[i]);
            tn += tg[i] * tg[i];
        }
        ResultRow r;
        r.experiment_id = "bandit-bias";
        r.env = "bandit";
        r.estimator = estimator_name(kind);
        r.bias_db = to_decibels(dn / tn);
        art.rows.push_back(r);
    }

    const double tol = 1e-12;
    const double h0 = hca[s0 * A + 0], h1 = hca[s0 * A + 1];
    double cf_err = 0.0, hca_gap = 0.0;
    for (int a = 0; a < A; ++a) {
        cf_err = std::max(cf_err, std::fabs(cf[s0 * A + a] - truth[s0 * A + a]));
        hca_gap = std::max(hca_gap, std::fabs(hca[s0 * A + a] - truth[s0 * A + a]));
    }
    art.check("hca_return_advantages_match",
              std::fabs(h0 - 1.0 / 3.0) <= tol && std::fabs(h1 + 4.0 / 3.0) <= tol,
              "expected (1/3, -4/3), got (" + g17(h0) + ", " + g17(h1) + ")");
    art.check("hca_return_biased", hca_gap > 0.1,
              "largest gap to the true advantages (1, -2) is " + g17(hca_gap));
    art.check("counterfactual_return_unbiased", cf_err <= tol,
              "largest deviation from the true advantages is " + g17(cf_err));

    art.extra["hca_return_advantages"] = {h0, h1};
    art.extra["counterfactual_return_advantages"] = {cf[s0 * A + 0], cf[s0 * A + 1]};
    art.extra["true_advantages"] = {truth[s0 * A + 0], truth[s0 * A + 1]};
}

void scenario_unbiasedness(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const double tol = getd(cfg, "tolerance");

    struct Case {
        const char* env;
        std::string label;
        EstimatorKind kind;
        const DpBundle* bundle;
        EstimatorOptions opts;
        bool expect_unbiased;
    };

    TreeConfig tc;
    tc.depth = geti(cfg, "tree_depth");
    tc.num_actions = geti(cfg, "tree_actions");
    tc.overlap = geti(cfg, "tree_overlap");
    tc.reward_seed = static_cast<long long>(seed % 1024);
    const TreeEnv tree = build_tree(tc);
    const Policy tree_policy = random_logit_policy(tree.mdp, child_seed(seed, 1));

    DpBundleOptions tree_bo;
    tree_bo.with_returns = true;
    tree_bo.nstep = std::max(1, tc.depth - 1);
    const DpBundle tree_bundle =
        make_dp_bundle(tree.mdp, tree_policy, OutcomeEncoding::reward(tree.mdp), tree_bo);
    const DpBundle tree_grouped =
        make_dp_bundle(tree.mdp, tree_policy, tree.group_encoding(4), DpBundleOptions{});

    KeyToDoorConfig kc;
    kc.length = geti(cfg, "ktd_length");
    kc.env_seed = seed;
    const KeyToDoorEnv ktd = build_key_to_door(kc);
    const Policy ktd_policy = random_logit_policy(ktd.mdp, child_seed(seed, 2));

    const DpBundle ktd_bundle =
        make_dp_bundle(ktd.mdp, ktd_policy, OutcomeEncoding::reward(ktd.mdp), DpBundleOptions{});

    EstimatorOptions plain;
    EstimatorOptions nstep_opts;
    nstep_opts.nstep = tree_bo.nstep;

    std::vector<Case> cases;
    const std::pair<EstimatorKind, const char*> shared[] = {
        {EstimatorKind::Reinforce, "reinforce"},
        {EstimatorKind::Advantage, "advantage"},
        {EstimatorKind::QCritic, "q-critic"},
        {EstimatorKind::TrajCv, "trajcv"},
        {EstimatorKind::HcaPlus, "hca-plus"},
        {EstimatorKind::HcaRewardModel, "hca-reward-model"},
        {EstimatorKind::Cocoa, "cocoa"},
    };
    for (const auto& [kind, label] : shared)
        cases.push_back({"tree", label, kind, &tree_bundle, plain, true});
    cases.push_back({"tree", "cocoa-group4", EstimatorKind::Cocoa, &tree_grouped, plain, true});
    cases.push_back(
        {"tree", "cocoa-sampled", EstimatorKind::CocoaSampled, &tree_bundle, plain, true});
    cases.push_back({"tree", "counterfactual-return", EstimatorKind::CounterfactualReturn,
                     &tree_bundle, plain, true});
    cases.push_back(
        {"tree", "cocoa-nstep", EstimatorKind::CocoaNstep, &tree_bundle, nstep_opts, true});
    // the return-conditioned single-action estimator is the known biased one
    cases.push_back(
        {"tree", "hca-return", EstimatorKind::HcaReturn, &tree_bundle, plain, false});
    for (const auto& [kind, label] : shared)
        cases.push_back({"key-to-door", label, kind, &ktd_bundle, plain, true});

    double worst = 0.0;
    std::string worst_label;
    double hca_return_err = 0.0;
    std::vector<std::vector<std::string>> plot;
    for (const Case& c : cases) {
        const TabularMDP& mdp = c.env == std::string("tree") ? tree.mdp : ktd.mdp;
        const Policy& policy = c.env == std::string("tree") ? tree_policy : ktd_policy;
        const std::vector<double> expected =
            expected_estimator_gradient(*c.bundle, mdp, policy, c.kind, c.opts);
        const std::vector<double> truth = true_gradient_for(*c.bundle, mdp, policy, c.opts);
        const double err = rel_err(expected, truth);
        art.rows.push_back(
            value_row("unbiasedness", c.env, c.label, -1, -1, "grad_rel_err", err));
        plot.push_back({c.env, c.label, g17(err)});
        if (c.expect_unbiased && err > worst) {
            worst = err;
            worst_label = std::string(c.env) + "/" + c.label;
        }
        if (!c.expect_unbiased) hca_return_err = err;
    }
    art.plot("unbiasedness.csv", "env,estimator,grad_rel_err", plot);

    art.check("expected_gradients_match", worst < tol,
              "max relative error " + g17(worst) + " (" + worst_label + "), tolerance " +
                  g17(tol));
    art.check("hca_return_gap_visible", hca_return_err > 1e-3,
              "hca-return relative error " + g17(hca_return_err));
    art.extra["max_rel_err"] = worst;
    art.extra["hca_return_rel_err"] = hca_return_err;
}

void scenario_tree_variance(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const int depth = geti(cfg, "depth");
    const int num_actions = geti(cfg, "num_actions");
    const std::vector<int> overlaps = getvi(cfg, "overlaps");
    const std::vector<int> groupings = getvi(cfg, "groupings");
    const int env_seeds = geti(cfg, "env_seeds");
    const int eval_batch = geti(cfg, "eval_batch");
    require(!overlaps.empty() && env_seeds > 0, "runner-bad-config",
            "need at least one overlap and one environment seed");

    std::vector<std::string> labels = {"reinforce", "hca-plus", "cocoa"};
    for (const int g : groupings) labels.push_back("cocoa-group" + std::to_string(g));

    // variances[overlap index][label index] = per-env-seed normalized variance
    std::vector<std::vector<std::vector<double>>> variances(
        overlaps.size(), std::vector<std::vector<double>>(labels.size()));

    const EstimatorOptions opts;
    for (int e = 0; e < env_seeds; ++e) {
        for (size_t oi = 0; oi < overlaps.size(); ++oi) {
            TreeConfig tc;
            tc.depth = depth;
            tc.num_actions = num_actions;
            tc.overlap = overlaps[oi];
            tc.reward_seed = e;
            const TreeEnv tree = build_tree(tc);
            const Policy policy = uniform_policy(tree.mdp);
            const std::vector<Trajectory> batch = sample_batch(
                tree.mdp, policy, eval_batch, seed,
                80000ull + (static_cast<uint64_t>(e) * overlaps.size() + oi) * 100000ull);

            const DpBundle reward_bundle =
                make_dp_bundle(tree.mdp, policy, OutcomeEncoding::reward(tree.mdp));
            std::vector<const DpBundle*> bundles(labels.size(), &reward_bundle);
            std::vector<EstimatorKind> kinds = {EstimatorKind::Reinforce,
                                                EstimatorKind::HcaPlus, EstimatorKind::Cocoa};
            std::vector<DpBundle> grouped;
            grouped.reserve(groupings.size());
            for (const int g : groupings) {
                grouped.push_back(make_dp_bundle(tree.mdp, policy, tree.group_encoding(g)));
                kinds.push_back(EstimatorKind::Cocoa);
            }
            for (size_t gi = 0; gi < grouped.size(); ++gi) bundles[3 + gi] = &grouped[gi];

            const std::string env_name = "tree-o" + std::to_string(overlaps[oi]);
            for (size_t li = 0; li < labels.size(); ++li) {
                MetricsRecord rec = evaluate_estimator(
                    tree.mdp, policy, *bundles[li], kinds[li], opts, batch,
                    child_seed(seed, 90000ull + static_cast<uint64_t>(e) * 100 + oi * 10 + li));
                rec.estimator = labels[li];
                art.rows.push_back(metrics_row("tree-variance", env_name, labels[li], e, -1, rec));
                variances[oi][li].push_back(rec.variance);
            }
        }
    }

    std::vector<std::vector<std::string>> plot;
    ordered_json table = ordered_json::object();
    std::map<std::pair<int, std::string>, double> mean_var;
    for (size_t oi = 0; oi < overlaps.size(); ++oi) {
        for (size_t li = 0; li < labels.size(); ++li) {
            const double mean = mean_of(variances[oi][li]);
            const double se = se_of(variances[oi][li]);
            mean_var[{overlaps[oi], labels[li]}] = mean;
            plot.push_back({std::to_string(overlaps[oi]), labels[li], g17(mean), g17(se),
                            g17(to_decibels(mean))});
            table["o" + std::to_string(overlaps[oi]) + "/" + labels[li]] = to_decibels(mean);
        }
    }
    art.plot("variance_curves.csv", "overlap,estimator,variance,variance_se,variance_db", plot);
    art.extra["seed_mean_variance_db"] = table;

    const bool has_chain_overlap = std::count(overlaps.begin(), overlaps.end(), 3) > 0 &&
                                   std::count(groupings.begin(), groupings.end(), 4) > 0 &&
                                   std::count(groupings.begin(), groupings.end(), 32) > 0;
    if (has_chain_overlap) {
        const double vr = mean_var[{3, "reinforce"}], vh = mean_var[{3, "hca-plus"}];
        const double vc = mean_var[{3, "cocoa"}], v4 = mean_var[{3, "cocoa-group4"}];
        const double v32 = mean_var[{3, "cocoa-group32"}];
        const bool chain = vc < v4 && v4 < v32 && v32 < vh && vh <= vr * (1.0 + 1e-12);
        art.check("variance_ordering_overlap3", chain,
                  "cocoa " + g17(to_decibels(vc)) + " dB < group4 " + g17(to_decibels(v4)) +
                      " dB < group32 " + g17(to_decibels(v32)) + " dB < hca-plus " +
                      g17(to_decibels(vh)) + " dB <= reinforce " + g17(to_decibels(vr)) + " dB");
    }
    if (std::count(overlaps.begin(), overlaps.end(), 0) > 0) {
        const double gap =
            std::fabs(to_decibels(mean_var[{0, "hca-plus"}] / mean_var[{0, "reinforce"}]));
        art.check("hca_matches_reinforce_no_overlap", gap <= 0.5,
                  "hca-plus within " + g17(gap) + " dB of reinforce at zero overlap");
    }
}

void scenario_shadow_snr(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const std::vector<int> lengths = getvi(cfg, "lengths");
    std::vector<int> checkpoints = getvi(cfg, "checkpoints");
    require(!lengths.empty() && !checkpoints.empty(), "runner-bad-config",
            "need lengths and checkpoints");
    std::sort(checkpoints.begin(), checkpoints.end());
    const int steps = std::max(geti(cfg, "steps"), checkpoints.back());

    std::vector<ShadowProbe> probes;
    {
        EstimatorOptions full, first_step;
        first_step.t_limit = 1; // key-pickup slice: only the t=0 gradient term
        probes.push_back({EstimatorKind::Reinforce, full, "reinforce"});
        probes.push_back({EstimatorKind::Cocoa, full, "cocoa"});
        probes.push_back({EstimatorKind::Reinforce, first_step, "reinforce-t0"});
        probes.push_back({EstimatorKind::Cocoa, first_step, "cocoa-t0"});
    }

    // label -> mean over checkpoints of the key-pickup snr in dB, per length
    std::map<std::pair<int, std::string>, double> mean_snr_db;
    std::vector<std::vector<std::string>> plot;
    for (const int length : lengths) {
        KeyToDoorConfig kc;
        kc.length = length;
        kc.env_seed = seed;
        const KeyToDoorEnv env = build_key_to_door(kc);

        ShadowConfig sc;
        sc.steps = steps;
        sc.batch_size = geti(cfg, "batch_size");
        sc.eval_batch = geti(cfg, "eval_batch");
        sc.checkpoints = checkpoints;
        sc.lr = getd(cfg, "lr");
        const double entropy = getd(cfg, "entropy");
        sc.entropy = entropy > 0.0 ? entropy : key_to_door_entropy(length, false);
        sc.epsilon = getd(cfg, "epsilon");
        sc.eval_epsilon = getd(cfg, "eval_epsilon");
        sc.seed = child_seed(seed, 200 + static_cast<uint64_t>(length));

        const std::vector<ShadowCheckpoint> curve =
            shadow_training(env.mdp, OutcomeEncoding::reward(env.mdp), probes, sc);

        const std::string env_name = "key-to-door-l" + std::to_string(length);
        std::map<std::string, std::vector<double>> snr_db_series;
        bool gap_holds = true;
        double min_gap_db = std::numeric_limits<double>::infinity();
        for (const ShadowCheckpoint& cp : curve) {
            art.rows.push_back(value_row("shadow-snr", env_name, "", -1, cp.step, "mean_return",
                                         cp.mean_return, sc.eval_batch));
            double snr_cocoa = 0.0, snr_reinforce = 0.0;
            for (const MetricsRecord& rec : cp.records) {
                art.rows.push_back(
                    metrics_row("shadow-snr", env_name, rec.estimator, -1, cp.step, rec));
                plot.push_back({std::to_string(length), std::to_string(cp.step), rec.estimator,
                                g17(rec.snr_db), g17(rec.bias_db), g17(rec.var_db)});
                snr_db_series[rec.estimator].push_back(rec.snr_db);
                if (rec.estimator == "cocoa") snr_cocoa = rec.snr;
                if (rec.estimator == "reinforce") snr_reinforce = rec.snr;
            }
            if (!(snr_cocoa > snr_reinforce)) gap_holds = false;
            min_gap_db = std::min(min_gap_db, to_decibels(snr_cocoa / snr_reinforce));
        }
        for (const auto& [label, series] : snr_db_series)
            mean_snr_db[{length, label}] = mean_of(series);
        art.check("snr_gap_l" + std::to_string(length), gap_holds,
                  "cocoa snr above reinforce at every checkpoint (min gap " + g17(min_gap_db) +
                      " dB)");
    }
    art.plot("snr_curves.csv", "length,step,estimator,snr_db,bias_db,var_db", plot);

    if (lengths.size() >= 2) {
        const int l0 = *std::min_element(lengths.begin(), lengths.end());
        const int l1 = *std::max_element(lengths.begin(), lengths.end());
        const double drop_reinforce =
            mean_snr_db[{l0, "reinforce-t0"}] - mean_snr_db[{l1, "reinforce-t0"}];
        const double drop_cocoa = mean_snr_db[{l0, "cocoa-t0"}] - mean_snr_db[{l1, "cocoa-t0"}];
        art.check("first_step_snr_drops_for_reinforce", drop_reinforce > 0.0,
                  "reinforce key-pickup snr drop " + g17(drop_reinforce) + " dB from L=" +
                      std::to_string(l0) + " to L=" + std::to_string(l1));
        art.check("first_step_snr_drop_smaller_for_cocoa", drop_cocoa < drop_reinforce,
                  "cocoa drop " + g17(drop_cocoa) + " dB vs reinforce drop " +
                      g17(drop_reinforce) + " dB");
        art.extra["first_step_snr_drop_db"] = {{"reinforce", drop_reinforce},
                                               {"cocoa", drop_cocoa}};
    }
}

void scenario_perturbation(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const int length = geti(cfg, "length");
    const std::vector<std::string> names = getvs(cfg, "estimators");
    require(!names.empty(), "runner-bad-config", "need at least one estimator");

    std::vector<EstimatorKind> kinds;
    for (const std::string& n : names) {
        const EstimatorKind k = estimator_from_name(n);
        switch (k) {
        case EstimatorKind::HcaReturn:
        case EstimatorKind::CounterfactualReturn:
        case EstimatorKind::CocoaNstep:
            throw Error("runner-bad-config",
                        n + " has no perturbable model tables; pick a model-backed estimator");
        default: kinds.push_back(k);
        }
    }

    KeyToDoorConfig kc;
    kc.length = length;
    kc.env_seed = seed;
    const KeyToDoorEnv env = build_key_to_door(kc);
    const Policy policy = uniform_policy(env.mdp);
    const DpBundle bundle = make_dp_bundle(env.mdp, policy, OutcomeEncoding::reward(env.mdp));

    PerturbationConfig pc;
    pc.sigmas = getvd(cfg, "sigmas");
    pc.noise_seeds = geti(cfg, "noise_seeds");
    pc.eval_batch = geti(cfg, "eval_batch");
    pc.seed = seed;

    const std::vector<PerturbationResult> sweep =
        perturbation_sweep(env.mdp, policy, bundle, kinds, EstimatorOptions{}, pc);

    const std::string env_name = "key-to-door-l" + std::to_string(length);
    std::map<std::pair<std::string, double>, std::vector<double>> snr_db_by_cell;
    std::map<std::string, std::vector<double>> sigma_zero_snr;
    for (const PerturbationResult& r : sweep) {
        ResultRow row = metrics_row("perturbation", env_name, r.estimator, r.noise_seed, -1,
                                    r.record);
        row.metric = "sigma";
        row.value = r.sigma;
        art.rows.push_back(row);
        snr_db_by_cell[{r.estimator, r.sigma}].push_back(r.record.snr_db);
        if (r.sigma == 0.0) sigma_zero_snr[r.estimator].push_back(r.record.snr);
    }

    std::vector<std::vector<std::string>> plot;
    for (const auto& [cell, series] : snr_db_by_cell)
        plot.push_back({cell.first, g17(cell.second), g17(mean_of(series)), g17(se_of(series))});
    art.plot("perturbation_curves.csv", "estimator,sigma,snr_db_mean,snr_db_se", plot);

    if (!sigma_zero_snr.empty()) {
        bool exact = true;
        for (const auto& [label, series] : sigma_zero_snr)
            for (const double v : series)
                if (!(v == series.front())) exact = false;
        art.check("sigma_zero_reproduces_unperturbed", exact,
                  "all noise seeds at sigma=0 give the identical snr");
    }
}

// Shared by the three training scenarios: run one estimator for one seed and
// emit curve rows. `offset` shifts the recorded batch axis (used when a
// variant spends an initial slice of the budget on feature pretraining).
struct CurveStats {
    std::vector<double> finals;  // final metric per seed
    std::vector<double> means;   // curve-mean metric per seed
};

void emit_training_curve(Artifacts& art, const std::string& id, const std::string& env_name,
                         const std::string& label, int seed_index, const TrainResult& res,
                         int eval_batch, int offset, std::vector<std::vector<std::string>>& plot,
                         CurveStats& stats) {
    double mean_metric = 0.0;
    int n = 0;
    for (const TrainPoint& pt : res.curve) {
        art.rows.push_back(value_row(id, env_name, label, seed_index, pt.batch + offset,
                                     "treasure_rate", pt.metric, eval_batch));
        art.rows.push_back(value_row(id, env_name, label, seed_index, pt.batch + offset,
                                     "mean_return", pt.mean_return, eval_batch));
        plot.push_back({label, std::to_string(seed_index), std::to_string(pt.batch + offset),
                        g17(pt.metric), g17(pt.mean_return)});
        if (!std::isnan(pt.metric)) {
            mean_metric += pt.metric;
            ++n;
        }
    }
    stats.finals.push_back(res.curve.empty() ? kNaN : res.curve.back().metric);
    stats.means.push_back(n > 0 ? mean_metric / n : kNaN);
}

void abort_on_divergence(const Artifacts& art, const std::string& label, const TrainResult& res) {
    if (!res.diverged) return;
    const std::filesystem::path snap = art.dir / ("diverged-" + label + ".params");
    if (res.policy) save_params(snap.string(), res.policy->params());
    throw Error("runner-diverged", label + " hit non-finite policy parameters at update " +
                                       std::to_string(res.diverged_at) + "; snapshot in " +
                                       snap.string());
}

void scenario_ktd_train(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const int num_seeds = geti(cfg, "num_seeds");
    require(num_seeds > 0, "runner-bad-config", "num_seeds must be positive");

    KeyToDoorConfig kc;
    kc.length = geti(cfg, "length");
    kc.door_required = getb(cfg, "door");
    kc.aliased = getb(cfg, "aliased");
    kc.env_seed = seed;
    const KeyToDoorEnv env = build_key_to_door(kc);
    const OutcomeEncoding encoding = OutcomeEncoding::reward(env.mdp);
    const TrajectoryMetric treasure = [&env](const Trajectory& t) {
        return env.treasure_collected(t) ? 1.0 : 0.0;
    };

    const std::vector<std::string> names = getvs(cfg, "estimators");
    const std::string env_name = std::string(kc.aliased ? "key-to-door-aliased-l"
                                                        : "key-to-door-l") +
                                 std::to_string(kc.length);
    std::vector<std::vector<std::string>> plot;
    std::map<std::string, CurveStats> stats;
    for (size_t ei = 0; ei < names.size(); ++ei) {
        const EstimatorKind kind = estimator_from_name(names[ei]);
        for (int i = 0; i < num_seeds; ++i) {
            TrainConfig tc;
            tc.kind = kind;
            tc.batches = geti(cfg, "batches");
            tc.batch_size = geti(cfg, "batch_size");
            tc.eval_batch = geti(cfg, "eval_batch");
            tc.eval_every = geti(cfg, "eval_every");
            const double lr = getd(cfg, "lr_policy");
            tc.lr_policy = lr > 0.0 ? lr : default_policy_lr(kind);
            tc.clip_norm = getd(cfg, "clip_norm");
            tc.lr_qvalue = default_qvalue_lr(kind);
            const double entropy = getd(cfg, "entropy");
            tc.entropy = entropy > 0.0 ? entropy : key_to_door_entropy(kc.length, kc.aliased);
            tc.epsilon = getd(cfg, "epsilon");
            tc.eval_epsilon = getd(cfg, "eval_epsilon");
            tc.hindsight_decay = getd(cfg, "hindsight_decay");
            tc.policy_hidden = getvi(cfg, "policy_hidden");
            tc.seed = child_seed(seed, 20000ull + ei * 1000ull + static_cast<uint64_t>(i));
            const TrainResult res = train_policy(env.mdp, encoding, tc, treasure);
            abort_on_divergence(art, names[ei], res);
            emit_training_curve(art, "ktd-train", env_name, names[ei], i, res, tc.eval_batch, 0,
                                plot, stats[names[ei]]);
        }
    }
    art.plot("learning_curves.csv", "estimator,seed,batch,treasure_rate,mean_return", plot);

    ordered_json finals = ordered_json::object();
    for (const auto& [label, st] : stats) finals[label] = mean_of(st.finals);
    art.extra["final_treasure_rate"] = finals;

    if (stats.count("cocoa")) {
        const double rate = mean_of(stats["cocoa"].finals);
        art.check("cocoa_solves_task", rate >= 0.9,
                  "cocoa mean final treasure rate " + g17(rate) + " (want >= 0.9)");
    }
    if (stats.count("reinforce")) {
        const double rate = mean_of(stats["reinforce"].finals);
        art.check("reinforce_below_half", rate < 0.5,
                  "reinforce mean final treasure rate " + g17(rate) + " (want < 0.5)");
    }
}

void scenario_reward_switching(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const int num_seeds = geti(cfg, "num_seeds");
    const int pre = geti(cfg, "pre_batches");
    const int post = geti(cfg, "post_batches");
    const double threshold = getd(cfg, "recover_threshold");
    require(num_seeds > 0 && pre > 0 && post > 0, "runner-bad-config",
            "need positive seed count and batch budgets");

    KeyToDoorConfig kc;
    kc.length = geti(cfg, "length");
    kc.door_required = false; // switching track has no door
    kc.env_seed = seed;
    const KeyToDoorEnv before = build_key_to_door(kc);
    kc.treasure_sign = -1.0;
    const KeyToDoorEnv after = build_key_to_door(kc);

    // one reward alphabet covering both phases, so hindsight statistics carry
    // across the switch and the flipped treasure arrives as a fresh outcome
    std::vector<double> support = before.mdp.reward_support();
    for (const double v : after.mdp.reward_support()) support.push_back(v);
    const OutcomeEncoding encoding = OutcomeEncoding::reward_values(support);

    const TrajectoryMetric treasure = [&before](const Trajectory& t) {
        return before.treasure_collected(t) ? 1.0 : 0.0;
    };

    const std::vector<std::string> names = getvs(cfg, "estimators");
    const std::string env_name = "key-to-door-switch-l" + std::to_string(kc.length);
    std::vector<std::vector<std::string>> plot;
    std::map<std::string, std::vector<double>> recovery;
    std::map<std::string, bool> recovered_all;
    std::map<std::string, std::vector<double>> pre_rate;
    for (size_t ei = 0; ei < names.size(); ++ei) {
        const EstimatorKind kind = estimator_from_name(names[ei]);
        recovered_all.emplace(names[ei], true);
        for (int i = 0; i < num_seeds; ++i) {
            TrainConfig tc;
            tc.kind = kind;
            tc.batches = pre + post;
            tc.switch_batch = pre;
            tc.batch_size = geti(cfg, "batch_size");
            tc.eval_batch = geti(cfg, "eval_batch");
            tc.eval_every = geti(cfg, "eval_every");
            const double lr = getd(cfg, "lr_policy");
            tc.lr_policy = lr > 0.0 ? lr : default_policy_lr(kind);
            tc.clip_norm = getd(cfg, "clip_norm");
            tc.lr_qvalue = getd(cfg, "lr_qvalue");
            tc.entropy = getd(cfg, "entropy");
            tc.epsilon = getd(cfg, "epsilon");
            tc.eval_epsilon = getd(cfg, "eval_epsilon");
            tc.hindsight_decay = getd(cfg, "hindsight_decay");
            tc.policy_hidden = getvi(cfg, "policy_hidden");
            tc.seed = child_seed(seed, 30000ull + ei * 1000ull + static_cast<uint64_t>(i));
            const TrainResult res = train_policy(before.mdp, encoding, tc, treasure, &after.mdp);
            abort_on_divergence(art, names[ei], res);
            CurveStats unused;
            emit_training_curve(art, "reward-switching", env_name, names[ei], i, res,
                                tc.eval_batch, 0, plot, unused);

            // post-switch the treasure hurts: recovery = first checkpoint that
            // avoids it in at least `threshold` of the evaluation episodes
            int rec = -1;
            double last_pre = kNaN;
            for (const TrainPoint& pt : res.curve) {
                if (pt.batch < pre) last_pre = pt.metric;
                if (pt.batch >= pre && rec < 0 && 1.0 - pt.metric >= threshold)
                    rec = pt.batch - pre;
            }
            if (rec < 0) {
                rec = post; // never recovered inside the budget
                recovered_all[names[ei]] = false;
            }
            recovery[names[ei]].push_back(rec);
            pre_rate[names[ei]].push_back(last_pre);
        }
    }
    art.plot("switching_curves.csv", "estimator,seed,batch,treasure_rate,mean_return", plot);

    ordered_json rec_table = ordered_json::object();
    for (const auto& [label, recs] : recovery) {
        rec_table[label] = {{"mean_batches_to_recover", mean_of(recs)},
                            {"pre_switch_treasure_rate", mean_of(pre_rate[label])},
                            {"all_seeds_recovered", recovered_all[label]}};
        art.rows.push_back(value_row("reward-switching", env_name, label, -1, -1,
                                     "mean_batches_to_recover", mean_of(recs)));
    }
    art.extra["recovery"] = rec_table;

    if (recovery.count("cocoa")) {
        art.check("cocoa_recovers", recovered_all["cocoa"],
                  "cocoa reached >= " + g17(threshold) +
                      " treasure avoidance after the switch in every seed");
        if (recovery.count("q-critic")) {
            const double rc = mean_of(recovery["cocoa"]), rq = mean_of(recovery["q-critic"]);
            art.check("cocoa_adapts_faster_than_q_critic", rc < rq,
                      "mean batches to recover: cocoa " + g17(rc) + ", q-critic " + g17(rq));
        }
    }
}

void scenario_aliasing(const ordered_json& cfg, Artifacts& art) {
    const uint64_t seed = seed_of(cfg);
    const int num_seeds = geti(cfg, "num_seeds");
    const int batches = geti(cfg, "batches");
    const int feature_batches = geti(cfg, "feature_batches");
    require(num_seeds > 0, "runner-bad-config", "num_seeds must be positive");
    require(batches > feature_batches, "runner-bad-config",
            "budget must exceed the feature pretraining slice");

    KeyToDoorConfig kc;
    kc.length = geti(cfg, "length");
    kc.aliased = true; // the treasure reward collides with the low apple value
    kc.env_seed = seed;
    const KeyToDoorEnv env = build_key_to_door(kc);
    const OutcomeEncoding reward_enc = OutcomeEncoding::reward(env.mdp);
    const TrajectoryMetric treasure = [&env](const Trajectory& t) {
        return env.treasure_collected(t) ? 1.0 : 0.0;
    };

    const std::string env_name = "key-to-door-aliased-l" + std::to_string(kc.length);
    std::vector<std::vector<std::string>> plot;
    std::map<std::string, CurveStats> stats;
    ordered_json features = ordered_json::array();
    for (int i = 0; i < num_seeds; ++i) {
        TrainConfig tc;
        tc.kind = EstimatorKind::Cocoa;
        tc.batches = batches;
        tc.batch_size = geti(cfg, "batch_size");
        tc.eval_batch = geti(cfg, "eval_batch");
        tc.eval_every = geti(cfg, "eval_every");
        tc.lr_policy = default_policy_lr(EstimatorKind::Cocoa);
        tc.clip_norm = getd(cfg, "clip_norm");
        const double entropy = getd(cfg, "entropy");
        tc.entropy = entropy > 0.0 ? entropy : key_to_door_entropy(kc.length, true);
        tc.epsilon = getd(cfg, "epsilon");
        tc.eval_epsilon = getd(cfg, "eval_epsilon");
        tc.hindsight_decay = getd(cfg, "hindsight_decay");
        tc.policy_hidden = getvi(cfg, "policy_hidden");

        tc.seed = child_seed(seed, 40000ull + static_cast<uint64_t>(i));
        const TrainResult raw = train_policy(env.mdp, reward_enc, tc, treasure);
        abort_on_divergence(art, "cocoa-reward", raw);
        emit_training_curve(art, "aliasing", env_name, "cocoa-reward", i, raw, tc.eval_batch, 0,
                            plot, stats["cocoa-reward"]);

        // the feature variant spends the first slice of the same budget
        // collecting the reward-model buffer with a frozen random policy
        RewardFeatureConfig fc;
        fc.pretrain_batches = feature_batches;
        fc.batch_size = tc.batch_size;
        fc.train_steps = geti(cfg, "feature_steps");
        fc.lr = getd(cfg, "lr_features");
        fc.l1_mask = getd(cfg, "l1_mask");
        fc.l2_readout = getd(cfg, "l2_readout");
        fc.bit_threshold = getd(cfg, "bit_threshold");
        fc.seed = child_seed(seed, 41000ull + static_cast<uint64_t>(i));
        const Policy behavior = uniform_policy(env.mdp);
        const RewardFeatureResult learned = learn_reward_features(env.mdp, behavior, fc);
        features.push_back({{"num_outcomes", learned.num_outcomes},
                            {"final_loss", learned.final_loss}});

        TrainConfig tf = tc;
        tf.batches = batches - feature_batches;
        tf.seed = child_seed(seed, 42000ull + static_cast<uint64_t>(i));
        const TrainResult feat = train_policy(env.mdp, learned.encoding, tf, treasure);
        abort_on_divergence(art, "cocoa-feature", feat);
        emit_training_curve(art, "aliasing", env_name, "cocoa-feature", i, feat, tf.eval_batch,
                            feature_batches, plot, stats["cocoa-feature"]);
    }
    art.plot("aliasing_curves.csv", "estimator,seed,batch,treasure_rate,mean_return", plot);
    art.extra["learned_features"] = features;

    const double mr = mean_of(stats["cocoa-reward"].means);
    const double mf = mean_of(stats["cocoa-feature"].means);
    art.extra["curve_mean_treasure_rate"] = {{"cocoa-reward", mr}, {"cocoa-feature", mf}};
    art.check("features_beat_aliased_rewards", mf > mr,
              "curve-mean treasure rate: cocoa-feature " + g17(mf) + " vs cocoa-reward " +
                  g17(mr));
}

// --- scenario table and entry point -------------------------------------------

ordered_json defaults_for(const std::string& name) {
    ordered_json j = ordered_json::object();
    j["seed"] = 0;
    if (name == "bandit-bias") return j;
    if (name == "unbiasedness") {
        j["tolerance"] = 1e-9;
        j["tree_depth"] = 3;
        j["tree_actions"] = 3;
        j["tree_overlap"] = 1;
        j["ktd_length"] = 10;
        return j;
    }
    if (name == "tree-variance") {
        j["depth"] = 4;
        j["num_actions"] = 6;
        j["overlaps"] = {0, 1, 3, 5};
        j["groupings"] = {4, 32};
        j["env_seeds"] = 10;
        j["eval_batch"] = 512;
        return j;
    }
    if (name == "shadow-snr") {
        j["lengths"] = {20, 40};
        j["steps"] = 150;
        j["checkpoints"] = {0, 25, 50, 75, 100, 125, 150};
        j["batch_size"] = 8;
        j["eval_batch"] = 512;
        j["lr"] = 3e-4;
        j["entropy"] = 0.0; // 0 selects the per-length default
        j["epsilon"] = 0.05;
        j["eval_epsilon"] = 0.0;
        return j;
    }
    if (name == "perturbation") {
        j["length"] = 20;
        j["estimators"] = {"cocoa", "q-critic", "advantage", "hca-plus", "reinforce"};
        j["sigmas"] = {0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3};
        j["noise_seeds"] = 30;
        j["eval_batch"] = 512;
        return j;
    }
    if (name == "ktd-train") {
        j["length"] = 20;
        j["door"] = true;
        j["aliased"] = false;
        j["estimators"] = {"cocoa", "reinforce"};
        j["num_seeds"] = 3;
        j["batches"] = 12000;
        j["batch_size"] = 8;
        j["eval_batch"] = 512;
        j["eval_every"] = 500;
        j["lr_policy"] = 3e-3;
        j["clip_norm"] = 1.0;
        j["entropy"] = 0.01;
        // wide exploration floor: the key only pays off 19 steps later, and
        // the post-key twin states need enough visits for their coefficients
        // and logits to catch up before greedy pressure can bury the key
        j["epsilon"] = 0.3;
        j["eval_epsilon"] = 0.0;
        j["policy_hidden"] = ordered_json::array();
        // forget counts from earlier policies within a few hundred batches so
        // the coefficient tracks what the action changes *now*
        j["hindsight_decay"] = 0.99;
        return j;
    }
    if (name == "reward-switching") {
        j["length"] = 40;
        j["estimators"] = {"cocoa", "q-critic"};
        j["num_seeds"] = 3;
        j["pre_batches"] = 600;
        j["post_batches"] = 900;
        j["batch_size"] = 8;
        j["eval_batch"] = 512;
        j["eval_every"] = 25;
        j["lr_policy"] = 0.0;
        j["lr_qvalue"] = 1e-3; // the switching study runs its critic slightly slower
        j["clip_norm"] = 1.0;
        j["entropy"] = 0.0187;
        j["epsilon"] = 0.05;
        j["eval_epsilon"] = 0.0;
        j["policy_hidden"] = ordered_json::array();
        j["hindsight_decay"] = 0.99;
        j["recover_threshold"] = 0.9;
        return j;
    }
    if (name == "aliasing") {
        j["length"] = 20;
        j["num_seeds"] = 3;
        j["batches"] = 1500;
        j["batch_size"] = 8;
        j["eval_batch"] = 512;
        j["eval_every"] = 50;
        j["clip_norm"] = 1.0;
        j["entropy"] = 0.0;
        j["epsilon"] = 0.05;
        j["eval_epsilon"] = 0.0;
        j["policy_hidden"] = ordered_json::array();
        j["hindsight_decay"] = 0.99;
        j["feature_batches"] = 30;
        j["feature_steps"] = 20000;
        j["lr_features"] = 3e-3;
        j["l1_mask"] = 0.001;
        j["l2_readout"] = 0.03;
        j["bit_threshold"] = 0.05;
        return j;
    }
    throw Error("runner-unknown-scenario",
                "'" + name + "' is not a scenario; expected one of bandit-bias, unbiasedness, "
                             "tree-variance, shadow-snr, perturbation, ktd-train, "
                             "reward-switching, aliasing");
}

using ScenarioFn = void (*)(const ordered_json&, Artifacts&);

struct ScenarioEntry {
    const char* name;
    ScenarioFn fn;
};

constexpr ScenarioEntry kScenarios[] = {
    {"bandit-bias", scenario_bandit_bias},
    {"unbiasedness", scenario_unbiasedness},
    {"tree-variance", scenario_tree_variance},
    {"shadow-snr", scenario_shadow_snr},
    {"perturbation", scenario_perturbation},
    {"ktd-train", scenario_ktd_train},
    {"reward-switching", scenario_reward_switching},
    {"aliasing", scenario_aliasing},
};

} // namespace

std::vector<std::string> scenario_names() {
    std::vector<std::string> names;
    for (const ScenarioEntry& s : kScenarios) names.push_back(s.name);
    return names;
}

std::string scenario_default_config(const std::string& name) {
    return defaults_for(name).dump(2);
}

int run_scenario(const std::string& name, const std::string& config_path,
                 const std::string& out_dir, long long seed_override,
                 const std::vector<std::string>& overrides) {
    ordered_json cfg = defaults_for(name);
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        require(in.good(), "runner-io", "cannot read config " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        merge_into(cfg, parse_json_text(ss.str(), config_path), config_path);
    }
    for (const std::string& kv : overrides) apply_override(cfg, kv);
    if (seed_override >= 0) cfg["seed"] = seed_override;

    const std::filesystem::path dir =
        out_dir.empty() ? std::filesystem::path("cocoa-lab-" + name) : std::filesystem::path(out_dir);
    std::filesystem::create_directories(dir / "plots");
    {
        std::ofstream snap(dir / "config.snapshot", std::ios::binary);
        require(snap.good(), "runner-io", "cannot write config.snapshot");
        snap << cfg.dump(2) << "\n";
    }

    Artifacts art;
    art.dir = dir;
    ScenarioFn fn = nullptr;
    for (const ScenarioEntry& s : kScenarios)
        if (name == s.name) fn = s.fn;
    require(fn != nullptr, "runner-unknown-scenario", name);
    fn(cfg, art);

    write_results_csv(dir / "results.csv", art.rows);

    ordered_json summary;
    summary["scenario"] = name;
    summary["config"] = cfg;
    bool all_pass = true;
    ordered_json checks = ordered_json::array();
    for (const Assertion& a : art.checks) {
        checks.push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
        if (!a.pass) all_pass = false;
    }
    summary["assertions"] = checks;
    summary["results"] = art.extra;
    summary["result_rows"] = art.rows.size();
    {
        std::ofstream out(dir / "summary.json", std::ios::binary);
        require(out.good(), "runner-io", "cannot write summary.json");
        out << summary.dump(2) << "\n";
    }

    for (const Assertion& a : art.checks)
        std::printf("check %-40s %s  (%s)\n", a.name.c_str(), a.pass ? "PASS" : "FAIL",
                    a.detail.c_str());
    std::printf("artifacts: %s (%zu result rows)\n", dir.string().c_str(), art.rows.size());
    return all_pass ? 0 : 1;
}

} // namespace cocoa
