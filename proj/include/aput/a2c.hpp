#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aput/env.hpp"
#include "aput/errors.hpp"
#include "aput/nn.hpp"
#include "aput/random.hpp"

namespace aput {

struct A2CConfig {
    double lr_actor = 0.002;
    double lr_critic = 0.02;
    double gamma = 0.99;
    long episodes = 20000;
    double entropy_coef = 0.01;
    std::vector<int> hidden_sizes{32, 32};
    long eval_every = 1000;
    std::uint64_t seed = 1;
    double grad_clip = 5.0;
    bool include_budget_feature = true;
    double lr_decay = 0.0; // lr_t = lr / (1 + lr_decay * episode)

    void validate() const {
        if (lr_actor <= 0.0 || lr_critic <= 0.0)
            throw ConfigError("learning rates must be positive");
        if (episodes < 1) throw ConfigError("episodes must be >= 1");
        if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("gamma must be in (0,1]");
        if (entropy_coef < 0.0) throw ConfigError("entropy_coef must be nonnegative");
        if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
        if (hidden_sizes.empty()) throw ConfigError("hidden_sizes must be nonempty");
    }
};

/// Stochastic release policy: softmax actor over n_actions+1 (stop last)
/// plus the value critic, both over the environment's feature encoding.
class A2CPolicy final : public Policy {
public:
    A2CPolicy(DenseNet actor, DenseNet critic, bool include_budget_feature)
        : actor_(std::move(actor)), critic_(std::move(critic)),
          include_budget_feature_(include_budget_feature) {}

    std::vector<double> action_distribution(const Environment& env,
                                            const EnvState& st) const override {
        return forward(actor_, env.encode_state(st, include_budget_feature_));
    }

    const DenseNet& actor() const { return actor_; }
    const DenseNet& critic() const { return critic_; }
    DenseNet& actor() { return actor_; }
    DenseNet& critic() { return critic_; }
    bool include_budget_feature() const { return include_budget_feature_; }

private:
    DenseNet actor_;
    DenseNet critic_;
    bool include_budget_feature_;
};

/// TD error with the reward convention r = -cost and V(terminal) = 0:
/// delta = -cost + gamma * V(next) - V(current).
inline double td_error(const DenseNet& critic, std::span<const double> state_features,
                       const std::optional<std::vector<double>>& next_state_features,
                       double cost, double gamma) {
    const double v = forward_scalar(critic, state_features);
    const double v_next =
        next_state_features ? forward_scalar(critic, *next_state_features) : 0.0;
    return -cost + gamma * v_next - v;
}

struct TrainingCheckpoint {
    long episode = 0; // last episode covered by the window
    double mean_cost = 0.0;
    double mean_tau = 0.0;
    double mean_conf_u = 0.0;
    double acc_u = 0.0;
    double acc_s = 0.0;
    double violation_rate = 0.0;
    double mean_mi = 0.0;
};

struct TrainingLog {
    std::vector<TrainingCheckpoint> checkpoints;
};

namespace detail {

struct WindowStats {
    long n = 0;
    double cost = 0, tau = 0, conf = 0, acc_u = 0, acc_s = 0, viol = 0, mi = 0;

    TrainingCheckpoint finish(long episode) const {
        TrainingCheckpoint c;
        const double d = static_cast<double>(std::max<long>(n, 1));
        c.episode = episode;
        c.mean_cost = cost / d;
        c.mean_tau = tau / d;
        c.mean_conf_u = conf / d;
        c.acc_u = acc_u / d;
        c.acc_s = acc_s / d;
        c.violation_rate = viol / d;
        c.mean_mi = mi / d;
        return c;
    }
};

} // namespace detail

/// Online advantage actor-critic. One gradient step per environment step:
/// the critic descends on delta^2, the actor on
/// -log pi(a|x) * delta - entropy_coef * H(pi(.|x)). Fully deterministic for
/// a fixed config (episode seeds derive from config.seed).
inline std::pair<A2CPolicy, TrainingLog> train(const Environment& env,
                                               const A2CConfig& cfg) {
    cfg.validate();
    const int feat = env.feature_size(cfg.include_budget_feature);
    std::vector<int> actor_sizes{feat};
    std::vector<int> critic_sizes{feat};
    for (int h : cfg.hidden_sizes) {
        actor_sizes.push_back(h);
        critic_sizes.push_back(h);
    }
    actor_sizes.push_back(env.n_actions() + 1);
    critic_sizes.push_back(1);
    DenseNet actor = DenseNet::make(actor_sizes, Head::Softmax, derive_seed(cfg.seed, 0xAC));
    DenseNet critic = DenseNet::make(critic_sizes, Head::Linear, derive_seed(cfg.seed, 0xC1));
    Rng action_rng(derive_seed(cfg.seed, 0x5A));

    TrainingLog log;
    detail::WindowStats window;

    // Divergence reference: the frozen initial (near-uniform) policy's mean
    // episodic cost over a short run without updates.
    double baseline_cost = 0.0;
    {
        Rng base_rng(derive_seed(cfg.seed, 0xBA5E));
        const long n_base = std::min<long>(cfg.eval_every, 200);
        for (long i = 0; i < n_base; ++i) {
            EnvState st =
                env.reset(derive_seed(cfg.seed, 0x3000 + static_cast<std::uint64_t>(i)));
            while (true) {
                const auto pi =
                    forward(actor, env.encode_state(st, cfg.include_budget_feature));
                const auto out = env.step(st, base_rng.categorical(pi), pi);
                baseline_cost += out.cost;
                if (out.done) break;
            }
        }
        baseline_cost /= static_cast<double>(n_base);
    }

    for (long ep = 0; ep < cfg.episodes; ++ep) {
        EnvState st = env.reset(derive_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(ep)));
        const double anneal = 1.0 / (1.0 + cfg.lr_decay * static_cast<double>(ep));
        const double lr_a = cfg.lr_actor * anneal;
        const double lr_c = cfg.lr_critic * anneal;
        const double ent = cfg.entropy_coef * anneal; // exploration fades with the rates
        double ep_cost = 0.0;
        bool ep_violation = false;
        std::optional<int> declared;

        while (true) {
            const auto feats = env.encode_state(st, cfg.include_budget_feature);
            const auto actor_tr = forward_trace(actor, feats);
            const auto& pi = actor_tr.output;
            const int a = action_rng.categorical(pi);
            const auto out = env.step(st, a, pi);
            ep_cost += out.cost;
            ep_violation = ep_violation || out.violation;
            if (out.declared_useful) declared = out.declared_useful;

            const auto critic_tr = forward_trace(critic, feats);
            const double v = critic_tr.output[0];
            const double v_next =
                out.done ? 0.0
                         : forward_scalar(critic,
                                          env.encode_state(st, cfg.include_budget_feature));
            const double delta = -out.cost + cfg.gamma * v_next - v;

            // Critic: d(delta^2)/dV = -2 delta.
            sgd_step(critic,
                     backward(critic, critic_tr, std::vector<double>{-2.0 * delta}),
                     lr_c, cfg.grad_clip);

            // Actor: d(-log pi_a * delta)/dpi_i = -delta [i==a]/pi_a and the
            // entropy bonus d(-c H)/dpi_i = c (log pi_i + 1); the softmax
            // Jacobian in backward() keeps both terms stable.
            std::vector<double> up(pi.size(), 0.0);
            up[a] = -delta / std::max(pi[a], 1e-300);
            if (ent > 0.0)
                for (std::size_t i = 0; i < pi.size(); ++i)
                    up[i] += ent * (std::log(std::max(pi[i], 1e-300)) + 1.0);
            sgd_step(actor, backward(actor, actor_tr, up), lr_a, cfg.grad_clip);

            if (out.done) break;
        }

        window.n += 1;
        window.cost += ep_cost;
        window.tau += st.step;
        window.conf += max_confidence_useful(st.belief).second;
        const int guess_u = declared ? *declared : max_confidence_useful(st.belief).first;
        window.acc_u += (guess_u == st.hidden_useful) ? 1.0 : 0.0;
        window.acc_s +=
            (max_confidence_secret(st.belief).first == st.hidden_secret) ? 1.0 : 0.0;
        window.viol += ep_violation ? 1.0 : 0.0;
        window.mi += st.cumulative_mi;

        if ((ep + 1) % cfg.eval_every == 0 || ep + 1 == cfg.episodes) {
            const auto cp = window.finish(ep + 1);
            log.checkpoints.push_back(cp);
            window = detail::WindowStats{};
            if (cp.mean_cost > 10.0 * std::max(baseline_cost, 1e-6)) {
                throw NumericError(
                    "a2c training diverged: window mean cost " +
                    std::to_string(cp.mean_cost) + " exceeds 10x the initial policy cost " +
                    std::to_string(baseline_cost) + " at episode " + std::to_string(ep + 1));
            }
        }
    }
    return {A2CPolicy(std::move(actor), std::move(critic), cfg.include_budget_feature),
            std::move(log)};
}

// ---------------------------------------------------------------------------
// Policy evaluation
// ---------------------------------------------------------------------------

struct EvalMetrics {
    long episodes = 0;
    double mean_tau = 0.0, sd_tau = 0.0;
    double mean_conf_u = 0.0, sd_conf_u = 0.0;
    double acc_u = 0.0;
    double acc_s = 0.0;
    double violation_rate = 0.0;
    double mean_mi = 0.0;
    double mean_cost = 0.0, sd_cost = 0.0;
    std::vector<double> acc_u_per_class; // by true useful value
    std::vector<double> acc_s_per_class; // by true secret value

    double se_tau() const { return sd_tau / std::sqrt(static_cast<double>(episodes)); }
    double se_conf_u() const { return sd_conf_u / std::sqrt(static_cast<double>(episodes)); }
    double se_cost() const { return sd_cost / std::sqrt(static_cast<double>(episodes)); }
};

/// Runs a frozen policy for n_episodes. The reported secret accuracy is the
/// Bayes-optimal adversary's: argmax of the final secret marginal against
/// the hidden value. When `trace` is given, writes one CSV row per step
/// (columns: episode,step,action,observation,cost,max_conf_secret,
/// max_conf_useful,cumulative_mi,phase).
inline EvalMetrics evaluate(const Policy& policy, const Environment& env, long n_episodes,
                            std::uint64_t seed, std::ostream* trace = nullptr) {
    if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
    Rng rng(derive_seed(seed, 0xE7A1));
    const int n_u = env.model().n_useful();
    const int n_s = env.model().n_secret();

    double sum_tau = 0, sumsq_tau = 0, sum_conf = 0, sumsq_conf = 0;
    double sum_cost = 0, sumsq_cost = 0, sum_mi = 0;
    long viol = 0, hit_u = 0, hit_s = 0;
    std::vector<long> class_u_hits(n_u, 0), class_u_n(n_u, 0);
    std::vector<long> class_s_hits(n_s, 0), class_s_n(n_s, 0);

    if (trace)
        *trace << "episode,step,action,observation,cost,max_conf_secret,max_conf_useful,"
                  "cumulative_mi,phase\n";

    for (long ep = 0; ep < n_episodes; ++ep) {
        EnvState st = env.reset(derive_seed(seed, 0x2000 + static_cast<std::uint64_t>(ep)));
        double ep_cost = 0.0;
        bool ep_viol = false;
        std::optional<int> declared;
        int steps_guard = 0;
        while (!env.episode_over(st)) {
            const auto dist = policy.action_distribution(env, st);
            const int a = rng.categorical(dist);
            const auto out = env.step(st, a, dist);
            ep_cost += out.cost;
            ep_viol = ep_viol || out.violation;
            if (out.declared_useful) declared = out.declared_useful;
            if (trace) {
                *trace << ep << ',' << st.step << ',' << a << ','
                       << (out.observation ? std::to_string(*out.observation) : std::string())
                       << ',' << out.cost << ',' << max_confidence_secret(st.belief).second
                       << ',' << max_confidence_useful(st.belief).second << ','
                       << st.cumulative_mi << ',' << phase_name(st.phase) << '\n';
            }
            if (out.done) break;
            if (++steps_guard > env.costs().t_max + 2)
                throw NumericError("evaluate: episode failed to terminate");
        }
        const double tau = st.step;
        const double conf = max_confidence_useful(st.belief).second;
        sum_tau += tau;
        sumsq_tau += tau * tau;
        sum_conf += conf;
        sumsq_conf += conf * conf;
        sum_cost += ep_cost;
        sumsq_cost += ep_cost * ep_cost;
        sum_mi += st.cumulative_mi;
        viol += ep_viol ? 1 : 0;
        const int guess_u = declared ? *declared : max_confidence_useful(st.belief).first;
        const int guess_s = max_confidence_secret(st.belief).first;
        class_u_n[st.hidden_useful] += 1;
        class_s_n[st.hidden_secret] += 1;
        if (guess_u == st.hidden_useful) {
            ++hit_u;
            class_u_hits[st.hidden_useful] += 1;
        }
        if (guess_s == st.hidden_secret) {
            ++hit_s;
            class_s_hits[st.hidden_secret] += 1;
        }
    }

    EvalMetrics m;
    m.episodes = n_episodes;
    const double n = static_cast<double>(n_episodes);
    auto sd = [&](double sum, double sumsq) {
        const double mean = sum / n;
        return n > 1 ? std::sqrt(std::max(0.0, (sumsq - n * mean * mean) / (n - 1))) : 0.0;
    };
    m.mean_tau = sum_tau / n;
    m.sd_tau = sd(sum_tau, sumsq_tau);
    m.mean_conf_u = sum_conf / n;
    m.sd_conf_u = sd(sum_conf, sumsq_conf);
    m.mean_cost = sum_cost / n;
    m.sd_cost = sd(sum_cost, sumsq_cost);
    m.acc_u = hit_u / n;
    m.acc_s = hit_s / n;
    m.violation_rate = viol / n;
    m.mean_mi = sum_mi / n;
    for (int u = 0; u < n_u; ++u)
        m.acc_u_per_class.push_back(class_u_n[u] > 0
                                        ? static_cast<double>(class_u_hits[u]) / class_u_n[u]
                                        : 0.0);
    for (int s = 0; s < n_s; ++s)
        m.acc_s_per_class.push_back(class_s_n[s] > 0
                                        ? static_cast<double>(class_s_hits[s]) / class_s_n[s]
                                        : 0.0);
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

inline nlohmann::json policy_to_json(const A2CPolicy& p) {
    return {{"actor", net_to_json(p.actor())},
            {"critic", net_to_json(p.critic())},
            {"feature_spec",
             {{"include_budget_feature", p.include_budget_feature()}}}};
}

inline A2CPolicy policy_from_json(const nlohmann::json& j) {
    try {
        return A2CPolicy(net_from_json(j.at("actor")), net_from_json(j.at("critic")),
                         j.at("feature_spec").at("include_budget_feature").get<bool>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad policy JSON: ") + e.what());
    }
}

} // namespace aput
