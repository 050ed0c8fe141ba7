#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "aput/belief.hpp"
#include "aput/errors.hpp"
#include "aput/model.hpp"
#include "aput/nn.hpp"
#include "aput/random.hpp"

namespace aput {

/// Release-action distribution as a function of the current belief.
using BeliefPolicy = std::function<std::vector<double>(const Belief&)>;

/// Instantaneous leakage I(S; Z, A | belief) in nats for one release step,
/// with actions drawn from `release_policy` (release actions only; the stop
/// action carries no observation and is excluded). Evaluates
///   sum_{s,z,a} p(s,z,a) log[ p(s,z,a) / (b(s) p(z,a)) ]
/// on the joint p(s,z,a) = sum_u q(z|a,s,u) pi(a) b(s,u). Nonnegative up to
/// float noise; values within -1e-10 are clamped to 0.
inline double instantaneous_mi(const Belief& belief, std::span<const double> release_policy,
                               const ObservationModel& model) {
    const int n_a = model.n_actions();
    if (static_cast<int>(release_policy.size()) != n_a)
        throw UsageError("instantaneous_mi: policy length must equal the release action count");
    double pol_sum = 0.0;
    for (double p : release_policy) pol_sum += p;
    if (pol_sum <= 0.0)
        throw UsageError("instantaneous_mi: policy has no mass on release actions");

    const int n_s = belief.n_secret();
    const int n_u = belief.n_useful();
    const int n_z = model.n_obs();
    const auto beta_s = marginal_secret(belief);

    double total = 0.0;
    std::vector<double> p_sz(n_s);
    for (int a = 0; a < n_a; ++a) {
        const double pa = release_policy[a] / pol_sum;
        if (pa <= 0.0) continue;
        for (int z = 0; z < n_z; ++z) {
            double p_z = 0.0;
            for (int s = 0; s < n_s; ++s) {
                double acc = 0.0;
                for (int u = 0; u < n_u; ++u) acc += model.prob(a, s, u, z) * belief.at(s, u);
                p_sz[s] = acc;
                p_z += acc;
            }
            if (p_z <= 0.0) continue;
            for (int s = 0; s < n_s; ++s) {
                if (p_sz[s] <= 0.0 || beta_s[s] <= 0.0) continue;
                // pi(a) cancels inside the log ratio.
                total += pa * p_sz[s] * std::log(p_sz[s] / (beta_s[s] * p_z));
            }
        }
    }
    if (total < 0.0 && total > -1e-10) total = 0.0;
    return total;
}

/// Exact trajectory leakage I(S; Z^T, A^T) by exhaustive enumeration of all
/// action/observation sequences of length `horizon` under the policy and
/// model, built directly from the joint P(S, Z^T, A^T). Oracle-scale only.
inline double brute_force_trajectory_mi(const ObservationModel& model, const Prior& prior,
                                        const BeliefPolicy& policy, int horizon) {
    if (horizon < 0) throw UsageError("brute_force_trajectory_mi: negative horizon");
    const double leaves =
        std::pow(static_cast<double>(model.n_actions()) * model.n_obs(), horizon);
    if (leaves > 1e6)
        throw SizeError("brute_force_trajectory_mi: enumeration exceeds 1e6 leaves");
    if (horizon == 0) return 0.0;

    const int n_s = prior.n_secret;
    const int n_u = prior.n_useful;
    const auto prior_s = prior.secret_marginal();

    double mi = 0.0;
    // DFS over (a, z) histories carrying, per hypothesis cell, the product of
    // observation likelihoods, and the history probability of the policy draws.
    std::vector<double> like(static_cast<std::size_t>(n_s) * n_u, 1.0);
    const Belief root = Belief::from_prior(prior);

    std::function<void(const Belief&, std::vector<double>&, double, int)> dfs =
        [&](const Belief& belief, std::vector<double>& lk, double pol_prob, int depth) {
            if (depth == horizon) {
                double p_leaf = 0.0;
                std::vector<double> p_s(n_s, 0.0);
                for (int s = 0; s < n_s; ++s)
                    for (int u = 0; u < n_u; ++u) {
                        const double v =
                            prior.at(s, u) * lk[static_cast<std::size_t>(s) * n_u + u] * pol_prob;
                        p_s[s] += v;
                        p_leaf += v;
                    }
                if (p_leaf <= 0.0) return;
                for (int s = 0; s < n_s; ++s)
                    if (p_s[s] > 0.0 && prior_s[s] > 0.0)
                        mi += p_s[s] * std::log(p_s[s] / (prior_s[s] * p_leaf));
                return;
            }
            const auto pol = policy(belief);
            for (int a = 0; a < model.n_actions(); ++a) {
                if (pol[a] <= 0.0) continue;
                for (int z = 0; z < model.n_obs(); ++z) {
                    double p_z = 0.0;
                    for (int s = 0; s < n_s; ++s)
                        for (int u = 0; u < n_u; ++u)
                            p_z += model.prob(a, s, u, z) * belief.at(s, u);
                    if (p_z <= 0.0) continue;
                    std::vector<double> lk_next(lk.size());
                    for (int s = 0; s < n_s; ++s)
                        for (int u = 0; u < n_u; ++u) {
                            const auto i = static_cast<std::size_t>(s) * n_u + u;
                            lk_next[i] = lk[i] * model.prob(a, s, u, z);
                        }
                    dfs(update(belief, model, a, z), lk_next, pol_prob * pol[a], depth + 1);
                }
            }
        };
    dfs(root, like, 1.0, 0);
    return mi;
}

/// Trajectory leakage by the chain rule: the expectation over histories of
/// the per-step instantaneous leakage,
///   sum_t E_{history} [ I(S; Z_t, A_t | belief_t) ].
/// An independent route to the same quantity as brute_force_trajectory_mi;
/// the two agree exactly (up to float noise) on enumerable instances.
inline double chain_rule_trajectory_mi(const ObservationModel& model, const Prior& prior,
                                       const BeliefPolicy& policy, int horizon) {
    if (horizon < 0) throw UsageError("chain_rule_trajectory_mi: negative horizon");
    const double leaves =
        std::pow(static_cast<double>(model.n_actions()) * model.n_obs(), horizon);
    if (leaves > 1e6)
        throw SizeError("chain_rule_trajectory_mi: enumeration exceeds 1e6 leaves");

    double mi = 0.0;
    std::function<void(const Belief&, double, int)> dfs = [&](const Belief& belief,
                                                              double hist_prob, int depth) {
        if (depth == horizon) return;
        const auto pol = policy(belief);
        mi += hist_prob * instantaneous_mi(belief, pol, model);
        for (int a = 0; a < model.n_actions(); ++a) {
            if (pol[a] <= 0.0) continue;
            for (int z = 0; z < model.n_obs(); ++z) {
                double p_z = 0.0;
                for (int s = 0; s < prior.n_secret; ++s)
                    for (int u = 0; u < prior.n_useful; ++u)
                        p_z += model.prob(a, s, u, z) * belief.at(s, u);
                if (p_z <= 0.0) continue;
                dfs(update(belief, model, a, z), hist_prob * pol[a] * p_z, depth + 1);
            }
        }
    };
    dfs(Belief::from_prior(prior), 1.0, 0);
    return mi;
}

// ---------------------------------------------------------------------------
// Variational estimation of the instantaneous leakage
// ---------------------------------------------------------------------------

struct QNetConfig {
    std::vector<int> hidden_sizes{32, 32};
    double lr = 0.05;
    double lr_decay = 1e-5;   // lr_t = lr / (1 + lr_decay * t)
    int batch_size = 16;
    int rollout_horizon = 4;  // belief rollout length; 0 trains at the prior only
    double leaky_slope = 0.01;
};

/// Variational posterior Q(S | Z, A, belief): a softmax net over secrets fed
/// with the observation one-hot, action one-hot and flattened belief.
struct QNet {
    DenseNet net;
    int n_actions = 0;
    int n_obs = 0;
    int n_secret = 0;
    int n_useful = 0;
    double final_loss = 0.0;

    std::vector<double> features(int z, int a, const Belief& belief) const {
        std::vector<double> x(static_cast<std::size_t>(n_obs + n_actions) +
                                  belief.joint().size(),
                              0.0);
        x[z] = 1.0;
        x[n_obs + a] = 1.0;
        std::copy(belief.joint().begin(), belief.joint().end(),
                  x.begin() + n_obs + n_actions);
        return x;
    }

    std::vector<double> posterior(int z, int a, const Belief& belief) const {
        return forward(net, features(z, a, belief));
    }

    static QNet make(const ObservationModel& model, const QNetConfig& cfg,
                     std::uint64_t seed) {
        QNet q;
        q.n_actions = model.n_actions();
        q.n_obs = model.n_obs();
        q.n_secret = model.n_secret();
        q.n_useful = model.n_useful();
        std::vector<int> sizes;
        sizes.push_back(q.n_obs + q.n_actions + q.n_secret * q.n_useful);
        for (int h : cfg.hidden_sizes) sizes.push_back(h);
        sizes.push_back(q.n_secret);
        q.net = DenseNet::make(std::move(sizes), Head::Softmax, seed, cfg.leaky_slope);
        return q;
    }
};

/// Trains Q by cross-entropy on tuples sampled from rolled-out beliefs:
/// (s,u) ~ belief, a ~ policy(belief), z ~ q(.|a,s,u); the belief advances
/// with each sampled (a, z) and restarts from the prior every
/// `rollout_horizon` steps. Minimizing the cross-entropy drives Q toward the
/// exact Bayes posterior over secrets.
inline QNet train_qnet(const ObservationModel& model, const Prior& prior,
                       const BeliefPolicy& policy, long n_samples, const QNetConfig& cfg,
                       std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("train_qnet: n_samples must be >= 1");
    QNet q = QNet::make(model, cfg, derive_seed(seed, 0));
    Rng rng(derive_seed(seed, 1));

    Belief belief = Belief::from_prior(prior);
    int rollout_steps = 0;
    long t = 0;
    double loss_acc = 0.0;
    long loss_n = 0;
    const int batch = std::max(1, cfg.batch_size);

    GradientBundle acc = GradientBundle::zeros_like(q.net);
    int in_batch = 0;
    for (long i = 0; i < n_samples; ++i) {
        if (cfg.rollout_horizon > 0 && rollout_steps >= cfg.rollout_horizon) {
            belief = Belief::from_prior(prior);
            rollout_steps = 0;
        }
        const int cell = rng.categorical(belief.joint());
        const int s = cell / model.n_useful();
        const int u = cell % model.n_useful();
        const auto pol = policy(belief);
        const int a = rng.categorical(pol);
        const int z = rng.categorical(model.row(a, s, u));

        const auto x = q.features(z, a, belief);
        const auto tr = forward_trace(q.net, x);
        loss_acc += -std::log(std::max(tr.output[s], 1e-300));
        ++loss_n;

        // d(-log y_s)/dy_i = -[i==s]/y_s; the softmax Jacobian reduces this
        // to the usual y - onehot(s) at the logits.
        std::vector<double> up(tr.output.size(), 0.0);
        up[s] = -1.0 / std::max(tr.output[s], 1e-300);
        acc.add_scaled(backward(q.net, tr, up), 1.0 / batch);
        if (++in_batch == batch || i + 1 == n_samples) {
            const double lr_t = cfg.lr / (1.0 + cfg.lr_decay * static_cast<double>(t));
            sgd_step(q.net, acc, lr_t, 5.0);
            acc = GradientBundle::zeros_like(q.net);
            in_batch = 0;
            ++t;
        }

        if (cfg.rollout_horizon > 0) {
            belief = update(belief, model, a, z);
            ++rollout_steps;
        }
        // Running loss over a trailing window only.
        if (loss_n >= std::max<long>(1000, n_samples / 10)) {
            q.final_loss = loss_acc / loss_n;
            loss_acc = 0.0;
            loss_n = 0;
        }
    }
    if (loss_n > 0) q.final_loss = loss_acc / loss_n;
    return q;
}

struct VariationalEstimate {
    double value = 0.0;     // H(b(S)) + mean log Q
    double std_error = 0.0; // standard error over the n outer blocks
    long blocks = 0;
};

/// Sampled variational lower bound on the instantaneous leakage:
///   H(b(S)) + (1/n) sum_j (1/k) sum_i log Q(s^j | z^i, a^i, belief),
/// where each outer draw j fixes a hypothesis (s^j, u^j) ~ belief and the k
/// inner observation pairs are drawn from pi(a) q(z | a, s^j, u^j), i.e.
/// (s, u, a, z) are sampled jointly from belief, policy and model.
inline VariationalEstimate variational_estimate(const QNet& qnet, const Belief& belief,
                                                std::span<const double> release_policy,
                                                const ObservationModel& model, long k,
                                                long n, std::uint64_t seed) {
    if (k < 1 || n < 1) throw ConfigError("variational_estimate: k and n must be >= 1");
    const int n_a = model.n_actions();
    const int n_z = model.n_obs();
    double pol_sum = 0.0;
    for (double p : release_policy) pol_sum += p;
    if (static_cast<int>(release_policy.size()) != n_a || pol_sum <= 0.0)
        throw UsageError("variational_estimate: bad release policy");

    // Q depends on (z, a) only, so tabulate log Q once.
    std::vector<double> log_q(static_cast<std::size_t>(n_z) * n_a * qnet.n_secret);
    for (int z = 0; z < n_z; ++z)
        for (int a = 0; a < n_a; ++a) {
            const auto out = qnet.posterior(z, a, belief);
            for (int s = 0; s < qnet.n_secret; ++s)
                log_q[(static_cast<std::size_t>(z) * n_a + a) * qnet.n_secret + s] =
                    std::log(std::max(out[s], 1e-300));
        }

    std::vector<double> pol_cdf(n_a);
    double acc = 0.0;
    for (int a = 0; a < n_a; ++a) {
        acc += release_policy[a] / pol_sum;
        pol_cdf[a] = acc;
    }
    const int n_s = model.n_secret();
    const int n_u = model.n_useful();
    std::vector<double> obs_cdf(static_cast<std::size_t>(n_a) * n_s * n_u * n_z);
    for (int a = 0; a < n_a; ++a)
        for (int s = 0; s < n_s; ++s)
            for (int u = 0; u < n_u; ++u) {
                const auto row = model.row(a, s, u);
                double c = 0.0;
                const std::size_t base = ((static_cast<std::size_t>(a) * n_s + s) * n_u + u) * n_z;
                for (int z = 0; z < n_z; ++z) {
                    c += row[z];
                    obs_cdf[base + z] = c;
                }
            }
    auto draw_cdf = [](std::span<const double> cdf, double uu) {
        int lo = 0, hi = static_cast<int>(cdf.size()) - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (uu < cdf[mid]) hi = mid; else lo = mid + 1;
        }
        return lo;
    };

    Rng rng(seed);
    const double h_s = entropy(std::span<const double>(marginal_secret(belief)));
    double sum_blocks = 0.0, sumsq_blocks = 0.0;
    for (long j = 0; j < n; ++j) {
        const int cell = rng.categorical(belief.joint());
        const int s = cell / n_u;
        const int u = cell % n_u;
        double block = 0.0;
        for (long i = 0; i < k; ++i) {
            const int a = draw_cdf(pol_cdf, rng.next_u01());
            const std::size_t base =
                ((static_cast<std::size_t>(a) * n_s + s) * n_u + u) * n_z;
            const int z = draw_cdf({obs_cdf.data() + base, static_cast<std::size_t>(n_z)},
                                   rng.next_u01());
            block += log_q[(static_cast<std::size_t>(z) * n_a + a) * qnet.n_secret + s];
        }
        block /= static_cast<double>(k);
        sum_blocks += block;
        sumsq_blocks += block * block;
    }
    const double mean = sum_blocks / static_cast<double>(n);
    double var = 0.0;
    if (n > 1) var = std::max(0.0, (sumsq_blocks - n * mean * mean) / (n - 1.0));
    VariationalEstimate est;
    est.value = h_s + mean;
    est.std_error = std::sqrt(var / static_cast<double>(n));
    est.blocks = n;
    return est;
}

inline nlohmann::json qnet_to_json(const QNet& q) {
    return {{"net", net_to_json(q.net)},
            {"n_actions", q.n_actions},
            {"n_obs", q.n_obs},
            {"n_secret", q.n_secret},
            {"n_useful", q.n_useful},
            {"final_loss", q.final_loss}};
}

inline QNet qnet_from_json(const nlohmann::json& j) {
    try {
        QNet q;
        q.net = net_from_json(j.at("net"));
        q.n_actions = j.at("n_actions").get<int>();
        q.n_obs = j.at("n_obs").get<int>();
        q.n_secret = j.at("n_secret").get<int>();
        q.n_useful = j.at("n_useful").get<int>();
        q.final_loss = j.at("final_loss").get<double>();
        return q;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad qnet JSON: ") + e.what());
    }
}

} // namespace aput
