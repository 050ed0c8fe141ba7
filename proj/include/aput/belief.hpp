#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "aput/errors.hpp"
#include "aput/model.hpp"

namespace aput {

/// Joint posterior over the hypothesis grid, row-major in the secret index.
/// Values are immutable after construction; `update` returns a fresh belief.
class Belief {
public:
    Belief(int n_secret, int n_useful, std::vector<double> joint)
        : n_secret_(n_secret), n_useful_(n_useful), joint_(std::move(joint)) {
        if (static_cast<int>(joint_.size()) != n_secret_ * n_useful_)
            throw ConfigError("belief has wrong size");
        double sum = 0.0;
        for (double v : joint_) {
            if (v < 0.0) throw ConfigError("belief has a negative entry");
            sum += v;
        }
        if (sum < 1e-300) throw ConfigError("belief has no mass");
        for (double& v : joint_) v /= sum; // keep drift below the 1e-10 contract
    }

    static Belief from_prior(const Prior& prior) {
        return Belief(prior.n_secret, prior.n_useful, prior.joint);
    }

    static Belief uniform(int n_secret, int n_useful) {
        return from_prior(Prior::uniform(n_secret, n_useful));
    }

    int n_secret() const { return n_secret_; }
    int n_useful() const { return n_useful_; }
    double at(int s, int u) const { return joint_[static_cast<std::size_t>(s) * n_useful_ + u]; }
    std::span<const double> joint() const { return joint_; }

private:
    int n_secret_;
    int n_useful_;
    std::vector<double> joint_;
};

/// Bayes update for one (action, observation) pair:
/// b'(s,u) = q(z|a,s,u) b(s,u) / sum_{s~,u~} q(z|a,s~,u~) b(s~,u~).
inline Belief update(const Belief& belief, const ObservationModel& model, int action,
                     int obs) {
    if (action < 0 || action >= model.n_actions())
        throw UsageError("update: action out of range");
    if (obs < 0 || obs >= model.n_obs())
        throw UsageError("update: observation out of range");
    const int n_s = belief.n_secret();
    const int n_u = belief.n_useful();
    std::vector<double> next(static_cast<std::size_t>(n_s) * n_u);
    double denom = 0.0;
    for (int s = 0; s < n_s; ++s)
        for (int u = 0; u < n_u; ++u) {
            const double v = model.prob(action, s, u, obs) * belief.at(s, u);
            next[static_cast<std::size_t>(s) * n_u + u] = v;
            denom += v;
        }
    if (denom < 1e-300)
        throw ZeroLikelihoodError("observation has zero likelihood under the belief");
    return Belief(n_s, n_u, std::move(next));
}

inline std::vector<double> marginal_secret(const Belief& belief) {
    std::vector<double> m(belief.n_secret(), 0.0);
    for (int s = 0; s < belief.n_secret(); ++s)
        for (int u = 0; u < belief.n_useful(); ++u) m[s] += belief.at(s, u);
    return m;
}

inline std::vector<double> marginal_useful(const Belief& belief) {
    std::vector<double> m(belief.n_useful(), 0.0);
    for (int s = 0; s < belief.n_secret(); ++s)
        for (int u = 0; u < belief.n_useful(); ++u) m[u] += belief.at(s, u);
    return m;
}

namespace detail {
// Argmax with ties broken toward the smallest index.
inline std::pair<int, double> argmax_dist(std::span<const double> d) {
    int best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d[i] > d[best]) best = static_cast<int>(i);
    return {best, d[best]};
}
} // namespace detail

inline std::pair<int, double> max_confidence_secret(const Belief& belief) {
    const auto m = marginal_secret(belief);
    return detail::argmax_dist(m);
}

inline std::pair<int, double> max_confidence_useful(const Belief& belief) {
    const auto m = marginal_useful(belief);
    return detail::argmax_dist(m);
}

/// Shannon entropy in nats; 0 log 0 = 0.
inline double entropy(std::span<const double> dist) {
    double h = 0.0;
    for (double p : dist)
        if (p > 0.0) h -= p * std::log(p);
    return h < 0.0 ? 0.0 : h;
}

} // namespace aput
