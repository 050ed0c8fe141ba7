#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aput/belief.hpp"
#include "aput/errors.hpp"
#include "aput/mi.hpp"
#include "aput/model.hpp"
#include "aput/random.hpp"

namespace aput {

enum class ForbiddenMode { Terminate, PenalizeContinue };

struct CostParams {
    double lambda = 50.0;         // declaration error penalty
    double time_cost = 0.5;       // per release step
    double forbidden_cost = 500.0; // charged when the privacy constraint is hit
    double gamma = 0.99;
    int t_max = 50;               // forced stop horizon
    bool scale_stop_cost_by_time_cost = false;
    ForbiddenMode forbidden_mode = ForbiddenMode::Terminate;

    void validate() const {
        if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
        if (time_cost <= 0.0) throw ConfigError("time_cost must be positive");
        if (forbidden_cost <= lambda)
            throw ConfigError("forbidden_cost must exceed lambda");
        if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("gamma must be in (0,1]");
        if (t_max < 1) throw ConfigError("t_max must be >= 1");
    }
};

/// Cap on the adversary's maximum confidence in the secret.
struct BeliefThreshold {
    double l_b = 0.9;
};

/// Budget on the cumulative mutual information leaked about the secret.
struct MIBudget {
    double l_mi = 1.0; // nats
};

using PrivacySpec = std::variant<BeliefThreshold, MIBudget>;

inline bool is_mi_spec(const PrivacySpec& p) { return std::holds_alternative<MIBudget>(p); }

enum class Phase { Active, Forbidden, Terminal };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Active: return "active";
        case Phase::Forbidden: return "forbidden";
        default: return "terminal";
    }
}

/// Per-episode state. The hidden pair is sampled at reset and is not part of
/// any policy-visible feature encoding.
struct EnvState {
    Belief belief;
    double cumulative_mi = 0.0;
    int step = 0;
    Phase phase = Phase::Active;
    int hidden_secret = 0;
    int hidden_useful = 0;
    Rng rng;
};

struct StepOutcome {
    double cost = 0.0;
    std::optional<int> observation;     // absent on stop
    bool done = false;
    bool violation = false;
    std::optional<int> declared_useful; // present on (possibly forced) stop
};

/// The episodic release POMDP. Holds the immutable model/prior/cost/privacy
/// configuration; episodes are EnvState values produced by reset() and
/// advanced by step(). The stop action index is n_actions(); policies emit
/// distributions of length n_actions()+1 with stop last.
class Environment {
public:
    Environment(ObservationModel model, Prior prior, CostParams costs, PrivacySpec privacy,
                bool check_model_identifiability = true)
        : model_(std::move(model)), prior_(std::move(prior)), costs_(costs),
          privacy_(privacy) {
        costs_.validate();
        if (prior_.n_secret != model_.n_secret() || prior_.n_useful != model_.n_useful())
            throw ConfigError("prior shape does not match the model");
        if (const auto* bt = std::get_if<BeliefThreshold>(&privacy_)) {
            if (bt->l_b <= 1.0 / model_.n_secret() || bt->l_b > 1.0)
                throw ConfigError("belief threshold must be in (1/N, 1]");
            const auto m = prior_.secret_marginal();
            for (double v : m)
                if (v >= bt->l_b)
                    throw ConfigError("prior already violates the belief threshold");
        } else {
            const auto& mb = std::get<MIBudget>(privacy_);
            if (mb.l_mi <= 0.0) throw ConfigError("MI budget must be positive");
            if (mb.l_mi > std::log(static_cast<double>(model_.n_secret())))
                warnings_.push_back("MI budget exceeds log N; the constraint is vacuous");
        }
        if (check_model_identifiability) {
            identifiable_ = check_identifiability(model_).ok;
            if (!identifiable_)
                warnings_.push_back("model is not identifiable; some useful hypotheses "
                                    "cannot be distinguished");
        }
    }

    const ObservationModel& model() const { return model_; }
    const Prior& prior() const { return prior_; }
    const CostParams& costs() const { return costs_; }
    const PrivacySpec& privacy() const { return privacy_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    bool identifiable() const { return identifiable_; }

    int n_actions() const { return model_.n_actions(); }
    int stop_action() const { return model_.n_actions(); }

    EnvState reset(std::uint64_t seed) const {
        Rng rng(seed);
        EnvState st{Belief::from_prior(prior_), 0.0, 0, Phase::Active, 0, 0, Rng(0)};
        const int cell = rng.categorical(prior_.joint);
        st.hidden_secret = cell / prior_.n_useful;
        st.hidden_useful = cell % prior_.n_useful;
        st.rng = rng;
        return st;
    }

    bool episode_over(const EnvState& st) const {
        if (st.phase == Phase::Terminal) return true;
        return st.phase == Phase::Forbidden &&
               costs_.forbidden_mode == ForbiddenMode::Terminate;
    }

    double stop_cost(const Belief& belief) const {
        const double scale = costs_.scale_stop_cost_by_time_cost ? costs_.time_cost : 1.0;
        return costs_.lambda * scale * (1.0 - max_confidence_useful(belief).second);
    }

    /// Advance one step. `policy_dist` is the acting policy's distribution
    /// over all n_actions()+1 actions (stop last); the leakage accumulator
    /// uses it renormalized over the release actions, evaluated at the
    /// pre-update belief.
    StepOutcome step(EnvState& st, int action, std::span<const double> policy_dist) const {
        if (episode_over(st))
            throw UsageError("step: episode is already finished");
        StepOutcome out;
        if (action == stop_action()) {
            out.cost = stop_cost(st.belief);
            out.declared_useful = max_confidence_useful(st.belief).first;
            out.done = true;
            st.phase = Phase::Terminal;
            return out;
        }
        if (action < 0 || action > stop_action())
            throw UsageError("step: action out of range");
        if (static_cast<int>(policy_dist.size()) != n_actions() + 1)
            throw UsageError("step: policy distribution must cover all actions plus stop");

        const int z = st.rng.categorical(model_.row(action, st.hidden_secret, st.hidden_useful));
        out.observation = z;

        // Leakage accrues for the step under the acting policy, before the
        // belief moves. Tracked under both privacy kinds; only the MI budget
        // enforces it.
        std::vector<double> release(policy_dist.begin(), policy_dist.end() - 1);
        double mass = 0.0;
        for (double p : release) mass += p;
        if (mass <= 0.0) {
            release.assign(release.size(), 0.0);
            release[action] = 1.0; // inconsistent caller dist; the taken action defines it
        }
        st.cumulative_mi += instantaneous_mi(st.belief, release, model_);

        st.belief = update(st.belief, model_, action, z);
        st.step += 1;

        if (violated(st)) {
            out.violation = true;
            out.cost = costs_.forbidden_cost; // replaces the step cost
            st.phase = Phase::Forbidden;
            if (costs_.forbidden_mode == ForbiddenMode::Terminate) {
                out.done = true;
                return out;
            }
        } else {
            out.cost = costs_.time_cost;
            st.phase = Phase::Active; // may re-enter from Forbidden (penalize mode)
        }

        if (st.step >= costs_.t_max) {
            // Horizon exhausted: force a stop, unless this very step already
            // paid the violation cost (then the episode just ends).
            if (!out.violation) {
                out.cost += stop_cost(st.belief);
                out.declared_useful = max_confidence_useful(st.belief).first;
            }
            st.phase = Phase::Terminal;
            out.done = true;
        }
        return out;
    }

    bool violated(const EnvState& st) const {
        if (const auto* bt = std::get_if<BeliefThreshold>(&privacy_))
            return max_confidence_secret(st.belief).second >= bt->l_b;
        return st.cumulative_mi >= std::get<MIBudget>(privacy_).l_mi;
    }

    /// Policy features: the flattened joint belief, for MI budgets one
    /// remaining-budget feature (omit for the pure-belief ablation), then
    /// the normalized step count.
    std::vector<double> encode_state(const EnvState& st,
                                     bool include_budget_feature = true) const {
        if (episode_over(st))
            throw UsageError("encode_state: episode is already finished");
        std::vector<double> f(st.belief.joint().begin(), st.belief.joint().end());
        if (include_budget_feature) {
            if (const auto* mb = std::get_if<MIBudget>(&privacy_))
                f.push_back(std::max(0.0, (mb->l_mi - st.cumulative_mi) / mb->l_mi));
        }
        f.push_back(static_cast<double>(st.step) / costs_.t_max);
        return f;
    }

    int feature_size(bool include_budget_feature = true) const {
        return model_.n_secret() * model_.n_useful() +
               ((include_budget_feature && is_mi_spec(privacy_)) ? 1 : 0) + 1;
    }

private:
    ObservationModel model_;
    Prior prior_;
    CostParams costs_;
    PrivacySpec privacy_;
    bool identifiable_ = true;
    std::vector<std::string> warnings_;
};

/// Common interface for everything that can drive an episode: A2C policies,
/// grid oracle policies and baselines.
struct Policy {
    virtual ~Policy() = default;
    /// Distribution over n_actions()+1 actions, stop last.
    virtual std::vector<double> action_distribution(const Environment& env,
                                                    const EnvState& st) const = 0;
};

struct RandomPolicy final : Policy {
    std::vector<double> action_distribution(const Environment& env,
                                            const EnvState&) const override {
        return std::vector<double>(static_cast<std::size_t>(env.n_actions()) + 1,
                                   1.0 / (env.n_actions() + 1));
    }
};

struct AlwaysStopPolicy final : Policy {
    std::vector<double> action_distribution(const Environment& env,
                                            const EnvState&) const override {
        std::vector<double> d(static_cast<std::size_t>(env.n_actions()) + 1, 0.0);
        d.back() = 1.0;
        return d;
    }
};

} // namespace aput
