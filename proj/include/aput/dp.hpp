#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "aput/belief.hpp"
#include "aput/env.hpp"
#include "aput/errors.hpp"

namespace aput {

/// Regular simplex lattice over the joint belief: all compositions of
/// `resolution` into N*M nonnegative parts, divided by the resolution.
class BeliefGrid {
public:
    static BeliefGrid build(int n_secret, int n_useful, int resolution) {
        const int dim = n_secret * n_useful;
        if (dim > 6) throw SizeError("belief grid: N*M must be <= 6");
        if (resolution < 1 || resolution > 20)
            throw SizeError("belief grid: resolution must be in [1, 20]");
        BeliefGrid g;
        g.n_secret_ = n_secret;
        g.n_useful_ = n_useful;
        g.resolution_ = resolution;
        std::vector<int> comp(dim, 0);
        g.enumerate(comp, 0, resolution);
        for (std::size_t i = 0; i < g.points_.size(); ++i)
            g.index_[encode(g.points_[i])] = static_cast<int>(i);
        return g;
    }

    int resolution() const { return resolution_; }
    int dim() const { return n_secret_ * n_useful_; }
    std::size_t size() const { return points_.size(); }
    const std::vector<int>& point(int idx) const { return points_[idx]; }

    Belief belief_at(int idx) const {
        std::vector<double> joint(points_[idx].size());
        for (std::size_t i = 0; i < joint.size(); ++i)
            joint[i] = static_cast<double>(points_[idx][i]) / resolution_;
        return Belief(n_secret_, n_useful_, std::move(joint));
    }

    /// Index of the l1-nearest grid point (largest-remainder rounding).
    /// The distance is at most dim/(2*resolution).
    int project(std::span<const double> joint) const {
        const int d = dim();
        std::vector<int> comp(d);
        std::vector<std::pair<double, int>> frac(d);
        int total = 0;
        for (int i = 0; i < d; ++i) {
            const double scaled = joint[i] * resolution_;
            comp[i] = static_cast<int>(std::floor(scaled));
            frac[i] = {scaled - comp[i], i};
            total += comp[i];
        }
        int remaining = resolution_ - total;
        std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second; // deterministic tie order
        });
        for (int r = 0; r < remaining; ++r) comp[frac[r % d].second] += 1;
        // Float slack can leave the composition off by one unit.
        for (int r = d - 1; remaining < 0 && r >= 0; --r)
            if (comp[frac[r].second] > 0) {
                comp[frac[r].second] -= 1;
                ++remaining;
            }
        return index_.at(encode(comp));
    }

    int project(const Belief& belief) const { return project(belief.joint()); }

private:
    void enumerate(std::vector<int>& comp, std::size_t pos, int left) {
        if (pos + 1 == comp.size()) {
            comp[pos] = left;
            points_.push_back(comp);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            comp[pos] = v;
            enumerate(comp, pos + 1, left - v);
        }
    }

    static std::uint64_t encode(const std::vector<int>& comp) {
        std::uint64_t key = 0;
        for (int v : comp) key = (key << 5) | static_cast<std::uint64_t>(v);
        return key;
    }

    int n_secret_ = 0;
    int n_useful_ = 0;
    int resolution_ = 0;
    std::vector<std::vector<int>> points_;
    std::unordered_map<std::uint64_t, int> index_;
};

/// Converged value table over the grid. For MI budgets the state carries an
/// extra discretized remaining-budget axis (kBudgetLevels levels, level b
/// standing for remaining budget (b+1)/kBudgetLevels * l_mi); entries are
/// stored point-major, budget level minor.
struct ValueTable {
    static constexpr int kBudgetLevels = 16;

    int resolution = 0;
    int budget_levels = 1; // 1 for belief thresholds
    std::vector<double> values;
    std::vector<int> greedy; // action per state, stop = n_actions
    int stop_action = 0;
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<double> residual_history;

    std::size_t state_index(int point, int level) const {
        return static_cast<std::size_t>(point) * budget_levels + level;
    }
};

namespace detail {

inline double grid_stop_cost(const Belief& b, const CostParams& costs) {
    const double scale = costs.scale_stop_cost_by_time_cost ? costs.time_cost : 1.0;
    return costs.lambda * scale * (1.0 - max_confidence_useful(b).second);
}

inline int budget_level_of(double remaining, double l_mi) {
    const int levels = ValueTable::kBudgetLevels;
    if (remaining <= 0.0) return -1; // exhausted
    const int b = static_cast<int>(std::ceil(remaining / l_mi * levels)) - 1;
    return std::clamp(b, 0, levels - 1);
}

inline double budget_of_level(int level, double l_mi) {
    return (level + 1.0) / ValueTable::kBudgetLevels * l_mi;
}

struct Transition {
    int succ = 0;    // grid index of the projected posterior
    double prob = 0; // observation probability under the grid-point belief
};

} // namespace detail

/// Value iteration for the fixed point
///   V(b) = min{ time_cost + min_a gamma * (T^a V)(b), stop_cost(b) }
/// over the belief grid, with forbidden grid points pinned at
/// forbidden_cost (terminate-mode semantics). Greedy ties break toward stop.
inline ValueTable value_iteration(const ObservationModel& model, const BeliefGrid& grid,
                                  const CostParams& costs, const PrivacySpec& privacy,
                                  double tol, int max_iter) {
    costs.validate();
    if (model.n_secret() * model.n_useful() != grid.dim())
        throw ConfigError("value_iteration: grid does not match the model");
    const int n_a = model.n_actions();
    const int n_z = model.n_obs();
    const int n_pts = static_cast<int>(grid.size());
    const bool mi_mode = is_mi_spec(privacy);
    const double l_mi = mi_mode ? std::get<MIBudget>(privacy).l_mi : 0.0;
    const double l_b = mi_mode ? 2.0 : std::get<BeliefThreshold>(privacy).l_b;

    ValueTable table;
    table.resolution = grid.resolution();
    table.budget_levels = mi_mode ? ValueTable::kBudgetLevels : 1;
    table.stop_action = n_a;
    const std::size_t n_states = static_cast<std::size_t>(n_pts) * table.budget_levels;
    table.values.assign(n_states, 0.0);
    table.greedy.assign(n_states, n_a);

    // Per grid point: stop cost, forbidden flag, belief transitions, and in
    // MI mode the per-action leakage of a deterministic action choice.
    std::vector<double> stop_v(n_pts);
    std::vector<char> forbidden(n_pts, 0);
    std::vector<std::vector<detail::Transition>> trans(
        static_cast<std::size_t>(n_pts) * n_a);
    std::vector<double> mi_step(mi_mode ? static_cast<std::size_t>(n_pts) * n_a : 0, 0.0);
    for (int p = 0; p < n_pts; ++p) {
        const Belief b = grid.belief_at(p);
        stop_v[p] = detail::grid_stop_cost(b, costs);
        if (!mi_mode && max_confidence_secret(b).second >= l_b) forbidden[p] = 1;
        for (int a = 0; a < n_a; ++a) {
            auto& tr = trans[static_cast<std::size_t>(p) * n_a + a];
            for (int z = 0; z < n_z; ++z) {
                double pz = 0.0;
                for (int s = 0; s < model.n_secret(); ++s)
                    for (int u = 0; u < model.n_useful(); ++u)
                        pz += model.prob(a, s, u, z) * b.at(s, u);
                if (pz <= 0.0) continue;
                tr.push_back({grid.project(update(b, model, a, z)), pz});
            }
            if (mi_mode) {
                std::vector<double> point_mass(n_a, 0.0);
                point_mass[a] = 1.0;
                mi_step[static_cast<std::size_t>(p) * n_a + a] =
                    instantaneous_mi(b, point_mass, model);
            }
        }
    }
    for (int p = 0; p < n_pts; ++p)
        if (forbidden[p])
            for (int lvl = 0; lvl < table.budget_levels; ++lvl)
                table.values[table.state_index(p, lvl)] = costs.forbidden_cost;

    std::vector<double> next(n_states);
    for (int it = 0; it < max_iter; ++it) {
        double residual = 0.0;
        for (int p = 0; p < n_pts; ++p) {
            for (int lvl = 0; lvl < table.budget_levels; ++lvl) {
                const std::size_t si = table.state_index(p, lvl);
                if (forbidden[p]) {
                    next[si] = costs.forbidden_cost;
                    table.greedy[si] = n_a;
                    continue;
                }
                double best = stop_v[p];
                int best_a = n_a;
                for (int a = 0; a < n_a; ++a) {
                    double exp_v = 0.0;
                    int succ_lvl = lvl;
                    bool exhausted = false;
                    if (mi_mode) {
                        const double rem = detail::budget_of_level(lvl, l_mi) -
                                           mi_step[static_cast<std::size_t>(p) * n_a + a];
                        succ_lvl = detail::budget_level_of(rem, l_mi);
                        exhausted = succ_lvl < 0;
                    }
                    if (exhausted) {
                        exp_v = costs.forbidden_cost;
                    } else {
                        for (const auto& t : trans[static_cast<std::size_t>(p) * n_a + a])
                            exp_v += t.prob * table.values[table.state_index(t.succ, succ_lvl)];
                    }
                    const double q = costs.time_cost + costs.gamma * exp_v;
                    if (q < best) {
                        best = q;
                        best_a = a;
                    }
                }
                next[si] = best;
                table.greedy[si] = best_a;
                residual = std::max(residual, std::abs(best - table.values[si]));
            }
        }
        table.values.swap(next);
        table.residual_history.push_back(residual);
        table.iterations = it + 1;
        table.final_residual = residual;
        if (residual < tol) return table;
    }
    throw NumericError("value_iteration: no convergence after " + std::to_string(max_iter) +
                       " iterations (residual " + std::to_string(table.final_residual) + ")");
}

/// One-shot certificate for a converged table: re-applies the Bellman
/// operator and reports the largest amount by which V exceeds it, plus the
/// scaled-stop premise of the V* >= V / C_T lower bound.
struct CertificateReport {
    double max_violation = 0.0;       // max over states of V - (operator V)
    double projection_slack = 0.0;    // worst-case l1 projection distance bound
    double lower_bound_factor = 0.0;  // 1 / C_T
    bool theorem_premise_holds = false;
    double theorem_max_violation = 0.0; // against the lambda*C_T*(1-b(u)) stop side
};

inline CertificateReport verify_value_certificate(const ValueTable& table,
                                                  const ObservationModel& model,
                                                  const BeliefGrid& grid,
                                                  const CostParams& costs,
                                                  const PrivacySpec& privacy) {
    const int n_a = model.n_actions();
    const bool mi_mode = is_mi_spec(privacy);
    const double l_mi = mi_mode ? std::get<MIBudget>(privacy).l_mi : 0.0;
    const double l_b = mi_mode ? 2.0 : std::get<BeliefThreshold>(privacy).l_b;

    CertificateReport rep;
    rep.projection_slack =
        static_cast<double>(grid.dim()) / (2.0 * grid.resolution());
    rep.lower_bound_factor = 1.0 / costs.time_cost;
    rep.theorem_premise_holds = true;

    for (int p = 0; p < static_cast<int>(grid.size()); ++p) {
        const Belief b = grid.belief_at(p);
        if (!mi_mode && max_confidence_secret(b).second >= l_b) continue;
        const double stop_as_built = detail::grid_stop_cost(b, costs);
        const double stop_theorem =
            costs.lambda * costs.time_cost * (1.0 - max_confidence_useful(b).second);
        for (int lvl = 0; lvl < table.budget_levels; ++lvl) {
            double best_q = std::numeric_limits<double>::infinity();
            for (int a = 0; a < n_a; ++a) {
                double exp_v = 0.0;
                bool exhausted = false;
                int succ_lvl = lvl;
                if (mi_mode) {
                    std::vector<double> pm(n_a, 0.0);
                    pm[a] = 1.0;
                    const double rem =
                        detail::budget_of_level(lvl, l_mi) - instantaneous_mi(b, pm, model);
                    succ_lvl = detail::budget_level_of(rem, l_mi);
                    exhausted = succ_lvl < 0;
                }
                if (exhausted) {
                    exp_v = costs.forbidden_cost;
                } else {
                    for (int z = 0; z < model.n_obs(); ++z) {
                        double pz = 0.0;
                        for (int s = 0; s < model.n_secret(); ++s)
                            for (int u = 0; u < model.n_useful(); ++u)
                                pz += model.prob(a, s, u, z) * b.at(s, u);
                        if (pz <= 0.0) continue;
                        exp_v += pz * table.values[table.state_index(
                                          grid.project(update(b, model, a, z)), succ_lvl)];
                    }
                }
                best_q = std::min(best_q, costs.time_cost + costs.gamma * exp_v);
            }
            const double v = table.values[table.state_index(p, lvl)];
            rep.max_violation = std::max(rep.max_violation,
                                         v - std::min(best_q, stop_as_built));
            const double theorem_rhs = std::min(best_q, stop_theorem);
            rep.theorem_max_violation =
                std::max(rep.theorem_max_violation, v - theorem_rhs);
            if (v > theorem_rhs + 1e-9) rep.theorem_premise_holds = false;
        }
    }
    return rep;
}

/// Deterministic stationary policy read off a converged table: project the
/// current belief (and remaining budget, for MI specs) and take the recorded
/// greedy action.
class GreedyGridPolicy final : public Policy {
public:
    GreedyGridPolicy(BeliefGrid grid, ValueTable table)
        : grid_(std::move(grid)), table_(std::move(table)) {}

    std::vector<double> action_distribution(const Environment& env,
                                            const EnvState& st) const override {
        const int p = grid_.project(st.belief);
        int lvl = 0;
        if (table_.budget_levels > 1) {
            const double l_mi = std::get<MIBudget>(env.privacy()).l_mi;
            lvl = detail::budget_level_of(l_mi - st.cumulative_mi, l_mi);
            if (lvl < 0) lvl = 0; // exhausted; any action is equally forbidden
        }
        const int action = table_.greedy[table_.state_index(p, lvl)];
        std::vector<double> d(static_cast<std::size_t>(env.n_actions()) + 1, 0.0);
        d[action] = 1.0;
        return d;
    }

    const ValueTable& table() const { return table_; }
    const BeliefGrid& grid() const { return grid_; }

private:
    BeliefGrid grid_;
    ValueTable table_;
};

inline nlohmann::json value_table_to_json(const ValueTable& t) {
    return {{"resolution", t.resolution},
            {"budget_levels", t.budget_levels},
            {"values", t.values},
            {"greedy", t.greedy},
            {"stop_action", t.stop_action},
            {"iterations", t.iterations},
            {"final_residual", t.final_residual}};
}

inline ValueTable value_table_from_json(const nlohmann::json& j) {
    try {
        ValueTable t;
        t.resolution = j.at("resolution").get<int>();
        t.budget_levels = j.at("budget_levels").get<int>();
        t.values = j.at("values").get<std::vector<double>>();
        t.greedy = j.at("greedy").get<std::vector<int>>();
        t.stop_action = j.at("stop_action").get<int>();
        t.iterations = j.at("iterations").get<int>();
        t.final_residual = j.at("final_residual").get<double>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value table JSON: ") + e.what());
    }
}

} // namespace aput
