#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aput/a2c.hpp"
#include "aput/dp.hpp"
#include "aput/env.hpp"
#include "aput/errors.hpp"
#include "aput/mi.hpp"
#include "aput/model.hpp"

namespace aput {

/// Shortest decimal representation that round-trips the exact double.
inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// FNV-1a over a string; used to stamp outputs with the config identity.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ModelSource {
    enum class Kind { Synthetic, File, Csv } kind = Kind::Synthetic;
    // synthetic
    std::uint64_t seed = 7;
    int actions = 3, secrets = 3, usefuls = 3, obs = 50;
    double sigma_lo = 0.5, sigma_hi = 1.5;
    // file / csv
    std::string path;
    int bins = 10;
    double smoothing = 1.0;
};

struct DpParams {
    int resolution = 12;
    double tol = 1e-6;
    int max_iter = 5000;
};

struct ExperimentConfig {
    ModelSource model;
    std::optional<std::vector<std::vector<double>>> prior; // row-major [s][u]; empty = uniform
    CostParams costs;
    bool mi_privacy = false;
    std::vector<double> thresholds;
    A2CConfig a2c;
    DpParams dp;
    long eval_episodes = 10000;
    std::string out_dir = "out";
    std::uint64_t seed = 1;

    nlohmann::json canonical_json() const;
    std::uint64_t hash() const { return fnv1a(canonical_json().dump()); }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                       const std::string& path) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" +
                              (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
T get_as(const nlohmann::json& obj, const std::string& key, const T& fallback,
         const std::string& path) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for config key '" +
                          (path.empty() ? key : path + "." + key) + "'");
    }
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, bool apply_env_seed = true) {
    using detail::check_keys;
    using detail::get_as;
    ExperimentConfig cfg;
    check_keys(j, {"model", "prior", "costs", "privacy", "a2c", "dp", "eval_episodes",
                   "out_dir", "seed"},
               "");

    if (j.contains("model")) {
        const auto& m = j.at("model");
        const auto source = get_as<std::string>(m, "source", "synthetic", "model");
        if (source == "synthetic") {
            check_keys(m, {"source", "seed", "actions", "secrets", "usefuls", "obs",
                           "sigma_lo", "sigma_hi"},
                       "model");
            cfg.model.kind = ModelSource::Kind::Synthetic;
            cfg.model.seed = get_as<std::uint64_t>(m, "seed", cfg.model.seed, "model");
            cfg.model.actions = get_as<int>(m, "actions", cfg.model.actions, "model");
            cfg.model.secrets = get_as<int>(m, "secrets", cfg.model.secrets, "model");
            cfg.model.usefuls = get_as<int>(m, "usefuls", cfg.model.usefuls, "model");
            cfg.model.obs = get_as<int>(m, "obs", cfg.model.obs, "model");
            cfg.model.sigma_lo = get_as<double>(m, "sigma_lo", cfg.model.sigma_lo, "model");
            cfg.model.sigma_hi = get_as<double>(m, "sigma_hi", cfg.model.sigma_hi, "model");
        } else if (source == "file") {
            check_keys(m, {"source", "path"}, "model");
            cfg.model.kind = ModelSource::Kind::File;
            cfg.model.path = get_as<std::string>(m, "path", "", "model");
            if (cfg.model.path.empty()) throw ConfigError("model.path is required");
        } else if (source == "csv") {
            check_keys(m, {"source", "path", "bins", "smoothing"}, "model");
            cfg.model.kind = ModelSource::Kind::Csv;
            cfg.model.path = get_as<std::string>(m, "path", "", "model");
            if (cfg.model.path.empty()) throw ConfigError("model.path is required");
            cfg.model.bins = get_as<int>(m, "bins", cfg.model.bins, "model");
            cfg.model.smoothing =
                get_as<double>(m, "smoothing", cfg.model.smoothing, "model");
        } else {
            throw ConfigError("unknown config value for 'model.source'");
        }
    }

    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        if (p.is_string()) {
            if (p.get<std::string>() != "uniform")
                throw ConfigError("bad value for config key 'prior'");
        } else {
            try {
                cfg.prior = p.get<std::vector<std::vector<double>>>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("bad value for config key 'prior'");
            }
        }
    }

    if (j.contains("costs")) {
        const auto& c = j.at("costs");
        check_keys(c, {"lambda", "time_cost", "forbidden_cost", "gamma", "t_max",
                       "scale_stop_cost_by_time_cost", "forbidden_mode"},
                   "costs");
        cfg.costs.lambda = get_as<double>(c, "lambda", cfg.costs.lambda, "costs");
        cfg.costs.time_cost = get_as<double>(c, "time_cost", cfg.costs.time_cost, "costs");
        cfg.costs.forbidden_cost =
            get_as<double>(c, "forbidden_cost", cfg.costs.forbidden_cost, "costs");
        cfg.costs.gamma = get_as<double>(c, "gamma", cfg.costs.gamma, "costs");
        cfg.costs.t_max = get_as<int>(c, "t_max", cfg.costs.t_max, "costs");
        cfg.costs.scale_stop_cost_by_time_cost =
            get_as<bool>(c, "scale_stop_cost_by_time_cost",
                         cfg.costs.scale_stop_cost_by_time_cost, "costs");
        const auto mode =
            get_as<std::string>(c, "forbidden_mode", "terminate", "costs");
        if (mode == "terminate")
            cfg.costs.forbidden_mode = ForbiddenMode::Terminate;
        else if (mode == "penalize-continue")
            cfg.costs.forbidden_mode = ForbiddenMode::PenalizeContinue;
        else
            throw ConfigError("unknown config value for 'costs.forbidden_mode'");
    }

    if (j.contains("privacy")) {
        const auto& p = j.at("privacy");
        check_keys(p, {"kind", "thresholds", "threshold"}, "privacy");
        const auto kind = get_as<std::string>(p, "kind", "belief", "privacy");
        if (kind == "mi")
            cfg.mi_privacy = true;
        else if (kind != "belief")
            throw ConfigError("unknown config value for 'privacy.kind'");
        if (p.contains("thresholds"))
            cfg.thresholds = get_as<std::vector<double>>(p, "thresholds", {}, "privacy");
        if (p.contains("threshold"))
            cfg.thresholds.push_back(get_as<double>(p, "threshold", 0.0, "privacy"));
    }
    if (cfg.thresholds.empty())
        cfg.thresholds = cfg.mi_privacy ? std::vector<double>{0.5, 1.0, 1.5, 2.0}
                                        : std::vector<double>{0.6, 0.7, 0.8, 0.9, 0.99};
    for (std::size_t i = 0; i + 1 < cfg.thresholds.size(); ++i)
        if (!(cfg.thresholds[i] < cfg.thresholds[i + 1]))
            throw ConfigError("privacy.thresholds must be strictly increasing");

    if (j.contains("a2c")) {
        const auto& a = j.at("a2c");
        check_keys(a, {"lr_actor", "lr_critic", "gamma", "episodes", "entropy_coef",
                       "hidden_sizes", "eval_every", "grad_clip",
                       "include_budget_feature", "lr_decay"},
                   "a2c");
        cfg.a2c.lr_actor = get_as<double>(a, "lr_actor", cfg.a2c.lr_actor, "a2c");
        cfg.a2c.lr_critic = get_as<double>(a, "lr_critic", cfg.a2c.lr_critic, "a2c");
        cfg.a2c.gamma = get_as<double>(a, "gamma", cfg.a2c.gamma, "a2c");
        cfg.a2c.episodes = get_as<long>(a, "episodes", cfg.a2c.episodes, "a2c");
        cfg.a2c.entropy_coef =
            get_as<double>(a, "entropy_coef", cfg.a2c.entropy_coef, "a2c");
        cfg.a2c.hidden_sizes =
            get_as<std::vector<int>>(a, "hidden_sizes", cfg.a2c.hidden_sizes, "a2c");
        cfg.a2c.eval_every = get_as<long>(a, "eval_every", cfg.a2c.eval_every, "a2c");
        cfg.a2c.grad_clip = get_as<double>(a, "grad_clip", cfg.a2c.grad_clip, "a2c");
        cfg.a2c.include_budget_feature = get_as<bool>(
            a, "include_budget_feature", cfg.a2c.include_budget_feature, "a2c");
        cfg.a2c.lr_decay = get_as<double>(a, "lr_decay", cfg.a2c.lr_decay, "a2c");
    }

    if (j.contains("dp")) {
        const auto& d = j.at("dp");
        check_keys(d, {"resolution", "tol", "max_iter"}, "dp");
        cfg.dp.resolution = get_as<int>(d, "resolution", cfg.dp.resolution, "dp");
        cfg.dp.tol = get_as<double>(d, "tol", cfg.dp.tol, "dp");
        cfg.dp.max_iter = get_as<int>(d, "max_iter", cfg.dp.max_iter, "dp");
    }

    cfg.eval_episodes = detail::get_as<long>(j, "eval_episodes", cfg.eval_episodes, "");
    cfg.out_dir = detail::get_as<std::string>(j, "out_dir", cfg.out_dir, "");
    cfg.seed = detail::get_as<std::uint64_t>(j, "seed", cfg.seed, "");

    if (apply_env_seed) {
        if (const char* env = std::getenv("APUT_SEED")) {
            std::uint64_t s = 0;
            const auto res = std::from_chars(env, env + std::string(env).size(), s);
            if (res.ec != std::errc() || *res.ptr != '\0')
                throw ConfigError("APUT_SEED must be an unsigned integer");
            cfg.seed = s;
        }
    }
    cfg.a2c.seed = cfg.seed;
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, bool apply_env_seed = true) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j, apply_env_seed);
}

inline nlohmann::json ExperimentConfig::canonical_json() const {
    nlohmann::json m;
    switch (model.kind) {
        case ModelSource::Kind::Synthetic:
            m = {{"source", "synthetic"}, {"seed", model.seed},
                 {"actions", model.actions}, {"secrets", model.secrets},
                 {"usefuls", model.usefuls}, {"obs", model.obs},
                 {"sigma_lo", model.sigma_lo}, {"sigma_hi", model.sigma_hi}};
            break;
        case ModelSource::Kind::File:
            m = {{"source", "file"}, {"path", model.path}};
            break;
        case ModelSource::Kind::Csv:
            m = {{"source", "csv"}, {"path", model.path}, {"bins", model.bins},
                 {"smoothing", model.smoothing}};
            break;
    }
    nlohmann::json j{
        {"model", m},
        {"costs",
         {{"lambda", costs.lambda},
          {"time_cost", costs.time_cost},
          {"forbidden_cost", costs.forbidden_cost},
          {"gamma", costs.gamma},
          {"t_max", costs.t_max},
          {"scale_stop_cost_by_time_cost", costs.scale_stop_cost_by_time_cost},
          {"forbidden_mode", costs.forbidden_mode == ForbiddenMode::Terminate
                                 ? "terminate"
                                 : "penalize-continue"}}},
        {"privacy", {{"kind", mi_privacy ? "mi" : "belief"}, {"thresholds", thresholds}}},
        {"a2c",
         {{"lr_actor", a2c.lr_actor},
          {"lr_critic", a2c.lr_critic},
          {"gamma", a2c.gamma},
          {"episodes", a2c.episodes},
          {"entropy_coef", a2c.entropy_coef},
          {"hidden_sizes", a2c.hidden_sizes},
          {"eval_every", a2c.eval_every},
          {"grad_clip", a2c.grad_clip},
          {"include_budget_feature", a2c.include_budget_feature},
          {"lr_decay", a2c.lr_decay}}},
        {"dp",
         {{"resolution", dp.resolution}, {"tol", dp.tol}, {"max_iter", dp.max_iter}}},
        {"eval_episodes", eval_episodes},
        {"seed", seed}};
    if (prior) j["prior"] = *prior;
    return j;
}

inline ObservationModel make_model(const ModelSource& src) {
    switch (src.kind) {
        case ModelSource::Kind::Synthetic:
            return build_synthetic(src.seed, src.actions, src.secrets, src.usefuls, src.obs,
                                   src.sigma_lo, src.sigma_hi);
        case ModelSource::Kind::File: {
            std::ifstream in(src.path);
            if (!in) throw ConfigError("cannot open model file '" + src.path + "'");
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("model file '" + src.path + "' is not valid JSON: " +
                                  e.what());
            }
            return model_from_json(j);
        }
        case ModelSource::Kind::Csv: {
            std::ifstream in(src.path);
            if (!in) throw ConfigError("cannot open csv file '" + src.path + "'");
            return fit_from_csv(in, src.bins, src.smoothing);
        }
    }
    throw ConfigError("unreachable model source");
}

inline Prior make_prior(const ExperimentConfig& cfg, const ObservationModel& model) {
    if (!cfg.prior) return Prior::uniform(model.n_secret(), model.n_useful());
    const auto& rows = *cfg.prior;
    if (static_cast<int>(rows.size()) != model.n_secret())
        throw ConfigError("prior row count does not match the model");
    std::vector<double> joint;
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != model.n_useful())
            throw ConfigError("prior column count does not match the model");
        joint.insert(joint.end(), r.begin(), r.end());
    }
    return Prior(model.n_secret(), model.n_useful(), std::move(joint));
}

inline PrivacySpec make_privacy(const ExperimentConfig& cfg, double threshold) {
    if (cfg.mi_privacy) return MIBudget{threshold};
    return BeliefThreshold{threshold};
}

inline Environment make_environment(const ExperimentConfig& cfg, double threshold) {
    ObservationModel model = make_model(cfg.model);
    Prior prior = make_prior(cfg, model);
    return Environment(std::move(model), std::move(prior), cfg.costs,
                       make_privacy(cfg, threshold));
}

// ---------------------------------------------------------------------------
// Sweep outputs
// ---------------------------------------------------------------------------

struct PutRow {
    double threshold = 0.0;
    std::string policy; // "a2c" or "random"
    EvalMetrics metrics;
};

struct PutCurve {
    std::vector<PutRow> rows;
    std::vector<std::pair<double, TrainingLog>> logs; // per threshold
};

namespace detail {

inline std::string metadata_line(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "# config_hash=" << std::hex << cfg.hash() << std::dec << " seed=" << cfg.seed;
    return os.str();
}

inline void write_put_csv(const std::string& path, const PutCurve& curve,
                          const ExperimentConfig& cfg) {
    std::ofstream out(path);
    out << "threshold,policy,mean_tau,sd_tau,mean_conf_u,acc_u,acc_s,violation_rate,"
           "mean_mi\n";
    for (const auto& r : curve.rows) {
        const auto& m = r.metrics;
        out << fmt_double(r.threshold) << ',' << r.policy << ',' << fmt_double(m.mean_tau)
            << ',' << fmt_double(m.sd_tau) << ',' << fmt_double(m.mean_conf_u) << ','
            << fmt_double(m.acc_u) << ',' << fmt_double(m.acc_s) << ','
            << fmt_double(m.violation_rate) << ',' << fmt_double(m.mean_mi) << '\n';
    }
    out << metadata_line(cfg) << '\n';
}

inline void write_breakdown_csv(const std::string& path, const PutCurve& curve,
                                const ExperimentConfig& cfg) {
    std::ofstream out(path);
    const int n_u = curve.rows.empty()
                        ? 0
                        : static_cast<int>(curve.rows[0].metrics.acc_u_per_class.size());
    const int n_s = curve.rows.empty()
                        ? 0
                        : static_cast<int>(curve.rows[0].metrics.acc_s_per_class.size());
    out << "policy,constraint,tau,conf_u,acc_u";
    for (int u = 0; u < n_u; ++u) out << ",acc_u_" << u;
    out << ",acc_s";
    for (int s = 0; s < n_s; ++s) out << ",acc_s_" << s;
    out << '\n';
    for (const auto& r : curve.rows) {
        const auto& m = r.metrics;
        out << r.policy << ',' << fmt_double(r.threshold) << ',' << fmt_double(m.mean_tau)
            << ',' << fmt_double(m.mean_conf_u) << ',' << fmt_double(m.acc_u);
        for (double v : m.acc_u_per_class) out << ',' << fmt_double(v);
        out << ',' << fmt_double(m.acc_s);
        for (double v : m.acc_s_per_class) out << ',' << fmt_double(v);
        out << '\n';
    }
    out << metadata_line(cfg) << '\n';
}

inline void write_training_log_csv(const std::string& path, const PutCurve& curve,
                                   const ExperimentConfig& cfg) {
    std::ofstream out(path);
    out << "checkpoint,mean_cost,mean_tau,mean_conf_u,acc_u,acc_s,violation_rate,mean_mi\n";
    for (const auto& [threshold, log] : curve.logs) {
        out << "# threshold=" << fmt_double(threshold) << '\n';
        for (const auto& c : log.checkpoints)
            out << c.episode << ',' << fmt_double(c.mean_cost) << ','
                << fmt_double(c.mean_tau) << ',' << fmt_double(c.mean_conf_u) << ','
                << fmt_double(c.acc_u) << ',' << fmt_double(c.acc_s) << ','
                << fmt_double(c.violation_rate) << ',' << fmt_double(c.mean_mi) << '\n';
    }
    out << metadata_line(cfg) << '\n';
}

// Minimal hand-emitted SVG: two panels of polyline series over the threshold
// grid. Panel 1: stopping time (left axis) and stop-time confidence (right
// axis). Panel 2: adversary accuracies for the trained and random policies.
class SvgBuilder {
public:
    SvgBuilder() {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
               "font-family=\"sans-serif\" font-size=\"11\">\n";
        os_ << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
    }

    void text(double x, double y, const std::string& s, const std::string& extra = "") {
        os_ << "<text x=\"" << fmt_double(x) << "\" y=\"" << fmt_double(y) << "\" " << extra
            << ">" << s << "</text>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& color,
              double width = 1.0) {
        os_ << "<line x1=\"" << fmt_double(x1) << "\" y1=\"" << fmt_double(y1) << "\" x2=\""
            << fmt_double(x2) << "\" y2=\"" << fmt_double(y2) << "\" stroke=\"" << color
            << "\" stroke-width=\"" << fmt_double(width) << "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts,
                  const std::string& color) {
        os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
               "points=\"";
        for (const auto& [x, y] : pts) os_ << fmt_double(x) << ',' << fmt_double(y) << ' ';
        os_ << "\"/>\n";
    }

    std::string finish() {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    std::ostringstream os_;
};

inline void write_put_svg(const std::string& path, const PutCurve& curve,
                          bool mi_privacy) {
    std::vector<double> thresholds;
    std::vector<double> tau, conf, acc_u_a2c, acc_s_a2c, acc_u_rnd, acc_s_rnd;
    for (const auto& r : curve.rows) {
        if (r.policy == "a2c") {
            thresholds.push_back(r.threshold);
            tau.push_back(r.metrics.mean_tau);
            conf.push_back(r.metrics.mean_conf_u);
            acc_u_a2c.push_back(r.metrics.acc_u);
            acc_s_a2c.push_back(r.metrics.acc_s);
        } else {
            acc_u_rnd.push_back(r.metrics.acc_u);
            acc_s_rnd.push_back(r.metrics.acc_s);
        }
    }
    if (thresholds.empty()) return;
    const double t_lo = thresholds.front(), t_hi = thresholds.back();
    const double t_span = (t_hi > t_lo) ? (t_hi - t_lo) : 1.0;
    double tau_max = 1.0;
    for (double v : tau) tau_max = std::max(tau_max, v);

    SvgBuilder svg;
    const double y0 = 440, y1 = 40;
    auto ymap01 = [&](double v) { return y0 - (y0 - y1) * v; };
    auto ymap_tau = [&](double v) { return y0 - (y0 - y1) * (v / tau_max); };

    struct Panel {
        double x0, x1;
    };
    const Panel p1{60, 380}, p2{460, 780};
    auto xmap = [&](const Panel& p, double t) {
        return p.x0 + (p.x1 - p.x0) * (t - t_lo) / t_span;
    };
    auto series = [&](const Panel& p, const std::vector<double>& ys, auto ymap) {
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < thresholds.size(); ++i)
            pts.push_back({xmap(p, thresholds[i]), ymap(ys[i])});
        return pts;
    };

    const std::string x_label = mi_privacy ? "L_MI (nats)" : "L_B";
    for (const Panel& p : {p1, p2}) {
        svg.line(p.x0, y0, p.x1, y0, "black");
        svg.line(p.x0, y0, p.x0, y1, "black");
        for (double t : thresholds) {
            svg.line(xmap(p, t), y0, xmap(p, t), y0 + 4, "black");
            svg.text(xmap(p, t) - 10, y0 + 16, fmt_double(t));
        }
        svg.text((p.x0 + p.x1) / 2 - 20, y0 + 32, x_label);
    }
    // Panel 1: tau on the left axis, confidence on a [0,1] right axis.
    for (int i = 0; i <= 4; ++i) {
        const double v = tau_max * i / 4.0;
        svg.line(p1.x0 - 4, ymap_tau(v), p1.x0, ymap_tau(v), "black");
        svg.text(p1.x0 - 40, ymap_tau(v) + 4, fmt_double(v));
        const double c = i / 4.0;
        svg.line(p1.x1, ymap01(c), p1.x1 + 4, ymap01(c), "black");
        svg.text(p1.x1 + 8, ymap01(c) + 4, fmt_double(c));
        svg.line(p2.x0 - 4, ymap01(c), p2.x0, ymap01(c), "black");
        svg.text(p2.x0 - 32, ymap01(c) + 4, fmt_double(c));
    }
    svg.line(p1.x1, y0, p1.x1, y1, "black");
    svg.polyline(series(p1, tau, ymap_tau), "#1f77b4");
    svg.polyline(series(p1, conf, ymap01), "#d62728");
    svg.text(p1.x0, y1 - 12, "mean stopping time (blue, left) / stop confidence in u "
                             "(red, right)");
    // Panel 2: accuracies in [0,1].
    svg.polyline(series(p2, acc_u_a2c, ymap01), "#d62728");
    svg.polyline(series(p2, acc_s_a2c, ymap01), "#1f77b4");
    if (acc_u_rnd.size() == thresholds.size()) {
        svg.polyline(series(p2, acc_u_rnd, ymap01), "#ff9896");
        svg.polyline(series(p2, acc_s_rnd, ymap01), "#aec7e8");
    }
    svg.text(p2.x0, y1 - 24, "adversary accuracy: useful (red) vs secret (blue)");
    svg.text(p2.x0, y1 - 12, "trained policy solid-dark, random baseline light");

    std::ofstream out(path);
    out << svg.finish();
}

} // namespace detail

/// Sweeps the privacy threshold grid: trains a fresh policy per threshold
/// (seed = master seed XOR grid index), evaluates it and the uniform-random
/// baseline at matched settings, and writes put_curve.csv, put_curve.svg,
/// breakdown.csv and training_log.csv to the output directory. On training
/// divergence the partial results are written before the error propagates.
inline PutCurve run_put_sweep(const ExperimentConfig& cfg, std::ostream* progress = nullptr) {
    std::filesystem::create_directories(cfg.out_dir);
    PutCurve curve;
    auto write_all = [&]() {
        detail::write_put_csv(cfg.out_dir + "/put_curve.csv", curve, cfg);
        detail::write_breakdown_csv(cfg.out_dir + "/breakdown.csv", curve, cfg);
        detail::write_training_log_csv(cfg.out_dir + "/training_log.csv", curve, cfg);
        detail::write_put_svg(cfg.out_dir + "/put_curve.svg", curve, cfg.mi_privacy);
    };

    for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
        const double threshold = cfg.thresholds[i];
        Environment env = make_environment(cfg, threshold);
        if (progress) {
            for (const auto& w : env.warnings()) *progress << "warning: " << w << '\n';
            *progress << "threshold " << fmt_double(threshold) << ": training..."
                      << std::endl;
        }
        A2CConfig train_cfg = cfg.a2c;
        train_cfg.seed = cfg.seed ^ static_cast<std::uint64_t>(i);
        try {
            auto [policy, log] = train(env, train_cfg);
            curve.logs.emplace_back(threshold, std::move(log));
            const auto trained = evaluate(policy, env, cfg.eval_episodes,
                                          derive_seed(cfg.seed, 0xEE00 + i));
            curve.rows.push_back({threshold, "a2c", trained});
            const auto baseline = evaluate(RandomPolicy{}, env, cfg.eval_episodes,
                                           derive_seed(cfg.seed, 0xBB00 + i));
            curve.rows.push_back({threshold, "random", baseline});
            if (progress)
                *progress << "threshold " << fmt_double(threshold)
                          << ": tau=" << fmt_double(trained.mean_tau)
                          << " acc_u=" << fmt_double(trained.acc_u)
                          << " acc_s=" << fmt_double(trained.acc_s)
                          << " viol=" << fmt_double(trained.violation_rate) << std::endl;
        } catch (const NumericError&) {
            write_all();
            throw;
        }
    }
    write_all();
    return curve;
}

inline void write_training_log(const std::string& path, const TrainingLog& log,
                               const ExperimentConfig& cfg) {
    PutCurve tmp;
    tmp.logs.emplace_back(cfg.thresholds.empty() ? 0.0 : cfg.thresholds.front(), log);
    detail::write_training_log_csv(path, tmp, cfg);
}

inline void write_metrics_csv(const std::string& path, const PutCurve& curve,
                              const ExperimentConfig& cfg) {
    detail::write_put_csv(path, curve, cfg);
}

} // namespace aput
