#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aput/harness.hpp"

namespace aput {

namespace detail {

inline ExperimentConfig cli_config(const std::string& config_path,
                                   std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg =
        config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(config_path);
    if (seed_override) {
        cfg.seed = *seed_override;
        cfg.a2c.seed = *seed_override;
    }
    return cfg;
}

inline void print_identifiability(std::ostream& os, const IdentifiabilityReport& rep) {
    os << "identifiable: " << (rep.ok ? "yes" : "no") << '\n';
    for (const auto& w : rep.witnesses) {
        os << "  pair (u=" << w.u0 << ", u=" << w.u1 << "): ";
        if (w.action)
            os << "witness action " << *w.action << '\n';
        else
            os << "no distinguishing action\n";
    }
}

inline void print_metrics(std::ostream& os, const std::string& name, const EvalMetrics& m) {
    os << name << ": episodes=" << m.episodes << " mean_tau=" << fmt_double(m.mean_tau)
       << " mean_conf_u=" << fmt_double(m.mean_conf_u) << " acc_u=" << fmt_double(m.acc_u)
       << " acc_s=" << fmt_double(m.acc_s)
       << " violation_rate=" << fmt_double(m.violation_rate)
       << " mean_mi=" << fmt_double(m.mean_mi)
       << " mean_cost=" << fmt_double(m.mean_cost) << '\n';
}

} // namespace detail

/// Command-line front end. Returns the process exit code: 0 on success,
/// 2 on configuration/usage errors, 3 on numeric failures.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"active privacy-utility trade-off toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, csv_path, policy_spec, trace_path, log_path;
    std::string model_path;
    std::optional<std::uint64_t> seed;
    int gen_actions = 3, gen_secrets = 3, gen_usefuls = 3, gen_obs = 50;
    double gen_sigma_lo = 0.5, gen_sigma_hi = 1.5;
    int fit_bins = 10;
    double fit_smoothing = 1.0;
    int horizon = 3;
    long episodes_override = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--out", out_path, "output path");
    };

    auto* gen = app.add_subcommand("gen-model", "generate a synthetic observation model");
    add_common(gen);
    gen->add_option("--actions", gen_actions, "number of release mechanisms");
    gen->add_option("--secrets", gen_secrets, "secret alphabet size");
    gen->add_option("--usefuls", gen_usefuls, "useful alphabet size");
    gen->add_option("--obs", gen_obs, "observation alphabet size");
    gen->add_option("--sigma-lo", gen_sigma_lo, "lower sigma bound");
    gen->add_option("--sigma-hi", gen_sigma_hi, "upper sigma bound");

    auto* fit = app.add_subcommand("fit-model", "fit a model from labeled CSV readings");
    add_common(fit);
    fit->add_option("--csv", csv_path, "input CSV (action,reading,secret,useful)")
        ->required();
    fit->add_option("--bins", fit_bins, "observation bins per action");
    fit->add_option("--smoothing", fit_smoothing, "additive smoothing");

    auto* check = app.add_subcommand("check-model", "validate a model file");
    add_common(check);
    check->add_option("model", model_path, "model JSON file")->required();

    auto* solve = app.add_subcommand("solve-dp", "value iteration on the belief grid");
    add_common(solve);

    auto* train_cmd = app.add_subcommand("train", "train an A2C policy");
    add_common(train_cmd);
    train_cmd->add_option("--log", log_path, "write the training log CSV here");

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a policy");
    add_common(eval_cmd);
    eval_cmd->add_option("--policy", policy_spec,
                         "policy checkpoint, 'random', or 'dp:<table.json>'")
        ->required();
    eval_cmd->add_option("--episodes", episodes_override, "evaluation episode count");
    eval_cmd->add_option("--trace", trace_path, "write a per-step trace CSV here");

    auto* sweep = app.add_subcommand("put-sweep", "privacy-utility trade-off sweep");
    add_common(sweep);

    auto* oracle = app.add_subcommand("mi-oracle",
                                      "compare the two exact trajectory-leakage routes");
    add_common(oracle);
    oracle->add_option("--model", model_path, "model JSON file (defaults to config model)");
    oracle->add_option("--horizon", horizon, "trajectory length");

    try {
        std::vector<const char*> argv;
        argv.push_back("aput");
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return 0;
        }
        err << e.what() << '\n' << "run with --help for usage\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            if (config_path.empty()) {
                cfg.model.kind = ModelSource::Kind::Synthetic;
                cfg.model.seed = seed.value_or(cfg.model.seed);
                cfg.model.actions = gen_actions;
                cfg.model.secrets = gen_secrets;
                cfg.model.usefuls = gen_usefuls;
                cfg.model.obs = gen_obs;
                cfg.model.sigma_lo = gen_sigma_lo;
                cfg.model.sigma_hi = gen_sigma_hi;
            } else if (seed) {
                cfg.model.seed = *seed;
            }
            const auto model = make_model(cfg.model);
            if (out_path.empty()) throw ConfigError("gen-model needs --out");
            std::ofstream f(out_path);
            if (!f) throw ConfigError("cannot write '" + out_path + "'");
            f << model_to_json(model).dump(2) << '\n';
            out << "wrote model (" << model.n_actions() << " actions, " << model.n_secret()
                << "x" << model.n_useful() << " hypotheses, " << model.n_obs()
                << " observations) to " << out_path << '\n';
            return 0;
        }

        if (fit->parsed()) {
            std::ifstream in(csv_path);
            if (!in) throw ConfigError("cannot open csv file '" + csv_path + "'");
            const auto model = fit_from_csv(in, fit_bins, fit_smoothing);
            if (out_path.empty()) throw ConfigError("fit-model needs --out");
            std::ofstream f(out_path);
            if (!f) throw ConfigError("cannot write '" + out_path + "'");
            f << model_to_json(model).dump(2) << '\n';
            out << "fitted model (" << model.n_actions() << " actions, " << model.n_secret()
                << "x" << model.n_useful() << " hypotheses, " << model.n_obs()
                << " bins) to " << out_path << '\n';
            return 0;
        }

        if (check->parsed()) {
            std::ifstream in(model_path);
            if (!in) throw ConfigError("cannot open model file '" + model_path + "'");
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("invalid model JSON: ") + e.what());
            }
            const auto model = model_from_json(j);
            const auto rep = check_identifiability(model);
            detail::print_identifiability(out, rep);
            return rep.ok ? 0 : 3;
        }

        if (solve->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            const auto model = make_model(cfg.model);
            const auto grid =
                BeliefGrid::build(model.n_secret(), model.n_useful(), cfg.dp.resolution);
            const auto privacy = make_privacy(cfg, cfg.thresholds.front());
            const auto table =
                value_iteration(model, grid, cfg.costs, privacy, cfg.dp.tol, cfg.dp.max_iter);
            const auto cert = verify_value_certificate(table, model, grid, cfg.costs, privacy);
            out << "converged in " << table.iterations
                << " iterations, residual=" << fmt_double(table.final_residual) << '\n';
            out << "certificate: max_violation=" << fmt_double(cert.max_violation)
                << " projection_slack=" << fmt_double(cert.projection_slack)
                << " lower_bound_factor=" << fmt_double(cert.lower_bound_factor) << '\n';
            const int uniform_idx = grid.project(
                Belief::uniform(model.n_secret(), model.n_useful()));
            out << "value at uniform belief: "
                << fmt_double(table.values[table.state_index(uniform_idx,
                                                             table.budget_levels - 1)])
                << '\n';
            if (!out_path.empty()) {
                std::ofstream f(out_path);
                if (!f) throw ConfigError("cannot write '" + out_path + "'");
                f << value_table_to_json(table).dump() << '\n';
                out << "wrote value table to " << out_path << '\n';
            }
            return 0;
        }

        if (train_cmd->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            Environment env = make_environment(cfg, cfg.thresholds.front());
            for (const auto& w : env.warnings()) err << "warning: " << w << '\n';
            auto [policy, log] = train(env, cfg.a2c);
            if (out_path.empty()) throw ConfigError("train needs --out");
            std::ofstream f(out_path);
            if (!f) throw ConfigError("cannot write '" + out_path + "'");
            f << policy_to_json(policy).dump() << '\n';
            out << "trained " << cfg.a2c.episodes << " episodes; wrote policy to "
                << out_path << '\n';
            if (!log_path.empty()) write_training_log(log_path, log, cfg);
            return 0;
        }

        if (eval_cmd->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            Environment env = make_environment(cfg, cfg.thresholds.front());
            for (const auto& w : env.warnings()) err << "warning: " << w << '\n';
            std::unique_ptr<Policy> policy;
            if (policy_spec == "random") {
                policy = std::make_unique<RandomPolicy>();
            } else if (policy_spec.rfind("dp:", 0) == 0) {
                std::ifstream in(policy_spec.substr(3));
                if (!in)
                    throw ConfigError("cannot open value table '" + policy_spec.substr(3) +
                                      "'");
                nlohmann::json j;
                in >> j;
                auto table = value_table_from_json(j);
                auto grid = BeliefGrid::build(env.model().n_secret(),
                                              env.model().n_useful(), table.resolution);
                policy = std::make_unique<GreedyGridPolicy>(std::move(grid), std::move(table));
            } else {
                std::ifstream in(policy_spec);
                if (!in) throw ConfigError("cannot open policy file '" + policy_spec + "'");
                nlohmann::json j;
                try {
                    in >> j;
                } catch (const nlohmann::json::exception& e) {
                    throw ConfigError(std::string("invalid policy JSON: ") + e.what());
                }
                policy = std::make_unique<A2CPolicy>(policy_from_json(j));
            }
            const long n = episodes_override > 0 ? episodes_override : cfg.eval_episodes;
            std::ofstream trace;
            if (!trace_path.empty()) {
                trace.open(trace_path);
                if (!trace) throw ConfigError("cannot write '" + trace_path + "'");
            }
            const auto metrics = evaluate(*policy, env, n, cfg.seed,
                                          trace_path.empty() ? nullptr : &trace);
            detail::print_metrics(out, policy_spec, metrics);
            if (!out_path.empty()) {
                PutCurve c;
                c.rows.push_back({cfg.thresholds.front(), policy_spec, metrics});
                write_metrics_csv(out_path, c, cfg);
            }
            return 0;
        }

        if (sweep->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            if (!out_path.empty()) cfg.out_dir = out_path;
            const auto curve = run_put_sweep(cfg, &out);
            out << "wrote put_curve.csv, put_curve.svg, breakdown.csv, training_log.csv to "
                << cfg.out_dir << '\n';
            return 0;
        }

        if (oracle->parsed()) {
            ExperimentConfig cfg = detail::cli_config(config_path, seed);
            ObservationModel model = model_path.empty() ? make_model(cfg.model) : [&] {
                std::ifstream in(model_path);
                if (!in) throw ConfigError("cannot open model file '" + model_path + "'");
                nlohmann::json j;
                in >> j;
                return model_from_json(j);
            }();
            const Prior prior = make_prior(cfg, model);
            const int n_a = model.n_actions();
            BeliefPolicy uniform_policy = [n_a](const Belief&) {
                return std::vector<double>(n_a, 1.0 / n_a);
            };
            const double direct = brute_force_trajectory_mi(model, prior, uniform_policy,
                                                            horizon);
            const double chained = chain_rule_trajectory_mi(model, prior, uniform_policy,
                                                            horizon);
            out << "joint-table trajectory leakage: " << fmt_double(direct) << " nats\n";
            out << "chain-rule accumulation:        " << fmt_double(chained) << " nats\n";
            out << "absolute difference:            " << fmt_double(std::abs(direct - chained))
                << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const IngestError& e) {
        err << "ingest error: " << e.what() << '\n';
        return 2;
    } catch (const SizeError& e) {
        err << "size error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return 3;
    }
    return 2; // no subcommand matched
}

} // namespace aput
