// skipq command-line driver.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skipq/error.hpp"
#include "skipq/harness.hpp"
#include "skipq/serialize.hpp"

using namespace skipq;

namespace {

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) {
        ExperimentConfig config;
        config.validate();
        return config;
    }
    return config_from_json(read_text(path));
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
    } else {
        write_text(out, text);
    }
}

Policy load_any_policy(const std::string& path) {
    const std::string text = read_text(path);
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object() && j.contains("stages")) return policy_from_json(text);
    return policy_from_outcome_json(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skipq: offline linear-q* learning with skipping"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string env_path;
    std::string data_path;
    std::string policy_path;
    std::string csv_path;
    std::optional<std::size_t> n_override;
    std::optional<std::uint64_t> seed_override;

    auto* gen = app.add_subcommand("gen-env", "generate an exact linear MDP from the config's environment section");
    gen->add_option("--config", config_path, "experiment config (JSON)");
    gen->add_option("--out", out, "environment file (default: stdout)");

    auto* collect = app.add_subcommand("collect", "collect trajectories with the configured behaviour policy");
    collect->add_option("--config", config_path, "experiment config (JSON)");
    collect->add_option("--env", env_path, "environment file (default: generated from config)");
    collect->add_option("--n", n_override, "number of trajectories (default: data.n)");
    collect->add_option("--seed", seed_override, "data seed (default: data.seed)");
    collect->add_option("--out", out, "dataset file, one trajectory per line")->required();

    auto* learn = app.add_subcommand("learn", "run the learner on a dataset and write the outcome report");
    learn->add_option("--config", config_path, "experiment config (JSON)");
    learn->add_option("--env", env_path, "environment file (default: generated from config)");
    learn->add_option("--data", data_path, "dataset file")->required();
    learn->add_option("--out", out, "outcome report (default: stdout)");

    auto* eval = app.add_subcommand("eval", "exact suboptimality of a policy or outcome report");
    eval->add_option("--config", config_path, "experiment config (JSON)");
    eval->add_option("--env", env_path, "environment file (default: generated from config)");
    eval->add_option("--policy", policy_path, "policy file or outcome report")->required();
    eval->add_option("--out", out, "report (default: stdout)");

    auto* run_cmd = app.add_subcommand("run", "one end-to-end replicate at data.n");
    run_cmd->add_option("--config", config_path, "experiment config (JSON)");
    run_cmd->add_option("--out", out, "output directory (default: output.dir)");

    auto* sweep_cmd = app.add_subcommand("sweep", "n x replicate grid; writes results.csv, results.json and plots");
    sweep_cmd->add_option("--config", config_path, "experiment config (JSON)");
    sweep_cmd->add_option("--out", out, "output directory (default: output.dir)");

    bool all = false;
    std::vector<std::string> lemmas;
    std::uint64_t verify_seed = 20240601;
    auto* verify_cmd = app.add_subcommand("verify", "run lemma suites");
    verify_cmd->add_flag("--all", all, "run every suite");
    verify_cmd->add_option("--lemma", lemmas, "suite name (repeatable)");
    verify_cmd->add_option("--seed", verify_seed, "suite seed");
    verify_cmd->add_option("--out", out, "report file (default: stdout)");

    auto* plot = app.add_subcommand("plot", "regenerate summary.csv and gap_vs_n.svg from a results CSV");
    plot->add_option("--csv", csv_path, "results.csv")->required();
    plot->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const ExperimentConfig config = load_config(config_path);
        auto environment = [&]() -> Environment {
            if (!env_path.empty()) return env_from_json(read_text(env_path));
            const EnvironmentSpec& e = config.environment;
            return gen_linear_mdp(e.dim, e.horizon(), e.stage_sizes, e.num_actions, e.seed, e.reward_kind);
        };

        if (*gen) {
            emit(env_to_json(environment()), out);
            return 0;
        }
        if (*collect) {
            const Environment env = environment();
            const Policy behavior = behavior_policy(env.mdp, config.data);
            const Dataset data = collect_dataset(env.mdp, env.features, behavior, n_override.value_or(config.data.n),
                                                 seed_override.value_or(config.data.seed));
            save_dataset(data, out);
            return 0;
        }
        if (*learn) {
            const Instance instance = prepare_instance(environment(), config);
            Dataset data = load_dataset(data_path);
            std::optional<Calibration> cal;
            if (!config.learner.beta || !config.learner.eps_bar) cal = calibrate(instance, config, data.size());
            const LearnerConfig learner = learner_for(instance, config, cal ? &*cal : nullptr);
            const RunOutput result = run_on_dataset(instance, learner, std::move(data), config.data.seed, false);
            emit(outcome_to_json(result.outcome), out);
            if (result.outcome.fallback) std::cerr << "warning: every guess was rejected; used the least infeasible\n";
            return 0;
        }
        if (*eval) {
            const Environment env = environment();
            const Policy policy = load_any_policy(policy_path);
            const double v_star = optimal_policy(env.mdp).values.v[0](0);
            const double v_pi = evaluate_policy(env.mdp, policy).v[0](0);
            nlohmann::json j{{"v_star", v_star}, {"v_pi", v_pi}, {"gap", suboptimality(env.mdp, policy)}};
            emit(j.dump(1), out);
            return 0;
        }
        if (*run_cmd || *sweep_cmd) {
            const ExperimentResult result = *run_cmd ? run(config) : sweep(config);
            const std::string dir = out.empty() ? config.output.dir : out;
            write_result(result, config, dir);
            for (const auto& a : result.aggregates) {
                std::cout << "n=" << a.n << " median_gap=" << format_real(a.median) << " q1=" << format_real(a.q1)
                          << " q3=" << format_real(a.q3) << '\n';
            }
            return 0;
        }
        if (*verify_cmd) {
            if (all) lemmas = lemma_names();
            if (lemmas.empty()) {
                std::cerr << "verify: pass --all or at least one --lemma\n";
                return 2;
            }
            VerifyReport report;
            try {
                report = verify(lemmas, verify_seed);
            } catch (const ContractError& e) {
                std::cerr << "verify: " << e.what() << "\nknown suites:";
                for (const auto& n : lemma_names()) std::cerr << ' ' << n;
                std::cerr << '\n';
                return 2;
            }
            for (const auto& r : report.results) {
                std::cerr << (r.passed ? "PASS " : "FAIL ") << r.name << " worst=" << format_real(r.worst)
                          << " tol=" << format_real(r.tolerance) << '\n';
            }
            emit(report.to_json(), out);
            return report.all_passed() ? 0 : 1;
        }
        if (*plot) {
            std::string warning;
            if (!emit_plots(read_result_csv(read_text(csv_path)), out, &warning)) std::cerr << "warning: " << warning << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
