#include "skipq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"
#include "skipq/serialize.hpp"
#include "skipq/skipping.hpp"

namespace skipq {

using nlohmann::json;

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw ContractError(std::string("invalid config: ") + what);
    };
    need(environment.dim >= 1, "environment.d must be >= 1");
    need(environment.stage_sizes.size() >= 2, "environment.stage_sizes needs at least two stages");
    need(environment.stage_sizes.front() == 1 && environment.stage_sizes.back() == 1,
         "environment.stage_sizes must start and end with 1");
    need(std::all_of(environment.stage_sizes.begin(), environment.stage_sizes.end(), [](int s) { return s >= 1; }),
         "environment.stage_sizes entries must be >= 1");
    need(environment.num_actions >= 1, "environment.num_actions must be >= 1");
    need(data.n >= 1, "data.n must be >= 1");
    need(data.mix_weight >= 0.0 && data.mix_weight <= 1.0, "data.mix_weight must lie in [0, 1]");
    need(learner.lambda > 0.0, "learner.lambda must be positive");
    need(!learner.beta || *learner.beta > 0.0, "learner.beta must be positive");
    need(!learner.eps_bar || *learner.eps_bar > 0.0, "learner.eps_bar must be positive");
    need(!learner.theta_radius || *learner.theta_radius > 0.0, "learner.theta_radius must be positive");
    need(!learner.alpha || (*learner.alpha > 0.0 && *learner.alpha <= 1.0), "learner.alpha must lie in (0, 1]");
    need(learner.grid_per_stage >= 1, "learner.grid_per_stage must be >= 1");
    need(learner.combo_cap >= 1, "learner.combo_cap must be >= 1");
    need(learner.net_fraction > 0.0, "learner.net_fraction must be positive");
    need(guesses.count >= 1, "guesses.count must be >= 1");
    need(guesses.spread >= 0.0, "guesses.spread must be nonnegative");
    need(guesses.policy_sample >= 1, "guesses.policy_sample must be >= 1");
    need(calibration.replicates >= 1, "calibration.replicates must be >= 1");
    need(calibration.delta > 0.0 && calibration.delta < 1.0, "calibration.delta must lie in (0, 1)");
    need(!sweep.n_values.empty(), "sweep.n_values must be nonempty");
    need(std::all_of(sweep.n_values.begin(), sweep.n_values.end(), [](std::size_t n) { return n >= 1; }),
         "sweep.n_values entries must be >= 1");
    need(sweep.replicates >= 1, "sweep.replicates must be >= 1");
}

std::size_t worker_count() {
    if (const char* env = std::getenv("SKIPQ_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

Policy behavior_policy(const StagedMdp& mdp, const DataSpec& spec) {
    const Policy uniform = Policy::uniform(mdp);
    if (spec.behavior == BehaviorKind::uniform) return uniform;
    const Policy greedy = optimal_policy(mdp).policy;
    std::vector<Matrix> probs;
    for (int k = 0; k < mdp.num_stages(); ++k) {
        probs.push_back(spec.mix_weight * uniform.stage(k) + (1.0 - spec.mix_weight) * greedy.stage(k));
    }
    return Policy(std::move(probs));
}

double median_range_alpha(const Guess& guess, const FeatureMap& features) {
    std::vector<double> ranges;
    for (int k = 1; k < features.horizon(); ++k) {
        for (int s = 0; s < features.stage_size(k); ++s) ranges.push_back(range_g(guess, features, {k, s}));
    }
    if (ranges.empty()) return 1.0;
    const double alpha = std::min(1.0, 0.75 * std::sqrt(2.0 * features.dim()) * quantile(ranges, 0.5));
    return alpha > 0.0 ? alpha : 1.0;
}

Instance prepare_instance(const ExperimentConfig& config) {
    config.validate();
    const EnvironmentSpec& e = config.environment;
    return prepare_instance(
        gen_linear_mdp(e.dim, e.horizon(), e.stage_sizes, e.num_actions, e.seed, e.reward_kind), config);
}

Instance prepare_instance(Environment env, const ExperimentConfig& config) {
    config.validate();
    const StagedMdp& mdp = env.mdp;
    const FeatureMap& features = env.features;
    Policy behavior = behavior_policy(mdp, config.data);
    OptimalSolution optimal = optimal_policy(mdp);
    ConcReport conc = concentrability(mdp, behavior);

    const auto policies = policy_sample(mdp, config.guesses.policy_sample, config.guesses.seed);
    const PsiFitter fitter(features);
    std::vector<PolicyParams> params;
    params.reserve(policies.size());
    double eta_hat = 0.0;
    for (const auto& pi : policies) {
        params.push_back(fitter.fit(evaluate_policy(mdp, pi).q));
        eta_hat = std::max(eta_hat, params.back().residual);
    }
    TrueGuess true_guess = build_true_guess(features, params);
    const double alpha = config.learner.alpha ? *config.learner.alpha : median_range_alpha(true_guess.guess, features);
    std::vector<Guess> guesses =
        guess_grid(true_guess.guess, config.guesses.spread, config.guesses.count, config.guesses.seed);

    const SkipParams skip(alpha, features.dim());
    const Policy pi_star_g = skip_optimal_policy(mdp, features, true_guess.guess, skip, behavior);
    std::vector<Vector> psi_star = fitter.fit(evaluate_policy(mdp, pi_star_g).q).theta;

    LearnerConfig learner;
    learner.lambda = config.learner.lambda;
    learner.alpha = alpha;
    const double l2 = true_guess.l2_bound;
    const double h = mdp.horizon();
    learner.theta_radius = config.learner.theta_radius
                               ? *config.learner.theta_radius
                               : std::max(l2, 1.0) * (8.0 * h * h * d_zero(features.dim()) / alpha + 1.0);
    learner.grid_per_stage = config.learner.grid_per_stage;
    learner.combo_cap = config.learner.combo_cap;
    learner.net_fraction = config.learner.net_fraction;
    learner.seed = config.learner.seed;

    return Instance{std::move(env),        std::move(behavior), std::move(optimal),  std::move(conc),
                    std::move(true_guess), std::move(guesses),  alpha,               l2,
                    eta_hat,               std::move(psi_star), learner};
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Calibration calibrate(const Instance& instance, const ExperimentConfig& config, std::size_t n) {
    const std::size_t reps = config.calibration.replicates;
    const StagedMdp& mdp = instance.env.mdp;
    const FeatureMap& features = instance.env.features;
    Calibration cal;
    cal.n = n;
    cal.membership.assign(reps, 0.0);
    cal.tightness.assign(reps, 0.0);
    auto dataset = [&](std::size_t r) {
        return collect_dataset(mdp, features, instance.behavior, n, derive_seed(config.calibration.seed, n, r));
    };
    parallel_for(reps, worker_count(), [&](std::size_t r) {
        const Dataset data = dataset(r);
        const auto covs = stage_covariances(data, mdp.horizon(), instance.learner.lambda);
        const SkipRegression regression(data, features, instance.guesses.front(), instance.alpha, covs);
        cal.membership[r] = membership(regression, instance.psi_star).max_distance;
    });
    cal.beta = std::max(quantile(cal.membership, 1.0 - config.calibration.delta), 1e-12);

    LearnerConfig learner = instance.learner;
    learner.beta = cal.beta;
    learner.eps_bar = 1.0;
    parallel_for(reps, worker_count(), [&](std::size_t r) {
        const Dataset data = dataset(r);
        const auto covs = stage_covariances(data, mdp.horizon(), learner.lambda);
        const SkipRegression regression(data, features, instance.guesses.front(), instance.alpha, covs);
        const ConfidenceSets sets = build_confidence_sets(regression, features, learner);
        double worst = static_cast<double>(mdp.horizon());
        if (sets.feasible_sets()) {
            worst = 0.0;
            for (int k = 0; k < mdp.horizon(); ++k) {
                worst = std::max(worst, tightness(data, k, sets.stages[k].members, features));
            }
        }
        cal.tightness[r] = worst;
    });
    cal.eps_bar = std::max(2.0 * quantile(cal.tightness, 1.0 - config.calibration.delta), 1e-12);
    return cal;
}

LearnerConfig learner_for(const Instance& instance, const ExperimentConfig& config, const Calibration* calibration) {
    LearnerConfig learner = instance.learner;
    if (config.learner.beta) {
        learner.beta = *config.learner.beta;
    } else if (calibration != nullptr) {
        learner.beta = calibration->beta;
    } else {
        throw ContractError("beta is neither configured nor calibrated");
    }
    if (config.learner.eps_bar) {
        learner.eps_bar = *config.learner.eps_bar;
    } else if (calibration != nullptr) {
        learner.eps_bar = calibration->eps_bar;
    } else {
        throw ContractError("eps_bar is neither configured nor calibrated");
    }
    return learner;
}

RunOutput run_on_dataset(const Instance& instance, const LearnerConfig& learner, Dataset data, std::uint64_t seed,
                         bool record_wall_time) {
    const auto start = std::chrono::steady_clock::now();
    const StagedMdp& mdp = instance.env.mdp;
    const FeatureMap& features = instance.env.features;
    RunOutput out;
    out.outcome = solve(data, instance.guesses, learner, features);
    SolveOutcome& outcome = out.outcome;
    if (outcome.all_rejected) apply_fallback(outcome, features);

    ReplicateResult& row = out.row;
    row.n = data.size();
    row.seed = seed;
    row.fallback = outcome.fallback;
    row.chosen_guess = outcome.chosen_guess;
    row.value = outcome.value;
    for (const auto& g : outcome.guesses) row.feasible_count += g.feasible ? 1 : 0;
    if (outcome.chosen_guess >= 0) row.tightness_max = outcome.guesses[outcome.chosen_guess].tightness_max;
    const Policy policy = outcome.policy ? *outcome.policy : instance.behavior;
    row.gap = suboptimality(mdp, policy);

    row.true_guess_feasible = outcome.guesses.front().feasible;
    const auto covs = stage_covariances(data, mdp.horizon(), learner.lambda);
    const SkipRegression regression(data, features, instance.guesses.front(), instance.alpha, covs);
    const MembershipReport m = membership(regression, instance.psi_star);
    row.membership_max = m.max_distance;
    row.membership_pass = m.passes(learner.beta, learner.theta_radius);

    if (record_wall_time) {
        row.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    out.data = std::move(data);
    return out;
}

RunOutput run_replicate(const Instance& instance, const LearnerConfig& learner, std::size_t n, std::uint64_t seed,
                        bool record_wall_time) {
    Dataset data = collect_dataset(instance.env.mdp, instance.env.features, instance.behavior, n, seed);
    return run_on_dataset(instance, learner, std::move(data), seed, record_wall_time);
}

std::vector<Aggregate> aggregate(const std::vector<ReplicateResult>& rows) {
    std::vector<std::size_t> order;
    for (const auto& r : rows) {
        if (std::find(order.begin(), order.end(), r.n) == order.end()) order.push_back(r.n);
    }
    std::vector<Aggregate> out;
    for (std::size_t n : order) {
        std::vector<double> gaps;
        for (const auto& r : rows) {
            if (r.n == n) gaps.push_back(r.gap);
        }
        out.push_back({n, quantile(gaps, 0.5), quantile(gaps, 0.25), quantile(gaps, 0.75)});
    }
    return out;
}

namespace {

void fill_summary(ExperimentResult& result, const Instance& instance) {
    result.v_star = instance.optimal.values.v[0](0);
    result.c_conc = instance.conc.c_conc;
    result.alpha = instance.alpha;
    result.l2 = instance.l2;
    result.eta_hat = instance.eta_hat;
    result.aggregates = aggregate(result.rows);
}

}  // namespace

ExperimentResult run(const ExperimentConfig& config) {
    const Instance instance = prepare_instance(config);
    ExperimentResult result;
    std::optional<Calibration> cal;
    if (!config.learner.beta || !config.learner.eps_bar) {
        cal = calibrate(instance, config, config.data.n);
        result.calibrations.push_back(*cal);
    }
    const LearnerConfig learner = learner_for(instance, config, cal ? &*cal : nullptr);
    result.rows.push_back(
        run_replicate(instance, learner, config.data.n, config.data.seed, config.output.record_wall_time).row);
    fill_summary(result, instance);
    return result;
}

ExperimentResult sweep(const ExperimentConfig& config) { return sweep(prepare_instance(config), config); }

ExperimentResult sweep(const Instance& instance, const ExperimentConfig& config) {
    ExperimentResult result;
    const auto& ns = config.sweep.n_values;
    std::vector<LearnerConfig> learners;
    for (std::size_t n : ns) {
        if (!config.learner.beta || !config.learner.eps_bar) {
            result.calibrations.push_back(calibrate(instance, config, n));
            learners.push_back(learner_for(instance, config, &result.calibrations.back()));
        } else {
            learners.push_back(learner_for(instance, config, nullptr));
        }
    }
    const std::size_t reps = config.sweep.replicates;
    result.rows.resize(ns.size() * reps);
    parallel_for(result.rows.size(), worker_count(), [&](std::size_t i) {
        const std::size_t ni = i / reps;
        const std::size_t r = i % reps;
        const std::uint64_t seed = derive_seed(config.sweep.seed, 0x5EED, r);
        result.rows[i] = run_replicate(instance, learners[ni], ns[ni], seed, config.output.record_wall_time).row;
    });
    fill_summary(result, instance);
    return result;
}

std::string result_csv(const ExperimentResult& result) {
    std::string out = "n,seed,gap,chosen_guess,feasible_count,tightness_max,wall_ms\n";
    for (const auto& r : result.rows) {
        out += std::to_string(r.n) + "," + std::to_string(r.seed) + "," + format_real(r.gap) + "," +
               std::to_string(r.chosen_guess) + "," + std::to_string(r.feasible_count) + "," +
               format_real(r.tightness_max) + "," + format_real(r.wall_ms) + "\n";
    }
    return out;
}

std::vector<ReplicateResult> read_result_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    std::vector<ReplicateResult> rows;
    while (std::getline(in, line)) {
        ++number;
        if (number == 1) {
            if (line != "n,seed,gap,chosen_guess,feasible_count,tightness_max,wall_ms") {
                throw ParseError("unexpected CSV header", number);
            }
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw ParseError("expected 7 columns", number);
        try {
            ReplicateResult r;
            r.n = std::stoull(cells[0]);
            r.seed = std::stoull(cells[1]);
            r.gap = std::stod(cells[2]);
            r.chosen_guess = std::stoi(cells[3]);
            r.feasible_count = std::stoi(cells[4]);
            r.tightness_max = std::stod(cells[5]);
            r.wall_ms = std::stod(cells[6]);
            rows.push_back(r);
        } catch (const std::exception&) {
            throw ParseError("malformed number", number);
        }
    }
    return rows;
}

std::string result_sidecar_json(const ExperimentResult& result, const ExperimentConfig& config) {
    json j;
    j["config"] = json::parse(config_to_json(config));
    j["instance"] = {{"v_star", result.v_star},
                     {"c_conc", std::isfinite(result.c_conc) ? json(result.c_conc) : json("inf")},
                     {"alpha", result.alpha},
                     {"l2", result.l2},
                     {"eta_hat", result.eta_hat}};
    json cals = json::array();
    for (const auto& c : result.calibrations) {
        cals.push_back({{"n", c.n}, {"beta", c.beta}, {"eps_bar", c.eps_bar}});
    }
    j["calibrations"] = cals;
    json aggs = json::array();
    for (const auto& a : result.aggregates) {
        aggs.push_back({{"n", a.n}, {"median", a.median}, {"q1", a.q1}, {"q3", a.q3}});
    }
    j["aggregates"] = aggs;
    return j.dump(1);
}

void write_result(const ExperimentResult& result, const ExperimentConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "results.csv", result_csv(result));
    write_text(dir / "results.json", result_sidecar_json(result, config));
    emit_plots(result.rows, dir);
}

bool VerifyReport::all_passed() const {
    return std::all_of(results.begin(), results.end(), [](const LemmaResult& r) { return r.passed; });
}

std::string VerifyReport::to_json() const {
    json suites = json::array();
    for (const auto& r : results) {
        suites.push_back({{"name", r.name},
                          {"description", r.description},
                          {"worst", r.worst},
                          {"tolerance", r.tolerance},
                          {"passed", r.passed},
                          {"instances", r.instances}});
    }
    return json{{"all_passed", all_passed()}, {"suites", suites}}.dump(1);
}

Environment random_small_env(std::uint64_t seed, std::uint64_t max_policies) {
    Rng rng(derive_seed(seed, 0x5A11));
    for (;;) {
        const int dim = 1 + static_cast<int>(rng.next_u64() % 3);
        const int horizon = 2 + static_cast<int>(rng.next_u64() % 3);
        const int actions = 1 + static_cast<int>(rng.next_u64() % 3);
        std::vector<int> sizes{1};
        for (int k = 1; k < horizon; ++k) sizes.push_back(1 + static_cast<int>(rng.next_u64() % 5));
        sizes.push_back(1);
        if (max_policies > 0) {
            double count = 1.0;
            for (int k = 0; k < horizon; ++k) count *= std::pow(static_cast<double>(actions), sizes[k]);
            if (count > static_cast<double>(max_policies)) continue;
        }
        return gen_linear_mdp(dim, horizon, sizes, actions, rng.next_u64());
    }
}

const std::vector<std::string>& lemma_names() {
    static const std::vector<std::string> names{
        "lsq-decomposition", "elliptical-potential", "projection-bound", "perf-diff",       "occupancy",
        "anchor-ridge",      "range-bound",          "skip-realizability", "concentrability"};
    return names;
}

namespace {

LemmaResult slack_suite(const std::string& name, const std::string& description, const SlackReport& report) {
    LemmaResult r{name, description, report.worst_slack, -1e-9, report.violations == 0, static_cast<std::size_t>(report.draws)};
    return r;
}

std::vector<Vector> random_tail(Rng& rng, const FeatureMap& features) {
    std::vector<Vector> theta;
    const double h = features.horizon();
    for (int k = 0; k <= features.horizon(); ++k) {
        Vector t(features.dim());
        for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = rng.normal() * h;
        if (k == features.horizon()) t.setZero();
        theta.push_back(std::move(t));
    }
    return theta;
}

}  // namespace

LemmaResult run_lemma(const std::string& name, std::uint64_t seed) {
    if (name == "lsq-decomposition") {
        return slack_suite(name, "ridge error <= sqrt(lambda)|theta| + |Delta|_inf sqrt(n) + |iota|_{V^-1}",
                           check_lsq_decomposition(seed));
    }
    if (name == "elliptical-potential") {
        return slack_suite(name, "sum min(1, |a_t|^2_{V_{t-1}^-1}) <= 2d log((d lambda + n L^2)/(d lambda))",
                           check_elliptical_potential(seed));
    }
    if (name == "projection-bound") {
        return slack_suite(name, "|sum a_i b_i|^2_{(sum a a' + lambda I)^-1} <= n c^2", check_projection_bound(seed));
    }
    if (name == "perf-diff" || name == "occupancy") {
        double worst = 0.0;
        const std::size_t count = 50;
        for (std::size_t i = 0; i < count; ++i) {
            const Environment env = random_small_env(derive_seed(seed, 0xFD, i));
            const auto pols = random_policies(env.mdp, 2, derive_seed(seed, 0xFE, i));
            if (name == "perf-diff") {
                worst = std::max(worst, check_perf_diff(env.mdp, pols[0], pols[1]));
            } else {
                const OccupancyMeasure occ = occupancy(env.mdp, pols[0]);
                for (const auto& nu : occ.nu) worst = std::max(worst, std::abs(nu.sum() - 1.0));
            }
        }
        const std::string description = name == "perf-diff"
                                            ? "performance difference identity on random (mdp, pi, pi') triples"
                                            : "occupancy measures sum to one at every stage";
        return {name, description, worst, 1e-10, worst <= 1e-10, count};
    }
    if (name == "anchor-ridge") {
        double worst = 0.0;
        const std::size_t count = 10;
        for (std::size_t i = 0; i < count; ++i) {
            const Environment env = random_small_env(derive_seed(seed, 0xA1, i));
            const auto policies = policy_sample(env.mdp, 50, derive_seed(seed, 0xA2, i));
            const TrueGuess tg = build_true_guess(env.mdp, env.features, policies);
            LearnerConfig cfg;
            cfg.alpha = median_range_alpha(tg.guess, env.features);
            const Dataset data =
                collect_dataset(env.mdp, env.features, Policy::uniform(env.mdp), 200, derive_seed(seed, 0xA3, i));
            const auto covs = stage_covariances(data, env.mdp.horizon(), cfg.lambda);
            const SkipRegression regression(data, env.features, tg.guess, cfg.alpha, covs);
            Rng rng(derive_seed(seed, 0xA4, i));
            const auto tail = random_tail(rng, env.features);
            for (int k = 0; k < env.mdp.horizon(); ++k) {
                const std::span<const Vector> t(tail.data() + k + 1, tail.size() - k - 1);
                const Vector a = regression.anchor(k, t);
                const Vector b = lstsq_anchor(data, env.features, k, tg.guess, t, cfg);
                worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
            }
        }
        return {name, "aggregated anchor equals the direct ridge solution", worst, 1e-10, worst <= 1e-10, count};
    }
    if (name == "range-bound") {
        double worst = std::numeric_limits<double>::infinity();
        const std::size_t count = 20;
        for (std::size_t i = 0; i < count; ++i) {
            const Environment env = random_small_env(derive_seed(seed, 0xB1, i));
            const auto policies = policy_sample(env.mdp, 200, derive_seed(seed, 0xB2, i));
            const PsiFitter fitter(env.features);
            std::vector<PolicyParams> params;
            for (const auto& pi : policies) params.push_back(fitter.fit(evaluate_policy(env.mdp, pi).q));
            const TrueGuess tg = build_true_guess(env.features, params);
            worst = std::min(worst, check_range_bound(env.features, tg.guess, params));
        }
        return {name, "range(s) <= sqrt(2d) range^G(s) over the sampled policies", worst, -1e-6, worst >= -1e-6,
                count};
    }
    if (name == "skip-realizability") {
        double worst = 0.0;
        const std::size_t count = 20;
        for (std::size_t i = 0; i < count; ++i) {
            const Environment env = random_small_env(derive_seed(seed, 0xC1, i));
            const auto policies = policy_sample(env.mdp, 200, derive_seed(seed, 0xC2, i));
            const TrueGuess tg = build_true_guess(env.mdp, env.features, policies);
            const SkipParams params(median_range_alpha(tg.guess, env.features), env.features.dim());
            const Policy behavior = Policy::uniform(env.mdp);
            Rng rng(derive_seed(seed, 0xC3, i));
            for (int j = 0; j < 5; ++j) {
                const auto theta = random_tail(rng, env.features);
                std::vector<Vector> f;
                for (int t = 0; t <= env.mdp.horizon(); ++t) f.push_back(clipped_v_stage(theta[t], env.features, t));
                for (int k = 0; k < env.mdp.horizon(); ++k) {
                    const auto rep =
                        check_skip_realizability(env.mdp, env.features, tg.guess, f, k, params, behavior);
                    worst = std::max(worst, rep.residual);
                }
            }
        }
        return {name, "exact skip targets under the true guess are linear (sup residual)", worst, 1e-6,
                worst <= 1e-6, count};
    }
    if (name == "concentrability") {
        double worst = 0.0;
        const std::size_t count = 10;
        for (std::size_t i = 0; i < count; ++i) {
            const Environment env = random_small_env(derive_seed(seed, 0xD1, i), 4096);
            const Policy behavior = random_policies(env.mdp, 1, derive_seed(seed, 0xD2, i)).front();
            const ConcReport dp = concentrability(env.mdp, behavior);
            const ConcReport brute = concentrability_brute_force(env.mdp, behavior, 4096);
            const double diff = dp.infinite || brute.infinite ? (dp.infinite == brute.infinite ? 0.0 : 1.0)
                                                              : std::abs(dp.c_conc - brute.c_conc);
            worst = std::max(worst, diff);
        }
        return {name, "reachability DP equals deterministic-policy enumeration", worst, 1e-10, worst <= 1e-10, count};
    }
    throw ContractError("unknown lemma '" + name + "'");
}

VerifyReport verify(const std::vector<std::string>& names, std::uint64_t seed) {
    for (const auto& n : names) {
        if (std::find(lemma_names().begin(), lemma_names().end(), n) == lemma_names().end()) {
            throw ContractError("unknown lemma '" + n + "'");
        }
    }
    VerifyReport report;
    for (const auto& n : names) report.results.push_back(run_lemma(n, seed));
    return report;
}

}  // namespace skipq
