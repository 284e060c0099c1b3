#pragma once

// Experiment orchestration: instance preparation, calibration, replicated
// runs and n-sweeps, lemma suites, and result files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skipq/config.hpp"
#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/learner.hpp"
#include "skipq/oracles.hpp"

namespace skipq {

/// Worker count from SKIPQ_WORKERS, else the hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(0..count-1) on up to `workers` threads. The first exception is rethrown.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

Policy behavior_policy(const StagedMdp& mdp, const DataSpec& spec);

/// min(1, 0.75 sqrt(2d) median range^G) over interior states; 1 when that is 0.
double median_range_alpha(const Guess& guess, const FeatureMap& features);

struct Instance {
    Environment env;
    Policy behavior;
    OptimalSolution optimal;
    ConcReport conc;
    TrueGuess true_guess;
    std::vector<Guess> guesses;    // guesses[0] is the true guess
    double alpha = 0.0;
    double l2 = 0.0;               // largest fitted parameter norm over the policy sample
    double eta_hat = 0.0;          // largest fit residual over the policy sample
    std::vector<Vector> psi_star;  // parameters of the skip-optimal policy of the true guess
    LearnerConfig learner;         // beta and eps_bar still to be set
};

Instance prepare_instance(const ExperimentConfig& config);
Instance prepare_instance(Environment env, const ExperimentConfig& config);

struct Calibration {
    std::size_t n = 0;
    double beta = 0.0;
    double eps_bar = 0.0;
    std::vector<double> membership;  // per replicate, largest stage distance
    std::vector<double> tightness;   // per replicate, largest true-guess tightness at the calibrated beta
};

/// beta is the (1 - delta)-quantile of the membership distance of the
/// skip-optimal parameters over held-out datasets; eps_bar is twice the same
/// quantile of the true guess's tightness at that beta.
Calibration calibrate(const Instance& instance, const ExperimentConfig& config, std::size_t n);

/// Learner config for sample size n: configured beta/eps_bar or the calibrated ones.
LearnerConfig learner_for(const Instance& instance, const ExperimentConfig& config, const Calibration* calibration);

struct ReplicateResult {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double gap = 0.0;
    int chosen_guess = -1;
    int feasible_count = 0;
    double tightness_max = 0.0;
    double wall_ms = 0.0;
    // diagnostics
    bool fallback = false;
    bool true_guess_feasible = false;
    bool membership_pass = false;
    double membership_max = 0.0;
    double value = 0.0;
};

struct RunOutput {
    ReplicateResult row;
    SolveOutcome outcome;
    Dataset data;
};

RunOutput run_replicate(const Instance& instance, const LearnerConfig& learner, std::size_t n, std::uint64_t seed,
                        bool record_wall_time);

/// Runs on a given dataset (no collection).
RunOutput run_on_dataset(const Instance& instance, const LearnerConfig& learner, Dataset data, std::uint64_t seed,
                         bool record_wall_time);

struct Aggregate {
    std::size_t n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

struct ExperimentResult {
    std::vector<ReplicateResult> rows;  // sorted by (n index, replicate)
    std::vector<Aggregate> aggregates;
    std::vector<Calibration> calibrations;
    double v_star = 0.0;
    double c_conc = 0.0;
    double alpha = 0.0;
    double l2 = 0.0;
    double eta_hat = 0.0;
};

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> values, double q);

std::vector<Aggregate> aggregate(const std::vector<ReplicateResult>& rows);

/// One replicate at data.n with data.seed.
ExperimentResult run(const ExperimentConfig& config);

/// n_values x replicates; replicate r uses the same data seed for every n, so
/// smaller datasets are prefixes of larger ones.
ExperimentResult sweep(const ExperimentConfig& config);
ExperimentResult sweep(const Instance& instance, const ExperimentConfig& config);

/// CSV columns: n,seed,gap,chosen_guess,feasible_count,tightness_max,wall_ms
std::string result_csv(const ExperimentResult& result);
/// Config echo, instance summary, calibrations and aggregates.
std::string result_sidecar_json(const ExperimentResult& result, const ExperimentConfig& config);
void write_result(const ExperimentResult& result, const ExperimentConfig& config, const std::filesystem::path& dir);

std::vector<ReplicateResult> read_result_csv(const std::string& text);

/// gap-vs-n median/IQR as summary.csv plus a standalone gap_vs_n.svg. Returns
/// false (and writes nothing) when the table is empty.
bool emit_plots(const std::vector<ReplicateResult>& rows, const std::filesystem::path& dir,
                std::string* warning = nullptr);

struct LemmaResult {
    std::string name;
    std::string description;
    double worst = 0.0;      // worst slack, or worst residual for identities
    double tolerance = 0.0;
    bool passed = false;
    std::size_t instances = 0;
};

/// Names accepted by run_lemma.
const std::vector<std::string>& lemma_names();

/// Throws ContractError for an unknown name.
LemmaResult run_lemma(const std::string& name, std::uint64_t seed);

struct VerifyReport {
    std::vector<LemmaResult> results;
    bool all_passed() const;
    std::string to_json() const;
};

VerifyReport verify(const std::vector<std::string>& names, std::uint64_t seed);

/// Small random exact linear MDP for the lemma suites: d <= 3, H in [2, 4],
/// interior stages of at most 5 states, at most 3 actions.
Environment random_small_env(std::uint64_t seed, std::uint64_t max_policies = 0);

}  // namespace skipq
