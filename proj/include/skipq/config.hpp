#pragma once

// Experiment configuration. Loaded from one JSON document; every section and
// field is optional and falls back to the defaults below.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skipq/mdp.hpp"

namespace skipq {

struct EnvironmentSpec {
    int dim = 2;
    std::vector<int> stage_sizes{1, 4, 4, 1};
    int num_actions = 2;
    RewardKind reward_kind = RewardKind::deterministic_mean;
    std::uint64_t seed = 7;

    int horizon() const { return static_cast<int>(stage_sizes.size()) - 1; }
};

enum class BehaviorKind { uniform, epsilon_greedy };

struct DataSpec {
    std::size_t n = 1000;
    BehaviorKind behavior = BehaviorKind::uniform;
    double mix_weight = 0.1;  // uniform share of the epsilon-greedy behaviour
    std::uint64_t seed = 11;
};

struct LearnerSpec {
    double lambda = 1.0;
    std::optional<double> beta;          // calibrated when absent
    std::optional<double> eps_bar;       // calibrated when absent
    std::optional<double> theta_radius;  // L2 (8 H^2 d0 / alpha + 1) when absent
    std::optional<double> alpha;         // median-range rule when absent
    std::size_t grid_per_stage = 64;
    std::size_t combo_cap = 256;
    double net_fraction = 0.5;
    std::uint64_t seed = 13;
};

struct GuessSpec {
    std::size_t count = 16;
    double spread = 0.25;
    std::size_t policy_sample = 200;
    std::uint64_t seed = 17;
};

struct CalibrationSpec {
    std::size_t replicates = 40;
    double delta = 0.05;
    std::uint64_t seed = 19;
};

struct SweepSpec {
    std::vector<std::size_t> n_values{100, 1000, 10000};
    std::size_t replicates = 20;
    std::uint64_t seed = 23;
};

struct OutputSpec {
    std::string dir = "skipq_out";
    bool record_wall_time = false;
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    DataSpec data;
    LearnerSpec learner;
    GuessSpec guesses;
    CalibrationSpec calibration;
    SweepSpec sweep;
    OutputSpec output;

    /// Throws ContractError naming the offending field.
    void validate() const;
};

}  // namespace skipq
