#pragma once

// Stage-structured finite-horizon MDPs.
//
// Stages are indexed from 0: stage 0 holds the single start state and stage H
// holds the single terminal state, so an MDP of horizon H has H + 1 stages.
// States are dense indices local to their stage. Transitions only move from
// stage k to stage k + 1.

#include <cstdint>
#include <vector>

#include "skipq/feature_map.hpp"
#include "skipq/linalg.hpp"

namespace skipq {

enum class RewardKind { deterministic_mean, bernoulli_mean };

struct StateRef {
    int stage = 0;
    int index = 0;

    friend bool operator==(const StateRef&, const StateRef&) = default;
};

class StagedMdp {
public:
    /// transitions[k][a] is |S_k| x |S_{k+1}| for k < H; reward_means[k] is |S_k| x |A| for k <= H.
    /// Throws StructureError when any invariant fails.
    StagedMdp(std::vector<int> stage_sizes, int num_actions,
              std::vector<std::vector<Matrix>> transitions, std::vector<Matrix> reward_means,
              RewardKind reward_kind = RewardKind::deterministic_mean);

    int horizon() const { return static_cast<int>(stage_sizes_.size()) - 1; }
    int num_stages() const { return static_cast<int>(stage_sizes_.size()); }
    int stage_size(int stage) const { return stage_sizes_.at(stage); }
    const std::vector<int>& stage_sizes() const { return stage_sizes_; }
    int num_actions() const { return num_actions_; }
    RewardKind reward_kind() const { return reward_kind_; }

    const Matrix& transition(int stage, int action) const { return transitions_.at(stage).at(action); }
    auto next_state_probs(int stage, int state, int action) const {
        return transitions_[stage][action].row(state);
    }
    double reward_mean(int stage, int state, int action) const {
        return reward_means_[stage](state, action);
    }
    const Matrix& reward_means(int stage) const { return reward_means_.at(stage); }

    StateRef start() const { return {0, 0}; }
    StateRef terminal() const { return {horizon(), 0}; }

    /// Number of deterministic policies over stages 0..H-1 (saturates at UINT64_MAX).
    std::uint64_t deterministic_policy_count() const;

private:
    std::vector<int> stage_sizes_;
    int num_actions_;
    std::vector<std::vector<Matrix>> transitions_;
    std::vector<Matrix> reward_means_;
    RewardKind reward_kind_;
};

/// Re-runs the constructor checks; useful after deserialisation or hand edits.
void validate_mdp(const StagedMdp& mdp);

class Policy {
public:
    /// probs[k] is |S_k| x |A| with rows on the simplex, for k = 0..H.
    explicit Policy(std::vector<Matrix> probs);

    static Policy uniform(const StagedMdp& mdp);
    /// actions[k][s] is the chosen action; the terminal stage may be omitted.
    static Policy deterministic(const StagedMdp& mdp, const std::vector<std::vector<int>>& actions);

    int num_stages() const { return static_cast<int>(probs_.size()); }
    const Matrix& stage(int k) const { return probs_.at(k); }
    double prob(int stage, int state, int action) const { return probs_[stage](state, action); }
    /// Lowest-index action of maximal probability.
    int mode(int stage, int state) const;

    friend bool operator==(const Policy& a, const Policy& b);

private:
    std::vector<Matrix> probs_;
};

/// Throws StructureError when the policy does not cover every state of the MDP.
void check_compatible(const StagedMdp& mdp, const Policy& policy);

struct ValueTables {
    std::vector<Matrix> q;  // q[k](s, a)
    std::vector<Vector> v;  // v[k](s)
};

struct OptimalSolution {
    Policy policy;
    ValueTables values;
};

struct OccupancyMeasure {
    std::vector<Matrix> nu;  // nu[k](s, a) for k = 0..H-1
};

struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;

    friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
    std::vector<Step> steps;        // H + 1 entries, one per stage
    std::vector<Matrix> features;   // features[k] is |A| x d at the visited state; empty if none recorded

    friend bool operator==(const Trajectory& a, const Trajectory& b);
};

struct Dataset {
    std::vector<Trajectory> trajectories;

    std::size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Exact backward induction.
ValueTables evaluate_policy(const StagedMdp& mdp, const Policy& policy);

/// Greedy backward induction; ties go to the lowest action index.
OptimalSolution optimal_policy(const StagedMdp& mdp);

/// Forward state-action occupancy from the start state.
OccupancyMeasure occupancy(const StagedMdp& mdp, const Policy& policy);

/// Full rollout from the start state; the same seed always yields the same trajectory.
/// Features of every action at each visited state are recorded when `features` is given.
Trajectory sample_trajectory(const StagedMdp& mdp, const Policy& policy, std::uint64_t seed,
                             const FeatureMap* features = nullptr);

/// n trajectories; trajectory j is seeded with derive_seed(seed, 0, j), so a
/// dataset of size n is a prefix of any larger one collected with the same seed.
Dataset collect_dataset(const StagedMdp& mdp, const FeatureMap& features, const Policy& behavior,
                        std::size_t n, std::uint64_t seed);

}  // namespace skipq
