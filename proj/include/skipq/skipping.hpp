#pragma once

// Guess-induced ranges, skipping probabilities and skip-aware regression targets.

#include <vector>

#include "skipq/design.hpp"
#include "skipq/feature_map.hpp"
#include "skipq/mdp.hpp"

namespace skipq {

struct SkipParams {
    double alpha = 0.0;  // skip threshold in (0, 1]
    int dim = 1;

    SkipParams(double alpha_, int dim_);
};

/// max over panel vectors and ordered action pairs of <phi(s,a) - phi(s,a'), theta>.
/// Interior stages only; throws DomainError otherwise.
double range_g(const Guess& guess, const FeatureMap& features, StateRef s);

/// 1 up to alpha / sqrt(2d), 0 from 2 alpha / sqrt(2d), linear in between.
double omega_from_range(double range, const SkipParams& params);

/// Skipping probability of s; zero at the start and terminal stages.
double omega(const Guess& guess, const FeatureMap& features, StateRef s, const SkipParams& params);

/// Skipping probabilities of every state, computed once.
class SkipModel {
public:
    SkipModel(const Guess& guess, const FeatureMap& features, const SkipParams& params);

    double omega(int stage, int state) const { return omega_[stage](state); }
    double range(int stage, int state) const { return range_[stage](state); }
    int horizon() const { return static_cast<int>(omega_.size()) - 1; }

private:
    std::vector<Vector> omega_;
    std::vector<Vector> range_;
};

struct StopDistribution {
    int first = 0;              // earliest stopping stage, the stage after the regression stage
    std::vector<double> probs;  // probs[i] is the probability of stopping at stage first + i (up to H)
};

/// Distribution of the first non-skipped stage after `stage` along the trajectory.
StopDistribution stop_distribution(const SkipModel& model, const Trajectory& traj, int stage);

StopDistribution stop_distribution(const Guess& guess, const FeatureMap& features, const Trajectory& traj, int stage,
                                   const SkipParams& params);

/// sum_t F(t) (r_stage + ... + r_{t-1} + f(s_t)). f[k](s) must lie in [0, H] with f at the
/// terminal state equal to 0; ContractError otherwise.
double skip_target(const SkipModel& model, const Trajectory& traj, int stage, const std::vector<Vector>& f);

double skip_target(const Guess& guess, const FeatureMap& features, const Trajectory& traj, int stage,
                   const std::vector<Vector>& f, const SkipParams& params);

/// Checks the bounds skip_target requires of a tabular value function.
void check_value_function(const std::vector<Vector>& f, int horizon);

}  // namespace skipq
