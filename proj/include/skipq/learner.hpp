#pragma once

// Finite-pool solver for the optimistic guess-and-confidence-set program:
// per-stage covariances, skip-aware least-squares anchors, confidence sets,
// the tightness filter and the greedy output policy.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "skipq/design.hpp"
#include "skipq/feature_map.hpp"
#include "skipq/mdp.hpp"
#include "skipq/skipping.hpp"

namespace skipq {

struct LearnerConfig {
    double lambda = 1.0;
    double beta = 1.0;
    double eps_bar = 1.0;
    double theta_radius = 1.0;  // ball radius for set membership
    double alpha = 0.1;
    std::size_t grid_per_stage = 64;  // extra candidates per stage beyond the anchors
    std::size_t combo_cap = 256;      // tail combinations per stage
    double net_fraction = 0.5;        // net resolution relative to beta
    std::uint64_t seed = 0;

    /// Throws ContractError when a field is out of range.
    void validate() const;
};

struct DerivedConstants {
    double alpha = 0.0;
    int d0 = 0;
    double l2_bar = 0.0;
    double lambda = 0.0;
    double eta_bar = 0.0;
    double eps_check = 0.0;
    double beta_bar = 0.0;
    double beta = 0.0;
    double eps_bar = 0.0;
    double eps_tilde = 0.0;
    double log_xi = 0.0;       // cover resolution for the guess space
    double xi_bar = 0.0;       // resulting perturbation scale, 1 / (2 sqrt(n))
    double log_cover = 0.0;    // log of the guess-cover cardinality bound
};

/// Literal evaluation of the theoretical parameter table. The guess radius is taken as l2.
DerivedConstants derived_constants(int dim, int horizon, double eps, double delta, double l1, double l2, double eta,
                                   double c_conc, double n);

/// clip_[0,H] <phi(s,a), theta>
double clipped_q(const Vector& theta, const FeatureMap& features, int stage, int state, int action);
/// clip_[0,H] max_a <phi(s,a), theta>
double clipped_v(const Vector& theta, const FeatureMap& features, int stage, int state);
/// clipped_v of every state of one stage.
Vector clipped_v_stage(const Vector& theta, const FeatureMap& features, int stage);

struct StageCovariance {
    Matrix x;                 // lambda I + sum phi phi'
    Eigen::LLT<Matrix> llt;
    Matrix chol_lower;        // L with x = L L'

    double distance(const Vector& a, const Vector& b) const { return weighted_norm(a - b, x); }
};

StageCovariance stage_covariance(const Dataset& data, int stage, double lambda);

/// Covariances of stages 0..H-1.
std::vector<StageCovariance> stage_covariances(const Dataset& data, int horizon, double lambda);

/// Sufficient statistics of the skip-aware regressions for one guess. The
/// anchor for a tail theta_{k+1..H} is c_k + sum_t W_{k,t} vbar_{theta_t}, so
/// its cost does not depend on the number of trajectories.
class SkipRegression {
public:
    SkipRegression(const Dataset& data, const FeatureMap& features, const Guess& guess, double alpha,
                   std::span<const StageCovariance> covariances);

    int horizon() const { return horizon_; }
    const StageCovariance& covariance(int stage) const { return cov_[stage]; }
    /// tail[i] is the parameter of stage stage + 1 + i; the last entry (stage H) is ignored.
    Vector anchor(int stage, std::span<const Vector> tail) const;
    /// Anchor from precomputed clipped values, vbar[i] over the states of stage stage + 1 + i.
    Vector anchor_from_values(int stage, std::span<const Vector> vbar) const;
    const Matrix& weight(int stage, int target) const { return w_[stage][target - stage - 1]; }
    const Vector& constant(int stage) const { return c_[stage]; }

private:
    const FeatureMap* features_;
    std::span<const StageCovariance> cov_;  // owned by the caller
    int horizon_;
    std::vector<Vector> c_;
    std::vector<std::vector<Matrix>> w_;  // w_[k][t-k-1] is d x |S_t|
};

/// Direct evaluation: X_k^{-1} sum_j phi_j skip_target_j.
Vector lstsq_anchor(const Dataset& data, const FeatureMap& features, int stage, const Guess& guess,
                    std::span<const Vector> theta_tail, const LearnerConfig& config);

struct StageSet {
    std::vector<Vector> anchors;
    std::vector<Vector> members;
    double combos_total = 0.0;   // size of the tail product
    std::size_t combos_used = 0;
};

struct ConfidenceSets {
    std::vector<StageSet> stages;  // stages 0..H; stage H holds {0}
    int empty_stage = -1;          // first stage (from the back) with no member, -1 when none
    bool feasible_sets() const { return empty_stage < 0; }
};

/// Backward construction of the finite confidence sets. `extra_candidates`,
/// when given, holds per-stage parameters offered to the membership test
/// ahead of the local net points.
ConfidenceSets build_confidence_sets(const SkipRegression& regression, const FeatureMap& features,
                                     const LearnerConfig& config,
                                     const std::vector<std::vector<Vector>>* extra_candidates = nullptr);

ConfidenceSets build_confidence_sets(const Dataset& data, const FeatureMap& features, const Guess& guess,
                                     const LearnerConfig& config);

/// Minimum X_k distance from theta to the anchors.
double anchor_distance(const StageCovariance& cov, std::span<const Vector> anchors, const Vector& theta);

/// (1/n) sum_j [max - min over the set of clip q_theta(s_j, a_j)] at one stage.
double tightness(const Dataset& data, int stage, std::span<const Vector> theta_set, const FeatureMap& features);

struct GuessReport {
    bool feasible = false;
    int empty_stage = -1;
    std::vector<double> tightness;  // stages 0..H-1
    double tightness_max = 0.0;
    double value = 0.0;             // best clipped start value over stage-0 members
    std::vector<Vector> theta;      // chosen parameters, stages 0..H; empty if a set was empty
    std::vector<std::size_t> member_counts;
};

struct SolveOutcome {
    bool all_rejected = true;
    bool fallback = false;  // chosen guess failed the tightness filter
    int chosen_guess = -1;
    std::vector<Vector> theta;
    double value = 0.0;
    std::optional<Policy> policy;
    std::vector<GuessReport> guesses;
};

/// Greedy policy on the clipped q of theta[k]; ties go to the lowest action.
Policy greedy_policy(const FeatureMap& features, std::span<const Vector> theta);

/// Runs every guess through the confidence-set construction and the
/// tightness filter, then picks the feasible guess and stage-0 member with the
/// largest clipped start value. Ties go to the lowest guess, then member, index.
SolveOutcome solve(const Dataset& data, std::span<const Guess> guesses, const LearnerConfig& config,
                   const FeatureMap& features);

/// When every guess was rejected, adopts the guess with the smallest largest
/// tightness among those with nonempty sets. Returns false if none qualifies.
bool apply_fallback(SolveOutcome& outcome, const FeatureMap& features);

}  // namespace skipq
