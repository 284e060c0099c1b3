#pragma once

// Environments that are linearly q^pi-realizable, and the per-policy
// parameters psi_k(pi) that realise them.

#include <cstdint>
#include <span>
#include <vector>

#include "skipq/feature_map.hpp"
#include "skipq/mdp.hpp"

namespace skipq {

struct Environment {
    StagedMdp mdp;
    FeatureMap features;
};

/// Exact linear MDP: P(s'|s,a) = <phi(s,a), mu_{k+1}(s')> and r(s,a) = <phi(s,a), theta_r,k>.
/// Features lie on the probability simplex, each mu coordinate is a
/// distribution over the next stage and reward weights lie in [0,1]^d, so every
/// draw is valid; the candidate is still validated and resampled up to
/// `max_rounds` times before a GenerationError is raised.
Environment gen_linear_mdp(int dim, int horizon, const std::vector<int>& stage_sizes, int num_actions,
                           std::uint64_t seed, RewardKind reward_kind = RewardKind::deterministic_mean,
                           int max_rounds = 100);

struct PolicyParams {
    std::vector<Vector> theta;            // theta[k] for k = 0..H; theta[H] == 0
    std::vector<double> stage_residuals;  // sup-norm residual per stage
    double residual = 0.0;                // max over stages
    double l2_bound = 0.0;                // max_k ||theta[k]||_2
    bool rank_deficient = false;          // some stage feature matrix lacked full column rank
};

/// Minimum-norm least squares of q^pi on the features at each stage, with the
/// sup-norm residual reported.
PolicyParams fit_psi(const StagedMdp& mdp, const FeatureMap& features, const Policy& policy);

/// Same fit for an already evaluated action-value table.
PolicyParams fit_psi(const FeatureMap& features, const std::vector<Matrix>& q);

/// Caches the per-stage decompositions so many policies can be fitted cheaply.
class PsiFitter {
public:
    explicit PsiFitter(const FeatureMap& features);

    PolicyParams fit(const std::vector<Matrix>& q) const;

private:
    const FeatureMap* features_;
    std::vector<Eigen::CompleteOrthogonalDecomposition<Matrix>> solvers_;
};

/// Every deterministic policy in mixed-radix order (stage 0 state 0 is the
/// least significant digit). Throws CapacityError when there are more than `cap`.
std::vector<Policy> all_deterministic_policies(const StagedMdp& mdp, std::uint64_t cap = 10000);

/// `count` stochastic policies with rows drawn uniformly from the simplex.
/// Policy i depends only on (seed, i), so larger samples extend smaller ones.
std::vector<Policy> random_policies(const StagedMdp& mdp, std::size_t count, std::uint64_t seed);

/// All deterministic policies when there are at most 10^4 of them, otherwise
/// `size` random stochastic policies.
std::vector<Policy> policy_sample(const StagedMdp& mdp, std::size_t size, std::uint64_t seed);

struct MisspecEstimate {
    double eta_hat = 0.0;          // lower bound on the true misspecification
    std::size_t policies = 0;
    bool exhaustive_deterministic = false;
};

MisspecEstimate estimate_misspecification(const StagedMdp& mdp, const FeatureMap& features,
                                          std::size_t policy_sample_size, std::uint64_t seed);

/// max over the fitted parameters of max_{a,a'} <phi(s,a) - phi(s,a'), psi_k>.
/// Defined for interior stages only; throws DomainError otherwise.
double true_range(const FeatureMap& features, std::span<const PolicyParams> params, StateRef s);

double true_range(const StagedMdp& mdp, const FeatureMap& features, std::span<const Policy> policies,
                  StateRef s);

}  // namespace skipq
