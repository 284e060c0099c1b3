#pragma once

// Independent verifiers: exact concentrability, algebraic lemma checks that
// report slack, and brute-force oracles for the skip-aware quantities.

#include <cstdint>
#include <span>
#include <vector>

#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/learner.hpp"
#include "skipq/mdp.hpp"
#include "skipq/skipping.hpp"

namespace skipq {

struct ConcReport {
    double c_conc = 0.0;  // +inf when a reachable pair has zero behaviour mass
    bool infinite = false;
    int stage = 0;        // witness
    int state = 0;
    int action = 0;
    std::vector<double> stage_max;  // largest ratio per stage 0..H-1
};

/// Exact coefficient via a max-reachability DP per (stage, state).
ConcReport concentrability(const StagedMdp& mdp, const Policy& behavior);

/// Same coefficient by enumerating every deterministic policy's occupancy.
/// Throws CapacityError above `cap` policies.
ConcReport concentrability_brute_force(const StagedMdp& mdp, const Policy& behavior, std::uint64_t cap = 10000);

/// Largest probability any policy assigns to reaching (stage, state).
double max_reach_probability(const StagedMdp& mdp, int stage, int state);

struct SlackReport {
    double worst_slack = 0.0;  // min over draws of (bound - quantity); negative means a violation
    int draws = 0;
    int violations = 0;        // draws with slack below -1e-9
};

SlackReport check_lsq_decomposition(std::uint64_t seed, int draws = 100);
SlackReport check_elliptical_potential(std::uint64_t seed, int draws = 100);
SlackReport check_projection_bound(std::uint64_t seed, int draws = 100);

/// |v^a(s0) - v^b(s0) - sum_k E_{nu^a_k}[q^b - v^b]|.
double check_perf_diff(const StagedMdp& mdp, const Policy& a, const Policy& b);

/// min over interior states of sqrt(2d) range^G(s) - range(s), with range(s)
/// taken over the fitted parameters of `policies`.
double check_range_bound(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                         std::span<const Policy> policies);

double check_range_bound(const FeatureMap& features, const Guess& guess, std::span<const PolicyParams> params);

struct RealizabilityReport {
    double residual = 0.0;      // sup-norm residual of the single linear fit over S_k x A
    std::uint64_t paths = 0;    // enumerated continuation paths per (s, a)
    Vector theta;
};

/// Exact expected skip target from every (s, a) of stage k, obtained by
/// enumerating all continuation paths under the behaviour policy, then fitted
/// by one least-squares parameter. Throws CapacityError when the number of
/// paths per pair exceeds `path_cap`.
RealizabilityReport check_skip_realizability(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                                             const std::vector<Vector>& f, int stage, const SkipParams& params,
                                             const Policy& behavior, std::uint64_t path_cap = 2000000);

/// v*(s0) - v^pi(s0) by exact dynamic programming.
double suboptimality(const StagedMdp& mdp, const Policy& policy);

/// Optimal policy of the skipping MDP: at each state the behaviour policy with
/// probability omega, otherwise the greedy action of its own q-function.
Policy skip_optimal_policy(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                           const SkipParams& params, const Policy& behavior);

struct MembershipReport {
    std::vector<double> distances;  // stage 0..H-1: ||psi_k - anchor(psi_{k+1..})||_{X_k}
    std::vector<double> norms;      // ||psi_k||
    double max_distance = 0.0;
    double max_norm = 0.0;
    bool passes(double beta, double radius) const {
        return max_distance <= beta * (1.0 + 1e-12) && max_norm <= radius;
    }
};

/// Ellipsoid test of the given per-stage parameters against the anchors their own tails induce.
MembershipReport membership(const SkipRegression& regression, std::span<const Vector> psi);

}  // namespace skipq
