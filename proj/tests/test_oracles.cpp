#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/error.hpp"
#include "skipq/harness.hpp"
#include "skipq/learner.hpp"
#include "skipq/oracles.hpp"
#include "skipq/rng.hpp"

using namespace skipq;

TEST_CASE("concentrability: one state per stage, uniform behaviour") {
    const StagedMdp mdp = test::single_state_mdp({{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}}, 2);
    const ConcReport r = concentrability(mdp, Policy::uniform(mdp));
    CHECK(!r.infinite);
    CHECK(r.c_conc == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.stage_max.size() == 3);
}

TEST_CASE("concentrability: deterministic behaviour has ratio one on its support") {
    const StagedMdp mdp = test::chain_mdp();
    const Policy behavior = Policy::deterministic(mdp, {{0}, {0, 0}, {0}});
    const OccupancyMeasure mu = occupancy(mdp, behavior);
    const OccupancyMeasure nu = occupancy(mdp, behavior);
    for (int k = 0; k < 2; ++k) {
        for (int s = 0; s < mdp.stage_size(k); ++s) {
            for (int a = 0; a < 2; ++a) {
                if (mu.nu[k](s, a) > 0) CHECK(nu.nu[k](s, a) / mu.nu[k](s, a) == 1.0);
            }
        }
    }
    // Other policies reach pairs the behaviour never visits.
    const ConcReport r = concentrability(mdp, behavior);
    CHECK(r.infinite);
    CHECK(std::isinf(r.c_conc));
    CHECK(concentrability_brute_force(mdp, behavior).infinite);
}

TEST_CASE("concentrability DP equals enumeration and the witness reproduces it") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Environment env = random_small_env(seed, 4096);
        const Policy behavior = random_policies(env.mdp, 1, seed).front();
        const ConcReport dp = concentrability(env.mdp, behavior);
        const ConcReport brute = concentrability_brute_force(env.mdp, behavior, 4096);
        CHECK(std::abs(dp.c_conc - brute.c_conc) <= 1e-10);
        CHECK(dp.c_conc >= 1.0 - 1e-12);
        const double mu = occupancy(env.mdp, behavior).nu[dp.stage](dp.state, dp.action);
        const double ratio = max_reach_probability(env.mdp, dp.stage, dp.state) / mu;
        CHECK(std::abs(ratio - dp.c_conc) <= 1e-10);
    }
    const Environment big = gen_linear_mdp(2, 4, {1, 5, 5, 5, 1}, 3, 1);
    CHECK_THROWS_AS(concentrability_brute_force(big.mdp, Policy::uniform(big.mdp), 100), CapacityError);
}

TEST_CASE("algebraic lemma checks report nonnegative slack") {
    for (std::uint64_t seed : {1, 2, 3}) {
        for (const SlackReport& r :
             {check_lsq_decomposition(seed), check_elliptical_potential(seed), check_projection_bound(seed)}) {
            CHECK(r.draws == 100);
            CHECK(r.violations == 0);
            CHECK(r.worst_slack >= -1e-9);
        }
    }
    CHECK(check_lsq_decomposition(9).worst_slack == check_lsq_decomposition(9).worst_slack);
}

TEST_CASE("projection bound: rank-one closed form") {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        Vector a(3);
        for (int j = 0; j < 3; ++j) a(j) = rng.normal();
        const double b = rng.uniform() * 2 - 1, lambda = 0.1 + rng.uniform();
        const Matrix v = a * a.transpose() + lambda * Matrix::Identity(3, 3);
        const Vector ab = a * b;
        const double lhs = ab.dot(v.ldlt().solve(ab));
        CHECK(lhs == doctest::Approx(b * b * a.squaredNorm() / (a.squaredNorm() + lambda)).epsilon(1e-12));
        CHECK(lhs <= 1.0);
    }
}

TEST_CASE("elliptical potential: single step") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const int d = 1 + i % 4;
        Vector a(d);
        for (int j = 0; j < d; ++j) a(j) = rng.normal();
        const double l = a.norm();
        const double lambda = l * l / (std::exp(1.0 / (2 * d)) * d);
        const double lhs = std::min(1.0, a.squaredNorm() / lambda);
        const double rhs = 2.0 * d * std::log((d * lambda + l * l) / (d * lambda));
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("performance difference: identities and a hand-checked case") {
    const StagedMdp mdp = test::chain_mdp();
    const Policy det = Policy::deterministic(mdp, {{1}, {0, 1}, {0}});
    const Policy uni = Policy::uniform(mdp);
    CHECK(check_perf_diff(mdp, det, det) == 0.0);
    // v^det = 0.5 + 0.1 = 0.6. Under uniform: state 0 worth 0.65, state 1 worth 0.15,
    // start worth 0.3 + 0.4 = 0.7; q^uni(s0, 1) - v^uni(s0) = 0.65 - 0.7 and
    // q^uni(s1, 1) - v^uni(s1) = 0.1 - 0.15, summing to v^det - v^uni = -0.1.
    const double gap = evaluate_policy(mdp, det).v[0](0) - evaluate_policy(mdp, uni).v[0](0);
    CHECK(gap == doctest::Approx(-0.1).epsilon(1e-14));
    CHECK(check_perf_diff(mdp, det, uni) <= 1e-15);
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const Environment env = random_small_env(seed);
        const auto p = random_policies(env.mdp, 2, seed);
        CHECK(check_perf_diff(env.mdp, p[0], p[1]) <= 1e-10);
    }
}

TEST_CASE("range bound: degenerate and random instances") {
    const Environment zero = test::zero_reward_env({1, 3, 3, 1}, 2);
    const auto zp = policy_sample(zero.mdp, 20, 1);
    const TrueGuess zg = build_true_guess(zero.mdp, zero.features, zp);
    CHECK(check_range_bound(zero.mdp, zero.features, zg.guess, zp) == 0.0);

    const Environment single = gen_linear_mdp(2, 3, {1, 3, 3, 1}, 1, 4);
    const auto sp = policy_sample(single.mdp, 20, 1);
    CHECK(check_range_bound(single.mdp, single.features, build_true_guess(single.mdp, single.features, sp).guess, sp) ==
          0.0);

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Environment env = random_small_env(seed);
        const auto pols = policy_sample(env.mdp, 200, seed);
        const TrueGuess tg = build_true_guess(env.mdp, env.features, pols);
        CHECK(check_range_bound(env.mdp, env.features, tg.guess, pols) >= -1e-6);
    }
}

TEST_CASE("skip realizability: zero case and capacity guard") {
    const Environment zero = test::zero_reward_env({1, 3, 3, 1}, 2);
    const Guess g = Guess::zero(1, 3, d_zero(1), 1.0);
    const std::vector<Vector> f{Vector::Zero(1), Vector::Zero(3), Vector::Zero(3), Vector::Zero(1)};
    const RealizabilityReport r =
        check_skip_realizability(zero.mdp, zero.features, g, f, 0, SkipParams(0.5, 1), Policy::uniform(zero.mdp));
    CHECK(r.residual == 0.0);
    CHECK(r.paths >= 1);
    CHECK_THROWS_AS(check_skip_realizability(zero.mdp, zero.features, g, f, 0, SkipParams(0.5, 1),
                                             Policy::uniform(zero.mdp), 2),
                    CapacityError);
}

TEST_CASE("suboptimality") {
    const StagedMdp mdp = test::chain_mdp();
    CHECK(suboptimality(mdp, optimal_policy(mdp).policy) == 0.0);
    // Worst deterministic policy: action 1 then action 1 in state 1, worth 0.5 + 0.1.
    const Policy worst = Policy::deterministic(mdp, {{1}, {0, 1}, {0}});
    CHECK(suboptimality(mdp, worst) == doctest::Approx(0.5).epsilon(1e-14));
    const Environment zero = test::zero_reward_env({1, 3, 3, 1}, 2);
    for (const auto& p : random_policies(zero.mdp, 10, 1)) CHECK(suboptimality(zero.mdp, p) == 0.0);
    const Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, 3);
    for (const auto& p : random_policies(env.mdp, 20, 1)) CHECK(suboptimality(env.mdp, p) >= -1e-10);
}

TEST_CASE("skip-optimal policy in the two limits") {
    const Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, 8);
    const Policy behavior = random_policies(env.mdp, 1, 3).front();
    // Zero guess: every interior state is skipped, so the behaviour acts there.
    const Guess zero = Guess::zero(2, 3, d_zero(2), 1.0);
    const Policy all_skip = skip_optimal_policy(env.mdp, env.features, zero, SkipParams(0.5, 2), behavior);
    for (int k = 1; k < 3; ++k) CHECK((all_skip.stage(k) - behavior.stage(k)).norm() == 0.0);

    // Tiny alpha on the true guess: nothing is skipped, so the policy is optimal.
    const TrueGuess tg = build_true_guess(env.mdp, env.features, policy_sample(env.mdp, 200, 1));
    const SkipModel model(tg.guess, env.features, SkipParams(1e-9, 2));
    bool none_skipped = true;
    for (int k = 1; k < 3; ++k) {
        for (int s = 0; s < 4; ++s) none_skipped = none_skipped && model.omega(k, s) == 0.0;
    }
    REQUIRE(none_skipped);
    const Policy greedy = skip_optimal_policy(env.mdp, env.features, tg.guess, SkipParams(1e-9, 2), behavior);
    CHECK(suboptimality(env.mdp, greedy) <= 1e-12);
}

TEST_CASE("membership of the anchor's own tail") {
    const Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, 7);
    const TrueGuess tg = build_true_guess(env.mdp, env.features, policy_sample(env.mdp, 100, 1));
    const Dataset data = collect_dataset(env.mdp, env.features, Policy::uniform(env.mdp), 300, 2);
    const auto covs = stage_covariances(data, 3, 1.0);
    const SkipRegression reg(data, env.features, tg.guess, 0.2, covs);
    // Parameters built backward from anchors are at distance zero.
    std::vector<Vector> psi(4, Vector::Zero(2));
    for (int k = 2; k >= 0; --k) {
        psi[k] = reg.anchor(k, std::span<const Vector>(psi.data() + k + 1, psi.size() - k - 1));
    }
    const MembershipReport m = membership(reg, psi);
    CHECK(m.max_distance <= 1e-12);
    CHECK(m.passes(1e-9, 1e9));
    psi[1](0) += 1.0;
    const MembershipReport moved = membership(reg, psi);
    CHECK(moved.distances[1] == doctest::Approx(std::sqrt(covs[1].x(0, 0))).epsilon(1e-12));
}
