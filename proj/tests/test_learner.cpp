#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/error.hpp"
#include "skipq/learner.hpp"
#include "skipq/oracles.hpp"
#include "skipq/rng.hpp"
#include "skipq/skipping.hpp"

using namespace skipq;

namespace {

struct Fixture {
    Environment env;
    TrueGuess tg;
    double alpha;
    Dataset data;
};

Fixture fixture(std::size_t n, std::uint64_t seed = 7) {
    Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, seed);
    TrueGuess tg = build_true_guess(env.mdp, env.features, policy_sample(env.mdp, 200, 1));
    Dataset data = collect_dataset(env.mdp, env.features, Policy::uniform(env.mdp), n, seed + 1);
    return {std::move(env), std::move(tg), 0.2, std::move(data)};
}

std::vector<Vector> random_thetas(std::uint64_t seed, int count, int dim, double scale) {
    Rng rng(seed);
    std::vector<Vector> out;
    for (int i = 0; i < count; ++i) {
        Vector v(dim);
        for (int j = 0; j < dim; ++j) v(j) = scale * rng.normal();
        out.push_back(v);
    }
    return out;
}

// Independent ridge solve: explicit stopping-stage weights and normal equations.
Vector ridge_reference(const Fixture& fx, int stage, const std::vector<Vector>& tail, double lambda) {
    const FeatureMap& features = fx.env.features;
    const int horizon = features.horizon();
    const SkipParams params(fx.alpha, features.dim());
    Matrix a = lambda * Matrix::Identity(2, 2);
    Vector b = Vector::Zero(2);
    for (const auto& traj : fx.data.trajectories) {
        const Vector phi = features.phi(stage, traj.steps[stage].state, traj.steps[stage].action);
        double y = 0.0, survive = 1.0, rewards = traj.steps[stage].reward;
        for (int t = stage + 1; t <= horizon; ++t) {
            const int s = traj.steps[t].state;
            const double w = omega(fx.tg.guess, features, {t, s}, params);
            const double value = t == horizon ? 0.0 : clipped_v(tail[t - stage - 1], features, t, s);
            y += survive * (1.0 - w) * (rewards + value);
            survive *= w;
            rewards += traj.steps[t].reward;
        }
        a += phi * phi.transpose();
        b += phi * y;
    }
    return a.ldlt().solve(b);
}

}  // namespace

TEST_CASE("clipped q and v") {
    const Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, 7);
    const Vector zero = Vector::Zero(2);
    CHECK(clipped_q(zero, env.features, 1, 2, 1) == 0.0);
    CHECK(clipped_v(zero, env.features, 1, 2) == 0.0);

    const Vector phi = env.features.phi(1, 0, 0);
    const Vector big = phi * (6.0 / phi.squaredNorm());  // <phi, theta> = H + 3
    CHECK(clipped_q(big, env.features, 1, 0, 0) == 3.0);

    for (const auto& theta : random_thetas(3, 50, 2, 2.0)) {
        for (int s = 0; s < 4; ++s) {
            const Vector raw = Matrix(env.features.state_block(1, s)) * theta;
            const double v = clipped_v(theta, env.features, 1, s);
            CHECK(v >= 0.0);
            CHECK(v <= 3.0);
            if (raw.maxCoeff() >= 0.0 && raw.maxCoeff() <= 3.0) {
                CHECK(v == std::max(clipped_q(theta, env.features, 1, s, 0), clipped_q(theta, env.features, 1, s, 1)));
            }
            CHECK(clipped_v_stage(theta, env.features, 1)(s) == v);
        }
    }
}

TEST_CASE("stage covariance") {
    const Environment zero = test::zero_reward_env({1, 2, 1}, 2);
    std::vector<Matrix> phi0{Matrix::Zero(2, 1), Matrix::Zero(4, 1), Matrix::Zero(2, 1)};
    const FeatureMap nil(1, 2, phi0);
    const Dataset empty_features = collect_dataset(zero.mdp, nil, Policy::uniform(zero.mdp), 10, 1);
    CHECK(stage_covariance(empty_features, 0, 2.5).x(0, 0) == 2.5);

    Matrix phi(2, 2);
    phi << 1.0, 0.0, 1.0, 0.0;
    const FeatureMap unit(2, 2, {phi, Matrix::Zero(4, 2) + Matrix::Constant(4, 2, 0.5), phi});
    const Dataset one = collect_dataset(zero.mdp, unit, Policy::uniform(zero.mdp), 1, 3);
    Matrix expected = 0.7 * Matrix::Identity(2, 2);
    expected(0, 0) += 1.0;
    CHECK((stage_covariance(one, 0, 0.7).x - expected).norm() == 0.0);

    const Fixture fx = fixture(300);
    for (int k = 0; k < 3; ++k) {
        const StageCovariance c = stage_covariance(fx.data, k, 0.5);
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(c.x);
        CHECK(eig.eigenvalues().minCoeff() >= 0.5 - 1e-9);
        CHECK((c.chol_lower * c.chol_lower.transpose() - c.x).norm() < 1e-10);
    }
}

TEST_CASE("anchor: zero targets, last stage, and independent ridge solve") {
    const Environment zero = test::zero_reward_env({1, 3, 3, 1}, 2);
    const Guess zg = Guess::zero(1, 3, d_zero(1), 1.0);
    const Dataset zd = collect_dataset(zero.mdp, zero.features, Policy::uniform(zero.mdp), 50, 2);
    LearnerConfig cfg;
    const std::vector<Vector> ztail(3, Vector::Zero(1));
    CHECK(lstsq_anchor(zd, zero.features, 0, zg, ztail, cfg).norm() == 0.0);

    Fixture fx = fixture(400);
    cfg.alpha = fx.alpha;
    // Last stage: targets are the immediate rewards.
    const std::vector<Vector> none{Vector::Zero(2)};
    Matrix a = cfg.lambda * Matrix::Identity(2, 2);
    Vector b = Vector::Zero(2);
    for (const auto& t : fx.data.trajectories) {
        const Vector phi = fx.env.features.phi(2, t.steps[2].state, t.steps[2].action);
        a += phi * phi.transpose();
        b += phi * t.steps[2].reward;
    }
    CHECK((lstsq_anchor(fx.data, fx.env.features, 2, fx.tg.guess, none, cfg) - a.ldlt().solve(b)).norm() < 1e-10);

    const auto covs = stage_covariances(fx.data, 3, cfg.lambda);
    const SkipRegression reg(fx.data, fx.env.features, fx.tg.guess, fx.alpha, covs);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto tail = random_thetas(seed, 3, 2, 2.0);
        tail.push_back(Vector::Zero(2));
        for (int k = 0; k < 3; ++k) {
            const std::vector<Vector> t(tail.begin() + k + 1, tail.end());
            const Vector ref = ridge_reference(fx, k, t, cfg.lambda);
            CHECK((lstsq_anchor(fx.data, fx.env.features, k, fx.tg.guess, t, cfg) - ref).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((reg.anchor(k, t) - ref).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("confidence sets: structure and membership invariants") {
    const Fixture fx = fixture(500);
    LearnerConfig cfg;
    cfg.alpha = fx.alpha;
    cfg.beta = 0.8;
    cfg.theta_radius = 50.0;
    cfg.grid_per_stage = 16;
    cfg.combo_cap = 64;
    const auto covs = stage_covariances(fx.data, 3, cfg.lambda);
    const SkipRegression reg(fx.data, fx.env.features, fx.tg.guess, fx.alpha, covs);
    const ConfidenceSets sets = build_confidence_sets(reg, fx.env.features, cfg);
    REQUIRE(sets.feasible_sets());
    REQUIRE(sets.stages.size() == 4);
    REQUIRE(sets.stages[3].members.size() == 1);
    CHECK(sets.stages[3].members[0].norm() == 0.0);
    for (int k = 0; k < 3; ++k) {
        const StageSet& st = sets.stages[k];
        CHECK(st.members.size() >= 1);
        CHECK(st.members.size() <= st.anchors.size() + cfg.grid_per_stage);
        CHECK(st.combos_used <= cfg.combo_cap);
        for (const auto& a : st.anchors) {
            if (a.norm() <= cfg.theta_radius) {
                CHECK(std::any_of(st.members.begin(), st.members.end(), [&](const Vector& m) { return (m - a).norm() == 0.0; }));
            }
        }
        for (const auto& m : st.members) {
            CHECK(m.norm() <= cfg.theta_radius);
            CHECK(anchor_distance(covs[k], st.anchors, m) <= cfg.beta * (1 + 1e-12));
        }
    }
    // Same inputs, same sets.
    const ConfidenceSets again = build_confidence_sets(fx.data, fx.env.features, fx.tg.guess, cfg);
    for (int k = 0; k <= 3; ++k) {
        REQUIRE(again.stages[k].members.size() == sets.stages[k].members.size());
        for (std::size_t i = 0; i < sets.stages[k].members.size(); ++i) {
            CHECK((again.stages[k].members[i] - sets.stages[k].members[i]).norm() == 0.0);
        }
    }
}

TEST_CASE("confidence sets: tiny radius empties a stage") {
    const Fixture fx = fixture(200);
    LearnerConfig cfg;
    cfg.alpha = fx.alpha;
    cfg.theta_radius = 1e-6;
    const ConfidenceSets sets = build_confidence_sets(fx.data, fx.env.features, fx.tg.guess, cfg);
    CHECK(!sets.feasible_sets());
    CHECK(sets.empty_stage >= 0);
}

TEST_CASE("tightness") {
    const Fixture fx = fixture(100);
    const auto thetas = random_thetas(5, 4, 2, 2.0);
    CHECK(tightness(fx.data, 1, std::vector<Vector>{thetas[0]}, fx.env.features) == 0.0);

    // q_theta >= H on every pair makes the spread against zero exactly H.
    const Vector huge = Vector::Constant(2, 1e6);
    double min_inner = 1e18;
    for (int s = 0; s < 4; ++s) {
        for (int a = 0; a < 2; ++a) min_inner = std::min(min_inner, fx.env.features.phi(1, s, a).dot(huge));
    }
    REQUIRE(min_inner >= 3.0);
    CHECK(tightness(fx.data, 1, std::vector<Vector>{Vector::Zero(2), huge}, fx.env.features) == doctest::Approx(3.0));

    const double t = tightness(fx.data, 2, thetas, fx.env.features);
    CHECK(t >= 0.0);
    CHECK(t <= 3.0);
}

TEST_CASE("solve: single guess, zero rewards, optimism, determinism") {
    const Fixture fx = fixture(800);
    LearnerConfig cfg;
    cfg.alpha = fx.alpha;
    cfg.beta = 1.0;
    cfg.eps_bar = 3.0;
    cfg.theta_radius = 50.0;
    cfg.grid_per_stage = 8;
    const std::vector<Guess> one{fx.tg.guess};
    const SolveOutcome out = solve(fx.data, one, cfg, fx.env.features);
    CHECK(!out.all_rejected);
    CHECK(out.chosen_guess == 0);
    REQUIRE(out.policy);
    REQUIRE(out.theta.size() == 4);
    CHECK(out.value == clipped_v(out.theta[0], fx.env.features, 0, 0));
    CHECK(*out.policy == greedy_policy(fx.env.features, out.theta));

    const SolveOutcome again = solve(fx.data, one, cfg, fx.env.features);
    CHECK(again.value == out.value);
    CHECK(*again.policy == *out.policy);

    // Optimism against the skip-optimal parameters when they are members.
    const SkipParams params(fx.alpha, 2);
    const Policy pi_g = skip_optimal_policy(fx.env.mdp, fx.env.features, fx.tg.guess, params, Policy::uniform(fx.env.mdp));
    const PolicyParams psi = fit_psi(fx.env.mdp, fx.env.features, pi_g);
    const auto covs = stage_covariances(fx.data, 3, cfg.lambda);
    const SkipRegression reg(fx.data, fx.env.features, fx.tg.guess, fx.alpha, covs);
    const MembershipReport m = membership(reg, psi.theta);
    if (m.passes(cfg.beta, cfg.theta_radius)) {
        CHECK(out.value >= clipped_v(psi.theta[0], fx.env.features, 0, 0) - 1e-9);
    }

    const Environment zero = test::zero_reward_env({1, 3, 3, 1}, 2);
    const Dataset zd = collect_dataset(zero.mdp, zero.features, Policy::uniform(zero.mdp), 100, 4);
    LearnerConfig zc = cfg;
    zc.theta_radius = 1.0;
    const std::vector<Guess> zg{Guess::zero(1, 3, d_zero(1), 0.0)};
    const SolveOutcome zo = solve(zd, zg, zc, zero.features);
    CHECK(!zo.all_rejected);
    // Anchors are zero; the most optimistic member lies on the ellipsoid
    // boundary, where the unit feature gives beta / sqrt(lambda + n).
    CHECK(zo.value == doctest::Approx(zc.beta / std::sqrt(zc.lambda + 100.0)).epsilon(1e-9));
    zc.beta = 1e-10;
    CHECK(solve(zd, zg, zc, zero.features).value <= 1e-10);
    REQUIRE(zo.policy);
    CHECK(*zo.policy == *solve(zd, zg, zc, zero.features).policy);
}

TEST_CASE("solve: rejection and fallback") {
    const Fixture fx = fixture(300);
    LearnerConfig cfg;
    cfg.alpha = fx.alpha;
    cfg.beta = 2.0;
    cfg.eps_bar = 1e-9;
    cfg.theta_radius = 50.0;
    const std::vector<Guess> guesses = guess_grid(fx.tg.guess, 0.3, 4, 1);
    SolveOutcome out = solve(fx.data, guesses, cfg, fx.env.features);
    CHECK(out.all_rejected);
    CHECK(!out.policy);
    REQUIRE(out.guesses.size() == 4);
    for (const auto& g : out.guesses) CHECK(!g.feasible);
    REQUIRE(apply_fallback(out, fx.env.features));
    CHECK(out.fallback);
    REQUIRE(out.policy);
    double best = 1e18;
    for (const auto& g : out.guesses) {
        if (g.empty_stage < 0) best = std::min(best, g.tightness_max);
    }
    CHECK(out.guesses[out.chosen_guess].tightness_max == best);
}

TEST_CASE("greedy policy breaks ties toward the lowest action") {
    const Environment env = test::zero_reward_env({1, 2, 1}, 3);
    const std::vector<Vector> theta(3, Vector::Constant(1, 0.5));
    const Policy pi = greedy_policy(env.features, theta);
    for (int k = 0; k < 2; ++k) {
        for (int s = 0; s < env.mdp.stage_size(k); ++s) CHECK(pi.prob(k, s, 0) == 1.0);
    }
}

TEST_CASE("derived constants") {
    const DerivedConstants a = derived_constants(2, 11, 1.2, 0.1, 1.0, 1.0, 0.0, 2.0, 1000);
    CHECK(a.alpha == doctest::Approx(1.2 / 144.0).epsilon(1e-15));
    CHECK(a.eta_bar == 0.0);
    CHECK(a.d0 == 16);
    CHECK(a.xi_bar == doctest::Approx(1.0 / (2.0 * std::sqrt(1000.0))));

    // H = 4, d = 2 and L2 chosen so that the inflated radius is 16.
    const double eps = 1.0;
    const double alpha = eps / 60.0;
    const double l2 = 16.0 / (8.0 * 16.0 * 16.0 / alpha + 1.0);
    const DerivedConstants b = derived_constants(2, 4, eps, 0.1, 1.0, l2, 0.0, 1.0, 100);
    CHECK(b.l2_bar == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(b.lambda == doctest::Approx(1.0).epsilon(1e-12));

    const DerivedConstants c = derived_constants(2, 4, eps, 0.1, 1.0, 1.0, 0.01, 1.0, 100);
    CHECK(c.eta_bar == doctest::Approx(0.01 * (10.0 * 16 * 16 / alpha + 1.0)));
    for (double v : {c.l2_bar, c.lambda, c.eps_check, c.beta_bar, c.beta, c.eps_bar, c.eps_tilde, c.log_cover}) {
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
    }
    CHECK_THROWS_AS(derived_constants(2, 4, -1.0, 0.1, 1.0, 1.0, 0.0, 1.0, 100), ContractError);
}

TEST_CASE("learner config validation") {
    LearnerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.grid_per_stage = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = LearnerConfig{};
    cfg.beta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}
