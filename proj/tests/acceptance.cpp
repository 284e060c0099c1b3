// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/harness.hpp"
#include "skipq/learner.hpp"
#include "skipq/oracles.hpp"
#include "skipq/rng.hpp"
#include "skipq/serialize.hpp"
#include "skipq/skipping.hpp"

using namespace skipq;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Verdict {
    bool pass = false;
    std::string detail;
};

bool report(int id, const std::string& title, double limit_s, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < limit_s;
    const bool ok = v.pass && in_time;
    std::printf("[%s] criterion %d: %s | %s | %.2fs (limit %.0fs)\n", ok ? "PASS" : "FAIL", id, title.c_str(),
                v.detail.c_str(), secs, limit_s);
    std::fflush(stdout);
    return ok;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// Normal-equations ridge solve written out from the stopping-stage product.
Vector ridge_by_normal_equations(const Dataset& data, const FeatureMap& features, const Guess& guess, double alpha,
                                 int stage, const std::vector<Vector>& tail, double lambda) {
    const int d = features.dim(), horizon = features.horizon();
    const SkipParams params(alpha, d);
    Matrix a = lambda * Matrix::Identity(d, d);
    Vector b = Vector::Zero(d);
    for (const auto& traj : data.trajectories) {
        const Vector phi = features.phi(stage, traj.steps[stage].state, traj.steps[stage].action);
        double y = 0.0, survive = 1.0, rewards = traj.steps[stage].reward;
        for (int t = stage + 1; t <= horizon; ++t) {
            const int s = traj.steps[t].state;
            const double w = omega(guess, features, {t, s}, params);
            double value = 0.0;
            if (t < horizon) {
                const Vector q = Matrix(features.state_block(t, s)) * tail[t - stage - 1];
                value = std::clamp(q.maxCoeff(), 0.0, static_cast<double>(horizon));
            }
            y += survive * (1.0 - w) * (rewards + value);
            survive *= w;
            rewards += traj.steps[t].reward;
        }
        a += phi * phi.transpose();
        b += phi * y;
    }
    return a.fullPivLu().solve(b);
}

std::vector<Environment> suite_instances() {
    std::vector<Environment> out;
    for (std::uint64_t i = 0; i < 20; ++i) out.push_back(random_small_env(derive_seed(kSeed, 0xACC3, i)));
    return out;
}

}  // namespace

int main() {
    int failures = 0;
    const std::vector<Environment> instances = suite_instances();

    failures += !report(1, "lemma suites (lsq decomposition, elliptical potential, projection bound)", 10, [] {
        int violations = 0;
        double worst = std::numeric_limits<double>::infinity();
        for (const SlackReport& r :
             {check_lsq_decomposition(kSeed, 100), check_elliptical_potential(kSeed, 100), check_projection_bound(kSeed, 100)}) {
            violations += r.violations;
            worst = std::min(worst, r.worst_slack);
        }
        return Verdict{violations == 0 && worst >= -1e-9,
                       "violations=" + std::to_string(violations) + " worst_slack=" + fmt("%.3e", worst)};
    });

    failures += !report(2, "exact identities (perf diff, occupancy, anchor vs ridge)", 10, [] {
        double perf = 0.0, occ = 0.0, anchor = 0.0;
        for (std::uint64_t i = 0; i < 50; ++i) {
            const Environment env = random_small_env(derive_seed(kSeed, 0xACC2, i));
            const auto pols = random_policies(env.mdp, 2, derive_seed(kSeed, 0xACC2 + 1, i));
            perf = std::max(perf, check_perf_diff(env.mdp, pols[0], pols[1]));
            for (const auto& pi : pols) {
                for (const auto& nu : occupancy(env.mdp, pi).nu) occ = std::max(occ, std::abs(nu.sum() - 1.0));
            }
        }
        for (std::uint64_t i = 0; i < 10; ++i) {
            const Environment env = random_small_env(derive_seed(kSeed, 0xACC2 + 2, i));
            const TrueGuess tg = build_true_guess(env.mdp, env.features, policy_sample(env.mdp, 50, i));
            const double alpha = median_range_alpha(tg.guess, env.features);
            const Dataset data =
                collect_dataset(env.mdp, env.features, Policy::uniform(env.mdp), 300, derive_seed(kSeed, 0xACC2 + 3, i));
            const auto covs = stage_covariances(data, env.mdp.horizon(), 1.0);
            const SkipRegression reg(data, env.features, tg.guess, alpha, covs);
            Rng rng(derive_seed(kSeed, 0xACC2 + 4, i));
            const int h = env.mdp.horizon(), d = env.features.dim();
            std::vector<Vector> theta;
            for (int k = 0; k <= h; ++k) {
                Vector t(d);
                for (int j = 0; j < d; ++j) t(j) = k == h ? 0.0 : h * rng.normal();
                theta.push_back(t);
            }
            for (int k = 0; k < h; ++k) {
                const std::vector<Vector> tail(theta.begin() + k + 1, theta.end());
                const Vector ref = ridge_by_normal_equations(data, env.features, tg.guess, alpha, k, tail, 1.0);
                anchor = std::max(anchor, (reg.anchor(k, tail) - ref).cwiseAbs().maxCoeff());
            }
        }
        return Verdict{perf <= 1e-10 && occ <= 1e-10 && anchor <= 1e-10,
                       "perf_diff=" + fmt("%.2e", perf) + " occupancy=" + fmt("%.2e", occ) + " anchor=" + fmt("%.2e", anchor)};
    });

    failures += !report(3, "skip realizability under the true guess", 300, [&] {
        double worst = 0.0;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const Environment& env = instances[i];
            const TrueGuess tg = build_true_guess(env.mdp, env.features, policy_sample(env.mdp, 200, i));
            const SkipParams params(median_range_alpha(tg.guess, env.features), env.features.dim());
            const Policy behavior = Policy::uniform(env.mdp);
            Rng rng(derive_seed(kSeed, 0xACC4, i));
            const int h = env.mdp.horizon(), d = env.features.dim();
            for (int j = 0; j < 5; ++j) {
                std::vector<Vector> f;
                for (int k = 0; k <= h; ++k) {
                    Vector t(d);
                    for (int c = 0; c < d; ++c) t(c) = h * rng.normal();
                    f.push_back(k == h ? Vector::Zero(1) : clipped_v_stage(t, env.features, k));
                }
                for (int k = 0; k < h; ++k) {
                    worst = std::max(worst,
                                     check_skip_realizability(env.mdp, env.features, tg.guess, f, k, params, behavior).residual);
                }
            }
        }
        return Verdict{worst <= 1e-6, "sup_residual=" + fmt("%.3e", worst) + " over 20 instances x 5 f"};
    });

    failures += !report(4, "range bound over 200 sampled policies", 120, [&] {
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const Environment& env = instances[i];
            const auto pols = policy_sample(env.mdp, 200, derive_seed(kSeed, 0xACC5, i));
            const TrueGuess tg = build_true_guess(env.mdp, env.features, pols);
            worst = std::min(worst, check_range_bound(env.mdp, env.features, tg.guess, pols));
        }
        return Verdict{worst >= -1e-6, "min_slack=" + fmt("%.3e", worst)};
    });

    const ExperimentConfig config;  // d=2, stages (1,4,4,1), |A|=2, 16 guesses
    const Instance instance = prepare_instance(config);

    failures += !report(5, "membership and true-guess feasibility at n=5000", 600, [&] {
        const std::size_t n = 5000, seeds = 20;
        const Calibration cal = calibrate(instance, config, n);
        const LearnerConfig learner = learner_for(instance, config, &cal);
        std::vector<ReplicateResult> rows(seeds);
        parallel_for(seeds, worker_count(), [&](std::size_t r) {
            rows[r] = run_replicate(instance, learner, n, derive_seed(config.sweep.seed, 0x5EED, r), false).row;
        });
        int member = 0, feasible = 0, joint = 0;
        for (const auto& r : rows) {
            member += r.membership_pass;
            feasible += r.true_guess_feasible;
            joint += r.membership_pass && r.true_guess_feasible;
        }
        const double rate = static_cast<double>(joint) / seeds;
        return Verdict{rate >= 0.9, "joint=" + std::to_string(joint) + "/20 membership=" + std::to_string(member) +
                                        " feasible=" + std::to_string(feasible) + " beta=" + fmt("%.4g", cal.beta) +
                                        " eps_bar=" + fmt("%.4g", cal.eps_bar)};
    });

    failures += !report(6, "median gap non-increasing over n in {100,1000,10000}, <= 0.15 v* at 10000", 1800, [&] {
        const ExperimentResult res = sweep(instance, config);
        const auto& agg = res.aggregates;
        bool monotone = agg.size() == 3;
        for (std::size_t i = 1; i < agg.size(); ++i) monotone = monotone && agg[i].median <= agg[i - 1].median;
        const bool small = !agg.empty() && agg.back().median <= 0.15 * res.v_star;
        std::string medians;
        for (const auto& a : agg) medians += " n=" + std::to_string(a.n) + ":" + fmt("%.4g", a.median);
        return Verdict{monotone && small, "medians" + medians + " v*=" + fmt("%.4g", res.v_star)};
    });

    failures += !report(7, "concentrability DP vs enumeration", 60, [] {
        double worst = 0.0;
        for (std::uint64_t i = 0; i < 10; ++i) {
            const Environment env = random_small_env(derive_seed(kSeed, 0xACC7, i), 4096);
            const Policy behavior = random_policies(env.mdp, 1, derive_seed(kSeed, 0xACC7 + 1, i)).front();
            const ConcReport dp = concentrability(env.mdp, behavior);
            const ConcReport brute = concentrability_brute_force(env.mdp, behavior, 4096);
            worst = std::max(worst, std::abs(dp.c_conc - brute.c_conc));
        }
        return Verdict{worst <= 1e-10, "max_abs_diff=" + fmt("%.3e", worst) + " over 10 instances"};
    });

    failures += !report(8, "determinism and dataset persistence", 60, [] {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / ("skipq_accept_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        ExperimentConfig c;
        c.sweep.n_values = {100, 400};
        c.sweep.replicates = 4;
        c.calibration.replicates = 8;
        write_result(sweep(c), c, dir / "a");
        write_result(sweep(c), c, dir / "b");
        bool same = true;
        for (const char* f : {"results.csv", "results.json", "summary.csv", "gap_vs_n.svg"}) {
            same = same && read_text(dir / "a" / f) == read_text(dir / "b" / f);
        }
        const Environment env = gen_linear_mdp(2, 3, {1, 4, 4, 1}, 2, 5, RewardKind::bernoulli_mean);
        bool lossless = true;
        for (std::uint64_t s = 0; s < 5; ++s) {
            Dataset d = collect_dataset(env.mdp, env.features, Policy::uniform(env.mdp), 200, s);
            Rng rng(s);
            for (auto& t : d.trajectories) t.steps[0].reward = rng.uniform();
            const fs::path p = dir / ("d" + std::to_string(s) + ".jsonl");
            save_dataset(d, p);
            lossless = lossless && load_dataset(p) == d;
        }
        fs::remove_all(dir);
        return Verdict{same && lossless, std::string("byte_identical=") + (same ? "yes" : "no") +
                                             " round_trip=" + (lossless ? "yes" : "no")};
    });

    std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
