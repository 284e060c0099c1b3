#include "skipq/oracles.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"

namespace skipq {

namespace {

constexpr double kViolation = -1e-9;

void record(SlackReport& report, double slack) {
    if (report.draws == 0 || slack < report.worst_slack) report.worst_slack = slack;
    ++report.draws;
    if (slack < kViolation) ++report.violations;
}

int uniform_int(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

Vector gaussian(Rng& rng, int dim) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    return v;
}

void update_ratio(ConcReport& report, int k, int s, int a, double reach, double mu) {
    if (reach <= 0.0) return;
    if (mu <= 0.0) {
        if (!report.infinite) {
            report.infinite = true;
            report.c_conc = std::numeric_limits<double>::infinity();
            report.stage = k;
            report.state = s;
            report.action = a;
        }
        report.stage_max[k] = std::numeric_limits<double>::infinity();
        return;
    }
    const double ratio = reach / mu;
    report.stage_max[k] = std::max(report.stage_max[k], ratio);
    if (!report.infinite && ratio > report.c_conc) {
        report.c_conc = ratio;
        report.stage = k;
        report.state = s;
        report.action = a;
    }
}

}  // namespace

double max_reach_probability(const StagedMdp& mdp, int stage, int state) {
    if (stage < 0 || stage > mdp.horizon()) throw DomainError("stage out of range");
    if (state < 0 || state >= mdp.stage_size(stage)) throw DomainError("state out of range");
    Vector reach = Vector::Zero(mdp.stage_size(stage));
    reach(state) = 1.0;
    for (int t = stage - 1; t >= 0; --t) {
        Vector best = Vector::Zero(mdp.stage_size(t));
        for (int a = 0; a < mdp.num_actions(); ++a) best = best.cwiseMax(mdp.transition(t, a) * reach);
        reach = std::move(best);
    }
    return reach(0);
}

ConcReport concentrability(const StagedMdp& mdp, const Policy& behavior) {
    const OccupancyMeasure mu = occupancy(mdp, behavior);
    ConcReport report;
    report.stage_max.assign(mdp.horizon(), 0.0);
    for (int k = 0; k < mdp.horizon(); ++k) {
        for (int s = 0; s < mdp.stage_size(k); ++s) {
            const double reach = max_reach_probability(mdp, k, s);
            for (int a = 0; a < mdp.num_actions(); ++a) update_ratio(report, k, s, a, reach, mu.nu[k](s, a));
        }
    }
    return report;
}

ConcReport concentrability_brute_force(const StagedMdp& mdp, const Policy& behavior, std::uint64_t cap) {
    const OccupancyMeasure mu = occupancy(mdp, behavior);
    ConcReport report;
    report.stage_max.assign(mdp.horizon(), 0.0);
    for (const auto& pi : all_deterministic_policies(mdp, cap)) {
        const OccupancyMeasure nu = occupancy(mdp, pi);
        for (int k = 0; k < mdp.horizon(); ++k) {
            for (int s = 0; s < mdp.stage_size(k); ++s) {
                for (int a = 0; a < mdp.num_actions(); ++a) update_ratio(report, k, s, a, nu.nu[k](s, a), mu.nu[k](s, a));
            }
        }
    }
    return report;
}

SlackReport check_lsq_decomposition(std::uint64_t seed, int draws) {
    SlackReport report;
    for (int i = 0; i < draws; ++i) {
        Rng rng(derive_seed(seed, 0x15D, static_cast<std::uint64_t>(i)));
        const int d = uniform_int(rng, 1, 5);
        const int n = uniform_int(rng, 1, 50);
        const double lambda = std::pow(10.0, -3.0 + 4.0 * rng.uniform());
        const double delta_scale = rng.uniform();
        const double noise_scale = 2.0 * rng.uniform();
        const Vector theta_star = gaussian(rng, d) * (3.0 * rng.uniform());
        Matrix v = lambda * Matrix::Identity(d, d);
        Vector rhs = Vector::Zero(d);
        Vector iota = Vector::Zero(d);
        double delta_inf = 0.0;
        for (int k = 0; k < n; ++k) {
            const Vector a = gaussian(rng, d);
            const double gamma = noise_scale * rng.normal();
            const double delta = delta_scale * (2.0 * rng.uniform() - 1.0);
            delta_inf = std::max(delta_inf, std::abs(delta));
            const double y = a.dot(theta_star) + gamma + delta;
            v += a * a.transpose();
            rhs += a * y;
            iota += a * gamma;
        }
        const Eigen::LLT<Matrix> llt(v);
        const Vector theta_hat = llt.solve(rhs);
        const double lhs = weighted_norm(theta_hat - theta_star, v);
        const double bound = std::sqrt(lambda) * theta_star.norm() + delta_inf * std::sqrt(static_cast<double>(n)) +
                             std::sqrt(std::max(0.0, iota.dot(llt.solve(iota))));
        record(report, bound - lhs);
    }
    return report;
}

SlackReport check_elliptical_potential(std::uint64_t seed, int draws) {
    SlackReport report;
    for (int i = 0; i < draws; ++i) {
        Rng rng(derive_seed(seed, 0xE111, static_cast<std::uint64_t>(i)));
        const int d = uniform_int(rng, 1, 5);
        const int n = uniform_int(rng, 1, 200);
        const double lambda = 0.1 + 4.9 * rng.uniform();
        const double bound_l = 0.1 + 3.0 * rng.uniform();
        const bool zero_stream = i % 10 == 0;
        Matrix v = lambda * Matrix::Identity(d, d);
        double lhs = 0.0;
        for (int t = 0; t < n; ++t) {
            Vector a = Vector::Zero(d);
            if (!zero_stream) {
                a = gaussian(rng, d);
                const double norm = a.norm();
                if (norm > 0.0) a *= bound_l * rng.uniform() / norm;
            }
            lhs += std::min(1.0, a.dot(v.llt().solve(a)));
            v += a * a.transpose();
        }
        const double rhs = 2.0 * d * std::log((d * lambda + n * bound_l * bound_l) / (d * lambda));
        record(report, rhs - lhs);
    }
    return report;
}

SlackReport check_projection_bound(std::uint64_t seed, int draws) {
    SlackReport report;
    for (int i = 0; i < draws; ++i) {
        Rng rng(derive_seed(seed, 0x9B0, static_cast<std::uint64_t>(i)));
        const int d = uniform_int(rng, 1, 5);
        const int n = uniform_int(rng, 1, 50);
        const double lambda = 1e-3 + 2.0 * rng.uniform();
        const double c = 0.1 + 3.0 * rng.uniform();
        Matrix v = lambda * Matrix::Identity(d, d);
        Vector sum = Vector::Zero(d);
        for (int k = 0; k < n; ++k) {
            const Vector a = gaussian(rng, d) * (0.1 + 2.0 * rng.uniform());
            const double b = c * (2.0 * rng.uniform() - 1.0);
            v += a * a.transpose();
            sum += a * b;
        }
        const double lhs = sum.dot(v.llt().solve(sum));
        record(report, n * c * c - lhs);
    }
    return report;
}

double check_perf_diff(const StagedMdp& mdp, const Policy& a, const Policy& b) {
    const ValueTables va = evaluate_policy(mdp, a);
    const ValueTables vb = evaluate_policy(mdp, b);
    const OccupancyMeasure nu = occupancy(mdp, a);
    double sum = 0.0;
    for (int k = 0; k < mdp.horizon(); ++k) {
        const Matrix adv = vb.q[k].colwise() - vb.v[k];
        sum += (nu.nu[k].array() * adv.array()).sum();
    }
    return std::abs(va.v[0](0) - vb.v[0](0) - sum);
}

double check_range_bound(const FeatureMap& features, const Guess& guess, std::span<const PolicyParams> params) {
    const double factor = std::sqrt(2.0 * features.dim());
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 1; k < features.horizon(); ++k) {
        for (int s = 0; s < features.stage_size(k); ++s) {
            const double slack = factor * range_g(guess, features, {k, s}) - true_range(features, params, {k, s});
            worst = std::min(worst, slack);
        }
    }
    return std::isfinite(worst) ? worst : 0.0;
}

double check_range_bound(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                         std::span<const Policy> policies) {
    check_compatible(mdp, features);
    const PsiFitter fitter(features);
    std::vector<PolicyParams> params;
    params.reserve(policies.size());
    for (const auto& pi : policies) params.push_back(fitter.fit(evaluate_policy(mdp, pi).q));
    return check_range_bound(features, guess, params);
}

RealizabilityReport check_skip_realizability(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                                             const std::vector<Vector>& f, int stage, const SkipParams& params,
                                             const Policy& behavior, std::uint64_t path_cap) {
    check_compatible(mdp, features);
    check_compatible(mdp, behavior);
    const int horizon = mdp.horizon();
    if (stage < 0 || stage >= horizon) throw DomainError("realizability is checked on stages 0..H-1");
    check_value_function(f, horizon);

    double paths = 1.0;
    for (int t = stage + 1; t < horizon; ++t) paths *= static_cast<double>(mdp.stage_size(t)) * mdp.num_actions();
    paths *= mdp.stage_size(horizon);
    if (paths > static_cast<double>(path_cap)) {
        throw CapacityError("exhaustive enumeration needs " + std::to_string(paths) + " paths per pair, cap is " +
                            std::to_string(path_cap));
    }

    const SkipModel model(guess, features, params);
    // Expected stopped return from reaching state x at stage t, by walking every continuation path.
    auto walk = [&](auto&& self, int t, int x) -> double {
        const double w = model.omega(t, x);
        double value = (1.0 - w) * f[t](x);
        if (w == 0.0 || t == horizon) return value;
        double cont = 0.0;
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double pa = behavior.prob(t, x, a);
            double next = 0.0;
            for (int y = 0; y < mdp.stage_size(t + 1); ++y) {
                const double p = mdp.next_state_probs(t, x, a)(y);
                if (p != 0.0) next += p * self(self, t + 1, y);
            }
            cont += pa * (mdp.reward_mean(t, x, a) + next);
        }
        return value + w * cont;
    };

    const int na = mdp.num_actions();
    Vector targets(mdp.stage_size(stage) * na);
    for (int s = 0; s < mdp.stage_size(stage); ++s) {
        for (int a = 0; a < na; ++a) {
            double next = 0.0;
            for (int y = 0; y < mdp.stage_size(stage + 1); ++y) {
                const double p = mdp.next_state_probs(stage, s, a)(y);
                if (p != 0.0) next += p * walk(walk, stage + 1, y);
            }
            targets(s * na + a) = mdp.reward_mean(stage, s, a) + next;
        }
    }
    const Matrix& phi = features.stage_matrix(stage);
    RealizabilityReport report;
    report.paths = static_cast<std::uint64_t>(paths);
    report.theta = phi.completeOrthogonalDecomposition().solve(targets);
    report.residual = (phi * report.theta - targets).cwiseAbs().maxCoeff();
    return report;
}

double suboptimality(const StagedMdp& mdp, const Policy& policy) {
    const OptimalSolution opt = optimal_policy(mdp);
    return opt.values.v[0](0) - evaluate_policy(mdp, policy).v[0](0);
}

Policy skip_optimal_policy(const StagedMdp& mdp, const FeatureMap& features, const Guess& guess,
                           const SkipParams& params, const Policy& behavior) {
    check_compatible(mdp, features);
    check_compatible(mdp, behavior);
    const SkipModel model(guess, features, params);
    const int horizon = mdp.horizon();
    std::vector<Matrix> probs(horizon + 1);
    Matrix terminal = Matrix::Zero(1, mdp.num_actions());
    terminal(0, 0) = 1.0;
    probs[horizon] = terminal;
    Vector v_next = Vector::Zero(1);
    for (int k = horizon - 1; k >= 0; --k) {
        Matrix q = mdp.reward_means(k);
        for (int a = 0; a < mdp.num_actions(); ++a) q.col(a) += mdp.transition(k, a) * v_next;
        Matrix pi(mdp.stage_size(k), mdp.num_actions());
        Vector v(mdp.stage_size(k));
        for (int s = 0; s < mdp.stage_size(k); ++s) {
            Eigen::Index greedy = 0;
            q.row(s).maxCoeff(&greedy);
            const double w = model.omega(k, s);
            pi.row(s) = w * behavior.stage(k).row(s);
            pi(s, greedy) += 1.0 - w;
            v(s) = pi.row(s).dot(q.row(s));
        }
        probs[k] = std::move(pi);
        v_next = std::move(v);
    }
    return Policy(std::move(probs));
}

MembershipReport membership(const SkipRegression& regression, std::span<const Vector> psi) {
    const int horizon = regression.horizon();
    if (static_cast<int>(psi.size()) != horizon + 1) throw StructureError("need one parameter per stage");
    MembershipReport report;
    for (int k = 0; k < horizon; ++k) {
        const Vector anchor = regression.anchor(k, psi.subspan(k + 1));
        const double dist = regression.covariance(k).distance(psi[k], anchor);
        report.distances.push_back(dist);
        report.norms.push_back(psi[k].norm());
        report.max_distance = std::max(report.max_distance, dist);
        report.max_norm = std::max(report.max_norm, psi[k].norm());
    }
    return report;
}

}  // namespace skipq
