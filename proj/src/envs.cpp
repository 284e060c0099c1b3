#include "skipq/envs.hpp"

#include <cmath>
#include <string>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"

namespace skipq {

namespace {

Vector simplex_point(Rng& rng, int dim) {
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x(i) = -std::log(1.0 - rng.uniform());
    return x / x.sum();
}

}  // namespace

Environment gen_linear_mdp(int dim, int horizon, const std::vector<int>& stage_sizes, int num_actions,
                           std::uint64_t seed, RewardKind reward_kind, int max_rounds) {
    if (dim < 1) throw StructureError("feature dimension must be >= 1");
    if (horizon < 1 || static_cast<int>(stage_sizes.size()) != horizon + 1) {
        throw StructureError("stage_sizes must list H + 1 = " + std::to_string(horizon + 1) + " stages");
    }
    if (num_actions < 1) throw StructureError("need at least one action");

    std::string last_violation = "none";
    for (int round = 0; round < max_rounds; ++round) {
        Rng rng(derive_seed(seed, 0x11AE, static_cast<std::uint64_t>(round)));

        std::vector<Matrix> phi;
        for (int k = 0; k <= horizon; ++k) {
            Matrix block(stage_sizes[k] * num_actions, dim);
            for (Eigen::Index r = 0; r < block.rows(); ++r) block.row(r) = simplex_point(rng, dim).transpose();
            phi.push_back(std::move(block));
        }

        std::vector<std::vector<Matrix>> transitions(horizon);
        std::vector<Matrix> rewards;
        for (int k = 0; k < horizon; ++k) {
            Matrix mu(dim, stage_sizes[k + 1]);
            for (int i = 0; i < dim; ++i) mu.row(i) = simplex_point(rng, stage_sizes[k + 1]).transpose();
            Vector theta_r(dim);
            for (int i = 0; i < dim; ++i) theta_r(i) = rng.uniform();

            const Matrix p_all = phi[k] * mu;        // rows indexed by s * |A| + a
            const Vector r_all = phi[k] * theta_r;
            Matrix r(stage_sizes[k], num_actions);
            for (int a = 0; a < num_actions; ++a) {
                Matrix p(stage_sizes[k], stage_sizes[k + 1]);
                for (int s = 0; s < stage_sizes[k]; ++s) {
                    p.row(s) = p_all.row(s * num_actions + a);
                    // renormalise away floating-point drift; the mixture is exact in real arithmetic
                    p.row(s) /= p.row(s).sum();
                    r(s, a) = std::clamp(r_all(s * num_actions + a), 0.0, 1.0);
                }
                transitions[k].push_back(std::move(p));
            }
            rewards.push_back(std::move(r));
        }
        rewards.push_back(Matrix::Zero(1, num_actions));

        try {
            StagedMdp mdp(stage_sizes, num_actions, std::move(transitions), std::move(rewards), reward_kind);
            FeatureMap features(dim, num_actions, std::move(phi));
            return {std::move(mdp), std::move(features)};
        } catch (const StructureError& e) {
            last_violation = e.what();
        }
    }
    throw GenerationError("linear mdp generation failed after " + std::to_string(max_rounds) +
                          " rounds; last violation: " + last_violation);
}

PsiFitter::PsiFitter(const FeatureMap& features) : features_(&features) {
    for (int k = 0; k < features.num_stages(); ++k) {
        solvers_.emplace_back(features.stage_matrix(k));
    }
}

PolicyParams PsiFitter::fit(const std::vector<Matrix>& q) const {
    const FeatureMap& f = *features_;
    if (static_cast<int>(q.size()) != f.num_stages()) throw StructureError("q table has the wrong stage count");
    PolicyParams out;
    const int horizon = f.horizon();
    for (int k = 0; k <= horizon; ++k) {
        const int states = f.stage_size(k);
        if (q[k].rows() != states || q[k].cols() != f.num_actions()) {
            throw StructureError("q table does not match the feature map at stage " + std::to_string(k));
        }
        Vector y(states * f.num_actions());
        for (int s = 0; s < states; ++s) {
            for (int a = 0; a < f.num_actions(); ++a) y(s * f.num_actions() + a) = q[k](s, a);
        }
        Vector theta;
        if (k == horizon) {
            theta = Vector::Zero(f.dim());
        } else {
            theta = solvers_[k].solve(y);
            if (solvers_[k].rank() < f.dim()) out.rank_deficient = true;
        }
        const double residual = (f.stage_matrix(k) * theta - y).cwiseAbs().maxCoeff();
        out.stage_residuals.push_back(residual);
        out.residual = std::max(out.residual, residual);
        out.l2_bound = std::max(out.l2_bound, theta.norm());
        out.theta.push_back(std::move(theta));
    }
    return out;
}

PolicyParams fit_psi(const FeatureMap& features, const std::vector<Matrix>& q) {
    return PsiFitter(features).fit(q);
}

PolicyParams fit_psi(const StagedMdp& mdp, const FeatureMap& features, const Policy& policy) {
    check_compatible(mdp, features);
    return fit_psi(features, evaluate_policy(mdp, policy).q);
}

std::vector<Policy> all_deterministic_policies(const StagedMdp& mdp, std::uint64_t cap) {
    const std::uint64_t count = mdp.deterministic_policy_count();
    if (count > cap) {
        throw CapacityError(std::to_string(count) + " deterministic policies exceed the cap of " +
                            std::to_string(cap));
    }
    std::vector<std::vector<int>> digits(mdp.horizon());
    for (int k = 0; k < mdp.horizon(); ++k) digits[k].assign(mdp.stage_size(k), 0);
    std::vector<Policy> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        out.push_back(Policy::deterministic(mdp, digits));
        // mixed-radix increment
        for (int k = 0; k < mdp.horizon(); ++k) {
            bool carry = false;
            for (auto& d : digits[k]) {
                if (++d < mdp.num_actions()) {
                    carry = false;
                    break;
                }
                d = 0;
                carry = true;
            }
            if (!carry) break;
        }
    }
    return out;
}

std::vector<Policy> random_policies(const StagedMdp& mdp, std::size_t count, std::uint64_t seed) {
    std::vector<Policy> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, 0x9011C7, i));
        std::vector<Matrix> probs;
        for (int k = 0; k < mdp.num_stages(); ++k) {
            Matrix m(mdp.stage_size(k), mdp.num_actions());
            for (int s = 0; s < mdp.stage_size(k); ++s) m.row(s) = simplex_point(rng, mdp.num_actions()).transpose();
            probs.push_back(std::move(m));
        }
        out.emplace_back(std::move(probs));
    }
    return out;
}

std::vector<Policy> policy_sample(const StagedMdp& mdp, std::size_t size, std::uint64_t seed) {
    if (mdp.deterministic_policy_count() <= 10000) return all_deterministic_policies(mdp);
    return random_policies(mdp, size, seed);
}

MisspecEstimate estimate_misspecification(const StagedMdp& mdp, const FeatureMap& features,
                                          std::size_t policy_sample_size, std::uint64_t seed) {
    if (policy_sample_size < 1) throw ContractError("policy sample size must be >= 1");
    check_compatible(mdp, features);
    const auto policies = policy_sample(mdp, policy_sample_size, seed);
    const PsiFitter fitter(features);
    MisspecEstimate out;
    out.exhaustive_deterministic = mdp.deterministic_policy_count() <= 10000;
    out.policies = policies.size();
    for (const auto& pi : policies) {
        out.eta_hat = std::max(out.eta_hat, fitter.fit(evaluate_policy(mdp, pi).q).residual);
    }
    return out;
}

double true_range(const FeatureMap& features, std::span<const PolicyParams> params, StateRef s) {
    if (s.stage < 1 || s.stage >= features.horizon()) {
        throw DomainError("range is only defined on interior stages; got stage " + std::to_string(s.stage));
    }
    if (s.index < 0 || s.index >= features.stage_size(s.stage)) throw DomainError("state index out of range");
    const auto block = features.state_block(s.stage, s.index);
    double best = 0.0;
    for (const auto& p : params) {
        const Vector values = block * p.theta.at(s.stage);
        best = std::max(best, values.maxCoeff() - values.minCoeff());
    }
    return best;
}

double true_range(const StagedMdp& mdp, const FeatureMap& features, std::span<const Policy> policies,
                  StateRef s) {
    const PsiFitter fitter(features);
    std::vector<PolicyParams> params;
    params.reserve(policies.size());
    for (const auto& pi : policies) params.push_back(fitter.fit(evaluate_policy(mdp, pi).q));
    return true_range(features, params, s);
}

}  // namespace skipq
