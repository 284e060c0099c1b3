#include "skipq/mdp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"

namespace skipq {

namespace {

constexpr double kRowSumTol = 1e-12;

std::string where(int k, int s, int a) {
    return "stage " + std::to_string(k) + ", state " + std::to_string(s) + ", action " + std::to_string(a);
}

void check_simplex_rows(const Matrix& m, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if ((m.row(r).array() < 0.0).any() || !m.row(r).allFinite()) {
            throw StructureError(what + ": row " + std::to_string(r) + " has a negative or non-finite entry");
        }
        if (std::abs(m.row(r).sum() - 1.0) > kRowSumTol) {
            throw StructureError(what + ": row " + std::to_string(r) + " sums to " +
                                 std::to_string(m.row(r).sum()));
        }
    }
}

}  // namespace

StagedMdp::StagedMdp(std::vector<int> stage_sizes, int num_actions,
                     std::vector<std::vector<Matrix>> transitions, std::vector<Matrix> reward_means,
                     RewardKind reward_kind)
    : stage_sizes_(std::move(stage_sizes)),
      num_actions_(num_actions),
      transitions_(std::move(transitions)),
      reward_means_(std::move(reward_means)),
      reward_kind_(reward_kind) {
    validate_mdp(*this);
}

void validate_mdp(const StagedMdp& mdp) {
    const auto& sizes = mdp.stage_sizes();
    if (sizes.size() < 2) throw StructureError("an mdp needs a horizon of at least 1");
    if (sizes.front() != 1) throw StructureError("the start stage must hold exactly one state");
    if (sizes.back() != 1) throw StructureError("the terminal stage must hold exactly one state");
    for (int s : sizes) {
        if (s < 1) throw StructureError("every stage needs at least one state");
    }
    if (mdp.num_actions() < 1) throw StructureError("an mdp needs at least one action");
    const int horizon = mdp.horizon();
    for (int k = 0; k <= horizon; ++k) {
        const Matrix& r = mdp.reward_means(k);
        if (r.rows() != sizes[k] || r.cols() != mdp.num_actions()) {
            throw StructureError("reward table of stage " + std::to_string(k) + " has the wrong shape");
        }
        for (int s = 0; s < sizes[k]; ++s) {
            for (int a = 0; a < mdp.num_actions(); ++a) {
                const double v = r(s, a);
                if (!(v >= 0.0 && v <= 1.0)) {
                    throw StructureError("reward mean outside [0,1] at " + where(k, s, a));
                }
                if (k == horizon && v != 0.0) {
                    throw StructureError("terminal state must give zero reward (" + where(k, s, a) + ")");
                }
            }
        }
    }
    for (int k = 0; k < horizon; ++k) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const Matrix& p = mdp.transition(k, a);
            if (p.rows() != sizes[k] || p.cols() != sizes[k + 1]) {
                throw StructureError("transition block of stage " + std::to_string(k) + ", action " +
                                     std::to_string(a) + " has the wrong shape");
            }
            check_simplex_rows(p, "transition of stage " + std::to_string(k) + ", action " + std::to_string(a));
        }
    }
}

std::uint64_t StagedMdp::deterministic_policy_count() const {
    std::uint64_t count = 1;
    const auto limit = std::numeric_limits<std::uint64_t>::max();
    for (int k = 0; k < horizon(); ++k) {
        for (int s = 0; s < stage_sizes_[k]; ++s) {
            if (count > limit / static_cast<std::uint64_t>(num_actions_)) return limit;
            count *= static_cast<std::uint64_t>(num_actions_);
        }
    }
    return count;
}

Policy::Policy(std::vector<Matrix> probs) : probs_(std::move(probs)) {
    for (std::size_t k = 0; k < probs_.size(); ++k) {
        check_simplex_rows(probs_[k], "policy stage " + std::to_string(k));
    }
}

Policy Policy::uniform(const StagedMdp& mdp) {
    std::vector<Matrix> probs;
    for (int k = 0; k < mdp.num_stages(); ++k) {
        probs.push_back(Matrix::Constant(mdp.stage_size(k), mdp.num_actions(), 1.0 / mdp.num_actions()));
    }
    return Policy(std::move(probs));
}

Policy Policy::deterministic(const StagedMdp& mdp, const std::vector<std::vector<int>>& actions) {
    if (static_cast<int>(actions.size()) < mdp.horizon()) {
        throw StructureError("deterministic policy needs actions for every non-terminal stage");
    }
    std::vector<Matrix> probs;
    for (int k = 0; k < mdp.num_stages(); ++k) {
        Matrix m = Matrix::Zero(mdp.stage_size(k), mdp.num_actions());
        for (int s = 0; s < mdp.stage_size(k); ++s) {
            int a = 0;
            if (k < static_cast<int>(actions.size())) {
                if (static_cast<int>(actions[k].size()) != mdp.stage_size(k)) {
                    throw StructureError("deterministic policy has the wrong size at stage " + std::to_string(k));
                }
                a = actions[k][s];
            }
            if (a < 0 || a >= mdp.num_actions()) throw StructureError("action index out of range");
            m(s, a) = 1.0;
        }
        probs.push_back(std::move(m));
    }
    return Policy(std::move(probs));
}

int Policy::mode(int stage, int state) const {
    Eigen::Index best = 0;
    probs_.at(stage).row(state).maxCoeff(&best);
    return static_cast<int>(best);
}

bool operator==(const Policy& a, const Policy& b) {
    if (a.probs_.size() != b.probs_.size()) return false;
    for (std::size_t k = 0; k < a.probs_.size(); ++k) {
        if (a.probs_[k].rows() != b.probs_[k].rows() || a.probs_[k].cols() != b.probs_[k].cols()) return false;
        if (a.probs_[k] != b.probs_[k]) return false;
    }
    return true;
}

bool operator==(const Trajectory& a, const Trajectory& b) {
    if (a.steps != b.steps || a.features.size() != b.features.size()) return false;
    for (std::size_t k = 0; k < a.features.size(); ++k) {
        if (a.features[k].rows() != b.features[k].rows() || a.features[k].cols() != b.features[k].cols()) {
            return false;
        }
        if (a.features[k] != b.features[k]) return false;
    }
    return true;
}

void check_compatible(const StagedMdp& mdp, const Policy& policy) {
    if (policy.num_stages() != mdp.num_stages()) {
        throw StructureError("policy has " + std::to_string(policy.num_stages()) + " stages, mdp has " +
                             std::to_string(mdp.num_stages()));
    }
    for (int k = 0; k < mdp.num_stages(); ++k) {
        if (policy.stage(k).rows() != mdp.stage_size(k) || policy.stage(k).cols() != mdp.num_actions()) {
            throw StructureError("policy does not match the mdp at stage " + std::to_string(k));
        }
    }
}

ValueTables evaluate_policy(const StagedMdp& mdp, const Policy& policy) {
    check_compatible(mdp, policy);
    const int horizon = mdp.horizon();
    ValueTables out;
    out.q.resize(horizon + 1);
    out.v.resize(horizon + 1);
    out.q[horizon] = Matrix::Zero(1, mdp.num_actions());
    out.v[horizon] = Vector::Zero(1);
    for (int k = horizon - 1; k >= 0; --k) {
        Matrix q = mdp.reward_means(k);
        for (int a = 0; a < mdp.num_actions(); ++a) {
            q.col(a) += mdp.transition(k, a) * out.v[k + 1];
        }
        out.v[k] = (q.array() * policy.stage(k).array()).rowwise().sum();
        out.q[k] = std::move(q);
    }
    return out;
}

OptimalSolution optimal_policy(const StagedMdp& mdp) {
    const int horizon = mdp.horizon();
    ValueTables values;
    values.q.resize(horizon + 1);
    values.v.resize(horizon + 1);
    values.q[horizon] = Matrix::Zero(1, mdp.num_actions());
    values.v[horizon] = Vector::Zero(1);
    std::vector<std::vector<int>> actions(horizon);
    for (int k = horizon - 1; k >= 0; --k) {
        Matrix q = mdp.reward_means(k);
        for (int a = 0; a < mdp.num_actions(); ++a) {
            q.col(a) += mdp.transition(k, a) * values.v[k + 1];
        }
        Vector v(mdp.stage_size(k));
        actions[k].resize(mdp.stage_size(k));
        for (int s = 0; s < mdp.stage_size(k); ++s) {
            Eigen::Index best = 0;
            v(s) = q.row(s).maxCoeff(&best);  // first maximum on ties
            actions[k][s] = static_cast<int>(best);
        }
        values.v[k] = std::move(v);
        values.q[k] = std::move(q);
    }
    return {Policy::deterministic(mdp, actions), std::move(values)};
}

OccupancyMeasure occupancy(const StagedMdp& mdp, const Policy& policy) {
    check_compatible(mdp, policy);
    OccupancyMeasure out;
    Vector state_dist = Vector::Ones(1);
    for (int k = 0; k < mdp.horizon(); ++k) {
        Matrix nu = policy.stage(k).array().colwise() * state_dist.array();
        Vector next = Vector::Zero(mdp.stage_size(k + 1));
        for (int a = 0; a < mdp.num_actions(); ++a) {
            next += mdp.transition(k, a).transpose() * nu.col(a);
        }
        out.nu.push_back(std::move(nu));
        state_dist = std::move(next);
    }
    return out;
}

Trajectory sample_trajectory(const StagedMdp& mdp, const Policy& policy, std::uint64_t seed,
                             const FeatureMap* features) {
    check_compatible(mdp, policy);
    if (features != nullptr) check_compatible(mdp, *features);
    Rng rng(seed);
    Trajectory traj;
    traj.steps.reserve(mdp.num_stages());
    int state = 0;
    for (int k = 0; k <= mdp.horizon(); ++k) {
        const Vector pi = policy.stage(k).row(state).transpose();
        const int action = rng.categorical({pi.data(), static_cast<std::size_t>(pi.size())});
        double reward = mdp.reward_mean(k, state, action);
        if (mdp.reward_kind() == RewardKind::bernoulli_mean) reward = rng.bernoulli(reward) ? 1.0 : 0.0;
        traj.steps.push_back({state, action, reward});
        if (features != nullptr) traj.features.push_back(features->state_block(k, state));
        if (k < mdp.horizon()) {
            const Vector p = mdp.next_state_probs(k, state, action).transpose();
            state = rng.categorical({p.data(), static_cast<std::size_t>(p.size())});
        }
    }
    return traj;
}

Dataset collect_dataset(const StagedMdp& mdp, const FeatureMap& features, const Policy& behavior,
                        std::size_t n, std::uint64_t seed) {
    Dataset data;
    data.trajectories.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        data.trajectories.push_back(sample_trajectory(mdp, behavior, derive_seed(seed, 0, j), &features));
    }
    return data;
}

}  // namespace skipq
