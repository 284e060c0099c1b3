#pragma once

// Small hand-built instances shared by the unit suites.

#include <vector>

#include "skipq/envs.hpp"
#include "skipq/mdp.hpp"

namespace skipq::test {

inline Matrix row(std::initializer_list<double> values) {
    Matrix m(1, static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) m(0, i++) = v;
    return m;
}

/// One state per stage; rewards[k] holds the per-action means of stage k < H.
inline StagedMdp single_state_mdp(const std::vector<std::vector<double>>& rewards, int num_actions) {
    const int horizon = static_cast<int>(rewards.size());
    std::vector<int> sizes(horizon + 1, 1);
    std::vector<std::vector<Matrix>> trans(horizon, std::vector<Matrix>(num_actions, Matrix::Ones(1, 1)));
    std::vector<Matrix> r;
    for (const auto& stage : rewards) {
        Matrix m(1, num_actions);
        for (int a = 0; a < num_actions; ++a) m(0, a) = stage.at(a);
        r.push_back(m);
    }
    r.push_back(Matrix::Zero(1, num_actions));
    return StagedMdp(sizes, num_actions, trans, r);
}

/// Zero-reward instance with all-ones one-dimensional features.
inline Environment zero_reward_env(const std::vector<int>& sizes, int num_actions) {
    const int horizon = static_cast<int>(sizes.size()) - 1;
    std::vector<std::vector<Matrix>> trans;
    std::vector<Matrix> r;
    std::vector<Matrix> phi;
    for (int k = 0; k <= horizon; ++k) {
        r.push_back(Matrix::Zero(sizes[k], num_actions));
        phi.push_back(Matrix::Ones(sizes[k] * num_actions, 1));
        if (k < horizon) {
            trans.emplace_back(num_actions,
                               Matrix::Constant(sizes[k], sizes[k + 1], 1.0 / static_cast<double>(sizes[k + 1])));
        }
    }
    return {StagedMdp(sizes, num_actions, trans, r), FeatureMap(1, num_actions, phi)};
}

/// Stages (1, 2, 1), two actions. Action a at the start leads to state a of
/// stage 1. Start rewards (0.1, 0.5); stage-1 rewards (1, 0.3) in state 0 and
/// (0.2, 0.1) in state 1. The optimal policy takes action 0 twice: v* = 1.1.
inline StagedMdp chain_mdp() {
    std::vector<std::vector<Matrix>> trans(2);
    Matrix to0(1, 2), to1(1, 2);
    to0 << 1.0, 0.0;
    to1 << 0.0, 1.0;
    trans[0] = {to0, to1};
    trans[1] = {Matrix::Ones(2, 1), Matrix::Ones(2, 1)};
    Matrix r0(1, 2), r1(2, 2);
    r0 << 0.1, 0.5;
    r1 << 1.0, 0.3, 0.2, 0.1;
    return StagedMdp({1, 2, 1}, 2, trans, {r0, r1, Matrix::Zero(1, 2)});
}

}  // namespace skipq::test
