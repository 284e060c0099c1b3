#pragma once

#include <vector>

#include "skipq/linalg.hpp"

namespace skipq {

class StagedMdp;

/// Per-(stage, state, action) feature vectors. Stage k is stored as a
/// (|S_k| * |A|) x d matrix with row s * |A| + a.
class FeatureMap {
public:
    /// l1_bound < 0 means "use the largest feature norm".
    FeatureMap(int dim, int num_actions, std::vector<Matrix> stage_features, double l1_bound = -1.0);

    int dim() const { return dim_; }
    int num_actions() const { return num_actions_; }
    int num_stages() const { return static_cast<int>(phi_.size()); }
    int horizon() const { return num_stages() - 1; }
    int stage_size(int stage) const { return static_cast<int>(phi_.at(stage).rows()) / num_actions_; }
    double l1_bound() const { return l1_bound_; }

    auto phi(int stage, int state, int action) const {
        return phi_[stage].row(state * num_actions_ + action).transpose();
    }
    /// |A| x d block of the features of every action at one state.
    auto state_block(int stage, int state) const {
        return phi_[stage].middleRows(state * num_actions_, num_actions_);
    }
    const Matrix& stage_matrix(int stage) const { return phi_.at(stage); }

private:
    int dim_;
    int num_actions_;
    std::vector<Matrix> phi_;
    double l1_bound_;
};

/// Throws StructureError if stage counts, stage sizes or action counts differ.
void check_compatible(const StagedMdp& mdp, const FeatureMap& features);

}  // namespace skipq
