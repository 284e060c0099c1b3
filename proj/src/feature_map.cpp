#include "skipq/feature_map.hpp"

#include <string>

#include "skipq/error.hpp"
#include "skipq/mdp.hpp"

namespace skipq {

FeatureMap::FeatureMap(int dim, int num_actions, std::vector<Matrix> stage_features, double l1_bound)
    : dim_(dim), num_actions_(num_actions), phi_(std::move(stage_features)), l1_bound_(l1_bound) {
    if (dim_ < 1) throw StructureError("feature dimension must be >= 1");
    if (num_actions_ < 1) throw StructureError("feature map needs at least one action");
    if (phi_.empty()) throw StructureError("feature map has no stages");
    double largest = 0.0;
    for (std::size_t k = 0; k < phi_.size(); ++k) {
        const Matrix& m = phi_[k];
        if (m.cols() != dim_ || m.rows() == 0 || m.rows() % num_actions_ != 0) {
            throw StructureError("feature block of stage " + std::to_string(k) + " has shape " +
                                 std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
        if (!m.allFinite()) throw StructureError("non-finite feature at stage " + std::to_string(k));
        largest = std::max(largest, m.rowwise().norm().maxCoeff());
    }
    if (l1_bound_ < 0.0) {
        l1_bound_ = largest;
    } else if (largest > l1_bound_ + 1e-12) {
        throw StructureError("feature norm " + std::to_string(largest) + " exceeds bound " +
                             std::to_string(l1_bound_));
    }
}

void check_compatible(const StagedMdp& mdp, const FeatureMap& features) {
    if (features.num_stages() != mdp.num_stages()) {
        throw StructureError("feature map has " + std::to_string(features.num_stages()) +
                             " stages, mdp has " + std::to_string(mdp.num_stages()));
    }
    if (features.num_actions() != mdp.num_actions()) {
        throw StructureError("feature map and mdp disagree on the action count");
    }
    for (int k = 0; k < mdp.num_stages(); ++k) {
        if (features.stage_size(k) != mdp.stage_size(k)) {
            throw StructureError("feature map and mdp disagree on the size of stage " + std::to_string(k));
        }
    }
}

}  // namespace skipq
