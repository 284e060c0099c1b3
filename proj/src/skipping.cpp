#include "skipq/skipping.hpp"

#include <cmath>
#include <string>

#include "skipq/error.hpp"

namespace skipq {

SkipParams::SkipParams(double alpha_, int dim_) : alpha(alpha_), dim(dim_) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
    if (dim < 1) throw ContractError("dimension must be >= 1");
}

double range_g(const Guess& guess, const FeatureMap& features, StateRef s) {
    if (s.stage < 1 || s.stage >= features.horizon()) {
        throw DomainError("range is only defined on interior stages; got stage " + std::to_string(s.stage));
    }
    if (s.index < 0 || s.index >= features.stage_size(s.stage)) throw DomainError("state index out of range");
    const auto block = features.state_block(s.stage, s.index);
    double best = 0.0;
    for (const auto& theta : guess.panel(s.stage)) {
        const Vector values = block * theta;
        best = std::max(best, values.maxCoeff() - values.minCoeff());
    }
    return best;
}

double omega_from_range(double range, const SkipParams& params) {
    const double scaled = std::sqrt(2.0 * params.dim) * range / params.alpha;
    if (scaled <= 1.0) return 1.0;
    if (scaled >= 2.0) return 0.0;
    return 2.0 - scaled;
}

double omega(const Guess& guess, const FeatureMap& features, StateRef s, const SkipParams& params) {
    if (s.stage <= 0 || s.stage >= features.horizon()) return 0.0;
    return omega_from_range(range_g(guess, features, s), params);
}

SkipModel::SkipModel(const Guess& guess, const FeatureMap& features, const SkipParams& params) {
    for (int k = 0; k < features.num_stages(); ++k) {
        Vector w = Vector::Zero(features.stage_size(k));
        Vector r = Vector::Zero(features.stage_size(k));
        if (k > 0 && k < features.horizon()) {
            for (int s = 0; s < features.stage_size(k); ++s) {
                r(s) = range_g(guess, features, {k, s});
                w(s) = omega_from_range(r(s), params);
            }
        }
        omega_.push_back(std::move(w));
        range_.push_back(std::move(r));
    }
}

StopDistribution stop_distribution(const SkipModel& model, const Trajectory& traj, int stage) {
    const int horizon = model.horizon();
    if (stage < 0 || stage >= horizon) throw DomainError("stop distribution needs a stage below the horizon");
    StopDistribution out;
    out.first = stage + 1;
    double survive = 1.0;
    for (int t = stage + 1; t <= horizon; ++t) {
        const double w = model.omega(t, traj.steps[t].state);
        out.probs.push_back(survive * (1.0 - w));
        survive *= w;
    }
    return out;
}

StopDistribution stop_distribution(const Guess& guess, const FeatureMap& features, const Trajectory& traj, int stage,
                                   const SkipParams& params) {
    return stop_distribution(SkipModel(guess, features, params), traj, stage);
}

void check_value_function(const std::vector<Vector>& f, int horizon) {
    if (static_cast<int>(f.size()) != horizon + 1) throw ContractError("value function needs H + 1 stages");
    const double h = static_cast<double>(horizon);
    for (int k = 0; k <= horizon; ++k) {
        if (!((f[k].array() >= 0.0).all() && (f[k].array() <= h).all())) {
            throw ContractError("value function leaves [0, H] at stage " + std::to_string(k));
        }
    }
    if (f[horizon].size() < 1 || f[horizon](0) != 0.0) {
        throw ContractError("value function must vanish at the terminal state");
    }
}

double skip_target(const SkipModel& model, const Trajectory& traj, int stage, const std::vector<Vector>& f) {
    check_value_function(f, model.horizon());
    const StopDistribution stop = stop_distribution(model, traj, stage);
    double total = 0.0;
    double rewards = 0.0;
    for (std::size_t i = 0; i < stop.probs.size(); ++i) {
        const int t = stop.first + static_cast<int>(i);
        rewards += traj.steps[t - 1].reward;
        if (stop.probs[i] == 0.0) continue;
        total += stop.probs[i] * (rewards + f[t](traj.steps[t].state));
    }
    return total;
}

double skip_target(const Guess& guess, const FeatureMap& features, const Trajectory& traj, int stage,
                   const std::vector<Vector>& f, const SkipParams& params) {
    return skip_target(SkipModel(guess, features, params), traj, stage, f);
}

}  // namespace skipq
