#include "skipq/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"

namespace skipq {

namespace {

double clip_h(double x, double h) { return std::clamp(x, 0.0, h); }

struct PairCount {
    int state;
    int action;
    double count;
};

// Visit counts of the (state, action) pairs recorded at one stage.
std::vector<PairCount> visit_counts(const Dataset& data, int stage, int num_actions) {
    std::vector<PairCount> out;
    std::vector<int> slot;
    for (const auto& traj : data.trajectories) {
        const Step& st = traj.steps.at(stage);
        const std::size_t key = static_cast<std::size_t>(st.state) * num_actions + st.action;
        if (key >= slot.size()) slot.resize(key + 1, -1);
        if (slot[key] < 0) {
            slot[key] = static_cast<int>(out.size());
            out.push_back({st.state, st.action, 0.0});
        }
        out[slot[key]].count += 1.0;
    }
    return out;
}

double tightness_from_counts(const std::vector<PairCount>& counts, std::size_t n, int stage,
                             std::span<const Vector> theta_set, const FeatureMap& features) {
    if (theta_set.empty()) throw ContractError("tightness needs a nonempty parameter set");
    const double h = static_cast<double>(features.horizon());
    double total = 0.0;
    for (const auto& pc : counts) {
        const auto phi = features.phi(stage, pc.state, pc.action);
        double lo = h;
        double hi = 0.0;
        for (const auto& theta : theta_set) {
            const double q = clip_h(phi.dot(theta), h);
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        total += pc.count * (hi - lo);
    }
    return total / static_cast<double>(n);
}

void require_features(const Dataset& data) {
    for (const auto& traj : data.trajectories) {
        if (traj.features.size() != traj.steps.size()) {
            throw ContractError("trajectory is missing recorded features");
        }
    }
}

}  // namespace

void LearnerConfig::validate() const {
    if (!(lambda > 0.0)) throw ContractError("lambda must be positive");
    if (!(beta > 0.0)) throw ContractError("beta must be positive");
    if (!(eps_bar > 0.0)) throw ContractError("eps_bar must be positive");
    if (!(theta_radius > 0.0)) throw ContractError("theta_radius must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
    if (grid_per_stage < 1) throw ContractError("grid_per_stage must be >= 1");
    if (combo_cap < 1) throw ContractError("combo_cap must be >= 1");
    if (!(net_fraction > 0.0)) throw ContractError("net_fraction must be positive");
}

DerivedConstants derived_constants(int dim, int horizon, double eps, double delta, double l1, double l2, double eta,
                                   double c_conc, double n) {
    if (dim < 1 || horizon < 1 || !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) || !(l1 > 0.0) || !(l2 > 0.0) ||
        !(eta >= 0.0) || !(c_conc >= 1.0) || !(n >= 1.0)) {
        throw ContractError("derived constants need positive inputs");
    }
    DerivedConstants c;
    const double d = dim;
    const double h = horizon;
    const double lg = l2;
    const double sn = std::sqrt(n);
    const double h32d = std::pow(h, 1.5) * d;
    c.alpha = eps / (12.0 * (h + 1.0));
    c.d0 = d_zero(dim);
    const double d0 = c.d0;
    c.l2_bar = l2 * (8.0 * h * h * d0 / c.alpha + 1.0);
    const double sqrt_lambda = h32d / c.l2_bar;
    c.lambda = sqrt_lambda * sqrt_lambda;
    const double lam = c.lambda;
    c.eta_bar = eta * (10.0 * h * h * d0 / c.alpha + 1.0);

    c.eps_check = std::sqrt(d) / sn +
                  std::sqrt(d * d * std::log1p(16.0 * n * l1 * l1 * std::pow(c.l2_bar, 3)) + std::log(3.0 * h / delta)) /
                      sn +
                  std::sqrt(2.0 * d / n * std::log((d * lam + n * l1 * l1) / (d * lam)));

    c.beta_bar = h * std::sqrt(2.0 * d * h * (d0 + 1.0) *
                                   std::log1p(28.0 * std::sqrt(2.0 * d) * h * h * lg * c.l2_bar * l1 / c.alpha) +
                               d * std::log(lam + n * l1 * l1 / d) - d * std::log(lam) + std::log(3.0 * h / delta)) +
                 1.0;
    c.beta = h32d + c.eta_bar * sn + c.beta_bar;

    const double cover_inner = 96.0 * std::sqrt(2.0 * d) * h * h * l1 * lg / c.alpha * sn * l1 * c.l2_bar / h32d;
    c.eps_bar = h / sn * std::sqrt(d * h * h * d0 * std::log1p(sn * cover_inner) + std::log(6.0 * h / delta)) +
                1.0 / sn + h * c.eta_bar + 4.0 * h * c_conc * c.eps_check * c.beta;
    c.eps_tilde = c_conc * (h / sn * std::sqrt(d * h * h * d0 * std::log1p(cover_inner) + std::log(6.0 * h / delta)) +
                            1.0 / sn + c.eps_bar);

    c.log_xi = -(std::log(24.0) + 0.5 * std::log(n) + 0.5 * std::log(2.0 * d) + 2.0 * std::log(h) + std::log(l1) -
                 std::log(c.alpha) + h * std::log(2.0 * sn * l1 * c.l2_bar / h32d));
    c.xi_bar = 1.0 / (2.0 * sn);
    const double t = std::log(2.0 * lg) - c.log_xi;  // log(2 L_G / xi)
    c.log_cover = d * h * d0 * (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
    return c;
}

double clipped_q(const Vector& theta, const FeatureMap& features, int stage, int state, int action) {
    return clip_h(features.phi(stage, state, action).dot(theta), features.horizon());
}

double clipped_v(const Vector& theta, const FeatureMap& features, int stage, int state) {
    const Vector q = features.state_block(stage, state) * theta;
    return clip_h(q.maxCoeff(), features.horizon());
}

Vector clipped_v_stage(const Vector& theta, const FeatureMap& features, int stage) {
    const Vector q = features.stage_matrix(stage) * theta;
    const int na = features.num_actions();
    const double h = features.horizon();
    Vector out(features.stage_size(stage));
    for (int s = 0; s < out.size(); ++s) out(s) = clip_h(q.segment(s * na, na).maxCoeff(), h);
    return out;
}

StageCovariance stage_covariance(const Dataset& data, int stage, double lambda) {
    if (!(lambda > 0.0)) throw ContractError("lambda must be positive");
    if (data.empty()) throw ContractError("covariance needs a nonempty dataset");
    require_features(data);
    const Eigen::Index dim = data.trajectories.front().features.at(stage).cols();
    StageCovariance out;
    out.x = lambda * Matrix::Identity(dim, dim);
    for (const auto& traj : data.trajectories) {
        const Vector phi = traj.features[stage].row(traj.steps[stage].action).transpose();
        out.x.noalias() += phi * phi.transpose();
    }
    out.llt.compute(out.x);
    out.chol_lower = out.llt.matrixL();
    return out;
}

std::vector<StageCovariance> stage_covariances(const Dataset& data, int horizon, double lambda) {
    std::vector<StageCovariance> out;
    for (int k = 0; k < horizon; ++k) out.push_back(stage_covariance(data, k, lambda));
    return out;
}

SkipRegression::SkipRegression(const Dataset& data, const FeatureMap& features, const Guess& guess, double alpha,
                               std::span<const StageCovariance> covariances)
    : features_(&features), cov_(covariances), horizon_(features.horizon()) {
    if (static_cast<int>(cov_.size()) != horizon_) throw StructureError("need one covariance per non-terminal stage");
    require_features(data);
    const SkipModel model(guess, features, SkipParams(alpha, features.dim()));
    const int dim = features.dim();
    for (int k = 0; k < horizon_; ++k) {
        Vector b = Vector::Zero(dim);
        std::vector<Matrix> m;
        for (int t = k + 1; t <= horizon_; ++t) m.push_back(Matrix::Zero(dim, features.stage_size(t)));
        for (const auto& traj : data.trajectories) {
            const auto phi = traj.features[k].row(traj.steps[k].action).transpose();
            const StopDistribution stop = stop_distribution(model, traj, k);
            double rewards = 0.0;
            double reward_part = 0.0;
            for (std::size_t i = 0; i < stop.probs.size(); ++i) {
                const int t = stop.first + static_cast<int>(i);
                rewards += traj.steps[t - 1].reward;
                const double p = stop.probs[i];
                if (p == 0.0) continue;
                reward_part += p * rewards;
                m[i].col(traj.steps[t].state) += p * phi;
            }
            b += reward_part * phi;
        }
        c_.push_back(cov_[k].llt.solve(b));
        std::vector<Matrix> w;
        for (auto& mt : m) w.push_back(cov_[k].llt.solve(mt));
        w_.push_back(std::move(w));
    }
}

Vector SkipRegression::anchor_from_values(int stage, std::span<const Vector> vbar) const {
    Vector out = c_.at(stage);
    for (std::size_t i = 0; i < vbar.size() && static_cast<int>(i) < horizon_ - stage - 1; ++i) {
        out.noalias() += w_[stage][i] * vbar[i];
    }
    return out;
}

Vector SkipRegression::anchor(int stage, std::span<const Vector> tail) const {
    if (stage < 0 || stage >= horizon_) throw DomainError("anchors exist for stages 0..H-1");
    if (static_cast<int>(tail.size()) < horizon_ - stage - 1) throw StructureError("tail is too short");
    std::vector<Vector> vbar;
    for (int t = stage + 1; t < horizon_; ++t) vbar.push_back(clipped_v_stage(tail[t - stage - 1], *features_, t));
    return anchor_from_values(stage, vbar);
}

Vector lstsq_anchor(const Dataset& data, const FeatureMap& features, int stage, const Guess& guess,
                    std::span<const Vector> theta_tail, const LearnerConfig& config) {
    const int horizon = features.horizon();
    if (stage < 0 || stage >= horizon) throw DomainError("anchors exist for stages 0..H-1");
    require_features(data);
    std::vector<Vector> f;
    for (int t = 0; t <= horizon; ++t) {
        if (t <= stage || t == horizon) {
            f.push_back(Vector::Zero(features.stage_size(t)));
        } else {
            f.push_back(clipped_v_stage(theta_tail[t - stage - 1], features, t));
        }
    }
    const SkipModel model(guess, features, SkipParams(config.alpha, features.dim()));
    const int dim = features.dim();
    Matrix x = config.lambda * Matrix::Identity(dim, dim);
    Vector rhs = Vector::Zero(dim);
    for (const auto& traj : data.trajectories) {
        const Vector phi = traj.features[stage].row(traj.steps[stage].action).transpose();
        x += phi * phi.transpose();
        rhs += phi * skip_target(model, traj, stage, f);
    }
    return x.llt().solve(rhs);
}

double anchor_distance(const StageCovariance& cov, std::span<const Vector> anchors, const Vector& theta) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : anchors) best = std::min(best, cov.distance(theta, a));
    return best;
}

ConfidenceSets build_confidence_sets(const SkipRegression& regression, const FeatureMap& features,
                                     const LearnerConfig& config,
                                     const std::vector<std::vector<Vector>>* extra_candidates) {
    config.validate();
    const int horizon = regression.horizon();
    const int dim = features.dim();
    ConfidenceSets sets;
    sets.stages.resize(horizon + 1);
    sets.stages[horizon].anchors = {Vector::Zero(dim)};
    sets.stages[horizon].members = {Vector::Zero(dim)};
    sets.stages[horizon].combos_total = 1.0;
    sets.stages[horizon].combos_used = 1;

    std::vector<Vector> net = epsilon_net(config.beta, dim, config.net_fraction * config.beta).points;
    std::erase_if(net, [](const Vector& u) { return u.isZero(0.0); });
    const double radius = config.theta_radius;
    const double beta_tol = config.beta * (1.0 + 1e-12);

    for (int k = horizon - 1; k >= 0; --k) {
        StageSet& stage = sets.stages[k];
        const StageCovariance& cov = regression.covariance(k);

        // contributions of each member of each tail stage
        std::vector<std::vector<Vector>> contrib;
        std::vector<std::size_t> radix;
        for (int t = k + 1; t < horizon; ++t) {
            const Matrix& w = regression.weight(k, t);
            std::vector<Vector> per_member;
            for (const auto& theta : sets.stages[t].members) per_member.push_back(w * clipped_v_stage(theta, features, t));
            radix.push_back(per_member.size());
            contrib.push_back(std::move(per_member));
        }
        double total = 1.0;
        for (auto r : radix) total *= static_cast<double>(r);
        stage.combos_total = total;

        auto anchor_of = [&](const std::vector<std::size_t>& digits) {
            Vector a = regression.constant(k);
            for (std::size_t i = 0; i < digits.size(); ++i) a += contrib[i][digits[i]];
            return a;
        };
        std::vector<std::vector<std::size_t>> combos;
        std::vector<std::size_t> digits(radix.size(), 0);
        if (total <= static_cast<double>(config.combo_cap)) {
            for (;;) {
                combos.push_back(digits);
                std::size_t i = 0;
                while (i < digits.size() && ++digits[i] == radix[i]) {
                    digits[i] = 0;
                    ++i;
                }
                if (i == digits.size()) break;
            }
        } else {
            std::set<std::vector<std::size_t>> seen{digits};
            combos.push_back(digits);
            Rng rng(derive_seed(config.seed, 0xC0B0, static_cast<std::uint64_t>(k)));
            while (combos.size() < config.combo_cap) {
                for (std::size_t i = 0; i < digits.size(); ++i) {
                    digits[i] = static_cast<std::size_t>(rng.next_u64() % radix[i]);
                }
                if (seen.insert(digits).second) combos.push_back(digits);
            }
        }
        stage.combos_used = combos.size();

        for (const auto& combo : combos) {
            Vector a = anchor_of(combo);
            const bool duplicate = std::any_of(stage.anchors.begin(), stage.anchors.end(),
                                               [&](const Vector& b) { return b == a; });
            if (!duplicate) stage.anchors.push_back(std::move(a));
        }
        for (const auto& a : stage.anchors) {
            if (a.norm() <= radius) stage.members.push_back(a);
        }

        // whitened anchors: ||theta - a||_X = ||L'(theta - a)||
        const Matrix lt = cov.chol_lower.transpose();
        std::vector<Vector> white;
        for (const auto& a : stage.anchors) white.push_back(lt * a);
        auto min_distance = [&](const Vector& wtheta) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& wa : white) best = std::min(best, (wtheta - wa).norm());
            return best;
        };

        if (extra_candidates != nullptr && k < static_cast<int>(extra_candidates->size())) {
            for (const auto& theta : (*extra_candidates)[k]) {
                if (theta.norm() <= radius && min_distance(lt * theta) <= beta_tol) stage.members.push_back(theta);
            }
        }

        struct Candidate {
            double distance;
            Vector theta;
        };
        std::vector<Candidate> pool;
        const auto ltu = cov.chol_lower.transpose().triangularView<Eigen::Upper>();
        for (std::size_t ai = 0; ai < stage.anchors.size(); ++ai) {
            for (const auto& u : net) {
                const Vector wtheta = white[ai] + u;
                const double dist = min_distance(wtheta);
                if (dist > beta_tol) continue;
                Vector theta = ltu.solve(wtheta);
                if (theta.norm() > radius) continue;
                pool.push_back({dist, std::move(theta)});
            }
        }
        std::stable_sort(pool.begin(), pool.end(),
                         [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
        for (std::size_t i = 0; i < pool.size() && i < config.grid_per_stage; ++i) {
            stage.members.push_back(std::move(pool[i].theta));
        }

        if (stage.members.empty()) {
            sets.empty_stage = k;
            break;
        }
    }
    return sets;
}

ConfidenceSets build_confidence_sets(const Dataset& data, const FeatureMap& features, const Guess& guess,
                                     const LearnerConfig& config) {
    const auto covs = stage_covariances(data, features.horizon(), config.lambda);
    const SkipRegression regression(data, features, guess, config.alpha, covs);
    return build_confidence_sets(regression, features, config);
}

double tightness(const Dataset& data, int stage, std::span<const Vector> theta_set, const FeatureMap& features) {
    if (data.empty()) throw ContractError("tightness needs a nonempty dataset");
    return tightness_from_counts(visit_counts(data, stage, features.num_actions()), data.size(), stage, theta_set,
                                 features);
}

Policy greedy_policy(const FeatureMap& features, std::span<const Vector> theta) {
    if (static_cast<int>(theta.size()) != features.num_stages()) throw StructureError("need one parameter per stage");
    std::vector<Matrix> probs;
    const int na = features.num_actions();
    const double h = features.horizon();
    for (int k = 0; k < features.num_stages(); ++k) {
        const Vector q = features.stage_matrix(k) * theta[k];
        Matrix m = Matrix::Zero(features.stage_size(k), na);
        for (int s = 0; s < features.stage_size(k); ++s) {
            int best = 0;
            double best_q = clip_h(q(s * na), h);
            for (int a = 1; a < na; ++a) {
                const double v = clip_h(q(s * na + a), h);
                if (v > best_q) {
                    best_q = v;
                    best = a;
                }
            }
            m(s, best) = 1.0;
        }
        probs.push_back(std::move(m));
    }
    return Policy(std::move(probs));
}

SolveOutcome solve(const Dataset& data, std::span<const Guess> guesses, const LearnerConfig& config,
                   const FeatureMap& features) {
    config.validate();
    if (guesses.empty()) throw ContractError("solve needs at least one guess");
    if (data.empty()) throw ContractError("solve needs a nonempty dataset");
    const int horizon = features.horizon();
    const auto covs = stage_covariances(data, horizon, config.lambda);
    std::vector<std::vector<PairCount>> counts;
    for (int k = 0; k < horizon; ++k) counts.push_back(visit_counts(data, k, features.num_actions()));

    SolveOutcome out;
    for (const auto& guess : guesses) {
        const SkipRegression regression(data, features, guess, config.alpha, covs);
        const ConfidenceSets sets = build_confidence_sets(regression, features, config);
        GuessReport report;
        report.empty_stage = sets.empty_stage;
        for (const auto& st : sets.stages) report.member_counts.push_back(st.members.size());
        if (sets.feasible_sets()) {
            for (int k = 0; k < horizon; ++k) {
                const double t = tightness_from_counts(counts[k], data.size(), k, sets.stages[k].members, features);
                report.tightness.push_back(t);
                report.tightness_max = std::max(report.tightness_max, t);
            }
            report.feasible = report.tightness_max <= config.eps_bar;
            const auto& first = sets.stages[0].members;
            std::size_t best = 0;
            double best_value = clipped_v(first[0], features, 0, 0);
            for (std::size_t i = 1; i < first.size(); ++i) {
                const double v = clipped_v(first[i], features, 0, 0);
                if (v > best_value) {
                    best_value = v;
                    best = i;
                }
            }
            report.value = best_value;
            report.theta.push_back(first[best]);
            for (int k = 1; k <= horizon; ++k) report.theta.push_back(sets.stages[k].members.front());
        }
        out.guesses.push_back(std::move(report));
    }

    for (std::size_t g = 0; g < out.guesses.size(); ++g) {
        const GuessReport& r = out.guesses[g];
        if (!r.feasible) continue;
        if (out.chosen_guess < 0 || r.value > out.value) {
            out.chosen_guess = static_cast<int>(g);
            out.value = r.value;
        }
    }
    if (out.chosen_guess >= 0) {
        out.all_rejected = false;
        out.theta = out.guesses[out.chosen_guess].theta;
        out.policy = greedy_policy(features, out.theta);
    }
    return out;
}

bool apply_fallback(SolveOutcome& outcome, const FeatureMap& features) {
    if (!outcome.all_rejected) return true;
    int best = -1;
    for (std::size_t g = 0; g < outcome.guesses.size(); ++g) {
        const GuessReport& r = outcome.guesses[g];
        if (r.empty_stage >= 0) continue;
        if (best < 0 || r.tightness_max < outcome.guesses[best].tightness_max) best = static_cast<int>(g);
    }
    if (best < 0) return false;
    outcome.fallback = true;
    outcome.chosen_guess = best;
    outcome.value = outcome.guesses[best].value;
    outcome.theta = outcome.guesses[best].theta;
    outcome.policy = greedy_policy(features, outcome.theta);
    return true;
}

}  // namespace skipq
