#include "skipq/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "skipq/error.hpp"
#include "skipq/rng.hpp"

namespace skipq {

namespace {

constexpr double kKernelTol = 1e-8;
constexpr double kNormSlack = 1e-9;
constexpr double kRankTol = 1e-12;
constexpr double kWeightFloor = 1e-10;

// Wolfe-Atwood iteration with away steps over the rows of y (orthonormal
// columns, so the information matrix is well conditioned). `allowed` limits
// which rows may carry weight. Returns weights over all rows.
std::vector<double> wolfe_atwood(const Matrix& y, const std::vector<char>& allowed, std::vector<double> w,
                                 double tol, int max_iters) {
    const Eigen::Index m = y.rows();
    const double r = static_cast<double>(y.cols());
    Matrix info(y.cols(), y.cols());
    for (int iter = 0; iter < max_iters; ++iter) {
        info.setZero();
        for (Eigen::Index i = 0; i < m; ++i) {
            if (w[i] > 0.0) info.noalias() += w[i] * y.row(i).transpose() * y.row(i);
        }
        const Eigen::LLT<Matrix> llt(info);
        const Matrix solved = llt.solve(y.transpose());  // r x m
        const Vector g = (y.transpose().array() * solved.array()).colwise().sum().transpose();

        Eigen::Index up = -1;
        Eigen::Index down = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!allowed[i]) continue;
            if (up < 0 || g(i) > g(up)) up = i;
            if (w[i] > 0.0 && (down < 0 || g(i) < g(down))) down = i;
        }
        if (up < 0 || g(up) <= r * (1.0 + tol)) break;

        if (g(up) - r >= r - g(down)) {
            const double gamma = (g(up) - r) / (r * (g(up) - 1.0));
            for (auto& x : w) x *= 1.0 - gamma;
            w[up] += gamma;
        } else {
            const double wj = w[down];
            const double limit = -wj / (1.0 - wj);
            double gamma = limit;
            if (g(down) > 1.0) gamma = std::max(limit, (g(down) - r) / (r * (g(down) - 1.0)));
            for (auto& x : w) x *= 1.0 - gamma;
            w[down] += gamma;
            if (gamma <= limit) w[down] = 0.0;
        }
    }
    return w;
}

struct Whitened {
    Matrix y;         // m x r, orthonormal columns
    Matrix basis;     // d x r
    Vector scale;     // r singular values
    int rank = 0;
};

Whitened whiten(const Matrix& x) {
    Whitened out;
    const Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv(0) > 0.0) {
        while (rank < sv.size() && sv(rank) > kRankTol * sv(0)) ++rank;
    }
    out.rank = rank;
    out.y = svd.matrixU().leftCols(rank);
    out.basis = svd.matrixV().leftCols(rank);
    out.scale = sv.head(rank);
    return out;
}

// Greedy volume initialisation: r rows picked by largest residual after Gram-Schmidt.
std::vector<double> initial_weights(const Matrix& y) {
    const Eigen::Index m = y.rows();
    const Eigen::Index r = y.cols();
    Matrix residual = y;
    std::vector<double> w(m, 0.0);
    for (Eigen::Index step = 0; step < r; ++step) {
        Eigen::Index best = 0;
        residual.rowwise().squaredNorm().maxCoeff(&best);
        w[best] = 1.0 / static_cast<double>(r);
        const Vector dir = residual.row(best).transpose().normalized();
        residual -= (residual * dir) * dir.transpose();
    }
    return w;
}

struct Evaluation {
    double worst = 0.0;
    double leak = 0.0;
};

// Norms of every input in the pseudo-inverse metric of the design with weights w.
Evaluation evaluate(const Matrix& x, const Whitened& wh, const std::vector<double>& w) {
    Evaluation out;
    Matrix info = Matrix::Zero(wh.rank, wh.rank);
    for (Eigen::Index i = 0; i < wh.y.rows(); ++i) {
        if (w[i] > 0.0) info.noalias() += w[i] * wh.y.row(i).transpose() * wh.y.row(i);
    }
    const Eigen::LLT<Matrix> llt(info);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        const Vector coords = wh.basis.transpose() * xi;
        out.leak = std::max(out.leak, (xi - wh.basis * coords).norm());
        const Vector z = coords.cwiseQuotient(wh.scale);
        out.worst = std::max(out.worst, z.dot(llt.solve(z)));
    }
    return out;
}

}  // namespace

int d_zero(int dim) {
    if (dim < 1) throw ContractError("dimension must be >= 1");
    const double d = static_cast<double>(dim);
    const double loglog = dim > 1 ? std::log(std::log(d)) : 0.0;
    return static_cast<int>(std::ceil(4.0 * d * std::max(0.0, loglog) + 16.0 - 1e-12));
}

DesignResult approx_optimal_design(std::span<const Vector> vectors, double tol, int max_iters) {
    if (vectors.empty()) throw ContractError("design needs at least one vector");
    const Eigen::Index dim = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw StructureError("design inputs have different dimensions");
        if (!v.allFinite()) throw StructureError("non-finite design input");
    }

    // deduplicate (first occurrence wins); zero vectors impose no constraint and are dropped
    std::vector<std::size_t> order(vectors.size());
    std::iota(order.begin(), order.end(), 0);
    auto lex_less = [&](std::size_t a, std::size_t b) {
        for (Eigen::Index i = 0; i < dim; ++i) {
            if (vectors[a](i) != vectors[b](i)) return vectors[a](i) < vectors[b](i);
        }
        return a < b;
    };
    std::sort(order.begin(), order.end(), lex_less);
    std::vector<std::size_t> unique;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t j = order[i];
        if (vectors[j].isZero(0.0)) continue;
        if (i > 0 && vectors[order[i - 1]] == vectors[j]) continue;
        unique.push_back(j);
    }
    std::sort(unique.begin(), unique.end());

    DesignResult out;
    if (unique.empty()) {
        out.support = {vectors.front()};
        out.support_indices = {0};
        out.weights = {1.0};
        out.design_matrix = Matrix::Zero(dim, dim);
        return out;
    }

    Matrix x(unique.size(), dim);
    for (std::size_t i = 0; i < unique.size(); ++i) x.row(i) = vectors[unique[i]].transpose();
    const Whitened wh = whiten(x);
    const Eigen::Index m = x.rows();
    const int cap = d_zero(static_cast<int>(dim));

    std::vector<char> allowed(m, 1);
    std::vector<double> w = wolfe_atwood(wh.y, allowed, initial_weights(wh.y), tol, max_iters);

    auto support_size = [&] {
        return std::count_if(w.begin(), w.end(), [](double v) { return v > 0.0; });
    };
    auto truncate = [&](double floor) {
        const double top = *std::max_element(w.begin(), w.end());
        for (auto& v : w) {
            if (v < floor * top) v = 0.0;
        }
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& v : w) v /= total;
    };
    truncate(kWeightFloor);
    if (support_size() > cap) {
        std::vector<Eigen::Index> ranked(m);
        std::iota(ranked.begin(), ranked.end(), 0);
        std::stable_sort(ranked.begin(), ranked.end(), [&](Eigen::Index a, Eigen::Index b) { return w[a] > w[b]; });
        std::fill(allowed.begin(), allowed.end(), 0);
        for (int i = 0; i < cap; ++i) allowed[ranked[i]] = 1;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!allowed[i]) w[i] = 0.0;
        }
        truncate(0.0);
        w = wolfe_atwood(wh.y, allowed, w, tol, max_iters);
        truncate(kWeightFloor);
    }

    const Evaluation eval = evaluate(x, wh, w);
    out.rank = wh.rank;
    out.worst_norm = eval.worst;
    out.kernel_leak = eval.leak;
    const double bound = 2.0 * static_cast<double>(dim) + kNormSlack;
    if (eval.worst > bound) {
        throw ConvergenceError("design did not reach the 2d bound: worst norm " + std::to_string(eval.worst),
                               eval.worst);
    }
    if (eval.leak > kKernelTol) {
        throw ConvergenceError("input leaves the design span by " + std::to_string(eval.leak), eval.worst);
    }

    out.design_matrix = Matrix::Zero(dim, dim);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (w[i] <= 0.0) continue;
        out.support.push_back(x.row(i).transpose());
        out.support_indices.push_back(unique[i]);
        out.weights.push_back(w[i]);
        out.design_matrix.noalias() += w[i] * x.row(i).transpose() * x.row(i);
    }
    return out;
}

DesignCheck check_design(const Matrix& design_matrix, std::span<const Vector> vectors) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(design_matrix);
    const Vector& values = eig.eigenvalues();
    const Matrix& vecs = eig.eigenvectors();
    const double top = values.size() > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
    DesignCheck out;
    for (const auto& v : vectors) {
        const Vector coords = vecs.transpose() * v;
        double leak = 0.0;
        double norm = 0.0;
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (top > 0.0 && values(i) > 1e-10 * top) {
                norm += coords(i) * coords(i) / values(i);
            } else {
                leak += coords(i) * coords(i);
            }
        }
        out.worst_norm = std::max(out.worst_norm, norm);
        out.kernel_leak = std::max(out.kernel_leak, std::sqrt(leak));
    }
    return out;
}

Guess::Guess(int dim, int horizon, int d0, double radius, std::vector<std::vector<Vector>> panels)
    : dim_(dim), horizon_(horizon), d0_(d0), radius_(radius), panels_(std::move(panels)) {
    if (dim_ < 1 || horizon_ < 1 || d0_ < 1) throw StructureError("guess dimensions must be positive");
    if (!(radius_ >= 0.0)) throw StructureError("guess radius must be nonnegative");
    if (static_cast<int>(panels_.size()) != horizon_ - 1) {
        throw StructureError("guess needs one panel per interior stage (" + std::to_string(horizon_ - 1) + ")");
    }
    for (std::size_t i = 0; i < panels_.size(); ++i) {
        if (static_cast<int>(panels_[i].size()) != d0_) {
            throw StructureError("panel of stage " + std::to_string(i + 1) + " holds " +
                                 std::to_string(panels_[i].size()) + " vectors, expected " + std::to_string(d0_));
        }
        for (const auto& v : panels_[i]) {
            if (v.size() != dim_) throw StructureError("panel vector has the wrong dimension");
            if (!(v.norm() <= radius_ * (1.0 + 1e-12) + 1e-12)) {
                throw StructureError("panel vector of stage " + std::to_string(i + 1) + " exceeds the guess radius");
            }
        }
    }
}

Guess Guess::zero(int dim, int horizon, int d0, double radius) {
    std::vector<std::vector<Vector>> panels(std::max(0, horizon - 1),
                                            std::vector<Vector>(d0, Vector::Zero(dim)));
    return Guess(dim, horizon, d0, radius, std::move(panels));
}

const std::vector<Vector>& Guess::panel(int stage) const {
    if (stage < 1 || stage >= horizon_) {
        throw DomainError("guess panels exist for interior stages only; got stage " + std::to_string(stage));
    }
    return panels_[stage - 1];
}

bool operator==(const Guess& a, const Guess& b) {
    if (a.dim_ != b.dim_ || a.horizon_ != b.horizon_ || a.d0_ != b.d0_ || a.radius_ != b.radius_) return false;
    return a.panels_ == b.panels_;
}

TrueGuess build_true_guess(const FeatureMap& features, std::span<const PolicyParams> params) {
    if (params.empty()) throw ContractError("policy sample must be nonempty");
    const int dim = features.dim();
    const int horizon = features.horizon();
    const int d0 = d_zero(dim);
    double radius = 0.0;
    for (const auto& p : params) radius = std::max(radius, p.l2_bound);

    std::vector<std::vector<Vector>> panels;
    std::vector<DesignResult> designs;
    std::vector<std::vector<Vector>> psi_sets;
    for (int k = 1; k < horizon; ++k) {
        std::vector<Vector> psi;
        psi.reserve(params.size());
        for (const auto& p : params) psi.push_back(p.theta.at(k));
        DesignResult design = approx_optimal_design(psi);
        std::vector<Vector> panel = design.support;
        while (static_cast<int>(panel.size()) < d0) panel.push_back(Vector::Zero(dim));
        panels.push_back(std::move(panel));
        designs.push_back(std::move(design));
        psi_sets.push_back(std::move(psi));
    }
    return {Guess(dim, horizon, d0, radius, std::move(panels)), std::move(designs), std::move(psi_sets), radius};
}

TrueGuess build_true_guess(const StagedMdp& mdp, const FeatureMap& features, std::span<const Policy> policies) {
    check_compatible(mdp, features);
    const PsiFitter fitter(features);
    std::vector<PolicyParams> params;
    params.reserve(policies.size());
    for (const auto& pi : policies) params.push_back(fitter.fit(evaluate_policy(mdp, pi).q));
    return build_true_guess(features, params);
}

EpsilonNet epsilon_net(double radius, int dim, double xi, std::size_t cap) {
    if (!(radius > 0.0) || !(xi > 0.0)) throw ContractError("epsilon_net needs radius > 0 and xi > 0");
    if (dim < 1) throw ContractError("dimension must be >= 1");
    EpsilonNet out;
    const double d = static_cast<double>(dim);
    out.cardinality_bound = std::pow(1.0 + 2.0 * radius / xi, d) * std::pow(4.0, d);
    if (radius <= xi) {
        out.points.push_back(Vector::Zero(dim));
        return out;
    }
    const double spacing = 2.0 * xi / std::sqrt(d);
    const double outer = radius + xi;
    const long half = static_cast<long>(std::floor(outer / spacing));
    const double side = static_cast<double>(2 * half + 1);
    const double box = std::pow(side, d);
    if (box > static_cast<double>(cap) && box > 1e8) {
        throw CapacityError("epsilon net over a ball of radius " + std::to_string(radius) + " at xi " +
                            std::to_string(xi) + " would exceed the cap of " + std::to_string(cap));
    }

    std::vector<long> idx(dim, -half);
    Vector p(dim);
    for (;;) {
        for (int i = 0; i < dim; ++i) p(i) = static_cast<double>(idx[i]) * spacing;
        const double norm = p.norm();
        if (norm <= outer) {
            Vector q = norm > radius ? Vector(p * (radius / norm)) : p;
            bool duplicate = false;
            if (norm > radius) {
                for (auto it = out.points.rbegin(); it != out.points.rend(); ++it) {
                    if ((*it - q).norm() <= 1e-12 * radius) {
                        duplicate = true;
                        break;
                    }
                }
            }
            if (!duplicate) {
                out.points.push_back(std::move(q));
                if (out.points.size() > cap) {
                    throw CapacityError("epsilon net exceeds the cap of " + std::to_string(cap) + " points");
                }
            }
        }
        int i = 0;
        while (i < dim && ++idx[i] > half) {
            idx[i] = -half;
            ++i;
        }
        if (i == dim) break;
    }
    return out;
}

std::vector<Guess> guess_grid(const Guess& true_guess, double spread, std::size_t count_cap, std::uint64_t seed) {
    if (count_cap < 1) throw ContractError("guess grid needs count_cap >= 1");
    if (!(spread >= 0.0)) throw ContractError("guess spread must be nonnegative");
    std::vector<Guess> out{true_guess};
    if (count_cap == 1) return out;
    const std::size_t perturbed = count_cap - 2;
    const double radius = true_guess.radius();
    for (std::size_t c = 0; c < perturbed; ++c) {
        Rng rng(derive_seed(seed, 0x6E55, c));
        auto panels = true_guess.panels();
        for (auto& panel : panels) {
            for (auto& v : panel) {
                for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += spread * rng.normal();
                const double norm = v.norm();
                if (norm > radius) v *= radius / norm;
            }
        }
        out.emplace_back(true_guess.dim(), true_guess.horizon(), true_guess.d0(), radius, std::move(panels));
    }
    out.push_back(Guess::zero(true_guess.dim(), true_guess.horizon(), true_guess.d0(), radius));
    return out;
}

}  // namespace skipq
