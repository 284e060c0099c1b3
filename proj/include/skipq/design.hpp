#pragma once

// Near-optimal experimental designs over per-stage parameter sets, the guesses
// built from them, and finite covers of Euclidean balls.

#include <cstdint>
#include <span>
#include <vector>

#include "skipq/envs.hpp"
#include "skipq/linalg.hpp"

namespace skipq {

/// ceil(4 d max(0, ln ln d) + 16).
int d_zero(int dim);

struct DesignResult {
    std::vector<Vector> support;
    std::vector<std::size_t> support_indices;  // positions in the input
    std::vector<double> weights;
    Matrix design_matrix;       // sum_i w_i x_i x_i'
    double worst_norm = 0.0;    // max over inputs of ||x||^2 in the pseudo-inverse metric
    double kernel_leak = 0.0;   // max over inputs of the norm of the component in ker(V)
    int rank = 0;
};

/// Frank-Wolfe with away steps on the D-optimal criterion, restricted to the
/// span of the inputs. Support is truncated to at most d_zero(d) points and
/// both design conditions (orthogonality to the kernel, norm at most 2d) are
/// re-verified over every input before returning. Throws ConvergenceError,
/// carrying the worst norm, when the 2d bound is not met within max_iters.
DesignResult approx_optimal_design(std::span<const Vector> vectors, double tol = 1e-7, int max_iters = 20000);

struct DesignCheck {
    double worst_norm = 0.0;
    double kernel_leak = 0.0;
};

/// Evaluates both design conditions for `design_matrix` over `vectors`.
DesignCheck check_design(const Matrix& design_matrix, std::span<const Vector> vectors);

/// Per-stage panels of d_0 parameter vectors for the interior stages 1..H-1.
class Guess {
public:
    /// panels[i] belongs to stage i + 1; each must hold exactly d0 vectors of norm <= radius.
    Guess(int dim, int horizon, int d0, double radius, std::vector<std::vector<Vector>> panels);

    static Guess zero(int dim, int horizon, int d0, double radius);

    int dim() const { return dim_; }
    int horizon() const { return horizon_; }
    int d0() const { return d0_; }
    double radius() const { return radius_; }
    /// Panel of interior stage k (1 <= k <= H-1).
    const std::vector<Vector>& panel(int stage) const;
    const std::vector<std::vector<Vector>>& panels() const { return panels_; }

    friend bool operator==(const Guess& a, const Guess& b);

private:
    int dim_;
    int horizon_;
    int d0_;
    double radius_;
    std::vector<std::vector<Vector>> panels_;
};

struct TrueGuess {
    Guess guess;
    std::vector<DesignResult> designs;        // designs[i] for stage i + 1
    std::vector<std::vector<Vector>> psi_sets;  // fitted parameters per interior stage
    double l2_bound = 0.0;
};

/// Designs over {psi_k(pi) : pi in the sample} for every interior stage,
/// zero-padded to d_0 panel entries. The radius is the largest fitted norm.
TrueGuess build_true_guess(const FeatureMap& features, std::span<const PolicyParams> params);

TrueGuess build_true_guess(const StagedMdp& mdp, const FeatureMap& features, std::span<const Policy> policies);

struct EpsilonNet {
    std::vector<Vector> points;
    double cardinality_bound = 0.0;  // (1 + 2 radius / xi)^d * 4^d
};

/// Grid of spacing 2 xi / sqrt(d) over the ball of radius + xi, with outside
/// points projected radially onto the ball. Every point of the ball is within
/// xi of some net point. Throws CapacityError above `cap` points.
EpsilonNet epsilon_net(double radius, int dim, double xi, std::size_t cap = 1000000);

/// [true guess, perturbed copies..., all-zero guess], at most count_cap in total.
/// Perturbations add N(0, spread^2) noise to every panel vector and project back
/// onto the guess ball.
std::vector<Guess> guess_grid(const Guess& true_guess, double spread, std::size_t count_cap, std::uint64_t seed);

}  // namespace skipq
