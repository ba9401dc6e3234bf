#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace ngfreg {

// f(x) with its gradient written to `grad`.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;
// out = M^{-1} in for a symmetric positive definite M.
using LinearOp = std::function<void(std::span<const double> in, std::span<double> out)>;

struct LbfgsOptions {
    int memory = 8;
    int max_iterations = 200;
    double rel_tolerance = 1e-6;
    double armijo = 1e-4;
    int max_backtracks = 30;
    // Infinity-norm cap on each trial step; a finite value turns on the
    // trust-region radius update (grow on full steps, shrink on backtracks).
    double max_step = std::numeric_limits<double>::infinity();
};

struct OptimizerStep {
    int iteration = 0;
    double value = 0.0;
    double step_norm = 0.0;  // infinity norm of the accepted step
};

enum class OptimizerStatus { converged, max_iterations, stalled, diverged };

struct OptimizerResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    // Objective at the shortest trial step of a failed line search.
    double last_trial_value = 0.0;
    OptimizerStatus status = OptimizerStatus::max_iterations;
};

// Preconditioned limited-memory BFGS with Armijo backtracking. `h0_inverse`
// is the initial inverse-Hessian model (identity when empty); it is rescaled
// by s^T y / y^T H0 y each iteration. Accepted iterates never increase f.
// `on_step` fires after every accepted step.
OptimizerResult minimize_lbfgs(std::vector<double> x0, const ObjectiveFn& f, const LinearOp& h0_inverse, const LbfgsOptions& options,
                               const std::function<void(const OptimizerStep&, std::span<const double>)>& on_step = {});

// Preconditioned conjugate gradients for A x = b starting from x = 0.
// Stops after max_iterations or when |r| <= rel_tolerance |b|, or on
// non-positive curvature. Returns the iteration count.
int conjugate_gradient(const LinearOp& apply_a, const LinearOp& precondition, std::span<const double> b, std::span<double> x,
                       int max_iterations, double rel_tolerance);

double dot(std::span<const double> a, std::span<const double> b);
double norm_inf(std::span<const double> a);

}  // namespace ngfreg
