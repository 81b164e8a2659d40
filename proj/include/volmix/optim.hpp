#pragma once

// Small unconstrained minimizers used by the econometric baselines.

#include "volmix/common.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace volmix::optim {

using Objective = std::function<double(std::span<const double>)>;

struct Result {
    std::vector<double> x;
    double value = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    std::string method;
};

struct BfgsOptions {
    std::size_t max_iterations = 200;
    double gradient_tol = 1e-6;
    double value_tol = 1e-12;
    /// Relative central-difference step.
    double fd_step = 1e-6;
    /// Give up on quasi-Newton when the objective has not decreased after this
    /// many iterations.
    std::size_t stall_iterations = 5;
};

/// Central-difference gradient; step is relative with an absolute floor.
[[nodiscard]] std::vector<double> fd_gradient(const Objective& f, std::span<const double> x, double rel_step);

/// Quasi-Newton (BFGS) with backtracking line search and finite-difference
/// gradients. `stalled` is set when the objective failed to improve within
/// stall_iterations.
[[nodiscard]] Result bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& options, bool* stalled = nullptr);

struct NelderMeadOptions {
    std::size_t max_evaluations = 20000;
    double value_tol = 1e-10;
    double initial_step = 0.1;
};

[[nodiscard]] Result nelder_mead(const Objective& f, std::vector<double> x0, const NelderMeadOptions& options = {});

/// BFGS, falling back to Nelder-Mead when BFGS stalls or returns a worse point.
[[nodiscard]] Result minimize(const Objective& f, std::vector<double> x0, const BfgsOptions& options = {});

/// Central-difference Hessian with relative step `rel_step`.
[[nodiscard]] Matrix numerical_hessian(const Objective& f, std::span<const double> x, double rel_step = 1e-4);

/// Inverse of a symmetric positive-definite matrix via Cholesky. Returns
/// false if the matrix is not positive definite.
[[nodiscard]] bool invert_spd(const Matrix& a, Matrix& inverse);

/// Ordinary least squares via normal equations (Cholesky). Rows of x are
/// observations. Collinear designs get a 1e-10 relative ridge; throws
/// InvalidArgument only if that still fails.
[[nodiscard]] std::vector<double> least_squares(const Matrix& x, std::span<const double> y);

}  // namespace volmix::optim
