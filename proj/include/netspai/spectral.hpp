#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "netspai/block_sparse.hpp"

namespace netspai {

enum class SpectralMethod {
  lanczos,  ///< Lanczos with full reorthogonalization and explicit restarts
  power,    ///< plain (or shifted) power iteration
};

/// Controls for the iterative eigenvalue estimates. The start vector is a
/// deterministic pseudo-random unit vector drawn from `seed`. For Lanczos,
/// `tol` bounds the Ritz residual relative to the largest Ritz value and
/// `max_iter` caps the total number of operator applications.
struct PowerOptions {
  double tol = 1e-10;
  int max_iter = 20000;
  std::uint64_t seed = 20140917;
  SpectralMethod method = SpectralMethod::lanczos;
  int krylov_dim = 300;  ///< Lanczos basis size before a restart
};

struct SingularInterval {
  double a = 0.0;  ///< smallest singular value estimate
  double b = 0.0;  ///< largest singular value estimate
  double kappa = 0.0;
  bool kappa_defined = false;  ///< false for the zero matrix (a = b = 0)
  bool converged_b = false;
  bool converged_a = false;
  int iterations_b = 0;
  int iterations_a = 0;
  std::uint64_t seed = 0;
  /// Ritz vector of the smallest eigenvalue when available (Lanczos path).
  Eigen::VectorXd v_min;

  /// Interval widened by margin * min(a, b - a) below and margin *
  /// min(b, b - a) above; a single-point interval stays as it is.
  SingularInterval widened(double margin) const;
};

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

using LinearOperator = std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

/// Deterministic unit vector of length n.
Eigen::VectorXd seeded_unit_vector(Index n, std::uint64_t seed);

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration with Rayleigh quotients; converged when successive estimates
/// agree to relative `tol`. `start` (if nonempty) replaces the seeded vector
/// and receives the final iterate.
NormEstimate dominant_eigenvalue(const LinearOperator& op, Index n, const PowerOptions& opts,
                                 Eigen::VectorXd* start = nullptr);

/// ||M||_2 as the square root of the top eigenvalue of M^T M (method per
/// opts).
NormEstimate spectral_norm(const LinearOperator& apply, const LinearOperator& apply_transpose,
                           Index cols, const PowerOptions& opts, Eigen::VectorXd* start = nullptr);

struct EigenRange {
  double min = 0.0;
  double max = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd min_vector, max_vector;  ///< Ritz vectors (Lanczos only)
};

/// Smallest and largest eigenvalue of a symmetric operator by Lanczos.
/// With `max_only`, convergence is judged on the largest one alone.
EigenRange lanczos_extremes(const LinearOperator& op, Index n, const PowerOptions& opts,
                            bool max_only = false, Eigen::VectorXd* start = nullptr);

/// Extreme singular values of a symmetric positive semidefinite matrix.
/// Lanczos: both ends from one Krylov space. Power: b by power iteration on
/// W, then b - a by power iteration on (b I - W).
/// Throws ValidationError if W is not symmetric to `symmetry_tol` (relative
/// to its largest entry).
SingularInterval extreme_singular_values(const BlockSparseMatrix& w, const PowerOptions& opts = {},
                                         double symmetry_tol = 1e-10);

/// ||A - B||_2 from the top eigenvalue of (A - B)^T (A - B), relative tol
/// 1e-6 unless overridden.
double two_norm_error(const BlockSparseMatrix& a, const BlockSparseMatrix& b,
                      PowerOptions opts = {.tol = 1e-6, .max_iter = 20000, .seed = 20140917});

/// Largest eigenvalue of a symmetric PSD operator with the configured method.
NormEstimate top_eigenvalue(const LinearOperator& op, Index n, const PowerOptions& opts,
                            Eigen::VectorXd* start = nullptr);

}  // namespace netspai
