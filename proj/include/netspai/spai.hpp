#pragma once

#include <optional>
#include <string>
#include <vector>

#include "netspai/block_sparse.hpp"
#include "netspai/pattern.hpp"
#include "netspai/spectral.hpp"
#include "netspai/statespace.hpp"

namespace netspai {

enum class SpaiStatus { converged, max_iter, diverged, stagnated };
enum class SpaiMethod { newton_schulz, frobenius };

std::string to_string(SpaiStatus s);
std::string to_string(SpaiMethod m);

struct NewtonSchulzConfig {
  /// Mask P of the first sparsification operator; symmetrized before use.
  std::optional<PatternMatrix> pattern;
  /// Dropping threshold of the second sparsification operator.
  std::optional<double> phi;
  /// Exact products, no sparsification. Must be the only mode declared.
  bool dense_mode = false;

  double tol = 1e-10;
  int max_iter = 60;
  double divergence_factor = 1.5;
  /// Stop once `stall_window` consecutive iterations fail to improve the best
  /// residual by stall_tol * min(eps, 1 - eps); 0 disables the check.
  int stall_window = 4;
  double stall_tol = 1e-3;
  /// Relative widening of [a, b] before forming X0 (see
  /// SingularInterval::widened). Any interval containing the spectrum keeps
  /// the convergence bound valid.
  double interval_margin = 0.05;
  /// Skip the spectral estimate and use this interval as given.
  std::optional<SingularInterval> interval;
  int threads = 1;
  PowerOptions interval_options{};
  PowerOptions residual_options{.tol = 1e-12, .max_iter = 5000, .seed = 20140917,
                                .method = SpectralMethod::lanczos, .krylov_dim = 60};
  /// Up to this many rows the residual norm is computed exactly with a dense
  /// eigensolver; larger matrices use residual_options.
  Index dense_residual_max = 400;

  void validate() const;
};

struct IterationRecord {
  int k = 0;
  double epsilon = 0.0;  ///< ||I - W X_k||_2
  double bound = 0.0;    ///< ((kappa^2 - 1)/(kappa^2 + 1))^(2^k) with kappa_used
  std::size_t nnz_blocks = 0;
  double seconds = 0.0;  ///< wall time of this iteration including the residual
};

struct SpaiReport {
  SpaiMethod method = SpaiMethod::newton_schulz;
  std::vector<IterationRecord> iterations;
  SpaiStatus status = SpaiStatus::max_iter;
  SingularInterval interval;  ///< estimate for W
  double kappa = 0.0;         ///< b / a of W
  double kappa_used = 0.0;    ///< condition number of the (widened) interval used
  double a_used = 0.0, b_used = 0.0;
  int best_k = 0;             ///< iteration whose iterate is returned
  double total_seconds = 0.0;

  // Regularization bookkeeping.
  double mu = 0.0;
  double kappa_unregularized = 0.0;

  // Frobenius method: per-column objective ||e_j - W x_j||_2 and empty flags.
  std::vector<double> column_residuals;
  std::vector<Index> empty_columns;
  double frobenius_objective = 0.0;  ///< ||I - W X||_F

  double final_epsilon() const {
    return iterations.empty() ? 0.0
                              : iterations[static_cast<std::size_t>(best_k)].epsilon;
  }
};

struct ApproxInverse {
  BlockSparseMatrix X;
  SpaiReport report;
  SpaiMethod method = SpaiMethod::newton_schulz;
};

/// X0 = 2 / (a^2 + b^2) W.
BlockSparseMatrix initial_guess(const BlockSparseMatrix& w, const SingularInterval& sv);

/// ((kappa^2 - 1)/(kappa^2 + 1))^(2^k), evaluated in log space.
double error_bound(double kappa, int k);

/// Newton-Schulz iteration X_{k+1} = H(X_k (2I - W X_k)) with H the mask
/// followed by dropping (either may be absent), or no H in dense mode. The
/// iterate with the smallest residual is returned, also on divergence.
ApproxInverse newton_schulz(const BlockSparseMatrix& w, const NewtonSchulzConfig& cfg);
ApproxInverse newton_schulz(const Gramian& w, const NewtonSchulzConfig& cfg);

/// Support of I + W + ... + W^s for W's block pattern.
PatternMatrix predict_pattern_neumann(const BlockSparseMatrix& w, int s);
PatternMatrix predict_pattern_neumann(const Gramian& w, int s);

/// Block pattern of the scalar band |i - j| <= beta: block (I, J) is kept
/// when any scalar pair inside it lies in the band.
PatternMatrix banded_pattern(const std::vector<Index>& block_sizes, Index beta);
/// Uniform block size variant.
PatternMatrix banded_pattern(Index block_count, Index block_size, Index beta);

/// Column-wise minimization of ||e_j - W x_j||_2 with x_j supported on the
/// scalar rows allowed by column j of the block pattern.
ApproxInverse frobenius_spai(const BlockSparseMatrix& w, const PatternMatrix& pattern,
                             int threads = 1);
ApproxInverse frobenius_spai(const Gramian& w, const PatternMatrix& pattern, int threads = 1);

/// W_r = W + mu I followed by Newton-Schulz. The interval of W is shifted
/// by mu (exact for symmetric W); both condition numbers are reported.
ApproxInverse regularize_and_invert(const BlockSparseMatrix& w, double mu,
                                    const NewtonSchulzConfig& cfg);
ApproxInverse regularize_and_invert(const Gramian& w, double mu, const NewtonSchulzConfig& cfg);

}  // namespace netspai
