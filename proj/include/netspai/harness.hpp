#pragma once

#include <optional>
#include <string>
#include <vector>

#include "netspai/models.hpp"
#include "netspai/spai.hpp"

namespace netspai {

/// Heat-network pipeline: model, W_r = mu I + O_p^T O_p, spectral interval
/// and sparsified Newton-Schulz for several band widths, each compared with
/// the dense inverse.
struct HeatReproConfig {
  HeatModelSpec model{};
  int p = 4;
  double mu = 1e-3;
  std::vector<Index> betas{800, 400, 200};
  double phi = 1e-5;
  int max_iter = 60;
  int threads = 1;
  /// Residual estimates at this scale are Lanczos lower bounds with a
  /// capped budget.
  double residual_tol = 1e-8;
  int residual_max_iter = 400;
  bool dense_oracle = true;
};

struct HeatBetaRun {
  Index beta = 0;
  SpaiReport report;
  double e = -1.0;           ///< ||W_r^{-1} - X||_2, -1 without the oracle
  double e_relative = -1.0;  ///< e / ||W_r^{-1}||_2
  double seconds = 0.0;
  std::size_t nnz_blocks = 0;
};

struct HeatReproResult {
  static constexpr double kappa_reference = 3.78e3;
  Index N = 0, states = 0;
  std::size_t gramian_nnz_blocks = 0;
  SingularInterval interval;
  double kappa = 0.0;
  double inverse_norm = 0.0;  ///< ||W_r^{-1}||_2 from the dense inverse
  double oracle_seconds = 0.0, gramian_seconds = 0.0, interval_seconds = 0.0;
  std::vector<HeatBetaRun> runs;
  double total_seconds = 0.0;
  /// Final e is non-increasing as beta grows.
  bool e_monotone() const;
};

HeatReproResult reproduce_heat(const HeatReproConfig& cfg);

/// Strip-shaped heat grids with gy fixed and gx = N / gy so that W keeps a
/// constant block bandwidth as N grows.
struct ScalingConfig {
  std::vector<Index> sizes{100, 400, 1600, 6400};
  Index gy = 4;
  Index gz = 3;
  int p = 2;
  double mu = 1e-2;
  Index beta = 60;
  double phi = 1e-6;
  int max_iter = 60;
  int threads = 1;
  bool dense_baseline = true;
  /// Relative tolerance of the interval and residual estimates inside the
  /// timed Newton-Schulz run.
  double spectral_tol = 1e-6;
  /// Right-hand sides per triangular-solve sweep in the dense baseline.
  Index chunk = 256;
};

struct BenchmarkRecord {
  Index N = 0, dimension = 0;
  std::string method;  // "ns" or "dense"
  Index beta = 0;
  double phi = 0.0, mu = 0.0, kappa = 0.0;
  double final_error = 0.0;  ///< ns: final epsilon; dense: max column residual
  int iterations = 0;
  double seconds = 0.0;
  std::size_t peak_blocks = 0;
  std::string status;
};

struct ScalingResult {
  std::vector<BenchmarkRecord> records;
  std::optional<double> slope_ns, slope_dense;
};

ScalingResult benchmark_scaling(const ScalingConfig& cfg);

/// Least-squares slope of log(t) against log(n). The smallest size is
/// dropped when three or more sizes are given; undefined for one size.
std::optional<double> loglog_slope(const std::vector<double>& n, const std::vector<double>& t);

/// Dense-inverse baseline: sparse LDL^T factorization of W followed by
/// solves against all unit vectors, `chunk` columns at a time. Returns wall
/// seconds; `max_column_residual` receives max_j ||e_j - W x_j||_2.
double dense_baseline_inverse(const BlockSparseMatrix& w, Index chunk,
                              double* max_column_residual = nullptr);

}  // namespace netspai
