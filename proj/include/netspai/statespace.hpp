#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "netspai/block_sparse.hpp"

namespace netspai {

/// N coupled local systems
///   x_i(k+1) = A_ii x_i(k) + sum_j A_ij x_j(k) + B_i u_i(k)
///   y_i(k)   = C_i x_i(k) + D_i u_i(k)
/// with all local systems sharing the dimensions (n, m, r).
struct InterconnectedSystem {
  struct Edge {
    Index i = 0;
    Index j = 0;
    Eigen::MatrixXd A;  // n x n, nonzero
  };

  Index N = 0, n = 0, m = 0, r = 0;
  std::vector<Eigen::MatrixXd> diag;  // A_ii
  std::vector<Edge> edges;            // i != j
  std::vector<Eigen::MatrixXd> B, C, D;

  /// Throws ValidationError/DimensionError on malformed input, including
  /// self-edges, duplicate edges and edges whose block is identically zero.
  void validate() const;
  /// M_i = {j : (i, j) in E}, sorted.
  std::vector<std::vector<Index>> neighbors() const;
};

struct GlobalMatrices {
  BlockSparseMatrix A, B, C, D;
};

GlobalMatrices assemble_global(const InterconnectedSystem& system);

/// Lifted matrices for window p. Time-ordered matrices act on
/// Y = col(y(k-p), ..., y(k)) and U = col(u(k-p), ..., u(k)); the structure
/// preserving ones act on signals reordered subsystem-major by perm_Y/perm_U.
struct LiftedModel {
  int p = 0;
  Index N = 0, n = 0, m = 0, r = 0;
  GlobalMatrices global;

  BlockSparseMatrix O_p;      // (p+1)N blocks of r  x  N blocks of n
  BlockSparseMatrix Gamma_p;  // (p+1)N blocks of r  x  (p+1)N blocks of m
  BlockSparseMatrix R_p;      // N blocks of n  x  (p+1)N blocks of m
  BlockSparseMatrix cal_O;    // N blocks of (p+1)r  x  N blocks of n
  BlockSparseMatrix cal_G;    // N blocks of (p+1)r  x  N blocks of (p+1)m
  BlockSparseMatrix cal_R;    // N blocks of n  x  N blocks of (p+1)m
  BlockSparseMatrix A_pow_p;

  /// perm_Y[t*N*r + i*r + c] = i*(p+1)*r + t*r + c, likewise for perm_U.
  std::vector<Index> perm_Y, perm_U;

  /// Highest power kept in the Gramian sums; p unless truncated.
  int gramian_max_power = 0;
  /// Bound on the discarded Gramian tail after truncation (0 otherwise).
  double truncation_bound = 0.0;
};

/// Builds every lifted matrix of window p >= 1 and checks the permutation
/// identities with random probe vectors.
LiftedModel lift(const InterconnectedSystem& system, int p, int threads = 1);

/// out[perm[k]] = v[k].
Eigen::VectorXd permute(const std::vector<Index>& perm, const Eigen::VectorXd& v);
/// Inverse of permute: out[k] = v[perm[k]].
Eigen::VectorXd permute_inverse(const std::vector<Index>& perm, const Eigen::VectorXd& v);

enum class GramianKind { observability, controllability };

struct Gramian {
  BlockSparseMatrix matrix;
  int p = 0;
  double mu = 0.0;
  GramianKind kind = GramianKind::observability;
  int max_power = 0;
};

/// sum_{i=0}^{max_power} (A^T)^i C^T C A^i + mu I by Horner accumulation.
BlockSparseMatrix observability_sum(const BlockSparseMatrix& A, const BlockSparseMatrix& C,
                                    int max_power, double mu, int threads = 1);
/// sum_{i=0}^{max_power} A^i B B^T (A^T)^i + mu I by Horner accumulation.
BlockSparseMatrix controllability_sum(const BlockSparseMatrix& A, const BlockSparseMatrix& B,
                                      int max_power, double mu, int threads = 1);

/// W = cal_O^T cal_O (+ mu I), powers 0..gramian_max_power.
Gramian obs_gramian(const LiftedModel& lifted, double mu, int threads = 1);
/// Q = cal_R cal_R^T (+ mu I). R_p's block column for u(k) is zero, so the
/// sum runs over powers 0..p-1 (0..min(s, p-1) after truncation).
Gramian ctrl_gramian(const LiftedModel& lifted, double mu, int threads = 1);

/// Smallest nu in [1, p_max] with rank O_nu = N n, by dense column-pivoted QR.
std::optional<int> observability_index(const InterconnectedSystem& system, int p_max);
/// Smallest theta in [1, p_max] with rank R_theta = N n.
std::optional<int> controllability_index(const InterconnectedSystem& system, int p_max);

/// Caps the Gramian sums at power s after checking ||A^s||_2 <= eta. The
/// discarded tail is bounded by sum_{i=s+1}^{p} ||A^i||_2^2 ||C||_2^2.
LiftedModel truncate_stable_powers(const LiftedModel& lifted, int s, double eta, int threads = 1);

/// Noise-free or noisy simulation of the global system from x(0).
struct Trajectory {
  std::vector<Eigen::VectorXd> x;  // x(0) .. x(T)
  std::vector<Eigen::VectorXd> u;  // u(0) .. u(T)
  std::vector<Eigen::VectorXd> y;  // y(0) .. y(T)
};

/// Steps the global system over the given inputs. Measurement noise is
/// i.i.d. Gaussian with standard deviation noise_std, added to y only.
Trajectory simulate(const GlobalMatrices& g, const Eigen::VectorXd& x0,
                    const std::vector<Eigen::VectorXd>& inputs, double noise_std = 0.0,
                    std::uint64_t seed = 1);

/// Random inputs u(0..T) with i.i.d. standard normal entries.
std::vector<Eigen::VectorXd> random_inputs(Index size, Index steps, std::uint64_t seed);

/// Lifted signals at time k in subsystem-major order (length N(p+1)r and
/// N(p+1)m respectively). Requires k >= p.
struct LiftedSignals {
  Eigen::VectorXd Y;
  Eigen::VectorXd U;
};
LiftedSignals lift_signals(const LiftedModel& lifted, const Trajectory& traj, Index k);

}  // namespace netspai
