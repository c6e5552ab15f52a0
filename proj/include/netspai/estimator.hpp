#pragma once

#include <atomic>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "netspai/block_sparse.hpp"
#include "netspai/pattern.hpp"
#include "netspai/spai.hpp"
#include "netspai/statespace.hpp"

namespace netspai {

/// x_i(k-p) ~ sum_j L_ij Y_j - sum_j Q_ij U_j with L = X cal_O^T and
/// Q = L cal_G.
struct DistributedEstimator {
  int p = 0;
  Index N = 0, n = 0, m = 0, r = 0;
  BlockSparseMatrix L;  // N x N blocks of n x (p+1)r
  BlockSparseMatrix Q;  // N x N blocks of n x (p+1)m
  std::vector<std::vector<Index>> neighbors_L, neighbors_Q;
};

struct CommunicationGraph {
  PatternMatrix L_bar, Q_bar;
  std::vector<Index> degree_L, degree_Q;  // |M_L,i|, |M_Q,i|
  double mean_degree_L = 0.0, mean_degree_Q = 0.0;
  Index max_degree_L = 0, max_degree_Q = 0;
};

DistributedEstimator build_estimator(const BlockSparseMatrix& X, const LiftedModel& lifted,
                                     int threads = 1);
DistributedEstimator build_estimator(const ApproxInverse& X, const LiftedModel& lifted,
                                     int threads = 1);

CommunicationGraph communication_graph(const DistributedEstimator& est);

/// Per-subsystem lifted signals with fetch accounting. Each fetch of Y_j or
/// U_j increments a counter; missing entries are reported as absent.
class SignalProvider {
 public:
  SignalProvider(Index N, Index y_width, Index u_width);
  /// Splits subsystem-major lifted signals into per-subsystem pieces.
  SignalProvider(const LiftedSignals& s, Index N);

  void set_output(Index j, Eigen::VectorXd y);
  void set_input(Index j, Eigen::VectorXd u);
  void erase_output(Index j);
  void erase_input(Index j);
  bool has_output(Index j) const;
  bool has_input(Index j) const;

  const Eigen::VectorXd& output(Index j) const;
  const Eigen::VectorXd& input(Index j) const;

  std::size_t output_fetches() const { return output_fetches_.load(); }
  std::size_t input_fetches() const { return input_fetches_.load(); }
  void reset_counters();

  Index size() const { return static_cast<Index>(y_.size()); }

 private:
  Index y_width_, u_width_;
  std::vector<std::optional<Eigen::VectorXd>> y_, u_;
  mutable std::atomic<std::size_t> output_fetches_{0}, input_fetches_{0};
};

/// Local estimate of x_i(k-p) from the signals of M_L,i and M_Q,i only.
/// Throws ValidationError naming every missing neighbour.
Eigen::VectorXd local_estimate(const DistributedEstimator& est, Index i,
                               const SignalProvider& signals);
/// Concatenation of local_estimate over all subsystems.
Eigen::VectorXd distributed_estimate(const DistributedEstimator& est,
                                     const SignalProvider& signals);

/// W^{-1} cal_O^T (Y - cal_G U) with a dense Cholesky factorization of W
/// (which may include mu I).
Eigen::VectorXd centralized_estimate(const LiftedModel& lifted, const Gramian& gramian,
                                     const LiftedSignals& signals);

struct ControlResult {
  Eigen::VectorXd U;             ///< lifted input, subsystem-major
  double residual = 0.0;         ///< ||x_target - A^p x_start - cal_R U||_2
  double target_norm = 0.0;      ///< ||x_target - A^p x_start||_2
  double inverse_residual = 0.0; ///< ||I - Q X||_2 for an approximate inverse, else 0
  double residual_bound = 0.0;   ///< inverse_residual * target_norm
};

/// U = cal_R^T Q^{-1} (x_target - A^p x_start). Without X the inverse is
/// applied through a dense Cholesky factorization of Q.
ControlResult least_norm_control(const LiftedModel& lifted, const Gramian& q,
                                 const Eigen::VectorXd& x_target,
                                 const Eigen::VectorXd& x_start,
                                 const ApproxInverse* X = nullptr);

/// cal_G^T cal_G, the Gramian-like matrix of the impulse-response solve.
BlockSparseMatrix impulse_gramian(const LiftedModel& lifted, int threads = 1);

/// U = (cal_G^T cal_G)^{-1} cal_G^T Y. The inner inverse is exact (dense
/// Cholesky after a rank check) or the supplied approximation.
Eigen::VectorXd impulse_response_solve(const LiftedModel& lifted,
                                       const Eigen::VectorXd& y_desired,
                                       const ApproxInverse* X = nullptr);

/// T(I + A + ... + A^p).
PatternMatrix predict_obs_pattern(const PatternMatrix& a_bar, int p);
/// Union over i = 0..p of (A^T)^i A^i.
PatternMatrix predict_gramian_pattern(const PatternMatrix& a_bar, int p);
/// T(I + A + ... + A^{p-1}).
PatternMatrix predict_impulse_pattern(const PatternMatrix& a_bar, int p);

struct EstimatorPatterns {
  PatternMatrix O_bar, W_bar, X_bar, G_bar, L_bar, Q_bar;
};
/// L_bar = X_bar O_bar^T and Q_bar = L_bar G_bar with X_bar = T(I + W_bar +
/// ... + W_bar^s).
EstimatorPatterns predict_estimator_patterns(const PatternMatrix& a_bar, int p, int s);

}  // namespace netspai
