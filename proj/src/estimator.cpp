#include "netspai/estimator.hpp"

#include <algorithm>
#include <string>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"
#include "netspai/spectral.hpp"

namespace netspai {

namespace {

std::vector<std::vector<Index>> row_supports(const BlockSparseMatrix& m) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(m.block_rows()));
  for (Index i = 0; i < m.block_rows(); ++i) {
    for (std::size_t pos = m.row_begin(i); pos < m.row_end(i); ++pos) {
      const Index count = m.row_block_size(i) * m.col_block_size(m.block_col(pos));
      const double* d = m.block_data(pos);
      if (std::any_of(d, d + count, [](double v) { return v != 0.0; })) {
        out[static_cast<std::size_t>(i)].push_back(m.block_col(pos));
      }
    }
  }
  return out;
}

void check_index(Index j, Index n, const char* what) {
  if (j < 0 || j >= n) {
    throw DimensionError(std::string(what) + ": subsystem index " + std::to_string(j) +
                         " outside [0, " + std::to_string(n) + ")");
  }
}

void check_length(const Eigen::VectorXd& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + ": vector has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(expected));
  }
}

// Cholesky of a dense SPD matrix; fails on indefinite or numerically
// singular input.
Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const std::string& what,
                                       const std::string& hint) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    throw ValidationError(what + " is singular or not positive definite; " + hint);
  }
  return llt;
}

double inverse_residual(const BlockSparseMatrix& w, const BlockSparseMatrix& x) {
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = in - w.multiply(x.multiply(in));
  };
  auto apply_t = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = in - x.multiply_transpose(w.multiply_transpose(in));
  };
  PowerOptions opts;
  opts.tol = 1e-10;
  return spectral_norm(apply, apply_t, w.cols(), opts).value;
}

}  // namespace

DistributedEstimator build_estimator(const BlockSparseMatrix& X, const LiftedModel& lifted,
                                     int threads) {
  if (X.row_block_sizes() != lifted.cal_O.col_block_sizes() ||
      X.col_block_sizes() != lifted.cal_O.col_block_sizes()) {
    throw DimensionError("build_estimator: X " + X.shape_string() +
                         " does not match the state partition of cal_O " +
                         lifted.cal_O.shape_string());
  }
  DistributedEstimator est;
  est.p = lifted.p;
  est.N = lifted.N;
  est.n = lifted.n;
  est.m = lifted.m;
  est.r = lifted.r;
  est.L = spgemm(X, transpose(lifted.cal_O), threads);
  est.Q = spgemm(est.L, lifted.cal_G, threads);
  est.neighbors_L = row_supports(est.L);
  est.neighbors_Q = row_supports(est.Q);
  return est;
}

DistributedEstimator build_estimator(const ApproxInverse& X, const LiftedModel& lifted,
                                     int threads) {
  return build_estimator(X.X, lifted, threads);
}

CommunicationGraph communication_graph(const DistributedEstimator& est) {
  CommunicationGraph g;
  g.L_bar = binarize(est.L);
  g.Q_bar = binarize(est.Q);
  for (Index i = 0; i < est.N; ++i) {
    g.degree_L.push_back(static_cast<Index>(g.L_bar.row(i).size()));
    g.degree_Q.push_back(static_cast<Index>(g.Q_bar.row(i).size()));
  }
  if (est.N > 0) {
    g.mean_degree_L = static_cast<double>(g.L_bar.nnz()) / static_cast<double>(est.N);
    g.mean_degree_Q = static_cast<double>(g.Q_bar.nnz()) / static_cast<double>(est.N);
    g.max_degree_L = *std::max_element(g.degree_L.begin(), g.degree_L.end());
    g.max_degree_Q = *std::max_element(g.degree_Q.begin(), g.degree_Q.end());
  }
  return g;
}

SignalProvider::SignalProvider(Index N, Index y_width, Index u_width)
    : y_width_(y_width),
      u_width_(u_width),
      y_(static_cast<std::size_t>(N)),
      u_(static_cast<std::size_t>(N)) {}

SignalProvider::SignalProvider(const LiftedSignals& s, Index N)
    : SignalProvider(N, N > 0 ? s.Y.size() / N : 0, N > 0 ? s.U.size() / N : 0) {
  if (N <= 0 || s.Y.size() % N != 0 || s.U.size() % N != 0) {
    throw DimensionError("SignalProvider: lifted signal lengths are not divisible by N");
  }
  for (Index j = 0; j < N; ++j) {
    y_[static_cast<std::size_t>(j)] = s.Y.segment(j * y_width_, y_width_);
    u_[static_cast<std::size_t>(j)] = s.U.segment(j * u_width_, u_width_);
  }
}

void SignalProvider::set_output(Index j, Eigen::VectorXd y) {
  check_index(j, size(), "SignalProvider::set_output");
  check_length(y, y_width_, "SignalProvider::set_output");
  y_[static_cast<std::size_t>(j)] = std::move(y);
}

void SignalProvider::set_input(Index j, Eigen::VectorXd u) {
  check_index(j, size(), "SignalProvider::set_input");
  check_length(u, u_width_, "SignalProvider::set_input");
  u_[static_cast<std::size_t>(j)] = std::move(u);
}

void SignalProvider::erase_output(Index j) {
  check_index(j, size(), "SignalProvider::erase_output");
  y_[static_cast<std::size_t>(j)].reset();
}

void SignalProvider::erase_input(Index j) {
  check_index(j, size(), "SignalProvider::erase_input");
  u_[static_cast<std::size_t>(j)].reset();
}

bool SignalProvider::has_output(Index j) const {
  return j >= 0 && j < size() && y_[static_cast<std::size_t>(j)].has_value();
}

bool SignalProvider::has_input(Index j) const {
  return j >= 0 && j < size() && u_[static_cast<std::size_t>(j)].has_value();
}

const Eigen::VectorXd& SignalProvider::output(Index j) const {
  if (!has_output(j)) throw ValidationError("missing lifted output of subsystem " + std::to_string(j));
  ++output_fetches_;
  return *y_[static_cast<std::size_t>(j)];
}

const Eigen::VectorXd& SignalProvider::input(Index j) const {
  if (!has_input(j)) throw ValidationError("missing lifted input of subsystem " + std::to_string(j));
  ++input_fetches_;
  return *u_[static_cast<std::size_t>(j)];
}

void SignalProvider::reset_counters() {
  output_fetches_ = 0;
  input_fetches_ = 0;
}

Eigen::VectorXd local_estimate(const DistributedEstimator& est, Index i,
                               const SignalProvider& signals) {
  check_index(i, est.N, "local_estimate");
  const auto& nl = est.neighbors_L[static_cast<std::size_t>(i)];
  const auto& nq = est.neighbors_Q[static_cast<std::size_t>(i)];
  std::string missing;
  for (Index j : nl) {
    if (!signals.has_output(j)) missing += " Y" + std::to_string(j);
  }
  for (Index j : nq) {
    if (!signals.has_input(j)) missing += " U" + std::to_string(j);
  }
  if (!missing.empty()) {
    throw ValidationError("local_estimate(" + std::to_string(i) +
                          "): missing neighbour signals:" + missing);
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(est.n);
  for (Index j : nl) {
    const auto pos = est.L.find(i, j);
    x.noalias() += est.L.block(*pos, i) * signals.output(j);
  }
  for (Index j : nq) {
    const auto pos = est.Q.find(i, j);
    x.noalias() -= est.Q.block(*pos, i) * signals.input(j);
  }
  return x;
}

Eigen::VectorXd distributed_estimate(const DistributedEstimator& est,
                                     const SignalProvider& signals) {
  Eigen::VectorXd x(est.N * est.n);
  for (Index i = 0; i < est.N; ++i) x.segment(i * est.n, est.n) = local_estimate(est, i, signals);
  return x;
}

Eigen::VectorXd centralized_estimate(const LiftedModel& lifted, const Gramian& gramian,
                                     const LiftedSignals& signals) {
  check_length(signals.Y, lifted.cal_O.rows(), "centralized_estimate(Y)");
  check_length(signals.U, lifted.cal_G.cols(), "centralized_estimate(U)");
  const auto llt = factor_spd(gramian.matrix.to_dense(), "centralized_estimate: the Gramian",
                              "the lifted observability matrix lacks full column rank; use mu > 0");
  const Eigen::VectorXd rhs =
      lifted.cal_O.multiply_transpose(signals.Y - lifted.cal_G.multiply(signals.U));
  return llt.solve(rhs);
}

ControlResult least_norm_control(const LiftedModel& lifted, const Gramian& q,
                                 const Eigen::VectorXd& x_target,
                                 const Eigen::VectorXd& x_start, const ApproxInverse* X) {
  const Index nx = lifted.global.A.rows();
  check_length(x_target, nx, "least_norm_control(x_target)");
  check_length(x_start, nx, "least_norm_control(x_start)");
  if (q.matrix.rows() != nx) {
    throw DimensionError("least_norm_control: Gramian " + q.matrix.shape_string() +
                         " does not match the state dimension");
  }
  ControlResult res;
  const Eigen::VectorXd d = x_target - lifted.A_pow_p.multiply(x_start);
  res.target_norm = d.norm();
  Eigen::VectorXd z;
  if (X != nullptr) {
    if (X->X.rows() != nx || X->X.cols() != nx) {
      throw DimensionError("least_norm_control: approximate inverse " + X->X.shape_string() +
                           " does not match the state dimension");
    }
    z = X->X.multiply(d);
    res.inverse_residual = inverse_residual(q.matrix, X->X);
    res.residual_bound = res.inverse_residual * res.target_norm;
  } else {
    const auto llt =
        factor_spd(q.matrix.to_dense(), "least_norm_control: the controllability Gramian",
                   "p is below the controllability index; use mu > 0");
    z = llt.solve(d);
  }
  res.U = lifted.cal_R.multiply_transpose(z);
  res.residual = (d - lifted.cal_R.multiply(res.U)).norm();
  return res;
}

BlockSparseMatrix impulse_gramian(const LiftedModel& lifted, int threads) {
  return spgemm(transpose(lifted.cal_G), lifted.cal_G, threads);
}

Eigen::VectorXd impulse_response_solve(const LiftedModel& lifted,
                                       const Eigen::VectorXd& y_desired,
                                       const ApproxInverse* X) {
  check_length(y_desired, lifted.cal_G.rows(), "impulse_response_solve");
  const Eigen::VectorXd rhs = lifted.cal_G.multiply_transpose(y_desired);
  if (X != nullptr) {
    if (X->X.rows() != lifted.cal_G.cols() || X->X.cols() != lifted.cal_G.cols()) {
      throw DimensionError("impulse_response_solve: approximate inverse " + X->X.shape_string() +
                           " does not match cal_G^T cal_G");
    }
    return X->X.multiply(rhs);
  }
  const Eigen::MatrixXd g = lifted.cal_G.to_dense();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g);
  qr.setThreshold(1e-10);
  if (qr.rank() < g.cols()) {
    throw ValidationError("impulse_response_solve: cal_G has rank " + std::to_string(qr.rank()) +
                          " < " + std::to_string(g.cols()) + " columns");
  }
  const auto llt = factor_spd(g.transpose() * g, "impulse_response_solve: cal_G^T cal_G",
                              "cal_G must have full column rank");
  return llt.solve(rhs);
}

PatternMatrix predict_obs_pattern(const PatternMatrix& a_bar, int p) {
  if (p < 0) throw ValidationError("predict_obs_pattern: p must be nonnegative");
  return pattern_power_sum(a_bar, p);
}

PatternMatrix predict_gramian_pattern(const PatternMatrix& a_bar, int p) {
  if (p < 0) throw ValidationError("predict_gramian_pattern: p must be nonnegative");
  PatternMatrix power = PatternMatrix::identity(a_bar.dimension());
  PatternMatrix out = power;
  for (int i = 1; i <= p; ++i) {
    power = pattern_product(power, a_bar);
    out = pattern_union(out, pattern_product(pattern_transpose(power), power));
  }
  return out;
}

PatternMatrix predict_impulse_pattern(const PatternMatrix& a_bar, int p) {
  if (p < 1) throw ValidationError("predict_impulse_pattern: p must be >= 1");
  return pattern_power_sum(a_bar, p - 1);
}

EstimatorPatterns predict_estimator_patterns(const PatternMatrix& a_bar, int p, int s) {
  EstimatorPatterns out;
  out.O_bar = predict_obs_pattern(a_bar, p);
  out.W_bar = predict_gramian_pattern(a_bar, p);
  out.X_bar = pattern_power_sum(out.W_bar, s);
  out.G_bar = p >= 1 ? predict_impulse_pattern(a_bar, p) : PatternMatrix::identity(a_bar.dimension());
  out.L_bar = pattern_product(out.X_bar, pattern_transpose(out.O_bar));
  out.Q_bar = pattern_product(out.L_bar, out.G_bar);
  return out;
}

}  // namespace netspai
