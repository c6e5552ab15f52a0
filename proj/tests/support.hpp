#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "netspai/block_sparse.hpp"
#include "netspai/models.hpp"
#include "netspai/pattern.hpp"
#include "netspai/statespace.hpp"

namespace testing {

using netspai::BlockSparseMatrix;
using netspai::Index;

inline std::vector<Index> random_sizes(std::mt19937_64& rng, Index count, Index max_size) {
  std::uniform_int_distribution<Index> d(1, max_size);
  std::vector<Index> out(static_cast<std::size_t>(count));
  for (auto& s : out) s = d(rng);
  return out;
}

inline BlockSparseMatrix random_block_sparse(std::mt19937_64& rng, const std::vector<Index>& rs,
                                             const std::vector<Index>& cs, double density) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<netspai::BlockEntry> entries;
  for (Index i = 0; i < static_cast<Index>(rs.size()); ++i) {
    for (Index j = 0; j < static_cast<Index>(cs.size()); ++j) {
      if (u(rng) >= density) continue;
      Eigen::MatrixXd b(rs[static_cast<std::size_t>(i)], cs[static_cast<std::size_t>(j)]);
      for (Index r = 0; r < b.rows(); ++r)
        for (Index c = 0; c < b.cols(); ++c) b(r, c) = g(rng);
      entries.push_back({i, j, b});
    }
  }
  return BlockSparseMatrix::from_blocks(rs, cs, std::move(entries));
}

inline netspai::PatternMatrix random_pattern(std::mt19937_64& rng, Index n, double density) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<Index, Index>> e;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (u(rng) < density) e.emplace_back(i, j);
  return netspai::PatternMatrix(n, std::move(e));
}

/// Dense boolean support of a pattern.
inline Eigen::MatrixXi pattern_dense(const netspai::PatternMatrix& p) {
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(p.dimension(), p.dimension());
  for (auto [i, j] : p.entries()) m(i, j) = 1;
  return m;
}

inline netspai::PatternMatrix pattern_from_dense(const Eigen::MatrixXi& m) {
  std::vector<std::pair<Index, Index>> e;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0) e.emplace_back(i, j);
  return netspai::PatternMatrix(m.rows(), std::move(e));
}

/// Q diag(lambda) Q^T with log-spaced eigenvalues in [1, kappa].
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Index n, double kappa) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = g(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    lambda[i] = std::pow(kappa, t);
  }
  Eigen::MatrixXd w = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (w + w.transpose());
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

inline double two_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Scalar system with one state, input and output.
inline netspai::InterconnectedSystem scalar_system(double a, double b, double c, double d = 0.0) {
  netspai::InterconnectedSystem s;
  s.N = 1;
  s.n = s.m = s.r = 1;
  s.diag = {Eigen::MatrixXd::Constant(1, 1, a)};
  s.B = {Eigen::MatrixXd::Constant(1, 1, b)};
  s.C = {Eigen::MatrixXd::Constant(1, 1, c)};
  s.D = {Eigen::MatrixXd::Constant(1, 1, d)};
  return s;
}

inline netspai::InterconnectedSystem random_system(std::uint64_t seed, Index N, Index n, Index m,
                                                   Index r, double degree = 2.0,
                                                   bool positive = false, double rho = 0.9) {
  netspai::RandomModelSpec spec;
  spec.N = N;
  spec.n = n;
  spec.m = m;
  spec.r = r;
  spec.mean_degree = std::min(degree, static_cast<double>(N - 1));
  spec.rho = rho;
  spec.positive = positive;
  spec.seed = seed;
  return netspai::generate_random(spec);
}

/// Dense A^k.
inline Eigen::MatrixXd dense_power(const Eigen::MatrixXd& a, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) out = a * out;
  return out;
}

}  // namespace testing
