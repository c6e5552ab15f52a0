#include "netspai/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>
#include <random>

#include <Eigen/Eigenvalues>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"

namespace netspai {

SingularInterval SingularInterval::widened(double margin) const {
  SingularInterval out = *this;
  const double spread = b - a;
  out.a = a - margin * std::min(a, spread);
  out.b = b + margin * std::min(b, spread);
  out.kappa_defined = out.a > 0.0;
  out.kappa = out.kappa_defined ? out.b / out.a : 0.0;
  return out;
}

Eigen::VectorXd seeded_unit_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

NormEstimate dominant_eigenvalue(const LinearOperator& op, Index n, const PowerOptions& opts,
                                 Eigen::VectorXd* start) {
  NormEstimate est;
  if (n == 0) {
    est.converged = true;
    return est;
  }
  Eigen::VectorXd v;
  if (start != nullptr && start->size() == n && start->norm() > 0.0) {
    v = start->normalized();
  } else {
    v = seeded_unit_vector(n, opts.seed);
  }
  Eigen::VectorXd w(n);
  double previous = 0.0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    op(v, w);
    const double rayleigh = v.dot(w);
    const double norm = w.norm();
    est.iterations = it;
    est.value = rayleigh;
    if (norm == 0.0 || !std::isfinite(norm)) {
      est.converged = norm == 0.0;
      break;
    }
    v = w / norm;
    if (it > 1 && std::abs(rayleigh - previous) <= opts.tol * std::abs(rayleigh)) {
      est.converged = true;
      break;
    }
    previous = rayleigh;
  }
  if (start != nullptr) *start = v;
  return est;
}

EigenRange lanczos_extremes(const LinearOperator& op, Index n, const PowerOptions& opts,
                            bool max_only, Eigen::VectorXd* start) {
  EigenRange out;
  if (n == 0) {
    out.converged = true;
    return out;
  }
  Eigen::VectorXd v0;
  if (start != nullptr && start->size() == n && start->norm() > 0.0) {
    v0 = start->normalized();
  } else {
    v0 = seeded_unit_vector(n, opts.seed);
  }
  // Thick-restarted Lanczos: the basis V stays orthonormal (two passes of
  // classical Gram-Schmidt) and H = V^T A V is kept explicitly, so a restart
  // simply replaces V by the retained Ritz vectors and H by their values.
  const Index basis = std::max<Index>(2, std::min<Index>(opts.krylov_dim, n));
  const Index keep = std::max<Index>(1, std::min<Index>(20, basis / 4));
  constexpr int kCheckEvery = 5;
  Eigen::MatrixXd V(n, basis);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(basis, basis);
  Eigen::VectorXd w(n), h, w_in;
  V.col(0) = v0;
  Index cols = 1;
  int total = 0;
  int stable_checks = 0;
  double prev_min = 0.0, prev_max = 0.0;
  bool have_prev = false;

  for (;;) {
    const Index j = cols - 1;
    w_in = V.col(j);
    op(w_in, w);
    ++total;
    const auto Q = V.leftCols(cols);
    h = Q.transpose() * w;
    w -= Q * h;
    const Eigen::VectorXd h2 = Q.transpose() * w;
    w -= Q * h2;
    h += h2;
    H.col(j).head(cols) = h;
    H.row(j).head(cols) = h.transpose();
    const double beta = w.norm();

    const Index k = cols;
    const bool full = k == basis;
    const bool budget = total >= opts.max_iter;
    const double hscale = H.topLeftCorner(k, k).cwiseAbs().maxCoeff();
    const bool breakdown = beta <= 1e-14 * std::max(hscale, std::numeric_limits<double>::min());
    if (!full && !budget && !breakdown && k % kCheckEvery != 0) {
      V.col(cols++) = w / beta;
      continue;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(k, k));
    const Eigen::VectorXd& evals = es.eigenvalues();
    const Eigen::MatrixXd& evecs = es.eigenvectors();
    const double theta_min = evals(0), theta_max = evals(k - 1);
    const double scale = std::max({std::abs(theta_min), std::abs(theta_max),
                                   std::numeric_limits<double>::min()});
    const double res_max = std::abs(beta * evecs(k - 1, k - 1));
    const double res_min = std::abs(beta * evecs(k - 1, 0));
    const double limit = opts.tol * scale;
    // Clustered extremes can keep large Ritz residuals although the value has
    // settled; a Ritz value that stops moving for two checks is accepted too.
    if (have_prev && std::abs(theta_max - prev_max) <= limit &&
        (max_only || std::abs(theta_min - prev_min) <= limit)) {
      ++stable_checks;
    } else {
      stable_checks = 0;
    }
    prev_min = theta_min;
    prev_max = theta_max;
    have_prev = true;
    const bool converged = breakdown || k == n ||
                           (res_max <= limit && (max_only || res_min <= limit)) ||
                           stable_checks >= 2;
    out.min = theta_min;
    out.max = theta_max;
    out.iterations = total;
    if (converged || budget) {
      out.converged = converged;
      out.max_vector = V.leftCols(k) * evecs.col(k - 1);
      out.min_vector = V.leftCols(k) * evecs.col(0);
      if (start != nullptr) *start = out.max_vector;
      return out;
    }
    if (!full) {
      V.col(cols++) = w / beta;
      continue;
    }
    std::vector<Index> selected;
    for (Index t = 0; t < keep; ++t) selected.push_back(k - 1 - t);
    if (!max_only) {
      for (Index t = 0; t < keep && t < k - keep; ++t) selected.push_back(t);
    }
    const auto s = static_cast<Index>(selected.size());
    Eigen::MatrixXd S(k, s);
    for (Index t = 0; t < s; ++t) S.col(t) = evecs.col(selected[static_cast<std::size_t>(t)]);
    const Eigen::MatrixXd Y = V.leftCols(k) * S;
    V.leftCols(s) = Y;
    H.setZero();
    for (Index t = 0; t < s; ++t) H(t, t) = evals(selected[static_cast<std::size_t>(t)]);
    V.col(s) = w / beta;
    cols = s + 1;
  }
}

NormEstimate top_eigenvalue(const LinearOperator& op, Index n, const PowerOptions& opts,
                            Eigen::VectorXd* start) {
  if (opts.method == SpectralMethod::power) return dominant_eigenvalue(op, n, opts, start);
  const EigenRange r = lanczos_extremes(op, n, opts, true, start);
  return {r.max, r.iterations, r.converged};
}

NormEstimate spectral_norm(const LinearOperator& apply, const LinearOperator& apply_transpose,
                           Index cols, const PowerOptions& opts, Eigen::VectorXd* start) {
  Eigen::VectorXd tmp;
  auto gram = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    apply(in, tmp);
    apply_transpose(tmp, out);
  };
  NormEstimate est = top_eigenvalue(gram, cols, opts, start);
  est.value = std::sqrt(std::max(est.value, 0.0));
  return est;
}

SingularInterval extreme_singular_values(const BlockSparseMatrix& w, const PowerOptions& opts,
                                         double symmetry_tol) {
  if (w.rows() != w.cols() || w.row_block_sizes() != w.col_block_sizes()) {
    throw DimensionError("extreme_singular_values: matrix must be square, got " +
                         w.shape_string());
  }
  SingularInterval sv;
  sv.seed = opts.seed;
  double scale = 0.0;
  for (Index i = 0; i < w.block_rows(); ++i) {
    for (std::size_t pos = w.row_begin(i); pos < w.row_end(i); ++pos) {
      scale = std::max(scale, w.block(pos, i).cwiseAbs().maxCoeff());
    }
  }
  if (scale == 0.0) {
    sv.converged_a = sv.converged_b = true;
    return sv;
  }
  const double asym = max_asymmetry(w);
  if (asym > symmetry_tol * scale) {
    throw ValidationError("extreme_singular_values: matrix is not symmetric (max |w_ij - w_ji| = " +
                          std::to_string(asym) + ")");
  }

  const Index n = w.rows();
  auto apply_w = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { out = w.multiply(in); };
  if (opts.method == SpectralMethod::lanczos) {
    const EigenRange range = lanczos_extremes(apply_w, n, opts);
    sv.b = std::max(range.max, 0.0);
    sv.a = std::clamp(range.min, 0.0, sv.b);
    sv.converged_a = sv.converged_b = range.converged;
    sv.iterations_a = sv.iterations_b = range.iterations;
    sv.kappa_defined = sv.a > 0.0;
    sv.kappa = sv.kappa_defined ? sv.b / sv.a : 0.0;
    sv.v_min = range.min_vector;
    return sv;
  }
  const NormEstimate top = dominant_eigenvalue(apply_w, n, opts);
  sv.b = std::max(top.value, 0.0);
  sv.converged_b = top.converged;
  sv.iterations_b = top.iterations;

  const double shift = sv.b;
  auto apply_shifted = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = shift * in - w.multiply(in);
  };
  PowerOptions shifted_opts = opts;
  shifted_opts.seed = opts.seed + 1;
  const NormEstimate bottom = dominant_eigenvalue(apply_shifted, n, shifted_opts);
  sv.a = std::clamp(shift - bottom.value, 0.0, sv.b);
  sv.converged_a = bottom.converged;
  sv.iterations_a = bottom.iterations;
  sv.kappa_defined = sv.a > 0.0;
  sv.kappa = sv.kappa_defined ? sv.b / sv.a : 0.0;
  return sv;
}

double two_norm_error(const BlockSparseMatrix& a, const BlockSparseMatrix& b, PowerOptions opts) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("two_norm_error: shapes differ: " + a.shape_string() + " vs " +
                         b.shape_string());
  }
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = a.multiply(in) - b.multiply(in);
  };
  auto apply_t = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = a.multiply_transpose(in) - b.multiply_transpose(in);
  };
  return spectral_norm(apply, apply_t, a.cols(), opts).value;
}

}  // namespace netspai
