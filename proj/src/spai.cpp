#include "netspai/spai.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"

#include <Eigen/Eigenvalues>

namespace netspai {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_square_partition(const BlockSparseMatrix& w, const char* op) {
  if (w.row_block_sizes() != w.col_block_sizes()) {
    throw DimensionError(std::string(op) + ": matrix must have identical row and column blocks, got " +
                         w.shape_string());
  }
}

// ||I - W X||_2 through the top eigenvalue of E^T E.
double residual_norm(const BlockSparseMatrix& w, const BlockSparseMatrix& x,
                     const PowerOptions& opts, Index dense_max, Eigen::VectorXd* start) {
  if (w.rows() <= dense_max) {
    // Near the roundoff floor the top singular values of E cluster and an
    // iterative estimate converges slowly; the dense route is exact and cheap.
    const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(w.rows(), w.cols()) - w.to_dense() * x.to_dense();
    const Eigen::MatrixXd ete = e.transpose() * e;
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ete, Eigen::EigenvaluesOnly).eigenvalues();
    return ev.size() == 0 ? 0.0 : std::sqrt(std::max(ev.maxCoeff(), 0.0));
  }
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = in - w.multiply(x.multiply(in));
  };
  auto apply_t = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = in - x.multiply_transpose(w.multiply_transpose(in));
  };
  return spectral_norm(apply, apply_t, w.cols(), opts, start).value;
}

BlockSparseMatrix sparsify(const BlockSparseMatrix& z, const PatternMatrix* mask,
                           std::optional<double> phi) {
  BlockSparseMatrix out = mask ? mask_to_pattern(z, *mask) : z;
  if (phi && *phi > 0.0) out = drop_small(out, *phi);
  return out;
}

}  // namespace

std::string to_string(SpaiStatus s) {
  switch (s) {
    case SpaiStatus::converged: return "converged";
    case SpaiStatus::max_iter: return "max_iter";
    case SpaiStatus::diverged: return "diverged";
    case SpaiStatus::stagnated: return "stagnated";
  }
  return "unknown";
}

std::string to_string(SpaiMethod m) {
  return m == SpaiMethod::newton_schulz ? "newton-schulz" : "frobenius";
}

void NewtonSchulzConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("newton_schulz: tol must be positive");
  if (max_iter < 1) throw ValidationError("newton_schulz: max_iter must be >= 1");
  if (!(divergence_factor > 1.0)) {
    throw ValidationError("newton_schulz: divergence_factor must exceed 1");
  }
  if (phi && *phi < 0.0) throw ValidationError("newton_schulz: phi must be nonnegative");
  if (dense_mode && (pattern || phi)) {
    throw ValidationError("newton_schulz: dense mode excludes a pattern or phi");
  }
  if (!dense_mode && !pattern && !phi) {
    throw ValidationError(
        "newton_schulz: declare a pattern, a dropping parameter phi, or dense mode");
  }
  if (interval_margin < 0.0 || interval_margin >= 1.0) {
    throw ValidationError("newton_schulz: interval_margin must lie in [0, 1)");
  }
  if (stall_window < 0) throw ValidationError("newton_schulz: stall_window must be >= 0");
  if (threads < 1) throw ValidationError("newton_schulz: threads must be >= 1");
}

BlockSparseMatrix initial_guess(const BlockSparseMatrix& w, const SingularInterval& sv) {
  if (!(sv.b > 0.0)) throw ValidationError("initial_guess: b must be positive");
  return scale(w, 2.0 / (sv.a * sv.a + sv.b * sv.b));
}

double error_bound(double kappa, int k) {
  if (!(kappa >= 1.0)) throw ValidationError("error_bound: kappa must be >= 1");
  if (k < 0) throw ValidationError("error_bound: k must be nonnegative");
  if (kappa == 1.0) return 0.0;
  const double k2 = kappa * kappa;
  // log((k2 - 1)/(k2 + 1)) without cancellation for kappa near 1.
  const double log_ratio = std::log1p(-2.0 / (k2 + 1.0));
  const double log_bound = std::ldexp(log_ratio, k);  // 2^k * log_ratio
  return std::exp(log_bound);
}

ApproxInverse newton_schulz(const BlockSparseMatrix& w, const NewtonSchulzConfig& cfg) {
  cfg.validate();
  require_square_partition(w, "newton_schulz");
  const auto t_start = Clock::now();

  ApproxInverse result;
  result.method = SpaiMethod::newton_schulz;
  SpaiReport& rep = result.report;
  rep.method = SpaiMethod::newton_schulz;

  rep.interval = cfg.interval ? *cfg.interval : extreme_singular_values(w, cfg.interval_options);
  if (!(rep.interval.a > 0.0)) {
    throw ValidationError(
        "newton_schulz: matrix is not positive definite (smallest singular value estimate " +
        std::to_string(rep.interval.a) + "); regularize with W + mu I, mu > 0");
  }
  rep.kappa = rep.interval.kappa;
  rep.kappa_unregularized = rep.kappa;
  const SingularInterval used = rep.interval.widened(cfg.interval_margin);
  rep.a_used = used.a;
  rep.b_used = used.b;
  rep.kappa_used = used.kappa;

  std::optional<PatternMatrix> mask;
  if (cfg.pattern) {
    if (cfg.pattern->dimension() != w.block_rows()) {
      throw DimensionError("newton_schulz: pattern dimension " +
                           std::to_string(cfg.pattern->dimension()) + " does not match " +
                           std::to_string(w.block_rows()) + " block rows");
    }
    mask = pattern_union(*cfg.pattern, pattern_transpose(*cfg.pattern));
  }
  const PatternMatrix* mask_ptr = mask ? &*mask : nullptr;
  std::optional<PatternMatrix> upper;
  if (max_asymmetry(w) == 0.0) {
    upper = upper_triangle((mask && !cfg.dense_mode) ? *mask : PatternMatrix::full(w.block_rows()));
  }

  // The residual is largest along the low end of W's spectrum early on.
  Eigen::VectorXd warm = rep.interval.v_min;
  auto t_iter = Clock::now();
  BlockSparseMatrix x = initial_guess(w, used);
  if (!cfg.dense_mode) x = sparsify(x, mask_ptr, cfg.phi);
  double eps = residual_norm(w, x, cfg.residual_options, cfg.dense_residual_max, &warm);
  rep.iterations.push_back({0, eps, error_bound(used.kappa, 0), x.nnz_blocks(), seconds_since(t_iter)});

  BlockSparseMatrix best = x;
  double best_eps = eps;
  rep.best_k = 0;
  int increases = 0;
  int since_best = 0;
  rep.status = SpaiStatus::max_iter;

  if (!std::isfinite(eps)) {
    rep.status = SpaiStatus::diverged;
  } else if (eps <= cfg.tol) {
    rep.status = SpaiStatus::converged;
  } else {
    for (int k = 1; k <= cfg.max_iter; ++k) {
      t_iter = Clock::now();
      const BlockSparseMatrix t = spgemm(w, x, cfg.threads);
      BlockSparseMatrix z;
      if (upper) {
        // X W X is symmetric: form the upper block triangle and mirror it.
        z = symmetric_from_upper(sp_add(x, spgemm_masked(x, t, *upper, cfg.threads), 2.0, -1.0));
      } else {
        const BlockSparseMatrix xt = (mask_ptr && !cfg.dense_mode)
                                         ? spgemm_masked(x, t, *mask_ptr, cfg.threads)
                                         : spgemm(x, t, cfg.threads);
        z = sp_add(x, xt, 2.0, -1.0);
      }
      x = cfg.dense_mode ? std::move(z) : sparsify(z, mask_ptr, cfg.phi);

      const double prev = eps;
      eps = residual_norm(w, x, cfg.residual_options, cfg.dense_residual_max, &warm);
      rep.iterations.push_back({k, eps, error_bound(used.kappa, k), x.nnz_blocks(),
                                seconds_since(t_iter)});

      if (!std::isfinite(eps)) {
        rep.status = SpaiStatus::diverged;
        break;
      }
      if (eps < best_eps) {
        // While eps is still close to 1 its complement roughly doubles per
        // step, so progress is measured against min(eps, 1 - eps).
        const double reference = std::min(best_eps, 1.0 - best_eps);
        since_best = best_eps - eps >= cfg.stall_tol * reference ? 0 : since_best + 1;
        best_eps = eps;
        best = x;
        rep.best_k = k;
      } else {
        ++since_best;
      }
      if (eps <= cfg.tol) {
        rep.status = SpaiStatus::converged;
        break;
      }
      increases = eps > cfg.divergence_factor * prev ? increases + 1 : 0;
      if (increases >= 2) {
        rep.status = SpaiStatus::diverged;
        break;
      }
      if (cfg.stall_window > 0 && since_best >= cfg.stall_window) {
        rep.status = SpaiStatus::stagnated;
        break;
      }
    }
  }
  result.X = std::move(best);
  rep.total_seconds = seconds_since(t_start);
  return result;
}

ApproxInverse newton_schulz(const Gramian& w, const NewtonSchulzConfig& cfg) {
  ApproxInverse out = newton_schulz(w.matrix, cfg);
  out.report.mu = w.mu;
  return out;
}

PatternMatrix predict_pattern_neumann(const BlockSparseMatrix& w, int s) {
  if (s < 0) throw ValidationError("predict_pattern_neumann: s must be nonnegative");
  return pattern_power_sum(binarize(w), s);
}

PatternMatrix predict_pattern_neumann(const Gramian& w, int s) {
  return predict_pattern_neumann(w.matrix, s);
}

PatternMatrix banded_pattern(const std::vector<Index>& block_sizes, Index beta) {
  if (beta < 0) throw ValidationError("banded_pattern: beta must be nonnegative");
  const auto count = static_cast<Index>(block_sizes.size());
  std::vector<Index> first(block_sizes.size()), last(block_sizes.size());
  Index off = 0;
  for (std::size_t i = 0; i < block_sizes.size(); ++i) {
    if (block_sizes[i] < 1) throw ValidationError("banded_pattern: block sizes must be positive");
    first[i] = off;
    last[i] = off + block_sizes[i] - 1;
    off += block_sizes[i];
  }
  // Scalar gap between two blocks' index ranges (0 when they overlap).
  auto gap = [&](std::size_t i, std::size_t j) {
    return std::max<Index>({0, first[j] - last[i], first[i] - last[j]});
  };
  PatternMatrix p(count);
  std::size_t lo = 0;
  for (std::size_t i = 0; i < block_sizes.size(); ++i) {
    while (gap(i, lo) > beta && lo < i) ++lo;
    std::vector<Index> cols;
    for (std::size_t j = lo; j < block_sizes.size() && (j <= i || gap(i, j) <= beta); ++j) {
      cols.push_back(static_cast<Index>(j));
    }
    p.set_row(static_cast<Index>(i), std::move(cols));
  }
  return p;
}

PatternMatrix banded_pattern(Index block_count, Index block_size, Index beta) {
  return banded_pattern(std::vector<Index>(static_cast<std::size_t>(block_count), block_size), beta);
}

ApproxInverse frobenius_spai(const BlockSparseMatrix& w, const PatternMatrix& pattern,
                             int threads) {
  require_square_partition(w, "frobenius_spai");
  if (pattern.dimension() != w.block_cols()) {
    throw DimensionError("frobenius_spai: pattern dimension " +
                         std::to_string(pattern.dimension()) + " does not match " +
                         std::to_string(w.block_cols()) + " block columns");
  }
  if (threads < 1) throw ValidationError("frobenius_spai: threads must be >= 1");
  const auto t_start = Clock::now();
  const Index nb = w.block_cols();
  const PatternMatrix cols_of = pattern_transpose(pattern);  // row J lists I with (I, J) in P
  const BlockSparseMatrix wt = transpose(w);                 // row k of W^T is column k of W

  struct ColumnResult {
    std::vector<BlockEntry> blocks;
    std::vector<double> residuals;  // per scalar column of the block column
    bool empty = false;
  };
  std::vector<ColumnResult> results(static_cast<std::size_t>(nb));

  auto solve_block_column = [&](Index jb) {
    ColumnResult& res = results[static_cast<std::size_t>(jb)];
    const Index width = w.col_block_size(jb);
    const auto allowed = cols_of.row(jb);
    if (allowed.empty()) {
      res.empty = true;
      res.residuals.assign(static_cast<std::size_t>(width), 1.0);
      return;
    }
    // Unknowns: scalar rows of the allowed block rows. Equations: block rows
    // of W touched by those columns.
    std::vector<Index> unknown_blocks(allowed.begin(), allowed.end());
    std::vector<Index> eq_blocks;
    for (Index ib : unknown_blocks) {
      for (Index kb : wt.row_cols(ib)) eq_blocks.push_back(kb);
    }
    std::sort(eq_blocks.begin(), eq_blocks.end());
    eq_blocks.erase(std::unique(eq_blocks.begin(), eq_blocks.end()), eq_blocks.end());

    std::vector<Index> unk_off, eq_off;
    Index nu = 0, ne = 0;
    for (Index ib : unknown_blocks) {
      unk_off.push_back(nu);
      nu += w.col_block_size(ib);
    }
    for (Index kb : eq_blocks) {
      eq_off.push_back(ne);
      ne += w.row_block_size(kb);
    }
    Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(ne, nu);
    for (std::size_t u = 0; u < unknown_blocks.size(); ++u) {
      const Index ib = unknown_blocks[u];
      for (std::size_t pos = wt.row_begin(ib); pos < wt.row_end(ib); ++pos) {
        const Index kb = wt.block_col(pos);
        const auto e = static_cast<std::size_t>(
            std::lower_bound(eq_blocks.begin(), eq_blocks.end(), kb) - eq_blocks.begin());
        // wt block (ib, kb) is W block (kb, ib) transposed.
        sub.block(eq_off[e], unk_off[u], w.row_block_size(kb), w.col_block_size(ib)) =
            wt.block(pos, ib).transpose();
      }
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ne, width);
    bool diagonal_in_rows = false;
    const auto it = std::lower_bound(eq_blocks.begin(), eq_blocks.end(), jb);
    if (it != eq_blocks.end() && *it == jb) {
      const auto e = static_cast<std::size_t>(it - eq_blocks.begin());
      rhs.block(eq_off[e], 0, width, width).setIdentity();
      diagonal_in_rows = true;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    const Eigen::MatrixXd sol = qr.solve(rhs);
    const Eigen::MatrixXd r = rhs - sub * sol;
    for (Index c = 0; c < width; ++c) {
      double sq = r.col(c).squaredNorm();
      if (!diagonal_in_rows) sq += 1.0;  // e_j lies outside every equation row
      res.residuals.push_back(std::sqrt(sq));
    }
    for (std::size_t u = 0; u < unknown_blocks.size(); ++u) {
      const Index ib = unknown_blocks[u];
      res.blocks.push_back({ib, jb, sol.block(unk_off[u], 0, w.row_block_size(ib), width)});
    }
  };

  if (threads == 1 || nb < 2) {
    for (Index jb = 0; jb < nb; ++jb) solve_block_column(jb);
  } else {
    std::vector<std::thread> pool;
    const Index chunk = (nb + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const Index lo = t * chunk, hi = std::min(nb, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (Index jb = lo; jb < hi; ++jb) solve_block_column(jb);
      });
    }
    for (auto& th : pool) th.join();
  }

  ApproxInverse out;
  out.method = SpaiMethod::frobenius;
  SpaiReport& rep = out.report;
  rep.method = SpaiMethod::frobenius;
  std::vector<BlockEntry> entries;
  double total = 0.0;
  for (Index jb = 0; jb < nb; ++jb) {
    ColumnResult& res = results[static_cast<std::size_t>(jb)];
    if (res.empty) rep.empty_columns.push_back(jb);
    for (double v : res.residuals) {
      rep.column_residuals.push_back(v);
      total += v * v;
    }
    for (auto& b : res.blocks) entries.push_back(std::move(b));
  }
  out.X = BlockSparseMatrix::from_blocks(w.col_block_sizes(), w.col_block_sizes(), std::move(entries));
  rep.frobenius_objective = std::sqrt(total);
  rep.status = SpaiStatus::converged;
  rep.total_seconds = seconds_since(t_start);
  return out;
}

ApproxInverse frobenius_spai(const Gramian& w, const PatternMatrix& pattern, int threads) {
  ApproxInverse out = frobenius_spai(w.matrix, pattern, threads);
  out.report.mu = w.mu;
  return out;
}

ApproxInverse regularize_and_invert(const BlockSparseMatrix& w, double mu,
                                    const NewtonSchulzConfig& cfg) {
  if (mu < 0.0) throw ValidationError("regularize_and_invert: mu must be nonnegative");
  require_square_partition(w, "regularize_and_invert");
  const SingularInterval base =
      cfg.interval ? *cfg.interval : extreme_singular_values(w, cfg.interval_options);
  SingularInterval shifted = base;
  shifted.a = base.a + mu;
  shifted.b = base.b + mu;
  shifted.kappa_defined = shifted.a > 0.0;
  shifted.kappa = shifted.kappa_defined ? shifted.b / shifted.a : 0.0;

  NewtonSchulzConfig inner = cfg;
  inner.interval = shifted;
  ApproxInverse out = newton_schulz(mu > 0.0 ? add_identity(w, mu) : w, inner);
  out.report.mu = mu;
  out.report.kappa_unregularized = base.kappa_defined ? base.kappa : 0.0;
  return out;
}

ApproxInverse regularize_and_invert(const Gramian& w, double mu, const NewtonSchulzConfig& cfg) {
  ApproxInverse out = regularize_and_invert(w.matrix, mu, cfg);
  out.report.mu = w.mu + mu;
  return out;
}

}  // namespace netspai
