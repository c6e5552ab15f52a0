#include "netspai/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "netspai/errors.hpp"
#include "netspai/statespace.hpp"

namespace netspai {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

Eigen::SparseMatrix<double> to_eigen_sparse(const BlockSparseMatrix& m) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.nnz());
  for (Index i = 0; i < m.block_rows(); ++i) {
    for (std::size_t pos = m.row_begin(i); pos < m.row_end(i); ++pos) {
      const Index j = m.block_col(pos);
      const auto blk = m.block(pos, i);
      for (Index r = 0; r < blk.rows(); ++r) {
        for (Index c = 0; c < blk.cols(); ++c) {
          if (blk(r, c) != 0.0) trip.emplace_back(m.row_offset(i) + r, m.col_offset(j) + c, blk(r, c));
        }
      }
    }
  }
  Eigen::SparseMatrix<double> out(m.rows(), m.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

bool HeatReproResult::e_monotone() const {
  std::vector<const HeatBetaRun*> sorted;
  for (const auto& r : runs) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->beta < b->beta; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->e > sorted[i - 1]->e) return false;
  }
  return true;
}

HeatReproResult reproduce_heat(const HeatReproConfig& cfg) {
  const auto t_total = Clock::now();
  HeatReproResult res;
  const InterconnectedSystem sys = generate_heat3d(cfg.model);
  res.N = sys.N;
  res.states = sys.N * sys.n;

  auto t = Clock::now();
  const LiftedModel lifted = lift(sys, cfg.p, cfg.threads);
  const Gramian w = obs_gramian(lifted, cfg.mu, cfg.threads);
  res.gramian_seconds = since(t);
  res.gramian_nnz_blocks = w.matrix.nnz_blocks();

  t = Clock::now();
  res.interval = extreme_singular_values(w.matrix);
  res.kappa = res.interval.kappa;
  res.interval_seconds = since(t);

  BlockSparseMatrix inverse;
  if (cfg.dense_oracle) {
    t = Clock::now();
    const Eigen::MatrixXd wd = w.matrix.to_dense();
    Eigen::LLT<Eigen::MatrixXd> llt(wd);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("reproduce_heat: W_r is not positive definite; increase mu");
    }
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(wd.rows(), wd.cols()));
    inverse = BlockSparseMatrix::from_dense(inv, w.matrix.row_block_sizes(), w.matrix.col_block_sizes());
    res.inverse_norm = two_norm_error(inverse, BlockSparseMatrix(w.matrix.row_block_sizes(),
                                                                 w.matrix.col_block_sizes()));
    res.oracle_seconds = since(t);
  }

  for (Index beta : cfg.betas) {
    NewtonSchulzConfig ns;
    ns.pattern = banded_pattern(w.matrix.row_block_sizes(), beta);
    ns.phi = cfg.phi;
    ns.interval = res.interval;
    ns.max_iter = cfg.max_iter;
    ns.threads = cfg.threads;
    ns.residual_options.tol = cfg.residual_tol;
    ns.residual_options.max_iter = cfg.residual_max_iter;
    HeatBetaRun run;
    run.beta = beta;
    t = Clock::now();
    ApproxInverse x = newton_schulz(w, ns);
    run.seconds = since(t);
    run.report = std::move(x.report);
    run.nnz_blocks = x.X.nnz_blocks();
    if (cfg.dense_oracle) {
      run.e = two_norm_error(inverse, x.X);
      run.e_relative = run.e / res.inverse_norm;
    }
    res.runs.push_back(std::move(run));
  }
  res.total_seconds = since(t_total);
  return res;
}

double dense_baseline_inverse(const BlockSparseMatrix& w, Index chunk, double* max_column_residual) {
  if (w.rows() != w.cols()) throw DimensionError("dense baseline: matrix must be square");
  if (chunk < 1) throw ValidationError("dense baseline: chunk must be positive");
  const auto t = Clock::now();
  const Eigen::SparseMatrix<double> ws = to_eigen_sparse(w);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ws);
  if (ldlt.info() != Eigen::Success) throw NumericalError("dense baseline: factorization failed");
  const Index n = w.rows();
  double worst = 0.0;
  Eigen::MatrixXd rhs, x;
  for (Index c0 = 0; c0 < n; c0 += chunk) {
    const Index k = std::min(chunk, n - c0);
    rhs = Eigen::MatrixXd::Zero(n, k);
    for (Index c = 0; c < k; ++c) rhs(c0 + c, c) = 1.0;
    x = ldlt.solve(rhs);
    if (max_column_residual != nullptr) {
      const Eigen::MatrixXd r = rhs - ws * x;
      worst = std::max(worst, r.colwise().norm().maxCoeff());
    }
  }
  if (max_column_residual != nullptr) *max_column_residual = worst;
  return since(t);
}

std::optional<double> loglog_slope(const std::vector<double>& n, const std::vector<double>& t) {
  if (n.size() != t.size()) throw DimensionError("loglog_slope: size mismatch");
  std::vector<std::size_t> idx(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return n[a] < n[b]; });
  if (idx.size() >= 3) idx.erase(idx.begin());
  if (idx.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (auto i : idx) {
    if (!(n[i] > 0.0) || !(t[i] > 0.0)) throw ValidationError("loglog_slope: values must be positive");
    mx += std::log(n[i]);
    my += std::log(t[i]);
  }
  mx /= static_cast<double>(idx.size());
  my /= static_cast<double>(idx.size());
  double sxy = 0.0, sxx = 0.0;
  for (auto i : idx) {
    const double dx = std::log(n[i]) - mx;
    sxy += dx * (std::log(t[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

ScalingResult benchmark_scaling(const ScalingConfig& cfg) {
  if (cfg.sizes.empty()) throw ValidationError("benchmark: no sizes given");
  for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
    if (cfg.sizes[i] % cfg.gy != 0 || cfg.sizes[i] < cfg.gy) {
      throw ValidationError("benchmark: size " + std::to_string(cfg.sizes[i]) +
                            " is not a multiple of gy = " + std::to_string(cfg.gy));
    }
    if (i > 0 && cfg.sizes[i] <= cfg.sizes[i - 1]) {
      throw ValidationError("benchmark: sizes must be strictly increasing");
    }
  }
  ScalingResult out;
  std::vector<double> ns_n, ns_t, dense_n, dense_t;
  for (Index N : cfg.sizes) {
    HeatModelSpec spec;
    spec.gx = N / cfg.gy;
    spec.gy = cfg.gy;
    spec.gz = cfg.gz;
    const InterconnectedSystem sys = generate_heat3d(spec);
    const LiftedModel lifted = lift(sys, cfg.p, cfg.threads);
    const Gramian w = obs_gramian(lifted, cfg.mu, cfg.threads);

    NewtonSchulzConfig ns;
    ns.pattern = banded_pattern(w.matrix.row_block_sizes(), cfg.beta);
    ns.phi = cfg.phi;
    ns.max_iter = cfg.max_iter;
    ns.threads = cfg.threads;
    ns.interval_options.tol = cfg.spectral_tol;
    ns.residual_options.tol = cfg.spectral_tol;
    ns.residual_options.max_iter = 400;
    const auto t = Clock::now();
    const ApproxInverse x = newton_schulz(w, ns);
    const double seconds = since(t);

    BenchmarkRecord rec;
    rec.N = N;
    rec.dimension = w.matrix.rows();
    rec.method = "ns";
    rec.beta = cfg.beta;
    rec.phi = cfg.phi;
    rec.mu = cfg.mu;
    rec.kappa = x.report.kappa;
    rec.final_error = x.report.final_epsilon();
    rec.iterations = x.report.iterations.empty() ? 0 : x.report.iterations.back().k;
    rec.seconds = seconds;
    for (const auto& it : x.report.iterations) rec.peak_blocks = std::max(rec.peak_blocks, it.nnz_blocks);
    rec.status = to_string(x.report.status);
    out.records.push_back(rec);
    if (x.report.status != SpaiStatus::diverged) {
      ns_n.push_back(static_cast<double>(N));
      ns_t.push_back(seconds);
    }

    if (cfg.dense_baseline) {
      BenchmarkRecord d = rec;
      d.method = "dense";
      d.beta = 0;
      d.phi = 0.0;
      d.iterations = 0;
      d.peak_blocks = static_cast<std::size_t>(w.matrix.block_rows() * w.matrix.block_cols());
      d.seconds = dense_baseline_inverse(w.matrix, cfg.chunk, &d.final_error);
      d.status = "exact";
      out.records.push_back(d);
      dense_n.push_back(static_cast<double>(N));
      dense_t.push_back(d.seconds);
    }
  }
  out.slope_ns = loglog_slope(ns_n, ns_t);
  if (cfg.dense_baseline) out.slope_dense = loglog_slope(dense_n, dense_t);
  return out;
}

}  // namespace netspai
