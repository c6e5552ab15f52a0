#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"
#include "netspai/models.hpp"
#include "netspai/spai.hpp"
#include "support.hpp"

using namespace netspai;
using testing::rel_diff;

namespace {

BlockSparseMatrix diag_matrix(std::initializer_list<double> v) {
  const auto n = static_cast<Index>(v.size());
  Eigen::VectorXd d(n);
  Index k = 0;
  for (double x : v) d[k++] = x;
  return BlockSparseMatrix::from_dense(d.asDiagonal().toDenseMatrix(),
                                       std::vector<Index>(static_cast<std::size_t>(n), 1),
                                       std::vector<Index>(static_cast<std::size_t>(n), 1));
}

NewtonSchulzConfig dense_config(double tol = 1e-10) {
  NewtonSchulzConfig c;
  c.dense_mode = true;
  c.tol = tol;
  return c;
}

Gramian small_heat_gramian(Index gx, Index gy, int p, double mu) {
  HeatModelSpec spec;
  spec.gx = gx;
  spec.gy = gy;
  spec.gz = 3;
  return obs_gramian(lift(generate_heat3d(spec), p), mu);
}

double exact_residual(const BlockSparseMatrix& w, const BlockSparseMatrix& x) {
  const Eigen::MatrixXd wd = w.to_dense();
  return testing::two_norm(Eigen::MatrixXd::Identity(wd.rows(), wd.cols()) - wd * x.to_dense());
}

}  // namespace

TEST_CASE("error_bound: examples") {
  for (int k = 0; k < 6; ++k) CHECK(error_bound(1.0, k) == 0.0);
  CHECK(error_bound(3.0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(error_bound(3.0, 3) == doctest::Approx(std::pow(0.8, 8)).epsilon(1e-13));
  CHECK(error_bound(3.0, 3) == doctest::Approx(0.16777216).epsilon(1e-12));
  CHECK(error_bound(1e8, 2000) >= 0.0);
  CHECK_THROWS_AS(error_bound(0.5, 1), ValidationError);
}

TEST_CASE("initial_guess: examples") {
  SingularInterval one;
  one.a = one.b = 1.0;
  const auto id = BlockSparseMatrix::identity({2, 1});
  CHECK(initial_guess(id, one).to_dense() == Eigen::MatrixXd::Identity(3, 3));

  const auto d = diag_matrix({1.0, 2.0});
  SingularInterval sv;
  sv.a = 1.0;
  sv.b = 2.0;
  const Eigen::MatrixXd x0 = initial_guess(d, sv).to_dense();
  CHECK(x0(0, 0) == doctest::Approx(0.4));
  CHECK(x0(1, 1) == doctest::Approx(0.8));
}

TEST_CASE("initial residual equals (kappa^2 - 1)/(kappa^2 + 1) on a heat Gramian") {
  const auto w = small_heat_gramian(6, 5, 3, 1e-3).matrix;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(w.to_dense()).eigenvalues();
  SingularInterval sv;
  sv.a = ev.minCoeff();
  sv.b = ev.maxCoeff();
  const double kappa = sv.b / sv.a;
  const double eps0 = exact_residual(w, initial_guess(w, sv));
  CHECK(eps0 == doctest::Approx((kappa * kappa - 1) / (kappa * kappa + 1)).epsilon(1e-6));
}

TEST_CASE("NewtonSchulzConfig validation") {
  NewtonSchulzConfig c;
  CHECK_THROWS_AS(c.validate(), ValidationError);  // nothing declared
  c.dense_mode = true;
  CHECK_NOTHROW(c.validate());
  c.phi = 1e-3;
  CHECK_THROWS_AS(c.validate(), ValidationError);  // dense excludes phi
  c.dense_mode = false;
  c.phi = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.phi = 0.0;
  c.tol = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.tol = 1e-8;
  c.max_iter = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("newton_schulz: identity converges at k = 0") {
  const auto r = newton_schulz(BlockSparseMatrix::identity({2, 3}), dense_config());
  CHECK(r.report.status == SpaiStatus::converged);
  REQUIRE(r.report.iterations.size() == 1);
  CHECK(r.report.iterations[0].epsilon == 0.0);
  CHECK(r.X.to_dense() == Eigen::MatrixXd::Identity(5, 5));
}

TEST_CASE("newton_schulz: diag(1, 2) within 6 iterations") {
  const auto r = newton_schulz(diag_matrix({1.0, 2.0}), dense_config(1e-12));
  CHECK(r.report.status == SpaiStatus::converged);
  CHECK(r.report.iterations.back().k <= 6);
  const Eigen::MatrixXd x = r.X.to_dense();
  CHECK(std::abs(x(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(x(1, 1) - 0.5) <= 1e-12);
  CHECK(x(0, 1) == 0.0);
}

TEST_CASE("newton_schulz: non positive definite input asks for regularization") {
  try {
    (void)newton_schulz(diag_matrix({1.0, 0.0}), dense_config());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("mu") != std::string::npos);
  }
}

// Once the bound drops below the double-precision resolution of I - W X the
// measured residual stalls at roughly n u kappa; the floor term accounts for it.
static double roundoff_floor(Index n, double kappa) {
  return static_cast<double>(n) * std::numeric_limits<double>::epsilon() * kappa;
}

TEST_CASE("newton_schulz dense mode: bound above the roundoff floor and quadratic rate") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 15; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 80);
    const double kappa = 1.5 + static_cast<double>(rng() % 985) / 10.0;
    const Eigen::MatrixXd wd = testing::random_spd(rng, n, kappa);
    const auto w = BlockSparseMatrix::from_dense(wd, {n}, {n});
    const auto r = newton_schulz(w, dense_config(1e-11));
    REQUIRE(r.report.status == SpaiStatus::converged);
    const auto& its = r.report.iterations;
    for (std::size_t k = 0; k < its.size(); ++k) {
      CHECK(its[k].epsilon <= its[k].bound * (1 + 1e-6) + roundoff_floor(n, r.report.kappa_used));
      CHECK(its[k].bound == doctest::Approx(error_bound(r.report.kappa_used, its[k].k)));
      if (k + 1 < its.size()) CHECK(its[k + 1].epsilon <= its[k].epsilon * its[k].epsilon + 1e-10);
    }
    const Eigen::MatrixXd inv = wd.inverse();
    CHECK(testing::two_norm(r.X.to_dense() - inv) / testing::two_norm(inv) <= 1e-8);
  }
}

TEST_CASE("newton_schulz with the exact interval obeys the true-kappa bound above the roundoff floor") {
  std::mt19937_64 rng(405);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 60);
    const Eigen::MatrixXd wd = testing::random_spd(rng, n, 2.0 + static_cast<double>(trial) * 9.0);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(wd).eigenvalues();
    NewtonSchulzConfig c = dense_config(1e-11);
    SingularInterval sv;
    sv.a = ev.minCoeff();
    sv.b = ev.maxCoeff();
    sv.kappa = sv.b / sv.a;
    sv.kappa_defined = true;
    c.interval = sv;
    c.interval_margin = 0.0;
    const auto r = newton_schulz(BlockSparseMatrix::from_dense(wd, {n}, {n}), c);
    for (const auto& it : r.report.iterations) {
      CHECK(it.epsilon <= error_bound(sv.kappa, it.k) * (1 + 1e-6) + roundoff_floor(n, sv.kappa));
    }
  }
}

TEST_CASE("newton_schulz: the mask bounds the pattern and X stays symmetric") {
  const auto w = small_heat_gramian(8, 4, 2, 1e-2);
  NewtonSchulzConfig c;
  c.pattern = banded_pattern(w.matrix.row_block_sizes(), 9);
  c.phi = 1e-7;
  const auto r = newton_schulz(w, c);
  CHECK(binarize(r.X).is_subset_of(*c.pattern));
  CHECK(max_asymmetry(r.X) == 0.0);
  CHECK(r.report.final_epsilon() < r.report.iterations.front().epsilon);

  // Asymmetric pattern is symmetrized before use.
  const Index nb = w.matrix.block_rows();
  std::vector<std::pair<Index, Index>> lower;
  for (Index i = 0; i < nb; ++i)
    for (Index j = std::max<Index>(0, i - 3); j <= i; ++j) lower.emplace_back(i, j);
  NewtonSchulzConfig c2;
  c2.pattern = PatternMatrix(nb, lower);
  const auto r2 = newton_schulz(w, c2);
  CHECK(binarize(r2.X).is_subset_of(pattern_union(*c2.pattern, pattern_transpose(*c2.pattern))));
  CHECK(binarize(r2.X).is_symmetric());
}

TEST_CASE("newton_schulz: tiny dropping matches dense mode") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 20 + static_cast<Index>(rng() % 40);
    const Eigen::MatrixXd wd = testing::random_spd(rng, n, 20.0);
    const auto w = BlockSparseMatrix::from_dense(wd, std::vector<Index>(static_cast<std::size_t>(n), 1),
                                                 std::vector<Index>(static_cast<std::size_t>(n), 1));
    const auto dense = newton_schulz(w, dense_config(1e-9));
    NewtonSchulzConfig c;
    c.phi = 1e-9;
    c.tol = 1e-9;
    const auto sparse = newton_schulz(w, c);
    CHECK(std::abs(sparse.report.final_epsilon() - dense.report.final_epsilon()) <= 1e-6);
  }
}

TEST_CASE("newton_schulz: aggressive dropping reports a non-converged status and the best iterate") {
  const auto w = small_heat_gramian(6, 4, 3, 1e-4);
  NewtonSchulzConfig c;
  c.phi = 0.5;
  c.max_iter = 30;
  const auto r = newton_schulz(w, c);
  CHECK(r.report.status != SpaiStatus::converged);
  double best = 1e300;
  for (const auto& it : r.report.iterations) best = std::min(best, it.epsilon);
  CHECK(r.report.final_epsilon() == best);
}

TEST_CASE("predict_pattern_neumann: examples") {
  std::mt19937_64 rng(2);
  const std::vector<Index> sz{2, 2, 2, 2, 2};
  const auto w = testing::random_block_sparse(rng, sz, sz, 0.5);
  CHECK(predict_pattern_neumann(w, 0) == PatternMatrix::identity(5));
  const auto d = BlockSparseMatrix::from_dense(Eigen::MatrixXd(Eigen::VectorXd::LinSpaced(10, 1, 2).asDiagonal()), sz, sz);
  for (int s = 0; s < 5; ++s) CHECK(predict_pattern_neumann(d, s) == PatternMatrix::identity(5));

  const Index nb = 12, bw = 2;
  Eigen::MatrixXd band = Eigen::MatrixXd::Zero(nb, nb);
  for (Index i = 0; i < nb; ++i)
    for (Index j = 0; j < nb; ++j)
      if (std::abs(i - j) <= bw) band(i, j) = 1.0 + static_cast<double>(i + j);
  const std::vector<Index> ones(static_cast<std::size_t>(nb), 1);
  const auto pat = predict_pattern_neumann(BlockSparseMatrix::from_dense(band, ones, ones), 2);
  for (Index i = 0; i < nb; ++i)
    for (Index j = 0; j < nb; ++j) CHECK(pat.contains(i, j) == (std::abs(i - j) <= 2 * bw));
}

TEST_CASE("banded_pattern: examples") {
  const std::vector<Index> sz(10, 3);
  CHECK(banded_pattern(sz, 0) == PatternMatrix::identity(10));
  CHECK(banded_pattern(sz, 30) == PatternMatrix::full(10));
  CHECK(banded_pattern(sz, 29) == PatternMatrix::full(10));
  // Blocks of width 3: offset d keeps a pair iff 3d - 2 <= beta.
  const auto p = banded_pattern(900, 3, 550);
  for (Index i : {0, 100, 450, 899}) {
    for (Index j = 0; j < 900; ++j) CHECK(p.contains(i, j) == (std::abs(i - j) <= 184));
  }
  CHECK(p.is_symmetric());
  CHECK_THROWS_AS(banded_pattern(sz, -1), ValidationError);
}

TEST_CASE("frobenius_spai: examples") {
  const auto r1 = frobenius_spai(diag_matrix({2.0, 4.0}), PatternMatrix::identity(2));
  CHECK(r1.X.to_dense() == Eigen::Vector2d(0.5, 0.25).asDiagonal().toDenseMatrix());
  CHECK(r1.report.frobenius_objective == doctest::Approx(0.0));

  Eigen::MatrixXd w(2, 2);
  w << 2, 1, 1, 2;
  const auto r2 = frobenius_spai(BlockSparseMatrix::from_dense(w, {1, 1}, {1, 1}), PatternMatrix::identity(2));
  const Eigen::MatrixXd x = r2.X.to_dense();
  // Column j solves min ||e_j - W_j v|| over v: v = W_j^T e_j / ||W_j||^2 = 2/5.
  CHECK(x(0, 0) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(x(1, 1) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(x(0, 1) == 0.0);

  const auto r3 = frobenius_spai(diag_matrix({1.0, 2.0, 3.0}), PatternMatrix(3, {{0, 0}, {2, 2}}));
  CHECK(r3.report.empty_columns == std::vector<Index>{1});
  CHECK(r3.X.to_dense().col(1).isZero(0.0));
}

TEST_CASE("frobenius_spai: full pattern gives the inverse, nested patterns improve the objective") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 8; ++trial) {
    const Index nb = 4 + static_cast<Index>(rng() % 20);
    const auto sz = testing::random_sizes(rng, nb, 3);
    Index n = 0;
    for (Index s : sz) n += s;
    const Eigen::MatrixXd wd = testing::random_spd(rng, n, 50.0);
    const auto w = BlockSparseMatrix::from_dense(wd, sz, sz);
    const auto full = frobenius_spai(w, PatternMatrix::full(nb), 1 + trial % 2);
    CHECK(rel_diff(full.X.to_dense(), wd.inverse()) <= 1e-10);

    PatternMatrix p = PatternMatrix::identity(nb);
    double prev = frobenius_spai(w, p).report.frobenius_objective;
    for (int step = 0; step < 4; ++step) {
      p = pattern_union(p, testing::random_pattern(rng, nb, 0.15));
      const auto r = frobenius_spai(w, p);
      CHECK(r.report.frobenius_objective <= prev * (1 + 1e-12));
      const Eigen::MatrixXd res = Eigen::MatrixXd::Identity(n, n) - wd * r.X.to_dense();
      CHECK(r.report.frobenius_objective == doctest::Approx(res.norm()).epsilon(1e-9));
      for (Index j = 0; j < n; ++j) {
        CHECK(r.report.column_residuals[static_cast<std::size_t>(j)] ==
              doctest::Approx(res.col(j).norm()).epsilon(1e-9));
      }
      prev = r.report.frobenius_objective;
    }
  }
}

TEST_CASE("regularize_and_invert") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd wd = testing::random_spd(rng, 30, 10.0) / 10.0;
  const auto w = BlockSparseMatrix::from_dense(wd, {30}, {30});
  const auto big = regularize_and_invert(w, 1e6, dense_config(1e-10));
  CHECK(big.report.kappa <= 1.001);
  CHECK(big.report.iterations.back().k <= 2);
  CHECK(big.report.kappa_unregularized == doctest::Approx(10.0).epsilon(1e-6));

  const auto none = regularize_and_invert(w, 0.0, dense_config());
  const auto plain = newton_schulz(w, dense_config());
  CHECK(none.X.to_dense() == plain.X.to_dense());
  CHECK_THROWS_AS(regularize_and_invert(w, -1.0, dense_config()), ValidationError);

  const auto g = small_heat_gramian(6, 6, 4, 0.0);
  const auto r = regularize_and_invert(g.matrix, 1e-3, dense_config(1e-8));
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                 g.matrix.to_dense() + 1e-3 * Eigen::MatrixXd::Identity(g.matrix.rows(), g.matrix.rows()))
                                 .eigenvalues();
  CHECK(r.report.kappa == doctest::Approx(ev.maxCoeff() / ev.minCoeff()).epsilon(0.01));
}
