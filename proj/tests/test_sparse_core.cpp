#include <doctest.h>

#include <random>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"
#include "netspai/pattern.hpp"
#include "netspai/spectral.hpp"
#include "support.hpp"

using namespace netspai;
using testing::random_block_sparse;
using testing::rel_diff;

TEST_CASE("block sparse: construction prunes zero and denormal blocks") {
  const std::vector<Index> sz{2, 1};
  std::vector<BlockEntry> e;
  e.push_back({0, 0, Eigen::MatrixXd::Zero(2, 2)});
  e.push_back({1, 1, Eigen::MatrixXd::Constant(1, 1, 1e-320)});
  const auto m = BlockSparseMatrix::from_blocks(sz, sz, e);
  CHECK(m.nnz_blocks() == 0);
  CHECK(binarize(m).nnz() == 0);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 3);
}

TEST_CASE("block sparse: from_blocks sums duplicates and checks shapes") {
  const std::vector<Index> sz{2, 2};
  std::vector<BlockEntry> e;
  e.push_back({0, 1, Eigen::MatrixXd::Ones(2, 2)});
  e.push_back({0, 1, -Eigen::MatrixXd::Ones(2, 2)});
  e.push_back({1, 0, Eigen::MatrixXd::Identity(2, 2)});
  const auto m = BlockSparseMatrix::from_blocks(sz, sz, e);
  CHECK(m.nnz_blocks() == 1);
  CHECK(m.find(1, 0).has_value());
  CHECK_FALSE(m.find(0, 1).has_value());

  std::vector<BlockEntry> bad{{0, 0, Eigen::MatrixXd::Ones(3, 2)}};
  CHECK_THROWS_AS(BlockSparseMatrix::from_blocks(sz, sz, bad), DimensionError);
}

TEST_CASE("block sparse: dense round trip and matvec") {
  std::mt19937_64 rng(11);
  const auto rs = testing::random_sizes(rng, 6, 3);
  const auto cs = testing::random_sizes(rng, 5, 4);
  const auto m = random_block_sparse(rng, rs, cs, 0.4);
  const Eigen::MatrixXd d = m.to_dense();
  const auto back = BlockSparseMatrix::from_dense(d, rs, cs);
  CHECK(back.to_dense() == d);
  CHECK(back.nnz_blocks() == m.nnz_blocks());
  const Eigen::VectorXd x = Eigen::VectorXd::Random(m.cols());
  const Eigen::VectorXd y = Eigen::VectorXd::Random(m.rows());
  CHECK((m.multiply(x) - d * x).norm() <= 1e-12 * (d * x).norm() + 1e-14);
  CHECK((m.multiply_transpose(y) - d.transpose() * y).norm() <=
        1e-12 * (d.transpose() * y).norm() + 1e-14);
}

TEST_CASE("spgemm: trivial cases") {
  std::mt19937_64 rng(3);
  const std::vector<Index> sz{2, 3, 1};
  const auto b = random_block_sparse(rng, sz, sz, 0.6);
  const auto prod = spgemm(BlockSparseMatrix::identity(sz), b);
  CHECK(prod.to_dense() == b.to_dense());

  const auto a1 = BlockSparseMatrix::from_dense(Eigen::MatrixXd::Constant(1, 1, 2.0), {1}, {1});
  const auto b1 = BlockSparseMatrix::from_dense(Eigen::MatrixXd::Constant(1, 1, 3.0), {1}, {1});
  CHECK(spgemm(a1, b1).to_dense()(0, 0) == 6.0);
}

TEST_CASE("spgemm: shape mismatch names both shapes") {
  const auto a = BlockSparseMatrix::identity({2, 2});
  const auto b = BlockSparseMatrix::identity({3});
  try {
    (void)spgemm(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(a.shape_string()) != std::string::npos);
    CHECK(msg.find(b.shape_string()) != std::string::npos);
  }
}

TEST_CASE("kernels agree with the dense oracle on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const Index nb = 2 + static_cast<Index>(rng() % 9);
    const auto rs = testing::random_sizes(rng, nb, 4);
    const auto ks = testing::random_sizes(rng, nb + 1, 4);
    const auto cs = testing::random_sizes(rng, nb, 3);
    const double density = 0.15 + 0.1 * static_cast<double>(trial % 5);
    const auto a = random_block_sparse(rng, rs, ks, density);
    const auto b = random_block_sparse(rng, ks, cs, density);
    const auto c = random_block_sparse(rng, rs, ks, density);
    const Eigen::MatrixXd ad = a.to_dense(), bd = b.to_dense(), cd = c.to_dense();

    const Eigen::MatrixXd ref = ad * bd;
    const Eigen::MatrixXd got = spgemm(a, b, 1 + trial % 3).to_dense();
    CHECK(rel_diff(got, ref) <= 1e-12);
    CHECK(rel_diff(sp_add(a, c, 0.7, -1.3).to_dense(), 0.7 * ad - 1.3 * cd) <= 1e-12);
    CHECK(transpose(a).to_dense() == ad.transpose());
    CHECK(transpose(transpose(a)).to_dense() == ad);
  }
}

TEST_CASE("sp_add: trivial cases") {
  std::mt19937_64 rng(5);
  const std::vector<Index> sz{2, 2, 3};
  const auto a = random_block_sparse(rng, sz, sz, 0.7);
  CHECK(sp_add(a, a, 1.0, -1.0).nnz_blocks() == 0);
  const auto id = BlockSparseMatrix::identity(sz);
  CHECK(sp_add(id, id, 1.0, 1.0).to_dense() == 2.0 * Eigen::MatrixXd::Identity(7, 7));
  CHECK_THROWS_AS(sp_add(a, BlockSparseMatrix::identity({7}), 1.0, 1.0), DimensionError);
}

TEST_CASE("transpose: trivial cases") {
  const std::vector<Index> sz{2, 3};
  Eigen::MatrixXd blk(2, 3);
  blk << 1, 2, 3, 4, 5, 6;
  const auto a = BlockSparseMatrix::from_blocks(sz, sz, {{0, 1, blk}});
  const auto t = transpose(a);
  REQUIRE(t.find(1, 0).has_value());
  CHECK_FALSE(t.find(0, 1).has_value());
  CHECK(Eigen::MatrixXd(t.block(*t.find(1, 0), 1)) == blk.transpose());

  Eigen::MatrixXd s(5, 5);
  s.setRandom();
  s = s + s.transpose().eval();
  const auto sym = BlockSparseMatrix::from_dense(s, sz, sz);
  CHECK(transpose(sym).to_dense() == s);
}

TEST_CASE("binarize: trivial cases") {
  const std::vector<Index> sz{2, 1, 2};
  CHECK(binarize(BlockSparseMatrix(sz, sz)).nnz() == 0);
  CHECK(binarize(BlockSparseMatrix::identity(sz)) == PatternMatrix::identity(3));
}

TEST_CASE("pattern: construction semantics") {
  const PatternMatrix p(3, {{0, 1}, {0, 1}, {2, 0}});
  CHECK(p.nnz() == 2);
  CHECK(p.contains(0, 1));
  CHECK_FALSE(p.contains(1, 0));
  CHECK_THROWS_AS(PatternMatrix(2, {{0, 2}}), DimensionError);
  CHECK_THROWS_AS(pattern_product(PatternMatrix(2), PatternMatrix(3)), DimensionError);
}

TEST_CASE("pattern_power_sum: examples") {
  CHECK(pattern_power_sum(PatternMatrix(4), 3) == PatternMatrix::identity(4));
  const PatternMatrix bidiag(3, {{0, 1}, {1, 2}});
  const PatternMatrix upper(3, {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}, {0, 2}});
  CHECK(pattern_power_sum(bidiag, 2) == upper);
  CHECK(pattern_power_sum(bidiag, 0) == PatternMatrix::identity(3));
}

TEST_CASE("pattern_power_sum matches the dense boolean power and is monotone in s") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 25);
    const auto p = testing::random_pattern(rng, n, 0.08);
    const Eigen::MatrixXi ip = testing::pattern_dense(p) + Eigen::MatrixXi::Identity(n, n);
    Eigen::MatrixXi acc = Eigen::MatrixXi::Identity(n, n);
    for (int s = 0; s <= 5; ++s) {
      const auto got = pattern_power_sum(p, s);
      CHECK(got == testing::pattern_from_dense(acc.unaryExpr([](int v) { return v > 0 ? 1 : 0; })));
      CHECK(got.is_subset_of(pattern_power_sum(p, s + 1)));
      acc = (acc * ip).unaryExpr([](int v) { return v > 0 ? 1 : 0; });
    }
    Eigen::MatrixXi pw = Eigen::MatrixXi::Identity(n, n);
    for (int s = 0; s < 3; ++s) pw = (pw * testing::pattern_dense(p)).unaryExpr([](int v) { return v > 0 ? 1 : 0; });
    CHECK(pattern_power(p, 3) == testing::pattern_from_dense(pw));
  }
}

TEST_CASE("binarize of a product: containment, equality for positive blocks") {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Index nb = 3 + static_cast<Index>(rng() % 8);
    const auto sz = testing::random_sizes(rng, nb, 3);
    auto a = random_block_sparse(rng, sz, sz, 0.25);
    auto b = random_block_sparse(rng, sz, sz, 0.25);
    CHECK(binarize(spgemm(a, b)).is_subset_of(pattern_product(binarize(a), binarize(b))));
    const auto positive = [&](const BlockSparseMatrix& m) {
      Eigen::MatrixXd d = m.to_dense();
      for (Index i = 0; i < d.rows(); ++i)
        for (Index j = 0; j < d.cols(); ++j)
          if (d(i, j) != 0.0) d(i, j) = pos(rng);
      return BlockSparseMatrix::from_dense(d, sz, sz);
    };
    a = positive(a);
    b = positive(b);
    CHECK(binarize(spgemm(a, b)) == pattern_product(binarize(a), binarize(b)));
  }
}

TEST_CASE("cancellation makes the product pattern strictly smaller") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1, 1, 0, 0;
  b << 1, 0, -1, 0;
  const auto as = BlockSparseMatrix::from_dense(a, {1, 1}, {1, 1});
  const auto bs = BlockSparseMatrix::from_dense(b, {1, 1}, {1, 1});
  const auto prod = binarize(spgemm(as, bs));
  const auto pred = pattern_product(binarize(as), binarize(bs));
  CHECK(prod.is_subset_of(pred));
  CHECK(prod.nnz() < pred.nnz());
}

TEST_CASE("mask_H1: examples, oracle and idempotence") {
  std::mt19937_64 rng(8);
  const std::vector<Index> sz{2, 1, 3, 2};
  const auto z = random_block_sparse(rng, sz, sz, 0.8);
  CHECK(mask_to_pattern(z, PatternMatrix::full(4)).to_dense() == z.to_dense());

  std::vector<std::pair<Index, Index>> tri;
  for (Index i = 0; i < 4; ++i)
    for (Index j = std::max<Index>(0, i - 1); j <= std::min<Index>(3, i + 1); ++j) tri.emplace_back(i, j);
  const auto ztri = mask_to_pattern(random_block_sparse(rng, sz, sz, 1.0), PatternMatrix(4, tri));
  const auto diag = mask_to_pattern(ztri, PatternMatrix::identity(4));
  CHECK(binarize(diag) == PatternMatrix::identity(4));
  for (Index i = 0; i < 4; ++i) {
    CHECK(Eigen::MatrixXd(diag.block(*diag.find(i, i), i)) ==
          Eigen::MatrixXd(ztri.block(*ztri.find(i, i), i)));
  }

  for (int trial = 0; trial < 20; ++trial) {
    const auto zr = random_block_sparse(rng, sz, sz, 0.6);
    const auto p = testing::random_pattern(rng, 4, 0.5);
    const auto got = mask_to_pattern(zr, p);
    Eigen::MatrixXd ref = zr.to_dense();
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j)
        if (!p.contains(i, j)) {
          ref.block(got.row_offset(i), got.col_offset(j), sz[static_cast<std::size_t>(i)],
                    sz[static_cast<std::size_t>(j)])
              .setZero();
        }
    CHECK(got.to_dense() == ref);
    CHECK(mask_to_pattern(got, p).to_dense() == got.to_dense());
    CHECK(binarize(got).is_subset_of(p));
  }
  CHECK_THROWS_AS(mask_to_pattern(z, PatternMatrix::full(3)), DimensionError);
}

TEST_CASE("drop_H2: examples, oracle and idempotence") {
  Eigen::MatrixXd z(2, 2);
  z << 1, 0.001, 0.001, 1;
  const auto zs = BlockSparseMatrix::from_dense(z, {2}, {2});
  CHECK(drop_small(zs, 0.01).to_dense() == Eigen::MatrixXd::Identity(2, 2));
  CHECK(drop_small(zs, 0.0).to_dense() == z);
  CHECK_THROWS_AS(drop_small(zs, -1.0), ValidationError);

  std::mt19937_64 rng(21);
  const std::vector<Index> sz{1, 2, 2, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const auto zr = random_block_sparse(rng, sz, sz, 0.7);
    const auto got = drop_small(zr, 0.5);
    const Eigen::MatrixXd ref =
        zr.to_dense().unaryExpr([](double v) { return std::abs(v) <= 0.5 ? 0.0 : v; });
    CHECK(got.to_dense() == ref);
    CHECK(drop_small(got, 0.5).to_dense() == got.to_dense());
    for (Index i = 0; i < got.block_rows(); ++i)
      for (std::size_t pos = got.row_begin(i); pos < got.row_end(i); ++pos)
        CHECK(got.block(pos, i).cwiseAbs().maxCoeff() > 0.5);
  }
}

TEST_CASE("symmetric_from_upper rebuilds the full symmetric product") {
  std::mt19937_64 rng(4);
  const std::vector<Index> sz{2, 3, 1, 2};
  Eigen::MatrixXd s = testing::random_spd(rng, 8, 10.0);
  const auto full = BlockSparseMatrix::from_dense(s, sz, sz);
  const auto upper = mask_to_pattern(full, upper_triangle(PatternMatrix::full(4)));
  CHECK((symmetric_from_upper(upper).to_dense() - s).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("extreme_singular_values: examples") {
  const auto i5 = BlockSparseMatrix::identity({2, 3});
  auto sv = extreme_singular_values(i5);
  CHECK(sv.a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sv.b == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sv.kappa == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 4.0;
  sv = extreme_singular_values(BlockSparseMatrix::from_dense(d, {1, 1}, {1, 1}));
  CHECK(sv.a == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sv.b == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(sv.kappa == doctest::Approx(4.0).epsilon(1e-10));

  sv = extreme_singular_values(BlockSparseMatrix({2, 2}, {2, 2}));
  CHECK(sv.a == 0.0);
  CHECK(sv.b == 0.0);
  CHECK_FALSE(sv.kappa_defined);

  Eigen::MatrixXd ns(2, 2);
  ns << 1, 2, 0, 1;
  CHECK_THROWS_AS(extreme_singular_values(BlockSparseMatrix::from_dense(ns, {2}, {2})),
                  ValidationError);
}

TEST_CASE("extreme_singular_values agree with the dense SVD") {
  std::mt19937_64 rng(31);
  for (const auto method : {SpectralMethod::lanczos, SpectralMethod::power}) {
    for (int trial = 0; trial < 12; ++trial) {
      const Index n = 5 + static_cast<Index>(rng() % 196);
      const double kappa = 1.0 + static_cast<double>(rng() % 1000) / 10.0;
      Eigen::MatrixXd w = testing::random_spd(rng, n, kappa);
      if (trial % 3 == 0) {
        // Rank deficient PSD matrix: a = 0.
        Eigen::MatrixXd f = Eigen::MatrixXd::Random(n, std::max<Index>(1, n / 2));
        w = f * f.transpose();
      }
      const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(w).eigenvalues();
      const double smax = ev.maxCoeff(), smin = std::max(ev.minCoeff(), 0.0);
      PowerOptions opts;
      opts.method = method;
      opts.tol = 1e-12;
      opts.max_iter = 200000;
      const auto sv = extreme_singular_values(BlockSparseMatrix::from_dense(w, {n}, {n}), opts);
      CHECK(std::abs(sv.b - smax) <= 1e-4 * smax);
      CHECK(std::abs(sv.a - smin) <= 1e-4 * smax);
      CHECK(sv.a <= sv.b);
    }
  }
}

TEST_CASE("two_norm_error: examples and dense oracle") {
  std::mt19937_64 rng(12);
  const std::vector<Index> sz{2, 3};
  const auto a = random_block_sparse(rng, sz, sz, 0.8);
  CHECK(two_norm_error(a, a) == 0.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 0.5;
  d(1, 1) = 0.1;
  const auto dm = BlockSparseMatrix::from_dense(d, {1, 1}, {1, 1});
  CHECK(two_norm_error(dm, BlockSparseMatrix({1, 1}, {1, 1})) == doctest::Approx(0.5).epsilon(1e-6));
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_block_sparse(rng, sz, sz, 0.6);
    const auto y = random_block_sparse(rng, sz, sz, 0.6);
    const double ref = testing::two_norm(x.to_dense() - y.to_dense());
    CHECK(two_norm_error(x, y) == doctest::Approx(ref).epsilon(1e-6));
  }
}
