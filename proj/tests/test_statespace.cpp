#include <doctest.h>

#include <random>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"
#include "netspai/statespace.hpp"
#include "support.hpp"

using namespace netspai;
using testing::rel_diff;

namespace {

InterconnectedSystem zero_dynamics(Index N, Index n) {
  InterconnectedSystem s;
  s.N = N;
  s.n = s.m = s.r = n;
  for (Index i = 0; i < N; ++i) {
    s.diag.push_back(Eigen::MatrixXd::Zero(n, n));
    s.B.push_back(Eigen::MatrixXd::Identity(n, n));
    s.C.push_back(Eigen::MatrixXd::Identity(n, n));
    s.D.push_back(Eigen::MatrixXd::Zero(n, n));
  }
  return s;
}

// Time-ordered R_p from its definition: x(k) = A^p x(k-p) + R_p U.
Eigen::MatrixXd dense_R(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int p) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(A.rows(), (p + 1) * B.cols());
  for (int tau = 0; tau < p; ++tau) {
    R.middleCols(tau * B.cols(), B.cols()) = testing::dense_power(A, p - 1 - tau) * B;
  }
  return R;
}

}  // namespace

TEST_CASE("assemble_global: examples") {
  auto s = testing::scalar_system(0.3, 2.0, 1.0);
  auto g = assemble_global(s);
  CHECK(g.A.to_dense()(0, 0) == 0.3);
  CHECK(g.B.to_dense()(0, 0) == 2.0);

  InterconnectedSystem chain = zero_dynamics(2, 2);
  Eigen::MatrixXd a12(2, 2);
  a12 << 1, 2, 3, 4;
  chain.edges.push_back({0, 1, a12});
  g = assemble_global(chain);
  const Eigen::MatrixXd A = g.A.to_dense();
  CHECK(A.topRightCorner(2, 2) == a12);
  CHECK(A.bottomLeftCorner(2, 2).isZero(0.0));
  CHECK(chain.neighbors()[0] == std::vector<Index>{1});
  CHECK(chain.neighbors()[1].empty());

  chain.edges[0].A.setZero();
  CHECK_THROWS_AS(chain.validate(), ValidationError);
  chain.edges[0] = {0, 0, a12};
  CHECK_THROWS_AS(chain.validate(), ValidationError);
}

TEST_CASE("lift: examples") {
  CHECK_THROWS_AS(lift(testing::scalar_system(0.5, 1, 1), 0), ValidationError);

  const auto z = lift(zero_dynamics(1, 2), 2);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(6, 2);
  expected.topRows(2) = Eigen::MatrixXd::Identity(2, 2);
  CHECK(z.O_p.to_dense() == expected);

  const auto s = lift(testing::scalar_system(0.5, 1.0, 1.0, 0.0), 1);
  Eigen::MatrixXd gamma(2, 2);
  gamma << 0, 0, 1, 0;
  CHECK(s.Gamma_p.to_dense() == gamma);
  Eigen::MatrixXd r(1, 2);
  r << 1, 0;
  CHECK(s.R_p.to_dense() == r);
}

TEST_CASE("lift: permutation structure and lifted identities") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Index N = 2 + static_cast<Index>(seed % 5);
    const auto sys = testing::random_system(seed, N, 2, 1 + seed % 2, 1 + (seed + 1) % 2);
    const int p = 1 + static_cast<int>(seed % 4);
    const auto lm = lift(sys, p);
    const Eigen::VectorXd y = Eigen::VectorXd::Random(static_cast<Index>(lm.perm_Y.size()));
    CHECK(permute_inverse(lm.perm_Y, permute(lm.perm_Y, y)) == y);
    CHECK(permute(lm.perm_U, permute_inverse(lm.perm_U, Eigen::VectorXd::Ones(static_cast<Index>(
                                                                lm.perm_U.size())))) ==
          Eigen::VectorXd::Ones(static_cast<Index>(lm.perm_U.size())));

    // Dense permutation matrices built only in the test.
    const auto pmat = [](const std::vector<Index>& perm) {
      const auto n = static_cast<Index>(perm.size());
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
      for (Index k = 0; k < n; ++k) P(perm[static_cast<std::size_t>(k)], k) = 1.0;
      return P;
    };
    const Eigen::MatrixXd PY = pmat(lm.perm_Y), PU = pmat(lm.perm_U);
    CHECK((PY * PY.transpose()).isIdentity(0.0));
    CHECK(rel_diff(lm.cal_O.to_dense(), PY * lm.O_p.to_dense()) <= 1e-15);
    CHECK(rel_diff(lm.cal_G.to_dense(), PY * lm.Gamma_p.to_dense() * PU.transpose()) <= 1e-15);
    CHECK(rel_diff(lm.cal_R.to_dense(), lm.R_p.to_dense() * PU.transpose()) <= 1e-15);

    const Eigen::MatrixXd A = lm.global.A.to_dense(), B = lm.global.B.to_dense();
    CHECK(rel_diff(lm.R_p.to_dense(), dense_R(A, B, p)) <= 1e-12);
    CHECK(rel_diff(lm.A_pow_p.to_dense(), testing::dense_power(A, p)) <= 1e-12);
  }
}

TEST_CASE("lifted signals are subsystem-major, time-minor") {
  const auto sys = testing::random_system(3, 3, 2, 2, 2);
  const auto lm = lift(sys, 2);
  const auto g = assemble_global(sys);
  const auto tr = simulate(g, Eigen::VectorXd::Ones(6), random_inputs(6, 5, 1));
  const auto sig = lift_signals(lm, tr, 4);
  CHECK(sig.Y.size() == 3 * 3 * 2);
  CHECK(sig.U.size() == 3 * 3 * 2);
  for (Index i = 0; i < 3; ++i)
    for (Index t = 0; t <= 2; ++t)
      for (Index c = 0; c < 2; ++c) {
        CHECK(sig.Y[i * 6 + t * 2 + c] == tr.y[static_cast<std::size_t>(2 + t)][i * 2 + c]);
        CHECK(sig.U[i * 6 + t * 2 + c] == tr.u[static_cast<std::size_t>(2 + t)][i * 2 + c]);
      }
}

TEST_CASE("trajectory consistency of the lifted model") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const Index N = 2 + static_cast<Index>(seed % 5);
    const auto sys = testing::random_system(100 + seed, N, 1 + seed % 3, 1 + seed % 2, 1 + seed % 2);
    const int p = 1 + static_cast<int>(seed % 4);
    const auto lm = lift(sys, p);
    const auto g = lm.global;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Eigen::VectorXd x0(g.A.rows());
    for (Index k = 0; k < x0.size(); ++k) x0[k] = d(rng);
    const auto tr = simulate(g, x0, random_inputs(g.B.cols(), 3 * p + 2, seed));
    for (Index k = p; k < 3 * p + 1; ++k) {
      const auto sig = lift_signals(lm, tr, k);
      const Eigen::VectorXd& xkp = tr.x[static_cast<std::size_t>(k - p)];
      const Eigen::VectorXd ry = sig.Y - lm.cal_O.multiply(xkp) - lm.cal_G.multiply(sig.U);
      CHECK(ry.norm() <= 1e-10 * std::max(1.0, sig.Y.norm()));
      const Eigen::VectorXd& xk = tr.x[static_cast<std::size_t>(k)];
      const Eigen::VectorXd rx = xk - lm.A_pow_p.multiply(xkp) - lm.cal_R.multiply(sig.U);
      CHECK(rx.norm() <= 1e-10 * std::max(1.0, xk.norm()));
    }
  }
}

TEST_CASE("obs_gramian: examples") {
  for (int p = 1; p <= 3; ++p) {
    const auto w = obs_gramian(lift(zero_dynamics(3, 2), p), 0.0);
    CHECK(w.matrix.to_dense() == Eigen::MatrixXd::Identity(6, 6));
  }
  const auto w = obs_gramian(lift(testing::scalar_system(0.5, 1, 1), 1), 0.0);
  CHECK(w.matrix.to_dense()(0, 0) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(obs_gramian(lift(testing::scalar_system(0.5, 1, 1), 1), -1.0), ValidationError);
}

TEST_CASE("ctrl_gramian: examples") {
  for (int p = 1; p <= 3; ++p) {
    const auto q = ctrl_gramian(lift(zero_dynamics(2, 3), p), 0.0);
    CHECK(q.matrix.to_dense() == Eigen::MatrixXd::Identity(6, 6));
  }
  // x(k) = a^p x(k-p) + sum over p inputs, so Q collects powers 0..p-1.
  const auto s = testing::scalar_system(0.5, 1, 1);
  CHECK(ctrl_gramian(lift(s, 1), 0.0).matrix.to_dense()(0, 0) == doctest::Approx(1.0));
  CHECK(ctrl_gramian(lift(s, 2), 0.0).matrix.to_dense()(0, 0) == doctest::Approx(1.25));
}

TEST_CASE("Gramians factor through the lifted matrices") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Index N = 2 + static_cast<Index>(seed % 9);
    const Index n = 1 + static_cast<Index>(seed % 3);
    const auto sys = testing::random_system(200 + seed, N, n, 1 + seed % 2, 1 + (seed / 2) % 2);
    const int p = 1 + static_cast<int>(seed % 4);
    const auto lm = lift(sys, p);
    const auto w = obs_gramian(lm, 0.0);
    const auto q = ctrl_gramian(lm, 0.0);
    CHECK(rel_diff(w.matrix.to_dense(), spgemm(transpose(lm.cal_O), lm.cal_O).to_dense()) <= 1e-12);
    CHECK(rel_diff(q.matrix.to_dense(), spgemm(lm.cal_R, transpose(lm.cal_R)).to_dense()) <= 1e-12);

    const double mu = 1e-3 * static_cast<double>(seed);
    for (const auto& g : {obs_gramian(lm, mu), ctrl_gramian(lm, mu)}) {
      const Eigen::MatrixXd d = g.matrix.to_dense();
      CHECK((d - d.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * d.cwiseAbs().maxCoeff());
      const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(d).eigenvalues().minCoeff();
      CHECK(lmin >= mu - 1e-10);
    }
  }
}

TEST_CASE("observability and controllability indices") {
  CHECK(observability_index(zero_dynamics(3, 2), 4) == 1);
  CHECK(controllability_index(zero_dynamics(3, 2), 4) == 1);
  auto s = zero_dynamics(2, 2);
  for (auto& c : s.C) c.setZero();
  for (auto& b : s.B) b.setZero();
  CHECK_FALSE(observability_index(s, 5).has_value());
  CHECK_FALSE(controllability_index(s, 5).has_value());

  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto sys = testing::random_system(300 + seed, 4, 2, 1, 1);
    const auto g = assemble_global(sys);
    const Eigen::MatrixXd A = g.A.to_dense(), B = g.B.to_dense(), C = g.C.to_dense();
    const auto dense_rank = [](const Eigen::MatrixXd& m) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
      qr.setThreshold(1e-10);
      return qr.rank();
    };
    std::optional<int> nu, theta;
    for (int p = 1; p <= 8; ++p) {
      Eigen::MatrixXd O(C.rows() * (p + 1), A.cols());
      for (int t = 0; t <= p; ++t) O.middleRows(t * C.rows(), C.rows()) = C * testing::dense_power(A, t);
      if (!nu && dense_rank(O) == A.rows()) nu = p;
      if (!theta && dense_rank(dense_R(A, B, p)) == A.rows()) theta = p;
    }
    CHECK(observability_index(sys, 8) == nu);
    CHECK(controllability_index(sys, 8) == theta);
  }
}

TEST_CASE("truncate_stable_powers") {
  const auto z = lift(zero_dynamics(2, 2), 3);
  const auto zt = truncate_stable_powers(z, 1, 1e-3);
  CHECK(obs_gramian(zt, 0.0).matrix.to_dense() == obs_gramian(z, 0.0).matrix.to_dense());

  const auto s = lift(testing::scalar_system(0.5, 1, 1), 20);
  const auto st = truncate_stable_powers(s, 10, 1e-3);
  const double full = obs_gramian(s, 0.0).matrix.to_dense()(0, 0);
  const double cut = obs_gramian(st, 0.0).matrix.to_dense()(0, 0);
  CHECK(std::abs(full - cut) < 2e-6);
  CHECK(std::abs(full - cut) <= st.truncation_bound * (1 + 1e-12));

  const auto u = lift(testing::scalar_system(1.1, 1, 1), 5);
  CHECK_THROWS_AS(truncate_stable_powers(u, 3, 1e-3), ValidationError);
}

TEST_CASE("simulate: measurement noise reaches y only") {
  const auto sys = testing::random_system(5, 3, 2, 1, 1);
  const auto g = assemble_global(sys);
  const auto in = random_inputs(3, 6, 2);
  const auto clean = simulate(g, Eigen::VectorXd::Ones(6), in);
  const auto noisy = simulate(g, Eigen::VectorXd::Ones(6), in, 0.1, 9);
  for (std::size_t k = 0; k < clean.x.size(); ++k) {
    CHECK(clean.x[k] == noisy.x[k]);
    CHECK((clean.y[k] - noisy.y[k]).norm() > 0.0);
  }
  CHECK_THROWS_AS(simulate(g, Eigen::VectorXd::Ones(5), in), DimensionError);
}
