#include <doctest.h>

#include <set>

#include <Eigen/Eigenvalues>

#include "netspai/errors.hpp"
#include "netspai/estimator.hpp"
#include "netspai/io.hpp"
#include "netspai/kernels.hpp"
#include "netspai/models.hpp"
#include "support.hpp"

using namespace netspai;

namespace {

double dense_radius(const BlockSparseMatrix& a) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(a.to_dense(), false).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("heat3d: single cell and two cells") {
  HeatModelSpec one;
  one.gx = one.gy = one.gz = 1;
  const auto s1 = generate_heat3d(one);
  CHECK(s1.N == 1);
  CHECK(s1.edges.empty());
  CHECK(s1.diag[0](0, 0) == doctest::Approx(1.0 - 6.0 * 0.1));

  HeatModelSpec two = one;
  two.gx = 2;
  const auto s2 = generate_heat3d(two);
  REQUIRE(s2.edges.size() == 2);
  for (const auto& e : s2.edges) CHECK(e.A(0, 0) == doctest::Approx(0.1));
  const Eigen::MatrixXd A = assemble_global(s2).A.to_dense();
  CHECK(A == A.transpose());
}

TEST_CASE("heat3d: the 30 x 30 grid is the 4-neighbour lattice") {
  HeatModelSpec spec;
  const auto sys = generate_heat3d(spec);
  CHECK(sys.N == 900);
  CHECK(sys.n == 3);
  CHECK(sys.m == 1);
  CHECK(sys.r == 1);
  std::vector<std::pair<Index, Index>> lattice;
  for (Index x = 0; x < 30; ++x)
    for (Index y = 0; y < 30; ++y) {
      const Index i = x * 30 + y;
      lattice.emplace_back(i, i);
      if (x > 0) lattice.emplace_back(i, i - 30);
      if (x < 29) lattice.emplace_back(i, i + 30);
      if (y > 0) lattice.emplace_back(i, i - 1);
      if (y < 29) lattice.emplace_back(i, i + 1);
    }
  const auto g = assemble_global(sys);
  CHECK(binarize(g.A) == PatternMatrix(900, lattice));
  CHECK(max_asymmetry(g.A) == 0.0);
  CHECK(spectral_radius(g.A) < 1.0);
}

TEST_CASE("heat3d: stability bound and Gramian pattern") {
  HeatModelSpec bad;
  bad.dt = heat_max_dt(bad) * 1.01;
  CHECK_THROWS_AS(generate_heat3d(bad), ValidationError);
  CHECK(heat_max_dt(bad) == doctest::Approx(1.0 / 6.0));

  HeatModelSpec spec;
  spec.gx = 6;
  spec.gy = 5;
  for (int p = 1; p <= 3; ++p) {
    const auto lm = lift(generate_heat3d(spec), p);
    const auto w = obs_gramian(lm, 0.0);
    CHECK(binarize(w.matrix) == predict_gramian_pattern(binarize(lm.global.A), p));
    CHECK(binarize(w.matrix).is_symmetric());
  }
}

TEST_CASE("banded chain") {
  const auto c0 = generate_banded_chain(4, 3, 0.0, 0.9);
  CHECK(c0.edges.empty());
  const auto c3 = generate_banded_chain(3, 2, 0.5, 0.9);
  CHECK(c3.edges.size() == 4);
  std::set<std::pair<Index, Index>> edges;
  for (const auto& e : c3.edges) edges.emplace(e.i, e.j);
  for (const auto& e : c3.edges) CHECK(edges.count({e.j, e.i}) == 1);
  CHECK(dense_radius(assemble_global(c3).A) == doctest::Approx(0.9).epsilon(1e-8));

  // A couples both neighbours, so (A^T)^i C^T C A^i reaches 2i blocks away.
  const auto chain = generate_banded_chain(12, 2, 0.3, 0.8);
  for (int p = 1; p <= 3; ++p) {
    const auto lm = lift(chain, p);
    const auto w = binarize(obs_gramian(lm, 0.0).matrix);
    CHECK(w == predict_gramian_pattern(binarize(lm.global.A), p));
    Index width = 0;
    for (auto [i, j] : w.entries()) width = std::max(width, std::abs(i - j));
    CHECK(width == 2 * p);
  }
  CHECK_THROWS_AS(generate_banded_chain(3, 2, 0.5, 1.5), ValidationError);
}

TEST_CASE("random model: degree, radius and determinism") {
  RandomModelSpec spec;
  spec.N = 100;
  spec.n = 2;
  spec.mean_degree = 4.0;
  spec.rho = 0.9;
  spec.seed = 7;
  const auto sys = generate_random(spec);
  const double mean = static_cast<double>(sys.edges.size()) / 100.0;
  CHECK(mean >= 3.6);
  CHECK(mean <= 4.4);
  std::set<std::pair<Index, Index>> seen;
  for (const auto& e : sys.edges) {
    CHECK(e.i != e.j);
    CHECK(seen.emplace(e.i, e.j).second);
    CHECK(e.A.cwiseAbs().maxCoeff() > 0.0);
  }
  const double rho = dense_radius(assemble_global(sys).A);
  CHECK(rho >= 0.88);
  CHECK(rho <= 0.9 + 1e-9);

  const auto again = generate_random(spec);
  CHECK(io::system_to_json(sys).dump() == io::system_to_json(again).dump());
  spec.seed = 8;
  CHECK(io::system_to_json(generate_random(spec)).dump() != io::system_to_json(sys).dump());

  spec.positive = true;
  const auto pos = generate_random(spec);
  for (const auto& e : pos.edges) CHECK(e.A.minCoeff() > 0.0);
  for (const auto& d : pos.diag) CHECK(d.minCoeff() > 0.0);
}

TEST_CASE("spectral_radius agrees with the dense eigenvalues") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto sys = testing::random_system(seed, 10 + static_cast<Index>(seed) * 5, 2, 1, 1, 3.0,
                                            false, 0.5 + 0.05 * static_cast<double>(seed));
    const auto a = assemble_global(sys).A;
    CHECK(spectral_radius(a) == doctest::Approx(dense_radius(a)).epsilon(1e-8));
  }
}

TEST_CASE("generators round-trip through the system JSON schema") {
  HeatModelSpec heat;
  heat.gx = 4;
  heat.gy = 3;
  const std::vector<InterconnectedSystem> systems{
      generate_heat3d(heat), generate_banded_chain(5, 3, 0.2, 0.7),
      testing::random_system(3, 15, 2, 2, 3)};
  for (const auto& s : systems) {
    const auto j = io::system_to_json(s);
    const auto back = io::system_from_json(nlohmann::ordered_json::parse(j.dump()));
    CHECK(io::system_to_json(back).dump() == j.dump());
    CHECK(assemble_global(back).A.to_dense() == assemble_global(s).A.to_dense());
  }
}
