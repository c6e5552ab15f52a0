#include "netspai/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>

#include "netspai/errors.hpp"
#include "netspai/spectral.hpp"

namespace netspai {

namespace {

void scale_system(InterconnectedSystem& sys, double factor) {
  for (auto& d : sys.diag) d *= factor;
  for (auto& e : sys.edges) e.A *= factor;
}

void rescale_to_radius(InterconnectedSystem& sys, double rho, std::uint64_t seed) {
  const double current = spectral_radius(assemble_global(sys).A, seed);
  if (current > 0.0) scale_system(sys, rho / current);
}

}  // namespace

double spectral_radius(const BlockSparseMatrix& a, std::uint64_t seed, double tol, int max_iter) {
  const Index n = a.rows();
  if (n == 0) return 0.0;
  const Index k = std::min<Index>(8, n);
  if (n <= k) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a.to_dense(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd q(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) q(i, j) = dist(rng);
  }
  auto apply = [&](const Eigen::MatrixXd& in) {
    Eigen::MatrixXd out(n, in.cols());
    for (Index j = 0; j < in.cols(); ++j) out.col(j) = a.multiply(in.col(j));
    return out;
  };
  auto orthonormalize = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  };
  q = orthonormalize(q);
  double previous = -1.0;
  double estimate = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd z = apply(q);
    const Eigen::MatrixXd h = q.transpose() * z;
    Eigen::EigenSolver<Eigen::MatrixXd> es(h, false);
    estimate = es.eigenvalues().cwiseAbs().maxCoeff();
    if (estimate == 0.0) return 0.0;
    if (previous >= 0.0 && std::abs(estimate - previous) <= tol * estimate) break;
    previous = estimate;
    q = orthonormalize(z);
  }
  return estimate;
}

double heat_max_dt(const HeatModelSpec& spec) { return spec.h * spec.h / (6.0 * spec.alpha); }

InterconnectedSystem generate_heat3d(const HeatModelSpec& spec) {
  if (spec.gx < 1 || spec.gy < 1 || spec.gz < 1) {
    throw ValidationError("heat3d: grid dimensions must be positive");
  }
  if (!(spec.alpha > 0.0) || !(spec.h > 0.0) || !(spec.dt > 0.0)) {
    throw ValidationError("heat3d: alpha, h and dt must be positive");
  }
  const double dt_max = heat_max_dt(spec);
  if (spec.dt > dt_max) {
    throw ValidationError("heat3d: dt = " + std::to_string(spec.dt) +
                          " violates the explicit stability bound dt <= h^2/(6 alpha) = " +
                          std::to_string(dt_max));
  }
  const double lambda = spec.alpha * spec.dt / (spec.h * spec.h);
  const Index n = spec.gz;

  InterconnectedSystem sys;
  sys.N = spec.gx * spec.gy;
  sys.n = n;
  sys.m = 1;
  sys.r = 1;

  Eigen::MatrixXd local = Eigen::MatrixXd::Zero(n, n);
  for (Index z = 0; z < n; ++z) {
    local(z, z) = 1.0 - 6.0 * lambda;
    if (z > 0) local(z, z - 1) = lambda;
    if (z + 1 < n) local(z, z + 1) = lambda;
  }
  const Eigen::MatrixXd coupling = lambda * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
  b(0, 0) = 1.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, n);
  c(0, n - 1) = 1.0;

  sys.diag.assign(static_cast<std::size_t>(sys.N), local);
  sys.B.assign(static_cast<std::size_t>(sys.N), b);
  sys.C.assign(static_cast<std::size_t>(sys.N), c);
  sys.D.assign(static_cast<std::size_t>(sys.N), Eigen::MatrixXd::Zero(1, 1));

  for (Index x = 0; x < spec.gx; ++x) {
    for (Index y = 0; y < spec.gy; ++y) {
      const Index i = heat_subsystem(spec, x, y);
      const Index dx[4] = {-1, 0, 0, 1};
      const Index dy[4] = {0, -1, 1, 0};
      for (int d = 0; d < 4; ++d) {
        const Index xx = x + dx[d], yy = y + dy[d];
        if (xx < 0 || xx >= spec.gx || yy < 0 || yy >= spec.gy) continue;
        sys.edges.push_back({i, heat_subsystem(spec, xx, yy), coupling});
      }
    }
  }
  std::sort(sys.edges.begin(), sys.edges.end(), [](const auto& l, const auto& r) {
    return std::pair(l.i, l.j) < std::pair(r.i, r.j);
  });
  return sys;
}

InterconnectedSystem generate_banded_chain(Index N, Index n, double coupling, double rho) {
  if (N < 1 || n < 1) throw ValidationError("chain: N and n must be positive");
  if (!(rho > 0.0) || !(rho < 1.0)) throw ValidationError("chain: rho must lie in (0, 1)");
  InterconnectedSystem sys;
  sys.N = N;
  sys.n = n;
  sys.m = 1;
  sys.r = 1;
  Eigen::MatrixXd local = Eigen::MatrixXd::Identity(n, n);
  for (Index z = 0; z + 1 < n; ++z) {
    local(z, z + 1) = 0.5;
    local(z + 1, z) = 0.5;
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
  b(0, 0) = 1.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, n);
  c(0, n - 1) = 1.0;
  sys.diag.assign(static_cast<std::size_t>(N), local);
  sys.B.assign(static_cast<std::size_t>(N), b);
  sys.C.assign(static_cast<std::size_t>(N), c);
  sys.D.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Zero(1, 1));
  if (coupling != 0.0) {
    const Eigen::MatrixXd block = coupling * Eigen::MatrixXd::Identity(n, n);
    for (Index i = 0; i < N; ++i) {
      if (i > 0) sys.edges.push_back({i, i - 1, block});
      if (i + 1 < N) sys.edges.push_back({i, i + 1, block});
    }
  }
  rescale_to_radius(sys, rho, 1);
  return sys;
}

InterconnectedSystem generate_random(const RandomModelSpec& spec) {
  if (spec.N < 1 || spec.n < 1 || spec.m < 0 || spec.r < 0) {
    throw ValidationError("random: dimensions must satisfy N, n >= 1 and m, r >= 0");
  }
  if (spec.mean_degree < 0.0 || spec.mean_degree > static_cast<double>(spec.N - 1)) {
    throw ValidationError("random: mean_degree must lie in [0, N - 1]");
  }
  if (!(spec.rho > 0.0)) throw ValidationError("random: rho must be positive");

  std::mt19937_64 rng(spec.seed);
  const double lo = spec.positive ? 0.1 : -1.0;
  std::uniform_real_distribution<double> value(lo, 1.0);
  auto random_block = [&](Index rows, Index cols) {
    Eigen::MatrixXd mtx(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) mtx(i, j) = value(rng);
    }
    return mtx;
  };

  InterconnectedSystem sys;
  sys.N = spec.N;
  sys.n = spec.n;
  sys.m = spec.m;
  sys.r = spec.r;
  for (Index i = 0; i < spec.N; ++i) {
    sys.diag.push_back(random_block(spec.n, spec.n));
    sys.B.push_back(random_block(spec.n, spec.m));
    sys.C.push_back(random_block(spec.r, spec.n));
    sys.D.push_back(random_block(spec.r, spec.m));
  }

  const auto target = static_cast<std::size_t>(std::llround(spec.mean_degree * static_cast<double>(spec.N)));
  std::uniform_int_distribution<Index> node(0, spec.N - 1);
  std::set<std::pair<Index, Index>> chosen;
  while (chosen.size() < target) {
    const Index i = node(rng), j = node(rng);
    if (i != j) chosen.insert({i, j});
  }
  for (const auto& [i, j] : chosen) sys.edges.push_back({i, j, random_block(spec.n, spec.n)});

  rescale_to_radius(sys, spec.rho, spec.seed);
  return sys;
}

}  // namespace netspai
