#pragma once

#include <cstdint>

#include "netspai/statespace.hpp"

namespace netspai {

/// Explicit finite-difference 3D heat equation on a gx x gy x gz grid. Each
/// subsystem is one vertical column of gz cells (n = gz) with one input at
/// its bottom cell and one output at its top cell.
struct HeatModelSpec {
  Index gx = 30, gy = 30, gz = 3;
  double alpha = 1.0;
  double h = 1.0;
  double dt = 0.1;
};

struct RandomModelSpec {
  Index N = 10, n = 2, m = 1, r = 1;
  double mean_degree = 2.0;  ///< directed out-edges per subsystem
  double rho = 0.9;          ///< target spectral radius of the global A
  bool positive = false;     ///< all block entries in (0, 1] when true
  std::uint64_t seed = 1;
};

/// Subsystem index of grid column (x, y).
inline Index heat_subsystem(const HeatModelSpec& s, Index x, Index y) { return x * s.gy + y; }

/// Largest stable time step h^2 / (6 alpha).
double heat_max_dt(const HeatModelSpec& spec);

InterconnectedSystem generate_heat3d(const HeatModelSpec& spec);

/// Chain of N subsystems, each with a tridiagonal local matrix, coupled to
/// its neighbours by `coupling * I`, then scaled so that the global A has
/// spectral radius rho. m = r = 1; B_i = e_0, C_i = e_{n-1}^T.
InterconnectedSystem generate_banded_chain(Index N, Index n, double coupling, double rho);

/// Random sparse network with exactly round(mean_degree * N) directed edges.
/// The global A is rescaled to spectral radius rho.
InterconnectedSystem generate_random(const RandomModelSpec& spec);

/// Spectral radius estimate by orthogonal subspace iteration with
/// Rayleigh-Ritz extraction (handles complex dominant pairs).
double spectral_radius(const BlockSparseMatrix& a, std::uint64_t seed = 1, double tol = 1e-12,
                       int max_iter = 5000);

}  // namespace netspai
