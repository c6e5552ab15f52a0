#include "netspai/statespace.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>

#include "netspai/errors.hpp"
#include "netspai/kernels.hpp"
#include "netspai/spectral.hpp"

namespace netspai {

namespace {

std::string shape(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_block(const Eigen::MatrixXd& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(what + " has shape " + shape(m) + ", expected " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
}

std::vector<Index> uniform(Index count, Index size) {
  return std::vector<Index>(static_cast<std::size_t>(count), size);
}

BlockSparseMatrix block_diagonal(const std::vector<Eigen::MatrixXd>& blocks, Index rows,
                                 Index cols) {
  std::vector<BlockEntry> entries;
  entries.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    entries.push_back({static_cast<Index>(i), static_cast<Index>(i), blocks[i]});
  }
  const auto count = static_cast<Index>(blocks.size());
  return BlockSparseMatrix::from_blocks(uniform(count, rows), uniform(count, cols),
                                        std::move(entries));
}

// Time-major to subsystem-major index map for a lifted signal with `width`
// entries per subsystem and time step.
std::vector<Index> lifting_permutation(Index N, int p, Index width) {
  const Index steps = p + 1;
  std::vector<Index> perm(static_cast<std::size_t>(N * steps * width));
  for (Index t = 0; t < steps; ++t) {
    for (Index i = 0; i < N; ++i) {
      for (Index c = 0; c < width; ++c) {
        perm[static_cast<std::size_t>(t * N * width + i * width + c)] =
            i * steps * width + t * width + c;
      }
    }
  }
  return perm;
}

// Appends the blocks of `piece` shifted into sub-block (t, tau) of a
// structure-ordered matrix whose blocks are (steps*rs) x (cols_steps*cs).
void scatter_into(std::map<std::pair<Index, Index>, Eigen::MatrixXd>& acc,
                  const BlockSparseMatrix& piece, Index t, Index tau, Index rs, Index cs,
                  Index row_steps, Index col_steps) {
  for (Index i = 0; i < piece.block_rows(); ++i) {
    for (std::size_t pos = piece.row_begin(i); pos < piece.row_end(i); ++pos) {
      const Index j = piece.block_col(pos);
      auto [it, inserted] = acc.try_emplace({i, j});
      if (inserted) it->second = Eigen::MatrixXd::Zero(row_steps * rs, col_steps * cs);
      it->second.block(t * rs, tau * cs, rs, cs) = piece.block(pos, i);
    }
  }
}

BlockSparseMatrix from_map(std::map<std::pair<Index, Index>, Eigen::MatrixXd>& acc,
                           std::vector<Index> rows, std::vector<Index> cols) {
  std::vector<BlockEntry> entries;
  entries.reserve(acc.size());
  for (auto& [key, value] : acc) entries.push_back({key.first, key.second, std::move(value)});
  return BlockSparseMatrix::from_blocks(std::move(rows), std::move(cols), std::move(entries));
}

// Places the blocks of `piece` at block offset (row0, col0) of a larger grid.
void append_shifted(std::vector<BlockEntry>& entries, const BlockSparseMatrix& piece, Index row0,
                    Index col0) {
  for (Index i = 0; i < piece.block_rows(); ++i) {
    for (std::size_t pos = piece.row_begin(i); pos < piece.row_end(i); ++pos) {
      entries.push_back({row0 + i, col0 + piece.block_col(pos), piece.block(pos, i)});
    }
  }
}

double matrix_two_norm(const BlockSparseMatrix& a) {
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { out = a.multiply(in); };
  auto apply_t = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = a.multiply_transpose(in);
  };
  PowerOptions opts;
  opts.tol = 1e-8;
  return spectral_norm(apply, apply_t, a.cols(), opts).value;
}

void verify_permutation(const std::vector<Index>& perm, const char* name) {
  std::vector<char> seen(perm.size(), 0);
  for (Index v : perm) {
    if (v < 0 || static_cast<std::size_t>(v) >= perm.size() || seen[static_cast<std::size_t>(v)]) {
      throw NumericalError(std::string("lift: ") + name + " is not a permutation");
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

// cal = P * timed * Q^T checked on a random probe: cal * Q x == P * timed * x.
void verify_lifted_identity(const BlockSparseMatrix& cal, const BlockSparseMatrix& timed,
                            const std::vector<Index>* row_perm, const std::vector<Index>* col_perm,
                            const char* name) {
  const Eigen::VectorXd x = seeded_unit_vector(timed.cols(), 7);
  const Eigen::VectorXd xc = col_perm ? permute(*col_perm, x) : x;
  Eigen::VectorXd lhs = cal.multiply(xc);
  Eigen::VectorXd rhs = timed.multiply(x);
  if (row_perm) rhs = permute(*row_perm, rhs);
  const double scale = std::max(1.0, rhs.norm());
  if ((lhs - rhs).norm() > 1e-10 * scale) {
    throw NumericalError(std::string("lift: permutation identity failed for ") + name);
  }
}

std::optional<int> rank_sweep(const InterconnectedSystem& system, int p_max, bool observability) {
  if (p_max < 1) throw ValidationError("index search requires p_max >= 1");
  const GlobalMatrices g = assemble_global(system);
  const Eigen::MatrixXd A = g.A.to_dense();
  const Index nx = A.rows();
  const Eigen::MatrixXd other = observability ? g.C.to_dense() : g.B.to_dense();
  // O_nu stacks C A^t for t = 0..nu; R_theta holds A^t B for t = 0..theta-1.
  std::vector<Eigen::MatrixXd> pieces;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(nx, nx);
  auto piece = [&](const Eigen::MatrixXd& pw) -> Eigen::MatrixXd {
    return observability ? Eigen::MatrixXd(other * pw) : Eigen::MatrixXd(pw * other);
  };
  pieces.push_back(piece(power));
  for (int idx = 1; idx <= p_max; ++idx) {
    power = power * A;
    if (observability) pieces.push_back(piece(power));
    Eigen::MatrixXd stacked;
    if (observability) {
      Index rows = 0;
      for (const auto& m : pieces) rows += m.rows();
      stacked.resize(rows, nx);
      Index off = 0;
      for (const auto& m : pieces) {
        stacked.middleRows(off, m.rows()) = m;
        off += m.rows();
      }
    } else {
      Index cols = 0;
      for (const auto& m : pieces) cols += m.cols();
      stacked.resize(nx, cols);
      Index off = 0;
      for (const auto& m : pieces) {
        stacked.middleCols(off, m.cols()) = m;
        off += m.cols();
      }
    }
    if (stacked.size() > 0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
      qr.setThreshold(1e-10);
      if (qr.rank() == nx) return idx;
    }
    if (!observability) pieces.push_back(piece(power));
  }
  return std::nullopt;
}

}  // namespace

void InterconnectedSystem::validate() const {
  if (N < 1 || n < 1 || m < 0 || r < 0) {
    throw ValidationError("system dimensions must satisfy N >= 1, n >= 1, m >= 0, r >= 0");
  }
  const auto count = static_cast<std::size_t>(N);
  if (diag.size() != count || B.size() != count || C.size() != count || D.size() != count) {
    throw DimensionError("system must provide N = " + std::to_string(N) +
                         " blocks each of diag, B, C and D");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string tag = "[" + std::to_string(i) + "]";
    check_block(diag[i], n, n, "diag" + tag);
    check_block(B[i], n, m, "B" + tag);
    check_block(C[i], r, n, "C" + tag);
    check_block(D[i], r, m, "D" + tag);
  }
  std::set<std::pair<Index, Index>> seen;
  for (const auto& e : edges) {
    const std::string tag = "edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")";
    if (e.i < 0 || e.i >= N || e.j < 0 || e.j >= N) {
      throw ValidationError(tag + " references a subsystem outside [0, N)");
    }
    if (e.i == e.j) throw ValidationError(tag + " is a self-loop; use diag instead");
    if (!seen.insert({e.i, e.j}).second) throw ValidationError(tag + " appears twice");
    check_block(e.A, n, n, tag);
    if (!e.A.allFinite() || e.A.cwiseAbs().maxCoeff() == 0.0) {
      throw ValidationError(tag + " carries a zero coupling block");
    }
  }
}

std::vector<std::vector<Index>> InterconnectedSystem::neighbors() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(N));
  for (const auto& e : edges) out[static_cast<std::size_t>(e.i)].push_back(e.j);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

GlobalMatrices assemble_global(const InterconnectedSystem& system) {
  system.validate();
  std::vector<BlockEntry> a_entries;
  a_entries.reserve(system.edges.size() + system.diag.size());
  for (std::size_t i = 0; i < system.diag.size(); ++i) {
    a_entries.push_back({static_cast<Index>(i), static_cast<Index>(i), system.diag[i]});
  }
  for (const auto& e : system.edges) a_entries.push_back({e.i, e.j, e.A});
  GlobalMatrices g;
  g.A = BlockSparseMatrix::from_blocks(uniform(system.N, system.n), uniform(system.N, system.n),
                                       std::move(a_entries));
  g.B = block_diagonal(system.B, system.n, system.m);
  g.C = block_diagonal(system.C, system.r, system.n);
  g.D = block_diagonal(system.D, system.r, system.m);
  return g;
}

Eigen::VectorXd permute(const std::vector<Index>& perm, const Eigen::VectorXd& v) {
  if (static_cast<Index>(perm.size()) != v.size()) {
    throw DimensionError("permute: vector length " + std::to_string(v.size()) +
                         " does not match permutation length " + std::to_string(perm.size()));
  }
  Eigen::VectorXd out(v.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[perm[k]] = v[static_cast<Index>(k)];
  return out;
}

Eigen::VectorXd permute_inverse(const std::vector<Index>& perm, const Eigen::VectorXd& v) {
  if (static_cast<Index>(perm.size()) != v.size()) {
    throw DimensionError("permute_inverse: vector length " + std::to_string(v.size()) +
                         " does not match permutation length " + std::to_string(perm.size()));
  }
  Eigen::VectorXd out(v.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[static_cast<Index>(k)] = v[perm[k]];
  return out;
}

LiftedModel lift(const InterconnectedSystem& system, int p, int threads) {
  if (p < 1) throw ValidationError("lift: window p must be >= 1, got " + std::to_string(p));
  LiftedModel lm;
  lm.p = p;
  lm.N = system.N;
  lm.n = system.n;
  lm.m = system.m;
  lm.r = system.r;
  lm.gramian_max_power = p;
  lm.global = assemble_global(system);
  const GlobalMatrices& g = lm.global;
  const Index N = system.N, n = system.n, m = system.m, r = system.r;
  const Index steps = p + 1;

  // powers[t] = A^t, t = 0..p
  std::vector<BlockSparseMatrix> powers;
  powers.reserve(static_cast<std::size_t>(steps));
  powers.push_back(BlockSparseMatrix::identity(uniform(N, n)));
  for (int t = 1; t <= p; ++t) powers.push_back(spgemm(powers.back(), g.A, threads));
  lm.A_pow_p = powers.back();

  // CA^t for the observability rows, A^t B for the controllability columns,
  // markov[l] = D for l = 0 and C A^{l-1} B for l >= 1.
  std::vector<BlockSparseMatrix> ca, ab, markov;
  for (int t = 0; t <= p; ++t) ca.push_back(spgemm(g.C, powers[static_cast<std::size_t>(t)], threads));
  for (int t = 0; t < p; ++t) ab.push_back(spgemm(powers[static_cast<std::size_t>(t)], g.B, threads));
  markov.push_back(g.D);
  for (int l = 1; l <= p; ++l) markov.push_back(spgemm(g.C, ab[static_cast<std::size_t>(l - 1)], threads));

  {
    std::vector<BlockEntry> o_entries, gamma_entries, r_entries;
    for (Index t = 0; t < steps; ++t) append_shifted(o_entries, ca[static_cast<std::size_t>(t)], t * N, 0);
    for (Index t = 0; t < steps; ++t) {
      for (Index tau = 0; tau <= t; ++tau) {
        append_shifted(gamma_entries, markov[static_cast<std::size_t>(t - tau)], t * N, tau * N);
      }
    }
    for (Index tau = 0; tau < p; ++tau) {
      append_shifted(r_entries, ab[static_cast<std::size_t>(p - 1 - tau)], 0, tau * N);
    }
    lm.O_p = BlockSparseMatrix::from_blocks(uniform(steps * N, r), uniform(N, n), std::move(o_entries));
    lm.Gamma_p = BlockSparseMatrix::from_blocks(uniform(steps * N, r), uniform(steps * N, m),
                                                std::move(gamma_entries));
    lm.R_p = BlockSparseMatrix::from_blocks(uniform(N, n), uniform(steps * N, m), std::move(r_entries));
  }

  {
    std::map<std::pair<Index, Index>, Eigen::MatrixXd> acc;
    for (Index t = 0; t < steps; ++t) scatter_into(acc, ca[static_cast<std::size_t>(t)], t, 0, r, n, steps, 1);
    lm.cal_O = from_map(acc, uniform(N, steps * r), uniform(N, n));
  }
  {
    std::map<std::pair<Index, Index>, Eigen::MatrixXd> acc;
    for (Index t = 0; t < steps; ++t) {
      for (Index tau = 0; tau <= t; ++tau) {
        scatter_into(acc, markov[static_cast<std::size_t>(t - tau)], t, tau, r, m, steps, steps);
      }
    }
    lm.cal_G = from_map(acc, uniform(N, steps * r), uniform(N, steps * m));
  }
  {
    std::map<std::pair<Index, Index>, Eigen::MatrixXd> acc;
    for (Index tau = 0; tau < p; ++tau) {
      scatter_into(acc, ab[static_cast<std::size_t>(p - 1 - tau)], 0, tau, n, m, 1, steps);
    }
    lm.cal_R = from_map(acc, uniform(N, n), uniform(N, steps * m));
  }

  lm.perm_Y = lifting_permutation(N, p, r);
  lm.perm_U = lifting_permutation(N, p, m);
  verify_permutation(lm.perm_Y, "perm_Y");
  verify_permutation(lm.perm_U, "perm_U");
  if (lm.O_p.rows() > 0 && lm.O_p.cols() > 0) {
    verify_lifted_identity(lm.cal_O, lm.O_p, &lm.perm_Y, nullptr, "cal_O");
  }
  if (lm.Gamma_p.rows() > 0 && lm.Gamma_p.cols() > 0) {
    verify_lifted_identity(lm.cal_G, lm.Gamma_p, &lm.perm_Y, &lm.perm_U, "cal_G");
  }
  if (lm.R_p.cols() > 0) verify_lifted_identity(lm.cal_R, lm.R_p, nullptr, &lm.perm_U, "cal_R");
  return lm;
}

BlockSparseMatrix observability_sum(const BlockSparseMatrix& A, const BlockSparseMatrix& C,
                                    int max_power, double mu, int threads) {
  const BlockSparseMatrix ctc = spgemm(transpose(C), C, threads);
  const BlockSparseMatrix at = transpose(A);
  BlockSparseMatrix acc = ctc;
  for (int i = 0; i < max_power; ++i) {
    acc = sp_add(spgemm(spgemm(at, acc, threads), A, threads), ctc, 1.0, 1.0);
  }
  acc = symmetrize(acc);
  return mu > 0.0 ? add_identity(acc, mu) : acc;
}

BlockSparseMatrix controllability_sum(const BlockSparseMatrix& A, const BlockSparseMatrix& B,
                                      int max_power, double mu, int threads) {
  const BlockSparseMatrix bbt = spgemm(B, transpose(B), threads);
  const BlockSparseMatrix at = transpose(A);
  BlockSparseMatrix acc = bbt;
  for (int i = 0; i < max_power; ++i) {
    acc = sp_add(spgemm(spgemm(A, acc, threads), at, threads), bbt, 1.0, 1.0);
  }
  acc = symmetrize(acc);
  return mu > 0.0 ? add_identity(acc, mu) : acc;
}

Gramian obs_gramian(const LiftedModel& lifted, double mu, int threads) {
  if (mu < 0.0) throw ValidationError("obs_gramian: mu must be nonnegative");
  Gramian gr;
  gr.p = lifted.p;
  gr.mu = mu;
  gr.kind = GramianKind::observability;
  gr.max_power = std::min(lifted.gramian_max_power, lifted.p);
  gr.matrix = observability_sum(lifted.global.A, lifted.global.C, gr.max_power, mu, threads);
  return gr;
}

Gramian ctrl_gramian(const LiftedModel& lifted, double mu, int threads) {
  if (mu < 0.0) throw ValidationError("ctrl_gramian: mu must be nonnegative");
  Gramian gr;
  gr.p = lifted.p;
  gr.mu = mu;
  gr.kind = GramianKind::controllability;
  gr.max_power = std::min(lifted.gramian_max_power, lifted.p - 1);
  gr.matrix = controllability_sum(lifted.global.A, lifted.global.B, gr.max_power, mu, threads);
  return gr;
}

std::optional<int> observability_index(const InterconnectedSystem& system, int p_max) {
  return rank_sweep(system, p_max, true);
}

std::optional<int> controllability_index(const InterconnectedSystem& system, int p_max) {
  return rank_sweep(system, p_max, false);
}

LiftedModel truncate_stable_powers(const LiftedModel& lifted, int s, double eta, int threads) {
  if (s < 0) throw ValidationError("truncate_stable_powers: s must be nonnegative");
  const BlockSparseMatrix& A = lifted.global.A;
  BlockSparseMatrix power = BlockSparseMatrix::identity(A.row_block_sizes());
  for (int i = 0; i < s; ++i) power = spgemm(power, A, threads);
  const double norm_s = s == 0 ? 1.0 : matrix_two_norm(power);
  if (norm_s > eta) {
    throw ValidationError("truncate_stable_powers: ||A^" + std::to_string(s) +
                          "||_2 = " + std::to_string(norm_s) + " exceeds eta = " +
                          std::to_string(eta));
  }
  LiftedModel out = lifted;
  out.gramian_max_power = std::min(s, lifted.p);
  double tail = 0.0;
  if (s < lifted.p) {
    const double c_norm = matrix_two_norm(lifted.global.C);
    for (int i = s + 1; i <= lifted.p; ++i) {
      power = spgemm(power, A, threads);
      const double a_norm = matrix_two_norm(power);
      tail += a_norm * a_norm * c_norm * c_norm;
    }
  }
  out.truncation_bound = tail;
  return out;
}

Trajectory simulate(const GlobalMatrices& g, const Eigen::VectorXd& x0,
                    const std::vector<Eigen::VectorXd>& inputs, double noise_std,
                    std::uint64_t seed) {
  if (x0.size() != g.A.rows()) {
    throw DimensionError("simulate: x0 has length " + std::to_string(x0.size()) + ", expected " +
                         std::to_string(g.A.rows()));
  }
  if (noise_std < 0.0) throw ValidationError("simulate: noise_std must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Trajectory tr;
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Eigen::VectorXd& u = inputs[k];
    if (u.size() != g.B.cols()) {
      throw DimensionError("simulate: input " + std::to_string(k) + " has length " +
                           std::to_string(u.size()) + ", expected " + std::to_string(g.B.cols()));
    }
    Eigen::VectorXd y = g.C.multiply(x) + g.D.multiply(u);
    if (noise_std > 0.0) {
      for (Index c = 0; c < y.size(); ++c) y[c] += noise_std * dist(rng);
    }
    tr.x.push_back(x);
    tr.u.push_back(u);
    tr.y.push_back(std::move(y));
    x = g.A.multiply(x) + g.B.multiply(u);
  }
  return tr;
}

std::vector<Eigen::VectorXd> random_inputs(Index size, Index steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (Index k = 0; k < steps; ++k) {
    Eigen::VectorXd u(size);
    for (Index c = 0; c < size; ++c) u[c] = dist(rng);
    out.push_back(std::move(u));
  }
  return out;
}

LiftedSignals lift_signals(const LiftedModel& lifted, const Trajectory& traj, Index k) {
  const Index p = lifted.p;
  if (k < p || static_cast<std::size_t>(k) >= traj.y.size()) {
    throw ValidationError("lift_signals: need p <= k < trajectory length");
  }
  const Index ny = lifted.N * lifted.r, nu = lifted.N * lifted.m;
  Eigen::VectorXd Y((p + 1) * ny), U((p + 1) * nu);
  for (Index t = 0; t <= p; ++t) {
    Y.segment(t * ny, ny) = traj.y[static_cast<std::size_t>(k - p + t)];
    U.segment(t * nu, nu) = traj.u[static_cast<std::size_t>(k - p + t)];
  }
  return {permute(lifted.perm_Y, Y), permute(lifted.perm_U, U)};
}

}  // namespace netspai
