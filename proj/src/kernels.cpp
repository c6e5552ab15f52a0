#include "netspai/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "netspai/errors.hpp"

namespace netspai {

namespace {

// acc[r * ld + c] += sum_k a[r * K + k] * b[k * C + c]
template <int S>
inline void block_fma_fixed(const double* a, const double* b, double* acc, Index ld) {
  for (int r = 0; r < S; ++r) {
    double* out = acc + r * ld;
    for (int k = 0; k < S; ++k) {
      const double av = a[r * S + k];
      const double* brow = b + k * S;
      for (int c = 0; c < S; ++c) out[c] += av * brow[c];
    }
  }
}

inline void block_fma(Index R, Index K, Index C, const double* a, const double* b, double* acc,
                      Index ld) {
  for (Index r = 0; r < R; ++r) {
    double* out = acc + r * ld;
    for (Index k = 0; k < K; ++k) {
      const double av = a[r * K + k];
      const double* brow = b + k * C;
      for (Index c = 0; c < C; ++c) out[c] += av * brow[c];
    }
  }
}

std::string mismatch(const char* op, const BlockSparseMatrix& a, const BlockSparseMatrix& b) {
  std::ostringstream os;
  os << op << ": incompatible operands " << a.shape_string() << " and " << b.shape_string();
  return os.str();
}

// Common block size if A's rows, A's columns and B's columns all use it.
int uniform_block_size(const BlockSparseMatrix& a, const BlockSparseMatrix& b) {
  if (a.row_block_sizes().empty()) return 0;
  const Index s = a.row_block_sizes().front();
  auto all_equal = [s](const std::vector<Index>& v) {
    return std::all_of(v.begin(), v.end(), [s](Index x) { return x == s; });
  };
  if (!all_equal(a.row_block_sizes()) || !all_equal(a.col_block_sizes()) ||
      !all_equal(b.col_block_sizes())) {
    return 0;
  }
  return (s >= 1 && s <= 4) || s == 6 ? static_cast<int>(s) : 0;
}

// Blocks produced for a contiguous range of block rows.
struct RowChunk {
  std::vector<Index> cols;
  std::vector<double> values;
  std::vector<std::size_t> counts;  // blocks per row
};

// Computes rows [first, last) of A * B, optionally restricted to `mask`.
template <int S>
void product_rows(const BlockSparseMatrix& a, const BlockSparseMatrix& b, const PatternMatrix* mask,
                  Index first, Index last, RowChunk& out) {
  const Index ncols = b.cols();
  const Index nbc = b.block_cols();
  Index max_rows = 0;
  for (Index i = first; i < last; ++i) max_rows = std::max(max_rows, a.row_block_size(i));
  std::vector<double> strip(static_cast<std::size_t>(max_rows * ncols), 0.0);
  std::vector<Index> touched_mark(static_cast<std::size_t>(nbc), -1);
  std::vector<Index> allowed_mark(mask ? static_cast<std::size_t>(nbc) : 0, -1);
  std::vector<Index> touched;

  for (Index i = first; i < last; ++i) {
    const Index ri = a.row_block_size(i);
    Index lo = 0, hi = nbc - 1;
    if (mask) {
      const auto mrow = mask->row(i);
      if (mrow.empty()) {
        out.counts.push_back(0);
        continue;
      }
      lo = mrow.front();
      hi = mrow.back();
      for (Index j : mrow) allowed_mark[static_cast<std::size_t>(j)] = i;
    }
    touched.clear();
    for (std::size_t pa = a.row_begin(i); pa < a.row_end(i); ++pa) {
      const Index k = a.block_col(pa);
      const Index rk = a.col_block_size(k);
      const double* ablk = a.block_data(pa);
      std::size_t pb = b.row_begin(k);
      const std::size_t pb_end = b.row_end(k);
      if (mask && lo > 0) {
        const auto cols = b.row_cols(k);
        pb += static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), lo) - cols.begin());
      }
      for (; pb < pb_end; ++pb) {
        const Index j = b.block_col(pb);
        if (j > hi) break;
        if (mask && allowed_mark[static_cast<std::size_t>(j)] != i) continue;
        if (touched_mark[static_cast<std::size_t>(j)] != i) {
          touched_mark[static_cast<std::size_t>(j)] = i;
          touched.push_back(j);
        }
        double* acc = strip.data() + b.col_offset(j);
        if constexpr (S > 0) {
          block_fma_fixed<S>(ablk, b.block_data(pb), acc, ncols);
        } else {
          block_fma(ri, rk, b.col_block_size(j), ablk, b.block_data(pb), acc, ncols);
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    std::size_t kept = 0;
    for (Index j : touched) {
      const Index cj = b.col_block_size(j);
      double* acc = strip.data() + b.col_offset(j);
      double amax = 0.0;
      const std::size_t start = out.values.size();
      for (Index r = 0; r < ri; ++r) {
        for (Index c = 0; c < cj; ++c) {
          const double v = acc[r * ncols + c];
          out.values.push_back(v);
          amax = std::max(amax, std::abs(v));
          acc[r * ncols + c] = 0.0;
        }
      }
      // Pruning is redone by the builder; this only avoids copying empties.
      if (amax == 0.0) {
        out.values.resize(start);
        continue;
      }
      out.cols.push_back(j);
      ++kept;
    }
    out.counts.push_back(kept);
  }
}

BlockSparseMatrix run_product(const BlockSparseMatrix& a, const BlockSparseMatrix& b,
                              const PatternMatrix* mask, int threads) {
  const Index nrows = a.block_rows();
  const int nchunks = std::max(1, std::min<int>(threads, static_cast<int>(std::max<Index>(nrows, 1))));
  std::vector<RowChunk> chunks(static_cast<std::size_t>(nchunks));
  auto work = [&](int c) {
    const Index first = nrows * c / nchunks;
    const Index last = nrows * (c + 1) / nchunks;
    auto& out = chunks[static_cast<std::size_t>(c)];
    switch (uniform_block_size(a, b)) {
      case 1: product_rows<1>(a, b, mask, first, last, out); break;
      case 2: product_rows<2>(a, b, mask, first, last, out); break;
      case 3: product_rows<3>(a, b, mask, first, last, out); break;
      case 4: product_rows<4>(a, b, mask, first, last, out); break;
      case 6: product_rows<6>(a, b, mask, first, last, out); break;
      default: product_rows<0>(a, b, mask, first, last, out); break;
    }
  };
  if (nchunks == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int c = 0; c < nchunks; ++c) pool.emplace_back(work, c);
    for (auto& t : pool) t.join();
  }
  BlockSparseMatrix::Builder builder(a.row_block_sizes(), b.col_block_sizes());
  Index row = 0;
  for (const auto& chunk : chunks) {
    std::size_t bpos = 0, vpos = 0;
    for (std::size_t count : chunk.counts) {
      for (std::size_t q = 0; q < count; ++q, ++bpos) {
        const Index j = chunk.cols[bpos];
        builder.push(j, chunk.values.data() + vpos);
        vpos += static_cast<std::size_t>(a.row_block_size(row) * b.col_block_size(j));
      }
      builder.next_row();
      ++row;
    }
  }
  return std::move(builder).finish();
}

}  // namespace

BlockSparseMatrix spgemm(const BlockSparseMatrix& a, const BlockSparseMatrix& b, int threads) {
  if (a.col_block_sizes() != b.row_block_sizes()) throw DimensionError(mismatch("spgemm", a, b));
  return run_product(a, b, nullptr, threads);
}

BlockSparseMatrix spgemm_masked(const BlockSparseMatrix& a, const BlockSparseMatrix& b,
                                const PatternMatrix& mask, int threads) {
  if (a.col_block_sizes() != b.row_block_sizes()) {
    throw DimensionError(mismatch("spgemm_masked", a, b));
  }
  if (mask.dimension() != a.block_rows() || mask.dimension() != b.block_cols()) {
    throw DimensionError("spgemm_masked: mask dimension " + std::to_string(mask.dimension()) +
                         " does not match product grid");
  }
  return run_product(a, b, &mask, threads);
}

BlockSparseMatrix sp_add(const BlockSparseMatrix& a, const BlockSparseMatrix& b, double alpha,
                         double beta) {
  if (!a.same_partition(b)) throw DimensionError(mismatch("sp_add", a, b));
  BlockSparseMatrix::Builder builder(a.row_block_sizes(), a.col_block_sizes());
  DenseBlock tmp;
  for (Index i = 0; i < a.block_rows(); ++i) {
    std::size_t pa = a.row_begin(i), pb = b.row_begin(i);
    const std::size_t ea = a.row_end(i), eb = b.row_end(i);
    while (pa < ea || pb < eb) {
      const Index ja = pa < ea ? a.block_col(pa) : a.block_cols();
      const Index jb = pb < eb ? b.block_col(pb) : b.block_cols();
      const Index j = std::min(ja, jb);
      tmp.setZero(a.row_block_size(i), a.col_block_size(j));
      if (ja == j) tmp += alpha * a.block(pa++, i);
      if (jb == j) tmp += beta * b.block(pb++, i);
      builder.push(j, tmp.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix transpose(const BlockSparseMatrix& a) {
  const Index nbr = a.block_rows(), nbc = a.block_cols();
  // Bucket positions by column; rows come out increasing.
  std::vector<std::vector<std::pair<Index, std::size_t>>> buckets(static_cast<std::size_t>(nbc));
  for (Index i = 0; i < nbr; ++i) {
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      buckets[static_cast<std::size_t>(a.block_col(pos))].emplace_back(i, pos);
    }
  }
  BlockSparseMatrix::Builder builder(a.col_block_sizes(), a.row_block_sizes());
  DenseBlock tmp;
  for (Index j = 0; j < nbc; ++j) {
    for (const auto& [i, pos] : buckets[static_cast<std::size_t>(j)]) {
      tmp = a.block(pos, i).transpose();
      builder.push(i, tmp.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix scale(const BlockSparseMatrix& a, double alpha) {
  BlockSparseMatrix::Builder builder(a.row_block_sizes(), a.col_block_sizes());
  DenseBlock tmp;
  for (Index i = 0; i < a.block_rows(); ++i) {
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      tmp = alpha * a.block(pos, i);
      builder.push(a.block_col(pos), tmp.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix add_identity(const BlockSparseMatrix& a, double shift) {
  if (a.row_block_sizes() != a.col_block_sizes()) {
    throw DimensionError("add_identity: partition is not square: " + a.shape_string());
  }
  if (shift == 0.0) return a;
  return sp_add(a, BlockSparseMatrix::identity(a.row_block_sizes()), 1.0, shift);
}

BlockSparseMatrix symmetrize(const BlockSparseMatrix& a) {
  return sp_add(a, transpose(a), 0.5, 0.5);
}

BlockSparseMatrix symmetric_from_upper(const BlockSparseMatrix& a) {
  if (a.row_block_sizes() != a.col_block_sizes()) {
    throw DimensionError("symmetric_from_upper: matrix must have a square block partition, got " +
                         a.shape_string());
  }
  const Index nb = a.block_rows();
  std::vector<std::vector<std::pair<Index, std::size_t>>> lower(static_cast<std::size_t>(nb));
  for (Index i = 0; i < nb; ++i) {
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      const Index j = a.block_col(pos);
      if (j > i) lower[static_cast<std::size_t>(j)].emplace_back(i, pos);
    }
  }
  BlockSparseMatrix::Builder builder(a.row_block_sizes(), a.col_block_sizes());
  DenseBlock tmp;
  for (Index i = 0; i < nb; ++i) {
    for (const auto& [j, pos] : lower[static_cast<std::size_t>(i)]) {
      tmp = a.block(pos, j).transpose();
      builder.push(j, tmp.data());
    }
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      const Index j = a.block_col(pos);
      if (j < i) continue;
      if (j == i) {
        const auto blk = a.block(pos, i);
        tmp = 0.5 * (blk + blk.transpose());
        builder.push(j, tmp.data());
      } else {
        builder.push(j, a.block_data(pos));
      }
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

PatternMatrix upper_triangle(const PatternMatrix& p) {
  PatternMatrix out(p.dimension());
  for (Index i = 0; i < p.dimension(); ++i) {
    const auto row = p.row(i);
    out.set_row(i, std::vector<Index>(std::lower_bound(row.begin(), row.end(), i), row.end()));
  }
  return out;
}

BlockSparseMatrix mask_to_pattern(const BlockSparseMatrix& z, const PatternMatrix& p) {
  if (z.block_rows() != z.block_cols() || p.dimension() != z.block_rows()) {
    throw DimensionError("mask_to_pattern: pattern dimension " + std::to_string(p.dimension()) +
                         " does not match " + z.shape_string());
  }
  BlockSparseMatrix::Builder builder(z.row_block_sizes(), z.col_block_sizes());
  for (Index i = 0; i < z.block_rows(); ++i) {
    const auto allowed = p.row(i);
    auto it = allowed.begin();
    for (std::size_t pos = z.row_begin(i); pos < z.row_end(i); ++pos) {
      const Index j = z.block_col(pos);
      it = std::lower_bound(it, allowed.end(), j);
      if (it != allowed.end() && *it == j) builder.push(j, z.block_data(pos));
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix drop_small(const BlockSparseMatrix& z, double phi) {
  if (!(phi >= 0.0)) throw ValidationError("drop_small: phi must be nonnegative");
  if (phi == 0.0) return z;
  BlockSparseMatrix::Builder builder(z.row_block_sizes(), z.col_block_sizes());
  std::vector<double> tmp;
  for (Index i = 0; i < z.block_rows(); ++i) {
    for (std::size_t pos = z.row_begin(i); pos < z.row_end(i); ++pos) {
      const Index j = z.block_col(pos);
      const Index count = z.row_block_size(i) * z.col_block_size(j);
      const double* d = z.block_data(pos);
      tmp.assign(d, d + count);
      for (double& v : tmp) {
        if (std::abs(v) <= phi) v = 0.0;
      }
      builder.push(j, tmp.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

double max_asymmetry(const BlockSparseMatrix& a) {
  if (a.row_block_sizes() != a.col_block_sizes()) {
    throw DimensionError("max_asymmetry: partition is not square: " + a.shape_string());
  }
  double worst = 0.0;
  for (Index i = 0; i < a.block_rows(); ++i) {
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      const Index j = a.block_col(pos);
      const auto mirror = a.find(j, i);
      const auto blk = a.block(pos, i);
      if (mirror) {
        worst = std::max(worst, (blk - a.block(*mirror, j).transpose()).cwiseAbs().maxCoeff());
      } else {
        worst = std::max(worst, blk.cwiseAbs().maxCoeff());
      }
    }
  }
  return worst;
}

}  // namespace netspai
