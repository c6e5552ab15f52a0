#include "netspai/pattern.hpp"

#include <algorithm>
#include <string>

#include "netspai/errors.hpp"

namespace netspai {

namespace {

void check_index(Index v, Index n) {
  if (v < 0 || v >= n) {
    throw DimensionError("pattern index " + std::to_string(v) + " outside [0, " +
                         std::to_string(n) + ")");
  }
}

void require_same_dimension(const PatternMatrix& a, const PatternMatrix& b, const char* op) {
  if (a.dimension() != b.dimension()) {
    throw DimensionError(std::string(op) + ": pattern dimensions " +
                         std::to_string(a.dimension()) + " and " +
                         std::to_string(b.dimension()) + " differ");
  }
}

}  // namespace

PatternMatrix::PatternMatrix(Index dimension) : rows_(static_cast<std::size_t>(dimension)) {
  if (dimension < 0) throw ValidationError("pattern dimension must be nonnegative");
}

PatternMatrix::PatternMatrix(Index dimension, std::vector<std::pair<Index, Index>> entries)
    : PatternMatrix(dimension) {
  for (const auto& [i, j] : entries) {
    check_index(i, dimension);
    check_index(j, dimension);
    rows_[static_cast<std::size_t>(i)].push_back(j);
  }
  for (auto& r : rows_) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }
}

PatternMatrix PatternMatrix::identity(Index dimension) {
  PatternMatrix p(dimension);
  for (Index i = 0; i < dimension; ++i) p.rows_[static_cast<std::size_t>(i)] = {i};
  return p;
}

PatternMatrix PatternMatrix::full(Index dimension) {
  PatternMatrix p(dimension);
  std::vector<Index> all(static_cast<std::size_t>(dimension));
  for (Index j = 0; j < dimension; ++j) all[static_cast<std::size_t>(j)] = j;
  for (auto& r : p.rows_) r = all;
  return p;
}

std::size_t PatternMatrix::nnz() const {
  std::size_t total = 0;
  for (const auto& r : rows_) total += r.size();
  return total;
}

bool PatternMatrix::contains(Index i, Index j) const {
  if (i < 0 || i >= dimension()) return false;
  const auto& r = rows_[static_cast<std::size_t>(i)];
  return std::binary_search(r.begin(), r.end(), j);
}

std::vector<std::pair<Index, Index>> PatternMatrix::entries() const {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(nnz());
  for (Index i = 0; i < dimension(); ++i) {
    for (Index j : rows_[static_cast<std::size_t>(i)]) out.emplace_back(i, j);
  }
  return out;
}

void PatternMatrix::set_row(Index i, std::vector<Index> cols) {
  check_index(i, dimension());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    check_index(cols[k], dimension());
    if (k > 0 && cols[k] <= cols[k - 1]) {
      throw ValidationError("set_row: columns must be sorted and unique");
    }
  }
  rows_[static_cast<std::size_t>(i)] = std::move(cols);
}

bool PatternMatrix::is_subset_of(const PatternMatrix& other) const {
  if (dimension() != other.dimension()) return false;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!std::includes(other.rows_[i].begin(), other.rows_[i].end(), rows_[i].begin(),
                       rows_[i].end())) {
      return false;
    }
  }
  return true;
}

bool PatternMatrix::is_symmetric() const {
  for (Index i = 0; i < dimension(); ++i) {
    for (Index j : rows_[static_cast<std::size_t>(i)]) {
      if (!contains(j, i)) return false;
    }
  }
  return true;
}

std::vector<std::pair<Index, Index>> PatternMatrix::difference(const PatternMatrix& other) const {
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < dimension(); ++i) {
    for (Index j : rows_[static_cast<std::size_t>(i)]) {
      if (!other.contains(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

PatternMatrix binarize(const BlockSparseMatrix& a) {
  if (a.block_rows() != a.block_cols()) {
    throw DimensionError("binarize: block grid must be square, got " + a.shape_string());
  }
  PatternMatrix p(a.block_rows());
  for (Index i = 0; i < a.block_rows(); ++i) {
    std::vector<Index> cols;
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      const Index j = a.block_col(pos);
      const Index count = a.row_block_size(i) * a.col_block_size(j);
      const double* d = a.block_data(pos);
      if (std::any_of(d, d + count, [](double v) { return v != 0.0; })) cols.push_back(j);
    }
    p.set_row(i, std::move(cols));
  }
  return p;
}

PatternMatrix pattern_transpose(const PatternMatrix& p) {
  const Index n = p.dimension();
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j : p.row(i)) rows[static_cast<std::size_t>(j)].push_back(i);
  }
  PatternMatrix t(n);
  for (Index j = 0; j < n; ++j) t.set_row(j, std::move(rows[static_cast<std::size_t>(j)]));
  return t;
}

PatternMatrix pattern_union(const PatternMatrix& a, const PatternMatrix& b) {
  require_same_dimension(a, b, "pattern_union");
  PatternMatrix out(a.dimension());
  for (Index i = 0; i < a.dimension(); ++i) {
    std::vector<Index> merged;
    std::set_union(a.row(i).begin(), a.row(i).end(), b.row(i).begin(), b.row(i).end(),
                   std::back_inserter(merged));
    out.set_row(i, std::move(merged));
  }
  return out;
}

PatternMatrix pattern_product(const PatternMatrix& a, const PatternMatrix& b) {
  require_same_dimension(a, b, "pattern_product");
  const Index n = a.dimension();
  PatternMatrix out(n);
  std::vector<Index> marker(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> cols;
    for (Index k : a.row(i)) {
      for (Index j : b.row(k)) {
        if (marker[static_cast<std::size_t>(j)] != i) {
          marker[static_cast<std::size_t>(j)] = i;
          cols.push_back(j);
        }
      }
    }
    std::sort(cols.begin(), cols.end());
    out.set_row(i, std::move(cols));
  }
  return out;
}

PatternMatrix pattern_power_sum(const PatternMatrix& p, int s) {
  if (s < 0) throw ValidationError("pattern_power_sum: s must be nonnegative");
  const Index n = p.dimension();
  PatternMatrix out(n);
  std::vector<Index> marker(static_cast<std::size_t>(n), -1);
  std::vector<Index> frontier, next;
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> reached{i};
    marker[static_cast<std::size_t>(i)] = i;
    frontier.assign(1, i);
    for (int depth = 0; depth < s && !frontier.empty(); ++depth) {
      next.clear();
      for (Index k : frontier) {
        for (Index j : p.row(k)) {
          if (marker[static_cast<std::size_t>(j)] != i) {
            marker[static_cast<std::size_t>(j)] = i;
            next.push_back(j);
            reached.push_back(j);
          }
        }
      }
      frontier.swap(next);
    }
    std::sort(reached.begin(), reached.end());
    out.set_row(i, std::move(reached));
  }
  return out;
}

PatternMatrix pattern_power(const PatternMatrix& p, int s) {
  if (s < 0) throw ValidationError("pattern_power: s must be nonnegative");
  PatternMatrix out = PatternMatrix::identity(p.dimension());
  for (int k = 0; k < s; ++k) out = pattern_product(out, p);
  return out;
}

}  // namespace netspai
