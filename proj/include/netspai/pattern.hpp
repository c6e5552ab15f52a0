#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "netspai/block_sparse.hpp"

namespace netspai {

/// Boolean N x N sparsity pattern stored as sorted, duplicate-free rows.
class PatternMatrix {
 public:
  PatternMatrix() = default;
  explicit PatternMatrix(Index dimension);
  PatternMatrix(Index dimension, std::vector<std::pair<Index, Index>> entries);

  static PatternMatrix identity(Index dimension);
  static PatternMatrix full(Index dimension);

  Index dimension() const { return static_cast<Index>(rows_.size()); }
  std::size_t nnz() const;
  std::span<const Index> row(Index i) const { return rows_[static_cast<std::size_t>(i)]; }
  bool contains(Index i, Index j) const;
  std::vector<std::pair<Index, Index>> entries() const;

  /// Row-wise construction; `cols` must be sorted and unique.
  void set_row(Index i, std::vector<Index> cols);

  bool is_subset_of(const PatternMatrix& other) const;
  bool is_symmetric() const;
  /// Entries of this pattern that are missing from `other`.
  std::vector<std::pair<Index, Index>> difference(const PatternMatrix& other) const;

  friend bool operator==(const PatternMatrix&, const PatternMatrix&) = default;

 private:
  std::vector<std::vector<Index>> rows_;
};

/// Block (i, j) is present iff the stored block has an entry with |value| > 0.
/// Requires a square block grid.
PatternMatrix binarize(const BlockSparseMatrix& a);

PatternMatrix pattern_transpose(const PatternMatrix& p);
PatternMatrix pattern_union(const PatternMatrix& a, const PatternMatrix& b);
/// Support of the boolean product a * b.
PatternMatrix pattern_product(const PatternMatrix& a, const PatternMatrix& b);
/// Support of I + P + P^2 + ... + P^s, computed by breadth-first search of
/// depth s from every node. Scalar powers are never formed.
PatternMatrix pattern_power_sum(const PatternMatrix& p, int s);
/// Support of P^s (walks of length exactly s).
PatternMatrix pattern_power(const PatternMatrix& p, int s);

}  // namespace netspai
