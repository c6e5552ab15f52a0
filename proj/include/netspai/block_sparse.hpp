#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace netspai {

using Index = Eigen::Index;
using DenseBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstBlockMap = Eigen::Map<const DenseBlock>;

/// Blocks whose Frobenius norm falls below this value are structural zeros.
inline constexpr double kStructuralZero = 1e-300;

/// One (block-row, block-col, values) triple used to assemble a matrix.
struct BlockEntry {
  Index row;
  Index col;
  Eigen::MatrixXd values;
};

/// Block-compressed-sparse-row matrix with per-dimension block sizes.
///
/// Blocks are stored row-major, ordered by (block-row, block-col). Every
/// stored block has at least one entry different from zero and a Frobenius
/// norm of at least kStructuralZero; anything smaller is pruned when the
/// matrix is built. Instances are immutable once constructed.
class BlockSparseMatrix {
 public:
  class Builder;

  BlockSparseMatrix() = default;
  /// Zero matrix with the given block partition.
  BlockSparseMatrix(std::vector<Index> row_block_sizes, std::vector<Index> col_block_sizes);

  static BlockSparseMatrix identity(const std::vector<Index>& block_sizes);
  /// Sums duplicate entries, then prunes zero blocks.
  static BlockSparseMatrix from_blocks(std::vector<Index> row_block_sizes,
                                       std::vector<Index> col_block_sizes,
                                       std::vector<BlockEntry> entries);
  static BlockSparseMatrix from_dense(const Eigen::MatrixXd& dense,
                                      std::vector<Index> row_block_sizes,
                                      std::vector<Index> col_block_sizes);

  Index block_rows() const { return static_cast<Index>(row_sizes_.size()); }
  Index block_cols() const { return static_cast<Index>(col_sizes_.size()); }
  Index rows() const { return row_offsets_.empty() ? 0 : row_offsets_.back(); }
  Index cols() const { return col_offsets_.empty() ? 0 : col_offsets_.back(); }

  const std::vector<Index>& row_block_sizes() const { return row_sizes_; }
  const std::vector<Index>& col_block_sizes() const { return col_sizes_; }
  Index row_block_size(Index i) const { return row_sizes_[static_cast<std::size_t>(i)]; }
  Index col_block_size(Index j) const { return col_sizes_[static_cast<std::size_t>(j)]; }
  Index row_offset(Index i) const { return row_offsets_[static_cast<std::size_t>(i)]; }
  Index col_offset(Index j) const { return col_offsets_[static_cast<std::size_t>(j)]; }

  std::size_t nnz_blocks() const { return col_idx_.size(); }
  std::size_t nnz() const { return values_.size(); }

  // Positions in [row_begin(i), row_end(i)) address the blocks of row i.
  std::size_t row_begin(Index i) const { return row_ptr_[static_cast<std::size_t>(i)]; }
  std::size_t row_end(Index i) const { return row_ptr_[static_cast<std::size_t>(i) + 1]; }
  Index block_col(std::size_t pos) const { return col_idx_[pos]; }
  const double* block_data(std::size_t pos) const { return values_.data() + val_ptr_[pos]; }
  ConstBlockMap block(std::size_t pos, Index row) const {
    return ConstBlockMap(block_data(pos), row_block_size(row), col_block_size(col_idx_[pos]));
  }
  std::span<const Index> row_cols(Index i) const {
    return {col_idx_.data() + row_begin(i), row_end(i) - row_begin(i)};
  }

  /// Position of block (i, j) if stored.
  std::optional<std::size_t> find(Index i, Index j) const;

  bool same_partition(const BlockSparseMatrix& other) const {
    return row_sizes_ == other.row_sizes_ && col_sizes_ == other.col_sizes_;
  }
  std::string shape_string() const;

  Eigen::MatrixXd to_dense() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd multiply_transpose(const Eigen::VectorXd& x) const;
  double frobenius_norm() const;

 private:
  std::vector<Index> row_sizes_, col_sizes_;
  std::vector<Index> row_offsets_, col_offsets_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<std::size_t> val_ptr_{0};
  std::vector<double> values_;
};

/// Appends blocks row by row, columns strictly increasing within a row.
class BlockSparseMatrix::Builder {
 public:
  Builder(std::vector<Index> row_block_sizes, std::vector<Index> col_block_sizes);

  /// Appends block (current row, col); `data` is row-major and sized to
  /// the block's shape. Returns false when the block was pruned.
  bool push(Index col, const double* data);
  /// Closes the current block row.
  void next_row();
  BlockSparseMatrix finish() &&;

  Index current_row() const { return static_cast<Index>(m_.row_ptr_.size()) - 1; }

 private:
  friend class BlockSparseMatrix;
  BlockSparseMatrix m_;
};

}  // namespace netspai
