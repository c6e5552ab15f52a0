#include "netspai/block_sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "netspai/errors.hpp"

namespace netspai {

namespace {

std::vector<Index> prefix_offsets(const std::vector<Index>& sizes, const char* what) {
  std::vector<Index> offsets(sizes.size() + 1, 0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] <= 0) {
      throw ValidationError(std::string(what) + " block sizes must be positive");
    }
    offsets[i + 1] = offsets[i] + sizes[i];
  }
  return offsets;
}

bool is_structural_zero(const double* data, Index count) {
  double amax = 0.0;
  for (Index k = 0; k < count; ++k) amax = std::max(amax, std::abs(data[k]));
  if (amax == 0.0) return true;
  if (amax >= kStructuralZero) return false;
  // Rescale before squaring; the squares of subnormal entries underflow.
  double sq = 0.0;
  for (Index k = 0; k < count; ++k) {
    const double t = data[k] / amax;
    sq += t * t;
  }
  return amax * std::sqrt(sq) < kStructuralZero;
}

}  // namespace

BlockSparseMatrix::BlockSparseMatrix(std::vector<Index> row_block_sizes,
                                     std::vector<Index> col_block_sizes)
    : row_sizes_(std::move(row_block_sizes)), col_sizes_(std::move(col_block_sizes)) {
  row_offsets_ = prefix_offsets(row_sizes_, "row");
  col_offsets_ = prefix_offsets(col_sizes_, "column");
  row_ptr_.assign(row_sizes_.size() + 1, 0);
}

BlockSparseMatrix::Builder::Builder(std::vector<Index> row_block_sizes,
                                    std::vector<Index> col_block_sizes)
    : m_(std::move(row_block_sizes), std::move(col_block_sizes)) {
  m_.row_ptr_.assign(1, 0);
}

bool BlockSparseMatrix::Builder::push(Index col, const double* data) {
  const Index row = current_row();
  if (row >= m_.block_rows()) throw DimensionError("Builder: push past the last block row");
  if (col < 0 || col >= m_.block_cols()) throw DimensionError("Builder: block column out of range");
  const std::size_t begin = m_.row_ptr_.back();
  if (m_.col_idx_.size() > begin && m_.col_idx_.back() >= col) {
    throw ValidationError("Builder: columns must be strictly increasing within a row");
  }
  const Index count = m_.row_block_size(row) * m_.col_block_size(col);
  if (is_structural_zero(data, count)) return false;
  m_.col_idx_.push_back(col);
  m_.values_.insert(m_.values_.end(), data, data + count);
  m_.val_ptr_.push_back(m_.values_.size());
  return true;
}

void BlockSparseMatrix::Builder::next_row() {
  if (current_row() >= m_.block_rows()) throw DimensionError("Builder: too many block rows");
  m_.row_ptr_.push_back(m_.col_idx_.size());
}

BlockSparseMatrix BlockSparseMatrix::Builder::finish() && {
  while (current_row() < m_.block_rows()) m_.row_ptr_.push_back(m_.col_idx_.size());
  return std::move(m_);
}

BlockSparseMatrix BlockSparseMatrix::identity(const std::vector<Index>& block_sizes) {
  Builder builder(block_sizes, block_sizes);
  for (std::size_t i = 0; i < block_sizes.size(); ++i) {
    const DenseBlock eye = DenseBlock::Identity(block_sizes[i], block_sizes[i]);
    builder.push(static_cast<Index>(i), eye.data());
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix BlockSparseMatrix::from_blocks(std::vector<Index> row_block_sizes,
                                                 std::vector<Index> col_block_sizes,
                                                 std::vector<BlockEntry> entries) {
  Builder builder(std::move(row_block_sizes), std::move(col_block_sizes));
  const BlockSparseMatrix& shape = builder.m_;
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= shape.block_rows() || e.col < 0 || e.col >= shape.block_cols()) {
      std::ostringstream os;
      os << "block (" << e.row << ", " << e.col << ") outside a " << shape.block_rows() << " x "
         << shape.block_cols() << " block grid";
      throw DimensionError(os.str());
    }
    if (e.values.rows() != shape.row_block_size(e.row) ||
        e.values.cols() != shape.col_block_size(e.col)) {
      std::ostringstream os;
      os << "block (" << e.row << ", " << e.col << ") has shape " << e.values.rows() << "x"
         << e.values.cols() << ", expected " << shape.row_block_size(e.row) << "x"
         << shape.col_block_size(e.col);
      throw DimensionError(os.str());
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const BlockEntry& l, const BlockEntry& r) {
    return l.row != r.row ? l.row < r.row : l.col < r.col;
  });
  std::size_t k = 0;
  for (Index i = 0; i < shape.block_rows(); ++i) {
    while (k < entries.size() && entries[k].row == i) {
      DenseBlock sum = entries[k].values;
      const Index col = entries[k].col;
      ++k;
      while (k < entries.size() && entries[k].row == i && entries[k].col == col) {
        sum += entries[k].values;
        ++k;
      }
      builder.push(col, sum.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

BlockSparseMatrix BlockSparseMatrix::from_dense(const Eigen::MatrixXd& dense,
                                                std::vector<Index> row_block_sizes,
                                                std::vector<Index> col_block_sizes) {
  Builder builder(std::move(row_block_sizes), std::move(col_block_sizes));
  const BlockSparseMatrix& shape = builder.m_;
  if (dense.rows() != shape.rows() || dense.cols() != shape.cols()) {
    std::ostringstream os;
    os << "dense matrix " << dense.rows() << "x" << dense.cols() << " does not match partition "
       << shape.shape_string();
    throw DimensionError(os.str());
  }
  DenseBlock tmp;
  for (Index i = 0; i < shape.block_rows(); ++i) {
    for (Index j = 0; j < shape.block_cols(); ++j) {
      tmp = dense.block(shape.row_offset(i), shape.col_offset(j), shape.row_block_size(i),
                        shape.col_block_size(j));
      builder.push(j, tmp.data());
    }
    builder.next_row();
  }
  return std::move(builder).finish();
}

std::optional<std::size_t> BlockSparseMatrix::find(Index i, Index j) const {
  if (i < 0 || i >= block_rows()) return std::nullopt;
  const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_begin(i));
  const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_end(i));
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return std::nullopt;
  return static_cast<std::size_t>(it - col_idx_.begin());
}

std::string BlockSparseMatrix::shape_string() const {
  std::ostringstream os;
  os << rows() << "x" << cols() << " (" << block_rows() << "x" << block_cols() << " blocks)";
  return os.str();
}

Eigen::MatrixXd BlockSparseMatrix::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows(), cols());
  for (Index i = 0; i < block_rows(); ++i) {
    for (std::size_t pos = row_begin(i); pos < row_end(i); ++pos) {
      const Index j = col_idx_[pos];
      out.block(row_offset(i), col_offset(j), row_block_size(i), col_block_size(j)) =
          block(pos, i);
    }
  }
  return out;
}

Eigen::VectorXd BlockSparseMatrix::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != cols()) {
    throw DimensionError("multiply: vector of length " + std::to_string(x.size()) +
                         " against " + shape_string());
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
  for (Index i = 0; i < block_rows(); ++i) {
    const Index ri = row_block_size(i);
    double* yi = y.data() + row_offset(i);
    for (std::size_t pos = row_begin(i); pos < row_end(i); ++pos) {
      const Index j = col_idx_[pos];
      const Index cj = col_block_size(j);
      const double* xj = x.data() + col_offset(j);
      const double* blk = block_data(pos);
      for (Index r = 0; r < ri; ++r) {
        double acc = 0.0;
        for (Index c = 0; c < cj; ++c) acc += blk[r * cj + c] * xj[c];
        yi[r] += acc;
      }
    }
  }
  return y;
}

Eigen::VectorXd BlockSparseMatrix::multiply_transpose(const Eigen::VectorXd& x) const {
  if (x.size() != rows()) {
    throw DimensionError("multiply_transpose: vector of length " + std::to_string(x.size()) +
                         " against " + shape_string());
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(cols());
  for (Index i = 0; i < block_rows(); ++i) {
    const Index ri = row_block_size(i);
    const double* xi = x.data() + row_offset(i);
    for (std::size_t pos = row_begin(i); pos < row_end(i); ++pos) {
      const Index j = col_idx_[pos];
      const Index cj = col_block_size(j);
      double* yj = y.data() + col_offset(j);
      const double* blk = block_data(pos);
      for (Index r = 0; r < ri; ++r) {
        for (Index c = 0; c < cj; ++c) yj[c] += blk[r * cj + c] * xi[r];
      }
    }
  }
  return y;
}

double BlockSparseMatrix::frobenius_norm() const {
  double amax = 0.0;
  for (double v : values_) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) return 0.0;
  double sq = 0.0;
  for (double v : values_) sq += (v / amax) * (v / amax);
  return amax * std::sqrt(sq);
}

}  // namespace netspai
