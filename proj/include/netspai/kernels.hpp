#pragma once

#include "netspai/block_sparse.hpp"
#include "netspai/pattern.hpp"

namespace netspai {

/// Exact block-sparse product A * B. Rows are processed independently;
/// `threads` > 1 splits them into contiguous chunks (results are identical
/// for every thread count).
BlockSparseMatrix spgemm(const BlockSparseMatrix& a, const BlockSparseMatrix& b, int threads = 1);

/// Product A * B restricted to the blocks allowed by `mask`; equal to
/// mask_to_pattern(spgemm(a, b), mask) without materializing the rest.
BlockSparseMatrix spgemm_masked(const BlockSparseMatrix& a, const BlockSparseMatrix& b,
                                const PatternMatrix& mask, int threads = 1);

/// alpha * A + beta * B with union sparsity.
BlockSparseMatrix sp_add(const BlockSparseMatrix& a, const BlockSparseMatrix& b, double alpha,
                         double beta);

BlockSparseMatrix transpose(const BlockSparseMatrix& a);
BlockSparseMatrix scale(const BlockSparseMatrix& a, double alpha);
/// A + shift * I; requires identical row and column partitions.
BlockSparseMatrix add_identity(const BlockSparseMatrix& a, double shift);
/// (A + A^T) / 2.
BlockSparseMatrix symmetrize(const BlockSparseMatrix& a);

/// Symmetric matrix built from the block upper triangle of A (blocks with
/// j >= i; lower blocks are ignored). Diagonal blocks are averaged with
/// their transposes.
BlockSparseMatrix symmetric_from_upper(const BlockSparseMatrix& a);

/// Pattern entries with j >= i.
PatternMatrix upper_triangle(const PatternMatrix& p);

/// Keeps blocks (i, j) with (i, j) in P and removes all others.
BlockSparseMatrix mask_to_pattern(const BlockSparseMatrix& z, const PatternMatrix& p);

/// Zeroes every scalar entry with |z| <= phi and removes emptied blocks.
BlockSparseMatrix drop_small(const BlockSparseMatrix& z, double phi);

/// Largest absolute asymmetry |a_ij - a_ji| over all stored entries.
double max_asymmetry(const BlockSparseMatrix& a);

}  // namespace netspai
