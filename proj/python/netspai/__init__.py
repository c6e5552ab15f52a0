"""Sparse approximate inverses for distributed estimation and control."""

from ._core import *  # noqa: F401,F403
from ._core import BlockSparseMatrix

__version__ = "0.1.0"


def to_scipy(matrix: BlockSparseMatrix):
    """Stored entries of `matrix` as a scipy.sparse CSR matrix."""
    from scipy.sparse import coo_matrix

    rows, cols, vals = matrix.to_coo()
    return coo_matrix((vals, (rows, cols)), shape=matrix.shape).tocsr()
