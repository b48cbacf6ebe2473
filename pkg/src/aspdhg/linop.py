"""Matrix-free linear operators: adjoints, norm estimation, block partitioning.

Operators expose ``apply``/``adjoint`` plus a cached spectral-norm estimate.
Concrete maps wrap dense or sparse matrices; composite maps stack blocks
vertically.  Row-indexable maps additionally support ``row_select`` and
``apply_rows``, which the interleaved partitioner and the subsampled residual
estimator rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .validation import check_positive_int, check_vector

__all__ = [
    "LinearMap",
    "MatrixMap",
    "IdentityMap",
    "StackedMap",
    "BlockPartition",
    "estimate_norm",
    "partition_interleaved",
    "forward_diff_1d",
    "grad_2d",
    "GRAD_2D_NORM_CAP",
    "from_csv",
]

# Analytic bound on the 2-D forward-difference operator norm.
GRAD_2D_NORM_CAP = float(np.sqrt(8.0))


class LinearMap:
    """A bounded linear operator given by forward and adjoint actions.

    Parameters
    ----------
    domain_dim : int
        Dimension of the input space.
    range_dim : int
        Dimension of the output space.

    Subclasses implement ``_apply`` and ``_adjoint``.  Operators are immutable
    after construction; the norm cache is written once on first estimate.
    """

    def __init__(self, domain_dim: int, range_dim: int):
        self.domain_dim = check_positive_int("domain_dim", domain_dim)
        self.range_dim = check_positive_int("range_dim", range_dim)
        self.norm_cache: float | None = None

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x) -> np.ndarray:
        """Forward image A x."""
        x = check_vector("x", x, self.domain_dim)
        return self._apply(x)

    def adjoint(self, y) -> np.ndarray:
        """Adjoint image A* y."""
        y = check_vector("y", y, self.range_dim)
        return self._adjoint(y)

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def norm(self, tol: float = 1e-6, max_iters: int = 1000, seed: int = 0) -> float:
        """Spectral norm estimate, cached after the first call."""
        if self.norm_cache is None:
            estimate_norm(self, tol=tol, max_iters=max_iters, seed=seed)
        return self.norm_cache

    # Row-indexed capability; concrete classes override where meaningful.
    def row_select(self, rows) -> "LinearMap":
        raise TypeError(f"{type(self).__name__} does not support row selection")

    def apply_rows(self, x, rows) -> np.ndarray:
        """(A x) restricted to the given rows; cheaper than a full apply."""
        raise TypeError(f"{type(self).__name__} does not support row selection")


class MatrixMap(LinearMap):
    """LinearMap backed by an explicit dense or CSR matrix."""

    def __init__(self, mat):
        if sp.issparse(mat):
            mat = mat.tocsr()
            mat.sum_duplicates()
            self._dense = False
            # Precomputed transpose keeps the adjoint a plain CSR matvec.
            self._mat_t = mat.T.tocsr()
        else:
            mat = np.asarray(mat, dtype=float)
            if mat.ndim != 2:
                raise ValueError(f"matrix must be 2-D, got shape {mat.shape}")
            self._dense = True
            self._mat_t = mat.T
        self.mat = mat
        super().__init__(domain_dim=mat.shape[1], range_dim=mat.shape[0])

    def _apply(self, x):
        return np.asarray(self.mat @ x).ravel()

    def _adjoint(self, y):
        return np.asarray(self._mat_t @ y).ravel()

    def row_select(self, rows):
        rows = np.asarray(rows, dtype=int)
        return MatrixMap(self.mat[rows])

    def apply_rows(self, x, rows):
        rows = np.asarray(rows, dtype=int)
        x = check_vector("x", x, self.domain_dim)
        return np.asarray(self.mat[rows] @ x).ravel()

    def to_dense(self) -> np.ndarray:
        return self.mat.toarray() if not self._dense else np.array(self.mat)


class IdentityMap(LinearMap):
    """The identity on a space of the given dimension."""

    def __init__(self, dim: int):
        super().__init__(dim, dim)
        self.norm_cache = 1.0

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()

    def row_select(self, rows):
        rows = np.asarray(rows, dtype=int)
        eye = sp.eye(self.domain_dim, format="csr")
        return MatrixMap(eye[rows])

    def apply_rows(self, x, rows):
        rows = np.asarray(rows, dtype=int)
        x = check_vector("x", x, self.domain_dim)
        return x[rows].copy()


class StackedMap(LinearMap):
    """Vertical stack of maps sharing one domain; adjoint sums block adjoints."""

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("StackedMap needs at least one block")
        domain = blocks[0].domain_dim
        for blk in blocks:
            if blk.domain_dim != domain:
                raise ValueError("all stacked blocks must share the domain dimension")
        self.blocks = blocks
        self.offsets = np.cumsum([0] + [blk.range_dim for blk in blocks])
        super().__init__(domain, int(self.offsets[-1]))

    def _apply(self, x):
        return np.concatenate([blk.apply(x) for blk in self.blocks])

    def _adjoint(self, y):
        out = np.zeros(self.domain_dim)
        for blk, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out += blk.adjoint(y[lo:hi])
        return out

    def split(self, y) -> list[np.ndarray]:
        """Slice a stacked range vector into per-block pieces."""
        y = check_vector("y", y, self.range_dim)
        return [y[lo:hi] for lo, hi in zip(self.offsets[:-1], self.offsets[1:])]


@dataclass
class BlockPartition:
    """Row partition of an operator/data pair into dual blocks.

    ``row_index_sets[i]`` lists the parent rows owned by block i; the sets are
    disjoint and cover every parent row.
    """

    blocks: list[LinearMap]
    data_blocks: list[np.ndarray]
    row_index_sets: list[np.ndarray]

    def __post_init__(self):
        seen = np.concatenate(self.row_index_sets)
        n_rows = sum(len(ix) for ix in self.row_index_sets)
        if len(np.unique(seen)) != n_rows:
            raise ValueError("row index sets overlap")
        for blk, ix in zip(self.blocks, self.row_index_sets):
            if blk.range_dim != len(ix):
                raise ValueError("block range dim does not match its row index set")


def estimate_norm(op: LinearMap, tol: float = 1e-6, max_iters: int = 1000,
                  seed: int = 0) -> float:
    """Estimate the spectral norm of ``op`` by power iteration on A*A.

    Parameters
    ----------
    op : LinearMap
    tol : float
        Relative-change stopping tolerance on successive estimates.
    max_iters : int
        Iteration cap.
    seed : int
        Seed for the random start vector (deterministic estimates).

    Returns
    -------
    float
        The estimate; also written to ``op.norm_cache``.  A (numerically)
        zero operator yields 0.0 — documented, not an error.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    max_iters = check_positive_int("max_iters", max_iters)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_dim)
    nx = float(np.linalg.norm(x))
    if nx == 0.0:  # domain_dim >= 1 makes this unreachable in practice
        op.norm_cache = 0.0
        return 0.0
    x /= nx
    est = 0.0
    for _ in range(max_iters):
        z = op.adjoint(op.apply(x))
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            est = 0.0
            break
        prev, est = est, float(np.sqrt(nz))  # ||A*Ax|| -> sigma_max^2 for unit x
        x = z / nz
        if abs(est - prev) <= tol * est:
            break
    op.norm_cache = est
    return est


def partition_interleaved(op: LinearMap, b, n: int) -> BlockPartition:
    """Partition rows of ``op`` (and data ``b``) into n interleaved blocks.

    Row i of the parent goes to block (i mod n), preserving order within each
    block, so block j owns rows j, j+n, j+2n, ...  Requires a row-indexable
    operator.
    """
    n = check_positive_int("n", n)
    b = check_vector("b", b, op.range_dim)
    if n > op.range_dim:
        raise ValueError(f"cannot split {op.range_dim} rows into {n} blocks")
    index_sets = [np.arange(j, op.range_dim, n) for j in range(n)]
    blocks = [op.row_select(ix) for ix in index_sets]
    data = [b[ix].copy() for ix in index_sets]
    return BlockPartition(blocks=blocks, data_blocks=data, row_index_sets=index_sets)


def forward_diff_1d(n: int) -> sp.csr_matrix:
    """1-D forward difference with replicate boundary: (Dx)_j = x_{j+1} - x_j,
    and the last row is zero."""
    n = check_positive_int("n", n)
    j = np.arange(n - 1)
    rows = np.concatenate([j, j])
    cols = np.concatenate([j, j + 1])
    vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def grad_2d(side: int) -> MatrixMap:
    """Discrete gradient of a side x side image (row-major), horizontal then
    vertical forward differences stacked into a 2*side^2 row operator."""
    side = check_positive_int("side", side)
    d1 = forward_diff_1d(side)
    eye = sp.eye(side, format="csr")
    dh = sp.kron(eye, d1, format="csr")  # differences along rows (second axis)
    dv = sp.kron(d1, eye, format="csr")  # differences down columns (first axis)
    return MatrixMap(sp.vstack([dh, dv], format="csr"))


def from_csv(path) -> MatrixMap:
    """Load a dense operator from a plain-text CSV matrix (row per line)."""
    mat = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return MatrixMap(mat)
