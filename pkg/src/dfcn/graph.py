"""Graph construction and normalization.

Adjacency matrices are binary, symmetric, zero-diagonal CSR structures.
Normalization follows the self-loop renormalization
D^{-1/2} (A + I) D^{-1/2} with degrees taken from (A + I); the literal
raw-degree variant is available via ``degrees="raw"`` but rejects
isolated nodes (their degree would be zero).
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ParameterError, ShapeError, ValidationError


@dataclass
class SparseAdjacency:
    """Compressed-row sparse matrix (int64 indices, float64 values)."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple
    _transpose_cache: "SparseAdjacency | None" = field(
        default=None, repr=False, compare=False
    )

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets; duplicates are an error, entries get sorted."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        n, m = shape
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValidationError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= m):
            raise ValidationError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                raise ValidationError("duplicate (row, col) entry")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr, cols, vals, (n, m))

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    @classmethod
    def from_undirected_edges(cls, n, edges):
        """Symmetric binary adjacency from undirected (u, v) pairs.

        Each pair is inserted in both orientations; repeats collapse to a
        single edge and self-loops are rejected.
        """
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValidationError(f"self-loop on node {u} is not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u}, {v}) references a missing node")
            pairs.add((min(u, v), max(u, v)))
        rows, cols = [], []
        for u, v in pairs:
            rows += [u, v]
            cols += [v, u]
        return cls.from_coo(rows, cols, np.ones(len(rows)), (n, n))

    def to_dense(self):
        n, m = self.shape
        out = np.zeros((n, m))
        for i in range(n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def to_coo(self):
        n, _ = self.shape
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        return rows, self.indices.copy(), self.data.copy()

    def transpose(self):
        if self._transpose_cache is None:
            rows, cols, vals = self.to_coo()
            self._transpose_cache = SparseAdjacency.from_coo(
                cols, rows, vals, (self.shape[1], self.shape[0])
            )
        return self._transpose_cache

    def diagonal(self):
        n = min(self.shape)
        out = np.zeros(n)
        for i in range(n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            hit = np.searchsorted(self.indices[lo:hi], i)
            if hit < hi - lo and self.indices[lo + hit] == i:
                out[i] = self.data[lo + hit]
        return out

    def validate(self):
        if self.indptr.shape[0] != self.shape[0] + 1:
            raise ValidationError("indptr length does not match row count")
        if not np.isfinite(self.data).all():
            raise ValidationError("sparse values contain non-finite entries")
        for i in range(self.shape[0]):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            row = self.indices[lo:hi]
            if row.size > 1 and not (np.diff(row) > 0).all():
                raise ValidationError(f"column indices not strictly increasing in row {i}")
        return self

    def is_symmetric(self):
        if self.shape[0] != self.shape[1]:
            return False
        t = self.transpose()
        return (
            np.array_equal(self.indptr, t.indptr)
            and np.array_equal(self.indices, t.indices)
            and np.array_equal(self.data, t.data)
        )


@dataclass
class GraphData:
    """Attributed graph: features, raw and normalized adjacency, labels."""

    x: np.ndarray
    adj: SparseAdjacency
    adj_norm: SparseAdjacency
    labels: np.ndarray | None
    k: int

    def __post_init__(self):
        n = self.x.shape[0]
        if self.adj.shape != (n, n):
            raise ValidationError(
                f"adjacency is {self.adj.shape} but there are {n} attribute rows"
            )
        if self.k < 2:
            raise ValidationError("cluster count must be at least 2")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValidationError("labels length does not match node count")
            if self.labels.min() < 0 or self.labels.max() >= self.k:
                raise ValidationError(f"labels must lie in [0, {self.k})")

    @property
    def n(self):
        return self.x.shape[0]


def normalize_adjacency(adj, degrees="with_self_loops"):
    """Self-loop renormalization of a binary symmetric adjacency.

    Returns D^{-1/2} (A + I) D^{-1/2} where D holds the degrees of
    (A + I) by default (``degrees="with_self_loops"``), or of the raw A
    (``degrees="raw"``), in which case isolated nodes are rejected.
    """
    if adj.shape[0] != adj.shape[1]:
        raise ValidationError(f"adjacency must be square, got {adj.shape}")
    if not adj.is_symmetric():
        raise ValidationError("adjacency must be symmetric")
    if np.any(adj.diagonal() != 0.0):
        raise ValidationError("adjacency diagonal must be zero")
    n = adj.shape[0]
    rows, cols, vals = adj.to_coo()
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([vals, np.ones(n)])

    if degrees == "with_self_loops":
        deg = np.zeros(n)
        np.add.at(deg, rows, vals)
    elif degrees == "raw":
        deg = np.zeros(n)
        raw_rows, _, raw_vals = adj.to_coo()
        np.add.at(deg, raw_rows, raw_vals)
        if np.any(deg == 0.0):
            raise ValidationError(
                "raw-degree normalization is undefined for isolated nodes"
            )
    else:
        raise ParameterError(f"unknown degrees mode {degrees!r}")

    inv_sqrt = 1.0 / np.sqrt(deg)
    scaled = vals * inv_sqrt[rows] * inv_sqrt[cols]
    return SparseAdjacency.from_coo(rows, cols, scaled, (n, n))


def knn_heat_graph(x, k, bandwidth="auto"):
    """Heat-kernel k-nearest-neighbour graph for non-graph data.

    Similarity is exp(-|x_i - x_j|^2 / t); with ``bandwidth="auto"`` the
    scale t is the mean squared distance over all ordered pairs i != j.
    Each node keeps its k most similar neighbours (ties broken towards
    the smaller index) and the result is OR-symmetrized, binary with a
    zero diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < n, got k={k} with n={n}")
    d2 = backend.pairwise_sqdist(x, x)
    if bandwidth == "auto":
        t = float(d2.sum()) / (n * (n - 1))
        if t == 0.0:
            t = 1.0  # all points identical; any positive scale works
    else:
        t = float(bandwidth)
        if t <= 0.0:
            raise ParameterError(f"bandwidth must be positive, got {t}")

    sims = np.exp(-d2 / t)
    np.fill_diagonal(sims, -1.0)  # below any similarity, excludes self
    pairs = set()
    for i in range(n):
        # stable sort on the negated row: ties fall back to index order
        order = np.argsort(-sims[i], kind="stable")[:k]
        for j in order:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return SparseAdjacency.from_undirected_edges(n, pairs)


def spmm(adj, dense):
    """Exact sparse-times-dense product; matches densified matmul."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or adj.shape[1] != dense.shape[0]:
        raise ShapeError(
            f"spmm: adjacency is {adj.shape[0]}x{adj.shape[1]} but dense operand "
            f"has shape {dense.shape}"
        )
    return backend.csr_matmat(adj.indptr, adj.indices, adj.data, dense)


def sbm_synthesize(k, sizes, p_in, p_out, attr_dim, attr_sep, seed):
    """Stochastic block model with Gaussian attributes.

    Cluster centers sit on scaled coordinate axes so that every pair of
    centers is exactly ``attr_sep`` apart (requires attr_dim >= k);
    per-node noise is an isotropic unit Gaussian. Deterministic for a
    given seed.
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ParameterError(
            f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )
    sizes = [int(s) for s in sizes]
    if len(sizes) != k:
        raise ParameterError(f"expected {k} block sizes, got {len(sizes)}")
    if any(s < 1 for s in sizes):
        raise ParameterError("every block needs at least one node")
    if attr_dim < k:
        raise ParameterError(
            f"attr_dim must be >= k for equispaced centers, got {attr_dim} < {k}"
        )
    n = sum(sizes)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k, dtype=np.int64), sizes)

    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    dense = upper | upper.T
    adj = SparseAdjacency.from_dense(dense.astype(np.float64))

    centers = np.zeros((k, attr_dim))
    centers[np.arange(k), np.arange(k)] = attr_sep / np.sqrt(2.0)
    x = centers[labels] + rng.standard_normal((n, attr_dim))

    return GraphData(
        x=x,
        adj=adj,
        adj_norm=normalize_adjacency(adj),
        labels=labels,
        k=k,
    )
