"""Truncated, normalised Gaussian RBF interpolation of grid features.

Queries are organised by a sampling lattice. Every lattice cell owns a
precomputed box of grid nodes per scale (the Chebyshev ring of width ``rho``
around the grid cells it overlaps, clipped to the grid), so looking up the
neighbourhood of a sample is an array index rather than a search.

Because the Gaussian of a Euclidean distance factorises over axes and the
neighbourhood is a box, the normalised weights are products of normalised
one-dimensional weights. ``interpolation_weights`` uses that identity by
default; ``separable=False`` evaluates the Euclidean form directly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .diffcore import Jet2, jet_concat, jet_exp, jet_mul, jet_seed, reshape, spmm, tri_indices
from .errors import ConfigError, InternalError
from .grid import FeatureGrid, MultiGrid

TAIL_WARN = 1e-3


@dataclass(frozen=True)
class RbfConfig:
    """Kernel shape ``eps`` (per grid cell) and neighbourhood ring ``rho``."""

    eps: float = 1.0
    rho: int = 3

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"rbf.eps must be positive, got {self.eps}")
        if int(self.rho) != self.rho or self.rho < 1:
            raise ConfigError(f"rbf.rho must be an integer >= 1, got {self.rho}")
        if self.tail_weight >= TAIL_WARN:
            warnings.warn(
                f"RBF truncation keeps a tail weight of {self.tail_weight:.2e} (eps={self.eps}, rho={self.rho}); "
                "interpolation will show seams at cell boundaries",
                stacklevel=3,
            )

    @property
    def tail_weight(self) -> float:
        return float(np.exp(-((self.eps * self.rho) ** 2)))


def rbf_weight(r2, eps: float):
    """Gaussian kernel of a squared distance measured in cells.

    ``exp(-eps^2 r^2)``; the squared distance goes in directly so there is no
    square-root singularity when the query sits on a node.
    """
    if isinstance(r2, Jet2):
        return jet_exp(r2 * (-(eps**2)))
    return np.exp(-(eps**2) * np.asarray(r2, dtype=np.float64))


# ---------------------------------------------------------------------------
# neighbourhood table and sample batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NeighborTable:
    """Per lattice cell and scale: the box of node indices to interpolate from.

    ``first[s][k][c]`` and ``count[s][k][c]`` give the index range along axis
    ``k`` for lattice cell ``c``; the node set is the product of the ranges.
    When the lattice refines every grid (``res`` a multiple of each ``N_s``)
    interior cells get exactly ``(2 rho)^d`` nodes.
    """

    res: tuple[int, ...]
    rho: int
    grid_n: tuple[int, ...]
    first: tuple
    count: tuple
    width: tuple

    @property
    def d(self) -> int:
        return len(self.res)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.res))

    def cells_of(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        res = np.asarray(self.res)
        c = np.floor((coords + 1.0) * 0.5 * res).astype(np.int64)
        return np.clip(c, 0, res - 1)

    def nodes(self, cell, scale: int) -> np.ndarray:
        """Multi-indices ``(K, d)`` of the valid nodes for one lattice cell."""
        cell = np.atleast_1d(np.asarray(cell))
        ranges = [
            np.arange(self.first[scale][k][cell[k]], self.first[scale][k][cell[k]] + self.count[scale][k][cell[k]])
            for k in range(self.d)
        ]
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _axis_ranges(r: int, n: int, rho: int):
    c = np.arange(r)
    lo_cell = np.clip((c * n) // r, 0, n - 1)
    hi_cell = np.clip(((c + 1) * n + r - 1) // r - 1, 0, n - 1)
    first = np.maximum(lo_cell - rho + 1, 0)
    last = np.minimum(hi_cell + rho, n)
    return first, last - first + 1


def build_neighbor_table(res, multigrid: MultiGrid, rho: int) -> NeighborTable:
    d = multigrid.d
    res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(res), (d,)))
    if any(r < 1 for r in res):
        raise ConfigError(f"sampling resolution must be >= 1 per axis, got {res}")
    first, count, width = [], [], []
    for g in multigrid.grids:
        fs, cs = zip(*(_axis_ranges(r, g.n, rho) for r in res))
        first.append(fs)
        count.append(cs)
        width.append(tuple(int(c.max()) for c in cs))
    return NeighborTable(res, rho, tuple(g.n for g in multigrid.grids), tuple(first), tuple(count), tuple(width))


@dataclass
class SampleBatch:
    """Query coordinates with their lattice cells and optional payload.

    ``total`` is the normaliser used for mean reductions; sub-batches made by
    :meth:`split` keep the parent's total so chunked losses add up exactly.
    """

    coords: np.ndarray
    cells: np.ndarray
    table: NeighborTable | None = None
    payload: dict = field(default_factory=dict)
    total: int | None = None
    cache: dict = field(default_factory=dict, repr=False)
    keep_ops: bool = True  # memoise interpolation operators (off for very large fixed batches)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def norm(self) -> int:
        return len(self) if self.total is None else self.total

    def with_table(self, table: NeighborTable) -> "SampleBatch":
        if table.d != self.d:
            raise InternalError("table dimension mismatch")
        return SampleBatch(self.coords, self.cells, table, self.payload, self.total)

    def subset(self, idx) -> "SampleBatch":
        payload = {k: np.asarray(v)[idx] for k, v in self.payload.items()}
        return SampleBatch(self.coords[idx], self.cells[idx], self.table, payload, self.norm, keep_ops=self.keep_ops)

    def split(self, n: int) -> list["SampleBatch"]:
        if n <= 1:
            return [self]
        return [self.subset(ix) for ix in np.array_split(np.arange(len(self)), n) if len(ix)]

    def check_cells(self) -> bool:
        return bool(np.all(self.table.cells_of(self.coords) == self.cells))


def _lattice_indices(res):
    mesh = np.meshgrid(*[np.arange(r) for r in res], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def stratified_sample(res, rng: np.random.Generator, table: NeighborTable | None = None, d: int | None = None) -> SampleBatch:
    """One uniform sample inside every lattice cell (row-major cell order)."""
    if table is not None:
        res = table.res
    res = tuple(int(r) for r in np.atleast_1d(res))
    if d is not None and len(res) == 1:
        res = res * d
    if any(r < 1 for r in res):
        raise ConfigError(f"sampling resolution must be >= 1 per axis, got {res}")
    cells = _lattice_indices(res)
    u = rng.random(cells.shape)
    coords = -1.0 + 2.0 * (cells + u) / np.asarray(res)
    return SampleBatch(coords, cells, table)


def regular_grid(res, table: NeighborTable | None = None, d: int | None = None) -> SampleBatch:
    """Cell-centre points of a lattice (pixel centres for images)."""
    if table is not None:
        res = table.res
    res = tuple(int(r) for r in np.atleast_1d(res))
    if d is not None and len(res) == 1:
        res = res * d
    cells = _lattice_indices(res)
    coords = -1.0 + 2.0 * (cells + 0.5) / np.asarray(res)
    return SampleBatch(coords, cells, table)


def query_batch(coords, table: NeighborTable, payload=None) -> SampleBatch:
    """Arbitrary points; cells are looked up from the table's lattice."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    return SampleBatch(coords, table.cells_of(coords), table, dict(payload or {}))


# ---------------------------------------------------------------------------
# interpolation weights
# ---------------------------------------------------------------------------


@dataclass
class ScaleWeights:
    """Node indices ``(B, K)`` and weight jets with sample shape ``(B, K)``."""

    index: np.ndarray
    weights: Jet2


def _axis_nodes(table: NeighborTable, scale: int, k: int, cells_k: np.ndarray, n: int):
    w = table.width[scale][k]
    first = table.first[scale][k][cells_k]
    count = table.count[scale][k][cells_k]
    offs = np.arange(w)
    mask = offs[None, :] < count[:, None]
    idx = np.minimum(first[:, None] + offs[None, :], n)
    return idx, mask


def interpolation_weights(
    grid: FeatureGrid, batch: SampleBatch, cfg: RbfConfig, separable: bool = True
) -> ScaleWeights:
    """Normalised RBF weight jets of every sample w.r.t. its node box."""
    table = batch.table
    if table is None:
        raise InternalError("batch has no neighbour table")
    s, n, d = grid.scale, grid.n, grid.d
    inv_h = n / 2.0
    axis_idx, axis_mask = [], []
    for k in range(d):
        idx, mask = _axis_nodes(table, s, k, batch.cells[:, k], n)
        axis_idx.append(idx)
        axis_mask.append(mask)
    B = len(batch)
    strides = grid.strides
    index = _box([axis_idx[k] * strides[k] for k in range(d)], d, np.add).reshape(B, -1)
    if separable:
        w = _separable_weights(batch.coords, axis_idx, axis_mask, n, cfg.eps)
    else:
        seeds = jet_seed(batch.coords, d)
        r2 = None
        for k in range(d):
            node = (2.0 * axis_idx[k] - n) / n
            diff = (seeds[k].map(lambda a: a[..., None]) - node) * inv_h
            sq = (diff * diff).map(lambda a, k=k: _expand_axis(a, k, d))
            r2 = sq if r2 is None else r2 + sq
        mask = _box(axis_mask, d, np.logical_and)
        phi = rbf_weight(r2, cfg.eps) * mask.astype(np.float64)
        flat = phi.map(lambda a: a.reshape(a.shape[: a.ndim - d] + (-1,)))
        w = flat / flat.sum(-1, keepdims=True)
    return ScaleWeights(index, w)


def _axis_weights(x, idx, mask, n, eps):
    """Normalised 1D weights of one axis with first/second x-derivatives."""
    inv_h = n / 2.0
    r = (x[:, None] - (2.0 * idx - n) / n) * inv_h
    e2 = eps * eps
    phi = np.exp(-e2 * r * r) * mask
    d1 = phi * (-2.0 * e2 * r) * inv_h
    d2 = phi * (4.0 * e2 * e2 * r * r - 2.0 * e2) * inv_h**2
    S, S1, S2 = phi.sum(-1, keepdims=True), d1.sum(-1, keepdims=True), d2.sum(-1, keepdims=True)
    w = phi / S
    w1 = (d1 - w * S1) / S
    w2 = (d2 - 2.0 * w1 * S1 - w * S2) / S
    return w, w1, w2


def _separable_weights(coords, axis_idx, axis_mask, n, eps) -> Jet2:
    """Box weights as outer products of per-axis weights and derivatives."""
    d = coords.shape[1]
    B = coords.shape[0]
    per = [_axis_weights(coords[:, k], axis_idx[k], axis_mask[k], n, eps) for k in range(d)]

    def outer(orders):
        out = None
        for k in range(d):
            e = _expand_axis(per[k][orders[k]], k, d)
            out = e if out is None else out * e
        return out.reshape(B, -1)

    value = outer((0,) * d)
    grad = np.stack([outer(tuple(int(k == a) for k in range(d))) for a in range(d)])
    iu, ju = tri_indices(d)
    hess = np.stack([outer(tuple(int(k == a) + int(k == b) for k in range(d))) for a, b in zip(iu.tolist(), ju.tolist())])
    return Jet2(value, grad, hess)


def _expand_axis(a, k: int, d: int):
    """(…, B, W) -> (…, B, 1, …, W, …, 1) with W at box position k."""
    shape = a.shape[:-1] + (1,) * k + (a.shape[-1],) + (1,) * (d - 1 - k)
    return a.reshape(shape)


def _box(parts, d, op):
    out = None
    for k, p in enumerate(parts):
        e = _expand_axis(p, k, d)
        out = e if out is None else op(out, e)
    return out


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------


@dataclass
class ScaleOperator:
    """Sparse maps from grid features to value / gradient / Hessian rows."""

    value: sp.csr_matrix
    grad: sp.csr_matrix
    hess: sp.csr_matrix


def _csr(data: np.ndarray, index: np.ndarray, n_cols: int) -> sp.csr_matrix:
    rows, k = index.shape
    indptr = np.arange(0, rows * k + 1, k, dtype=np.int64)
    return sp.csr_matrix((data.reshape(-1), index.reshape(-1), indptr), shape=(rows, n_cols))


def scale_operator(grid: FeatureGrid, batch: SampleBatch, cfg: RbfConfig) -> ScaleOperator:
    sw = interpolation_weights(grid, batch, cfg)
    B, K = sw.index.shape
    d = grid.d
    t = d * (d + 1) // 2
    w = sw.weights
    return ScaleOperator(
        _csr(np.asarray(w.value), sw.index, grid.n_nodes),
        _csr(np.asarray(w.grad).reshape(d * B, K), np.tile(sw.index, (d, 1)), grid.n_nodes),
        _csr(np.asarray(w.hess).reshape(t * B, K), np.tile(sw.index, (t, 1)), grid.n_nodes),
    )


def batch_operators(multigrid: MultiGrid, batch: SampleBatch, cfg: RbfConfig) -> list[ScaleOperator]:
    """Per-scale operators for a batch, memoised on the batch."""
    key = (id(multigrid), cfg)
    ops = batch.cache.get(key)
    if ops is None:
        ops = [scale_operator(g, batch, cfg) for g in multigrid.grids]
        if batch.keep_ops:
            batch.cache[key] = ops
    return ops


def interpolate(multigrid: MultiGrid, features: dict, batch: SampleBatch, cfg: RbfConfig) -> Jet2:
    """Multi-scale feature jets with sample shape ``(B, S*F)``, finest scale first.

    ``features`` maps grid segment names to arrays or taped leaves.
    """
    if len(batch) == 0:
        raise InternalError("empty batch")
    B, d = len(batch), multigrid.d
    t = d * (d + 1) // 2
    parts = []
    for g, op in zip(multigrid.grids, batch_operators(multigrid, batch, cfg)):
        f = features[g.segment]
        parts.append(
            Jet2(
                spmm(op.value, f),
                reshape(spmm(op.grad, f), (d, B, g.n_features)),
                reshape(spmm(op.hess, f), (t, B, g.n_features)),
            )
        )
    return parts[0] if len(parts) == 1 else jet_concat(parts, -1)


def linear_weights(grid: FeatureGrid, coords) -> ScaleWeights:
    """d-linear (tent) weights over the enclosing cell; comparison only."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    n, d = grid.n, grid.d
    seeds = jet_seed(coords, d)
    w = None
    idx_parts = []
    for k in range(d):
        c = np.clip(np.floor((coords[:, k] + 1.0) * n / 2.0).astype(np.int64), 0, n - 1)
        idx = np.stack([c, c + 1], axis=-1)
        node = (2.0 * idx - n) / n
        sgn = np.sign(seeds[k].value[:, None] - node)
        diff = (seeds[k].map(lambda a: a[..., None]) - node) * (n / 2.0)
        wk = (diff * (-sgn)) + 1.0
        wk = wk.map(lambda a, k=k: _expand_axis(a, k, d))
        w = wk if w is None else jet_mul(w, wk)
        idx_parts.append(idx * grid.strides[k])
    B = coords.shape[0]
    w = w.map(lambda a: np.broadcast_to(a, a.shape[: a.ndim - d] + (2,) * d).reshape(a.shape[: a.ndim - d] + (-1,)))
    index = _box(idx_parts, d, np.add).reshape(B, -1)
    return ScaleWeights(index, w)


def apply_weights(sw: ScaleWeights, values: np.ndarray) -> Jet2:
    """Numpy-only evaluation ``sum_i w_i F_i`` (for tests and controls)."""
    rows = values[sw.index]  # (B, K, F)
    w = sw.weights
    return Jet2(
        np.einsum("bk,bkf->bf", w.value, rows),
        np.einsum("dbk,bkf->dbf", w.grad, rows),
        np.einsum("tbk,bkf->tbf", w.hess, rows),
    )
