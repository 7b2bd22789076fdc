"""Multi-resolution learnable feature grids over [-1, 1]^d."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .diffcore import ParamStore, Var, take_rows
from .errors import ConfigError, InternalError, ParseError, ResourceError

INIT_RANGE = 1e-4
MAX_GRID_ENTRIES = 50_000_000
CHECKPOINT_MAGIC = b"DINF1"


@dataclass
class FeatureGrid:
    """One lattice of ``(n + 1)^d`` nodes, each holding ``n_features`` values.

    Nodes are linearised row-major (last axis fastest). Node ``i`` along an
    axis sits at ``-1 + 2 i / n``.
    """

    scale: int
    n: int
    n_features: int
    d: int
    segment: str

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** self.d

    @property
    def cell_size(self) -> float:
        return 2.0 / self.n

    @property
    def strides(self) -> np.ndarray:
        return (self.n + 1) ** np.arange(self.d - 1, -1, -1)

    def linear_index(self, index) -> np.ndarray:
        index = np.asarray(index)
        if np.any(index < 0) or np.any(index > self.n):
            raise InternalError(f"node index out of range [0, {self.n}]")
        return index @ self.strides


@dataclass
class MultiGrid:
    grids: list[FeatureGrid]
    n_max: int
    n_scales: int
    n_features: int
    d: int
    store: ParamStore = field(repr=False)

    def features(self, scale: int) -> np.ndarray:
        return self.store.view(self.grids[scale].segment)

    @property
    def n_params(self) -> int:
        return sum(g.n_nodes * g.n_features for g in self.grids)

    @property
    def out_width(self) -> int:
        return self.n_scales * self.n_features


def check_grid_shape(n_max: int, n_scales: int, n_features: int, d: int, cap: int = MAX_GRID_ENTRIES):
    if d not in (1, 2, 3):
        raise ConfigError(f"grid dimension must be 1, 2 or 3, got {d}")
    if n_scales < 1 or n_features < 1 or n_max < 1:
        raise ConfigError("grid.n_max, grid.s and grid.f must be positive")
    if n_max % 2 ** (n_scales - 1):
        raise ConfigError(f"grid.n_max={n_max} is not divisible by 2^(S-1)={2 ** (n_scales - 1)} for S={n_scales}")
    total = sum((n_max // 2**s + 1) ** d for s in range(n_scales)) * n_features
    if total > cap:
        raise ResourceError(f"feature grids need {total} entries, above the cap of {cap}")
    return total


def create_multigrid(
    n_max: int,
    n_scales: int,
    n_features: int,
    d: int,
    seed=0,
    store: ParamStore | None = None,
    cap: int = MAX_GRID_ENTRIES,
) -> MultiGrid:
    """Allocate S grids at resolutions n_max / 2^s with U(-1e-4, 1e-4) features."""
    check_grid_shape(n_max, n_scales, n_features, d, cap)
    store = ParamStore() if store is None else store
    rng = np.random.default_rng(seed)
    grids = []
    for s in range(n_scales):
        n = n_max // 2**s
        name = f"grid{s}"
        vals = rng.uniform(-INIT_RANGE, INIT_RANGE, size=((n + 1) ** d, n_features))
        store.add(name, vals)
        grids.append(FeatureGrid(s, n, n_features, d, name))
    return MultiGrid(grids, n_max, n_scales, n_features, d, store)


def node_coord(grid: FeatureGrid, index) -> np.ndarray:
    index = np.asarray(index)
    if np.any(index < 0) or np.any(index > grid.n):
        raise InternalError(f"node index {index.tolist()} out of range [0, {grid.n}]")
    # written so both endpoints are exact
    return (2.0 * index - grid.n) / grid.n


def gather(grid: FeatureGrid, indices, leaves: dict) -> Var:
    """Feature rows of the given nodes, wired to the tape through ``leaves``."""
    idx = grid.linear_index(np.atleast_2d(indices))
    return take_rows(leaves[grid.segment], idx)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, store: ParamStore, header: dict):
    """Write magic, a length-prefixed JSON header, then little-endian f64 params."""
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(store.data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0")
    if len(raw) < 9:
        raise ParseError(f"{path}: truncated header at byte 5")
    (n,) = struct.unpack("<I", raw[5:9])
    try:
        header = json.loads(raw[9 : 9 + n].decode())
    except ValueError as exc:
        raise ParseError(f"{path}: unreadable header at byte 9: {exc}") from None
    body = raw[9 + n :]
    if len(body) % 8:
        raise ParseError(f"{path}: parameter payload of {len(body)} bytes is not a multiple of 8 (byte {9 + n})")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if "n_params" in header and header["n_params"] != params.size:
        raise ParseError(f"{path}: expected {header['n_params']} parameters, found {params.size}")
    return header, params
