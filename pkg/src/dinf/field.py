"""Decoder, hard boundary blending, and full field evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .diffcore import Jet2, ParamStore, Tape, jet_exp, jet_seed, jet_swish, jet_tanh, value_of
from .errors import ConfigError, DivergedError
from .grid import MultiGrid, create_multigrid, load_checkpoint, save_checkpoint
from .interp import NeighborTable, RbfConfig, SampleBatch, build_neighbor_table, interpolate

ACTIVATIONS = {"tanh": jet_tanh, "swish": jet_swish}


@dataclass
class Decoder:
    """Linear layer or small MLP mapping ``S*F`` features to ``m`` outputs."""

    kind: str
    widths: list[int]
    activation: str = "tanh"
    segments: list[tuple[str, str]] = field(default_factory=list)

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def spec(self) -> dict:
        return {"kind": self.kind, "widths": list(self.widths), "activation": self.activation}


def build_decoder(n_in, n_out, store: ParamStore, kind="linear", hidden=(), activation="tanh", seed=0) -> Decoder:
    """Xavier-uniform weights, zero biases."""
    if kind not in ("linear", "mlp"):
        raise ConfigError(f"decoder.kind must be 'linear' or 'mlp', got {kind!r}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"decoder.activation must be one of {sorted(ACTIVATIONS)}, got {activation!r}")
    hidden = list(hidden) if kind == "mlp" else []
    if kind == "mlp" and not hidden:
        raise ConfigError("an mlp decoder needs at least one hidden width")
    widths = [int(n_in)] + [int(h) for h in hidden] + [int(n_out)]
    rng = np.random.default_rng(seed)
    segments = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        lim = np.sqrt(6.0 / (a + b))
        w = store.add(f"dec{i}.W", rng.uniform(-lim, lim, size=(a, b)))
        bias = store.add(f"dec{i}.b", np.zeros(b))
        segments.append((w, bias))
    return Decoder(kind, widths, activation, segments)


def decode(features: Jet2, decoder: Decoder, params: dict) -> Jet2:
    width = value_of(features.value).shape[-1]
    if width != decoder.n_in:
        raise ConfigError(f"decoder expects {decoder.n_in} input features, got {width}")
    act = ACTIVATIONS[decoder.activation]
    h = features
    last = len(decoder.segments) - 1
    for i, (w, b) in enumerate(decoder.segments):
        h = (h @ params[w]) + params[b]
        if i < last:
            h = act(h)
    return h


# ---------------------------------------------------------------------------
# hard constraints
# ---------------------------------------------------------------------------


def box_distance(xs: Sequence[Jet2], axes: Sequence[int]) -> Jet2:
    """Distance to the nearest face of [-1, 1] along ``axes`` (active-face jet)."""
    d = xs[0].d
    vals = np.stack([np.stack([1.0 - xs[k].value, xs[k].value + 1.0]) for k in axes])  # (A, 2, B)
    flat = vals.reshape(-1, vals.shape[-1])
    pick = flat.argmin(axis=0)
    dist = flat[pick, np.arange(flat.shape[1])]
    grad = np.zeros((d,) + dist.shape)
    axis_of = np.asarray(axes)[pick // 2]
    sign = np.where(pick % 2 == 0, -1.0, 1.0)
    grad[axis_of, np.arange(dist.size)] = sign
    return Jet2(dist, grad, np.zeros((d * (d + 1) // 2,) + dist.shape))


def time_distance(xs: Sequence[Jet2], axis: int) -> Jet2:
    """Distance to the t = 0 face (normalised coordinate -1)."""
    return xs[axis] + 1.0


@dataclass
class Constraint:
    """One Dirichlet-type constraint ``u = value(x)`` where ``distance`` is 0.

    ``value`` maps the list of coordinate jets to a jet of sample shape
    ``(B,)`` or ``(B, m)``; ``None`` means zero.
    """

    distance: str  # "box" | "time-origin"
    sigma: float = 0.05
    axes: tuple[int, ...] = ()
    value: Callable | None = None
    power: int = 2

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"boundary blend width must be positive, got {self.sigma}")
        if self.distance not in ("box", "time-origin"):
            raise ConfigError(f"unknown constraint distance {self.distance!r}")
        if self.power not in (1, 2):
            raise ConfigError(f"blend power must be 1 or 2, got {self.power}")

    def blend_weight(self, xs) -> Jet2:
        if self.distance == "box":
            dist = box_distance(xs, self.axes)
        else:
            dist = time_distance(xs, self.axes[0])
        # B = 1 - exp(-dist^p / sigma); p = 2 is the default Gaussian-type blend
        dp = dist * dist if self.power == 2 else dist
        return 1.0 - jet_exp(dp * (-1.0 / self.sigma))


@dataclass
class BoundarySpec:
    """Constraints applied in order: ``u <- u * B_c + h_c * (1 - B_c)``.

    With a spatial box constraint first and a time-origin constraint second
    this gives ``u = h0 (1 - B_t) + B_t (raw B_x + h_x (1 - B_x))``.
    """

    constraints: list[Constraint] = field(default_factory=list)


def _trailing(j: Jet2, like: Jet2) -> Jet2:
    if j.value.ndim < value_of(like.value).ndim:
        return j.map(lambda a: a[..., None])
    return j


def boundary_blend(raw: Jet2, xs: Sequence[Jet2], spec: BoundarySpec | None) -> Jet2:
    if spec is None or not spec.constraints:
        return raw
    u = raw
    for c in spec.constraints:
        b = _trailing(c.blend_weight(xs), raw)
        u = u * b
        if c.value is not None:
            h = _trailing(c.value(xs), raw)
            u = u + h * (1.0 - b)
    return u


# ---------------------------------------------------------------------------
# field model
# ---------------------------------------------------------------------------


class FieldModel:
    """Feature grids + decoder + boundary blending sharing one ParamStore."""

    def __init__(self, multigrid: MultiGrid, decoder: Decoder, rbf: RbfConfig, boundary: BoundarySpec | None = None):
        if decoder.n_in != multigrid.out_width:
            raise ConfigError(f"decoder input width {decoder.n_in} != S*F = {multigrid.out_width}")
        self.multigrid = multigrid
        self.decoder = decoder
        self.rbf = rbf
        self.boundary = boundary or BoundarySpec()
        self._tables: dict[tuple, NeighborTable] = {}

    @classmethod
    def create(cls, d, m, n_max, n_scales, n_features, rbf=None, decoder="linear", hidden=(), activation="tanh",
               boundary=None, seed=0, cap=None):
        seq = np.random.SeedSequence(seed)
        grid_seed, dec_seed = seq.spawn(2)
        kw = {} if cap is None else {"cap": cap}
        mg = create_multigrid(n_max, n_scales, n_features, d, seed=grid_seed, **kw)
        dec = build_decoder(mg.out_width, m, mg.store, decoder, hidden, activation, seed=dec_seed)
        return cls(mg, dec, rbf or RbfConfig(), boundary)

    @property
    def store(self) -> ParamStore:
        return self.multigrid.store

    @property
    def d(self) -> int:
        return self.multigrid.d

    @property
    def m(self) -> int:
        return self.decoder.n_out

    def table(self, res) -> NeighborTable:
        res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(res), (self.d,)))
        t = self._tables.get(res)
        if t is None:
            t = build_neighbor_table(res, self.multigrid, self.rbf.rho)
            self._tables[res] = t
        return t

    def query_table(self) -> NeighborTable:
        """Lattice matching the finest grid; suits arbitrary query points."""
        return self.table(self.multigrid.n_max)

    def params(self, tape: Tape | None = None) -> dict:
        return self.store.bind(tape) if tape is not None else self.store.arrays()

    def raw(self, batch: SampleBatch, params: dict) -> Jet2:
        feats = interpolate(self.multigrid, params, batch, self.rbf)
        return decode(feats, self.decoder, params)

    def evaluate(self, batch: SampleBatch, params: dict | None = None) -> Jet2:
        return eval_field(self, batch, params)

    def _auto_chunk(self) -> int:
        # about 2M (point, node) weight entries per chunk
        per_point = (2 * self.rbf.rho) ** self.d * self.multigrid.n_scales
        return max(256, (1 << 21) // per_point)

    def evaluate_points(self, coords, chunk=None) -> Jet2:
        """Numpy jet of the field at arbitrary points (no tape)."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        table = self.query_table()
        chunk = chunk or self._auto_chunk()
        parts = []
        for i in range(0, len(coords), chunk):
            c = coords[i : i + chunk]
            parts.append(self.evaluate(SampleBatch(c, table.cells_of(c), table)).numpy())
        if len(parts) == 1:
            return parts[0]
        return Jet2(*(np.concatenate([getattr(p, a) for p in parts], axis=-2) for a in ("value", "grad", "hess")))

    def predict(self, coords, chunk=None) -> np.ndarray:
        """Field values at arbitrary points, shape ``(n, m)``."""
        return self.evaluate_points(coords, chunk).value

    def header(self) -> dict:
        mg = self.multigrid
        return {
            "d": mg.d, "S": mg.n_scales, "n_max": mg.n_max, "F": mg.n_features,
            "decoder": self.decoder.spec(), "rbf": {"eps": self.rbf.eps, "rho": self.rbf.rho},
            "n_params": len(self.store),
        }

    def save(self, path):
        save_checkpoint(path, self.store, self.header())

    @classmethod
    def load(cls, path, boundary=None) -> "FieldModel":
        header, params = load_checkpoint(path)
        dec = header["decoder"]
        model = cls.create(
            header["d"], dec["widths"][-1], header["n_max"], header["S"], header["F"],
            rbf=RbfConfig(**header.get("rbf", {})), decoder=dec["kind"], hidden=dec["widths"][1:-1],
            activation=dec["activation"], boundary=boundary,
        )
        if params.size != len(model.store):
            raise ConfigError(f"checkpoint holds {params.size} parameters, model needs {len(model.store)}")
        model.store.data[:] = params
        return model


def eval_field(model: FieldModel, batch: SampleBatch, params: dict | None = None) -> Jet2:
    """u, grad u, Hessian u at every sample; sample shape ``(B, m)``."""
    params = model.params() if params is None else params
    raw = model.raw(batch, params)
    xs = jet_seed(batch.coords, model.d)
    u = boundary_blend(raw, xs, model.boundary)
    v = value_of(u.value)
    bad = ~np.isfinite(v)
    if bad.any():
        i = int(np.argwhere(bad)[0][0])
        raise DivergedError(f"non-finite field value at sample {i} (x={batch.coords[i].tolist()})")
    return u
