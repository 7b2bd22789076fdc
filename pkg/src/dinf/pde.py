"""PDE residual losses and the problem definitions that pair them with sampling plans.

Every loss takes the evaluated field jet ``u`` (sample shape ``(B, m)``, with
derivatives already in physical units) and returns a scalar tape node. Mean
reductions divide by ``batch.norm`` so chunked evaluation adds up exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffcore import Jet2, add, exp, hess_index, jet_concat, jet_seed, jet_sin, jet_sqrt, mul, sqrt, sub, vabs, value_of, vsum
from .errors import ConfigError, DataError
from .field import BoundarySpec, Constraint, FieldModel
from .interp import SampleBatch, query_batch, regular_grid, stratified_sample
from . import reference as ref
from . import io as dio


# ---------------------------------------------------------------------------
# units
# ---------------------------------------------------------------------------


def to_physical(u: Jet2, scales) -> Jet2:
    """Rescale derivatives taken in normalised coordinates.

    ``scales[k]`` is the physical length of one normalised unit along axis k,
    so first derivatives are divided by ``s_k`` and second ones by ``s_k s_l``.
    """
    s = np.asarray(scales, dtype=np.float64)
    d = u.d
    if s.shape != (d,):
        raise ConfigError(f"need {d} axis scales, got {s.tolist()}")
    if np.all(s == 1.0):
        return u
    nd = value_of(u.value).ndim
    iu, ju = np.triu_indices(d)
    gs = (1.0 / s).reshape((d,) + (1,) * nd)
    hs = (1.0 / (s[iu] * s[ju])).reshape((-1,) + (1,) * nd)
    return Jet2(u.value, mul(u.grad, gs), mul(u.hess, hs))


def affine_coords(xs: list[Jet2], scales, offsets) -> list[Jet2]:
    """Physical coordinate jets ``offset + scale * x_n`` (derivatives w.r.t. x_n)."""
    return [x * float(s) + float(o) for x, s, o in zip(xs, scales, offsets)]


def _mean(per_sample, batch: SampleBatch):
    return vsum(per_sample) * (1.0 / batch.norm)


def _channel(u: Jet2, c: int) -> Jet2:
    return u[:, c]


def _need(batch: SampleBatch, *keys):
    for k in keys:
        if k not in batch.payload:
            raise DataError(f"batch is missing the '{k}' targets")
        if len(batch.payload[k]) != len(batch):
            raise DataError(f"'{k}' targets have {len(batch.payload[k])} rows for {len(batch)} samples")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def signal_fit_loss(u: Jet2, batch: SampleBatch):
    """mean |u - g| (summed over channels)."""
    _need(batch, "target")
    g = np.asarray(batch.payload["target"], dtype=np.float64).reshape(len(batch), -1)
    return _mean(vabs(sub(u.value, g)), batch)


def poisson_grad_loss(u: Jet2, batch: SampleBatch):
    """mean over samples of the L1 norm of the gradient mismatch, per channel."""
    _need(batch, "grad")
    g = np.asarray(batch.payload["grad"], dtype=np.float64)  # (B, m, d)
    g = np.moveaxis(g.reshape(len(batch), -1, u.d), -1, 0)
    return _mean(vabs(sub(u.grad, g)), batch)


def poisson_lapl_loss(u: Jet2, batch: SampleBatch):
    """mean |lap u - lap g| per channel."""
    _need(batch, "lapl")
    g = np.asarray(batch.payload["lapl"], dtype=np.float64).reshape(len(batch), -1)
    return _mean(vabs(sub(u.laplacian(), g)), batch)


NORMS = ("l1", "l2")


def _penalty(r, norm: str):
    """|r| (l1) or r^2 (l2) per sample."""
    if norm == "l1":
        return vabs(r)
    if norm == "l2":
        return mul(r, r)
    raise ConfigError(f"residual norm must be one of {NORMS}, got {norm!r}")


def heat_loss(u: Jet2, batch: SampleBatch, alpha: float = 1.0, norm: str = "l1"):
    """mean |u_t - alpha u_xx| with time as the last axis (squared for ``norm='l2'``)."""
    d = u.d
    t = d - 1
    lap = None
    for k in range(t):
        h = u.hess[hess_index(d, k, k)]
        lap = h if lap is None else add(lap, h)
    return _mean(_penalty(sub(u.grad[t], mul(lap, alpha)), norm), batch)


def advection_loss(u: Jet2, batch: SampleBatch, a, norm: str = "l1"):
    """mean |u_t + a . grad_x u| with time as the last axis (squared for ``norm='l2'``)."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    d = u.d
    if a.size != d - 1:
        raise ConfigError(f"advection velocity needs {d - 1} components, got {a.size}")
    r = u.grad[d - 1]
    for k in range(d - 1):
        if a[k] != 0.0:
            r = add(r, mul(u.grad[k], a[k]))
    return _mean(_penalty(r, norm), batch)


def eikonal_domain_terms(u: Jet2, batch: SampleBatch, alpha: float = 100.0):
    """Domain part: mean |‖grad u‖ - 1| + mean exp(-alpha |u|)."""
    norm = _grad_norm(u)
    psi = exp(mul(vabs(u.value), -alpha))
    return _mean(add(vabs(sub(norm, 1.0)), psi), batch)


def check_normals(normals, tol=1e-6):
    n = np.asarray(normals, dtype=np.float64)
    err = np.abs(np.linalg.norm(n, axis=-1) - 1.0)
    if np.any(err > tol):
        i = int(np.argmax(err))
        raise DataError(f"surface normal {i} has length {np.linalg.norm(n[i]):.9f}, not unit")
    return n


def _grad_norm(u: Jet2):
    g2 = None
    for k in range(u.d):
        gk = mul(u.grad[k], u.grad[k])
        g2 = gk if g2 is None else add(g2, gk)
    return sqrt(add(g2, 1e-12))


def eikonal_surface_terms(u: Jet2, batch: SampleBatch):
    """Surface part: mean (|u| + 1 - <grad u, n> + |‖grad u‖ - 1|).

    Surface points belong to the domain too, so they also carry the
    unit-gradient term. Without it ``1 - <grad u, n>`` is unbounded below.
    """
    _need(batch, "normal")
    n = check_normals(batch.payload["normal"])  # (B, d)
    dot = None
    for k in range(u.d):
        t = mul(u.grad[k], n[:, k : k + 1])
        dot = t if dot is None else add(dot, t)
    unit = vabs(sub(_grad_norm(u), 1.0))
    return _mean(add(add(vabs(u.value), sub(1.0, dot)), unit), batch)


def eikonal_loss(u_domain: Jet2, domain: SampleBatch, u_surface: Jet2, surface: SampleBatch, alpha: float = 100.0):
    return add(eikonal_domain_terms(u_domain, domain, alpha), eikonal_surface_terms(u_surface, surface))


@dataclass(frozen=True)
class HelmholtzParams:
    omega: float = 20.0
    c: float = 1.0
    a0: float = 5.0
    pml_inner: float = 0.5
    pml_width: float = 0.5
    source_var: float = 1e-4
    lam_ratio: float = 5e3
    lam_threshold: float = 1e-8
    form: str = "standard"

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError(f"problem.omega must be positive, got {self.omega}")
        if not self.c > 0:
            raise ConfigError(f"problem.c must be positive, got {self.c}")
        if self.form not in ("standard", "paper"):
            raise ConfigError(f"problem.pml_form must be 'standard' or 'paper', got {self.form!r}")

    @property
    def k(self) -> float:
        return self.omega / self.c


def pml_sigma(x, hp: HelmholtzParams):
    """Damping profile and its derivative along one axis."""
    x = np.asarray(x, dtype=np.float64)
    l = np.maximum(np.abs(x) - hp.pml_inner, 0.0)
    sig = hp.a0 * hp.omega * (l / hp.pml_width) ** 2
    dsig = hp.a0 * hp.omega * 2.0 * l / hp.pml_width**2 * np.sign(x)
    return sig, dsig


def helmholtz_source(x, hp: HelmholtzParams):
    """Unit-mass Gaussian point source at the origin."""
    r2 = np.sum(np.asarray(x) ** 2, axis=-1)
    v = hp.source_var
    return np.exp(-r2 / (2.0 * v)) / (2.0 * math.pi * v)


def pml_coefficients(x, hp: HelmholtzParams):
    """Complex coefficients (A1, dA1, A2, dA2, C) of
    ``A1 u_11 + dA1 u_1 + A2 u_22 + dA2 u_2 + C u``."""
    s1, ds1 = pml_sigma(x[:, 0], hp)
    s2, ds2 = pml_sigma(x[:, 1], hp)
    k2 = hp.k**2
    if hp.form == "standard":
        e1, e2 = 1.0 + 1j * s1 / hp.omega, 1.0 + 1j * s2 / hp.omega
        de1, de2 = 1j * ds1 / hp.omega, 1j * ds2 / hp.omega
        return e2 / e1, -e2 * de1 / e1**2, e1 / e2, -e1 * de2 / e2**2, e1 * e2 * k2
    e1, e2 = 1.0 - 1j * s1 / hp.omega, 1.0 - 1j * s2 / hp.omega
    de1, de2 = -1j * ds1 / hp.omega, -1j * ds2 / hp.omega
    return e1 * e2, de1 * e2, e1 * e2, e1 * de2, e1 * e2 * k2


def _cmul(c, re, im):
    """(c.real + i c.imag) * (re + i im) on tape nodes."""
    cr, ci = np.real(c), np.imag(c)
    if not np.any(ci):
        return mul(re, cr), mul(im, cr)
    return sub(mul(re, cr), mul(im, ci)), add(mul(im, cr), mul(re, ci))


def helmholtz_residual(u: Jet2, coords, hp: HelmholtzParams):
    """Real and imaginary residual nodes, each of shape ``(B,)``."""
    if u.d != 2 or value_of(u.value).shape[-1] != 2:
        raise ConfigError("helmholtz needs d=2 and two output channels")
    A1, dA1, A2, dA2, C = pml_coefficients(coords, hp)
    g = helmholtz_source(coords, hp)
    parts = [
        (A1, u.hess[hess_index(2, 0, 0)]),
        (dA1, u.grad[0]),
        (A2, u.hess[hess_index(2, 1, 1)]),
        (dA2, u.grad[1]),
        (C, u.value),
    ]
    rr, ri = g, 0.0
    for coef, comp in parts:
        a, b = _cmul(coef, comp[:, 0], comp[:, 1])
        rr, ri = add(rr, a), add(ri, b)
    return rr, ri


def helmholtz_weight(coords, hp: HelmholtzParams, batch_size: int):
    g = helmholtz_source(coords, hp)
    gmax = 1.0 / (2.0 * math.pi * hp.source_var)
    return np.where(g > hp.lam_threshold * gmax, batch_size / hp.lam_ratio, 1.0)


def helmholtz_pml_loss(u: Jet2, batch: SampleBatch, hp: HelmholtzParams):
    """mean lambda(x) (|Re R| + |Im R|)."""
    rr, ri = helmholtz_residual(u, batch.coords, hp)
    lam = helmholtz_weight(batch.coords, hp, batch.norm)
    return _mean(mul(add(vabs(rr), vabs(ri)), lam), batch)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

KINDS = ("poisson_grad", "poisson_lapl", "helmholtz", "eikonal", "heat", "advection", "fit")


@dataclass
class Problem:
    """Base class: sampling plan, loss, metrics and oracle for one equation.

    Coordinates handed to the model are normalised to [-1, 1]^d; the physical
    coordinate along axis k is ``offsets[k] + scales[k] * x_k``.
    """

    kind: str = ""
    d: int = 2
    m: int = 1
    scales: tuple = ()
    offsets: tuple = ()
    sample_res: int = 64
    eval_res: int = 256
    sigma_b: float = 0.05
    sigma_t: float | None = None
    power: int = 2
    time_power: int = 2
    residual_norm: str = "l1"
    primary: str = ""

    def __post_init__(self):
        if not self.scales:
            self.scales = (1.0,) * self.d
        if not self.offsets:
            self.offsets = (0.0,) * self.d
        if len(self.scales) != self.d or len(self.offsets) != self.d:
            raise ConfigError(f"{self.kind}: axis scales/offsets must have {self.d} entries")
        if self.residual_norm not in NORMS:
            raise ConfigError(f"{self.kind}: residual norm must be one of {NORMS}, got {self.residual_norm!r}")
        if np.min(np.atleast_1d(self.sample_res)) < 1 or self.eval_res < 1:
            raise ConfigError(f"{self.kind}: sampling and evaluation resolutions must be positive")

    # hooks -----------------------------------------------------------------
    def boundary(self) -> BoundarySpec:
        return BoundarySpec()

    def sample(self, model: FieldModel, rng: np.random.Generator) -> dict[str, SampleBatch]:
        return {"domain": stratified_sample(self.sample_res, rng, model.table(self.sample_res), self.d)}

    def loss_term(self, name: str, u: Jet2, batch: SampleBatch):
        raise NotImplementedError

    def on_step(self, it: int) -> None:
        """Called before each optimisation step (schedules)."""

    def metrics(self, model: FieldModel) -> dict[str, float]:
        return {}

    def oracle(self, coords) -> Jet2 | None:
        """Closed-form solution as a jet in normalised coordinates (or None)."""
        return None

    def renders(self, model: FieldModel) -> dict[str, np.ndarray]:
        """2D arrays for image/CSV export."""
        return {}

    # shared ----------------------------------------------------------------
    def physical(self, coords) -> np.ndarray:
        return np.asarray(self.offsets) + np.asarray(self.scales) * np.asarray(coords)

    def loss(self, fields: dict[str, Jet2], batches: dict[str, SampleBatch]):
        total = None
        for name in batches:
            term = self.loss_term(name, fields[name], batches[name])
            total = term if total is None else add(total, term)
        return total

    def spacetime_boundary(self, h0) -> BoundarySpec:
        """Zero on the spatial box faces, then ``h0`` at t = 0 (time is the last axis)."""
        ds = self.d - 1
        st = self.sigma_b if self.sigma_t is None else self.sigma_t
        return BoundarySpec(
            [
                Constraint("box", self.sigma_b, tuple(range(ds)), None, self.power),
                Constraint("time-origin", st, (ds,), h0, self.time_power),
            ]
        )

    def eval_coords(self, res=None) -> np.ndarray:
        return regular_grid(res or self.eval_res, d=self.d).coords


def _time_sliced(problem, model, t_phys, res):
    """Evaluation points on a spatial grid at one physical time."""
    d = problem.d
    sp = regular_grid(res, d=d - 1).coords
    tn = (t_phys - problem.offsets[-1]) / problem.scales[-1]
    return np.concatenate([sp, np.full((len(sp), 1), tn)], axis=1)


@dataclass
class HeatProblem(Problem):
    """u_t = alpha u_xx on x in [-1, 1], t in [0, T], u(x, 0) = sin(pi x), u(+-1, t) = 0."""

    alpha: float = 1.0
    t_end: float = 4.0

    def __post_init__(self):
        self.kind, self.d, self.m = "heat", 2, 1
        self.scales, self.offsets = (1.0, self.t_end / 2.0), (0.0, self.t_end / 2.0)
        self.primary = self.primary or "mae"
        super().__post_init__()

    def boundary(self):
        def h0(xs):
            return jet_sin(xs[0] * math.pi)

        return self.spacetime_boundary(h0)

    def loss_term(self, name, u, batch):
        return heat_loss(to_physical(u, self.scales), batch, self.alpha, self.residual_norm)

    def oracle(self, coords):

        x, t = affine_coords(jet_seed(coords, 2), self.scales, self.offsets)
        return ref.heat_jet(x, t, self.alpha).map(lambda a: a[..., None])

    def metrics(self, model):
        c = self.eval_coords()
        p = self.physical(c)
        u = model.predict(c)[:, 0]
        return {"mae": dio.mae(u, ref.heat_analytic(p[:, 0], p[:, 1], self.alpha))}

    def renders(self, model):
        r = self.eval_res
        u = model.predict(self.eval_coords()).reshape(r, r)
        return {"field": u.T[::-1]}  # rows = time (top = t_end), cols = x


@dataclass
class AdvectionProblem(Problem):
    """u_t + a . grad u = 0 with a Gaussian initial condition and zero boundary."""

    velocity: tuple = (0.25,)
    center: tuple = (-1.5,)
    width: float = 0.1
    half_extent: float = 2.0
    t_end: float = 4.0

    def __post_init__(self):
        self.velocity = tuple(float(v) for v in np.atleast_1d(self.velocity))
        ds = len(self.velocity)
        if ds not in (1, 2):
            raise ConfigError(f"advection supports 1 or 2 spatial dims, got {ds}")
        self.center = tuple(float(v) for v in np.broadcast_to(np.atleast_1d(self.center), (ds,)))
        self.kind, self.d, self.m = "advection", ds + 1, 1
        self.scales = (self.half_extent,) * ds + (self.t_end / 2.0,)
        self.offsets = (0.0,) * ds + (self.t_end / 2.0,)
        self.primary = self.primary or "mae"
        super().__post_init__()

    def boundary(self):
        ds = self.d - 1

        def h0(xs):
            xp = [x * self.half_extent for x in xs[:ds]]
            t0 = Jet2.constant(np.zeros_like(xs[0].value), self.d)
            return ref.advection_jet(xp, t0, self.velocity, self.center, self.width)

        return self.spacetime_boundary(h0)

    def loss_term(self, name, u, batch):
        return advection_loss(to_physical(u, self.scales), batch, self.velocity, self.residual_norm)

    def oracle(self, coords):

        ph = affine_coords(jet_seed(coords, self.d), self.scales, self.offsets)
        return ref.advection_jet(ph[:-1], ph[-1], self.velocity, self.center, self.width).map(lambda a: a[..., None])

    def metrics(self, model):
        res = 1024 if self.d == 2 else self.eval_res
        c = _time_sliced(self, model, self.t_end, res)
        p = self.physical(c)
        u = model.predict(c)[:, 0]
        exact = ref.advection_analytic(p[:, :-1], p[:, -1], self.velocity, self.center, self.width)
        out = {"mae": dio.mae(u, exact)}
        # peak amplitude at the analytic peak location, relative to 1
        peak = np.asarray(self.center) + np.asarray(self.velocity) * self.t_end
        pn = np.append(peak / self.half_extent, 1.0)
        out["amp_loss"] = float(abs(1.0 - model.predict(pn[None])[0, 0]))
        return out

    def renders(self, model):
        r = self.eval_res
        if self.d == 2:
            u = model.predict(self.eval_coords()).reshape(r, r)
            return {"field": u.T[::-1]}
        c = _time_sliced(self, model, self.t_end, r)
        return {"field_t_end": model.predict(c).reshape(r, r).T[::-1]}


@dataclass
class HelmholtzProblem(Problem):
    params: HelmholtzParams = field(default_factory=HelmholtzParams)
    region: float = 0.5
    r_exclude: float = 0.05

    def __post_init__(self):
        self.kind, self.d, self.m = "helmholtz", 2, 2
        self.primary = self.primary or "l1_real"
        super().__post_init__()

    def loss_term(self, name, u, batch):
        return helmholtz_pml_loss(u, batch, self.params)

    def oracle(self, coords):

        re, im = ref.helmholtz_green_jet(jet_seed(coords, 2), self.params.omega)
        return jet_concat([re.map(lambda a: a[..., None]), im.map(lambda a: a[..., None])], -1)

    def comparison(self, model):
        c = self.eval_coords()
        keep = (np.max(np.abs(c), axis=1) < self.region) & (np.linalg.norm(c, axis=1) >= self.r_exclude)
        c = c[keep]
        u = model.predict(c)
        re, im = ref.helmholtz_green(c, self.params.omega)
        return u, np.stack([re, im], axis=1)

    def metrics(self, model):
        u, exact = self.comparison(model)
        scale = dio.ls_scale(u, exact)
        v = scale * u
        return {
            "l1_real": float(np.mean(np.abs(v[:, 0] - exact[:, 0]))),
            "l1_imag": float(np.mean(np.abs(v[:, 1] - exact[:, 1]))),
            "amp_scale": float(scale),
        }

    def renders(self, model):
        r = self.eval_res
        u = model.predict(self.eval_coords()).reshape(r, r, 2)
        return {"real": u[..., 0].T[::-1], "imag": u[..., 1].T[::-1]}


@dataclass
class EikonalProblem(Problem):
    """SDF from oriented surface samples (analytic circle/sphere or a point cloud)."""

    alpha: float = 100.0
    alpha_start: float = 1.0
    alpha_warmup: int = 0
    n_surface: int = 512
    radius: float = 0.5
    pointcloud: str | None = None
    inner: float = 0.8
    seed: int = 0
    _surface: tuple | None = None

    def __post_init__(self):
        self.kind, self.m = "eikonal", 1
        self.primary = self.primary or "sdf_mae"
        super().__post_init__()
        if self.pointcloud:
            pc = dio.read_pointcloud(self.pointcloud)
            if pc.points.shape[1] != self.d:
                raise ConfigError(f"point cloud is {pc.points.shape[1]}-D but problem.d={self.d}")
            self._surface = (pc.points, pc.normals)
        else:
            rng = np.random.default_rng(self.seed)
            pts, nrm = ref.sample_sphere(self.n_surface, self.d, radius=self.radius, rng=rng)
            self._surface = (pts, nrm)
        check_normals(self._surface[1])
        if self.alpha_warmup < 0 or not self.alpha_start > 0 or not self.alpha > 0:
            raise ConfigError("eikonal: alpha and alpha_start must be positive, alpha_warmup >= 0")
        self._alpha_now = self.alpha_start if self.alpha_warmup else self.alpha

    def on_step(self, it):
        # a near-zero initial field has random signs; a large alpha freezes them into folds
        self._alpha_now = self.alpha_start if it < self.alpha_warmup else self.alpha

    def sample(self, model, rng):
        pts, nrm = self._surface
        surf = query_batch(pts, model.query_table(), {"normal": nrm})
        cached = getattr(self, "_surf_batch", None)
        if cached is not None and cached.table is surf.table:
            surf = cached  # fixed set: keep the cached operators
        self._surf_batch = surf
        dom = stratified_sample(self.sample_res, rng, model.table(self.sample_res), self.d)
        return {"domain": dom, "surface": surf}

    def loss_term(self, name, u, batch):
        if name == "surface":
            return eikonal_surface_terms(u, batch)
        return eikonal_domain_terms(u, batch, self._alpha_now)

    def sdf(self, coords):
        return ref.sphere_sdf(coords, np.zeros(self.d), self.radius) if self.d == 3 else ref.circle_sdf(coords, (0.0, 0.0), self.radius)

    def oracle(self, coords):

        xs = jet_seed(coords, self.d)
        r2 = None
        for x in xs:
            r2 = x * x if r2 is None else r2 + x * x
        return (jet_sqrt(r2) - self.radius).map(lambda a: a[..., None])

    def metrics(self, model):
        res = self.eval_res if self.d == 2 else min(self.eval_res, 64)
        c = self.eval_coords(res)
        j = model.evaluate_points(c)
        u = j.value[:, 0]
        gn = np.linalg.norm(j.grad[:, :, 0], axis=0)
        inside = np.max(np.abs(c), axis=1) <= self.inner
        out = {
            "sdf_mae": float(np.mean(np.abs(u[inside] - self.sdf(c[inside])))) if self.pointcloud is None else float("nan"),
            "eikonal_dev": float(np.mean(np.abs(gn - 1.0))),
        }
        return out

    def renders(self, model):
        r = self.eval_res
        if self.d == 2:
            return {"sdf": model.predict(self.eval_coords()).reshape(r, r).T[::-1]}
        c2 = regular_grid(r, d=2).coords
        c = np.concatenate([c2, np.zeros((len(c2), 1))], axis=1)
        return {"sdf_slice_z0": model.predict(c).reshape(r, r).T[::-1]}


# above this many pixels the per-step operators are rebuilt instead of kept (about 1.5 GB at 2^17)
OPS_CACHE_PIXELS = 1 << 17


@dataclass
class ImageProblem(Problem):
    """Poisson reconstruction (from gradients or Laplacian) or direct fit of an image.

    The image is sampled at pixel centres; pixel (i, j) sits at
    ``(-1 + 2 (j + 0.5) / W, -1 + 2 (i + 0.5) / H)``. Supervision uses pixel
    units, so the model's derivatives are rescaled by ``W / 2`` and ``H / 2``.
    The model represents ``target_scale * image``.
    """

    image: np.ndarray | None = None
    target_scale: float = 1.0
    mode: str = "fit"

    def __post_init__(self):
        if self.image is None:
            raise ConfigError(f"{self.mode}: an input image is required")
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim == 2:
            img = img[..., None]
        self.image = img
        H, W, C = img.shape
        self.kind = {"grad": "poisson_grad", "lapl": "poisson_lapl", "fit": "fit"}[self.mode]
        self.d, self.m = 2, C
        self.scales = (W / 2.0, H / 2.0)
        self.primary = self.primary or "psnr"
        if not self.target_scale > 0:
            raise ConfigError("poisson.scale must be positive")
        super().__post_init__()
        self._payload = self._targets()
        self._batch = None

    def _targets(self):
        img = self.image
        H, W, C = img.shape
        if self.mode == "grad":
            g = np.stack([np.stack(dio.sobel_gradients(img[..., c], self.target_scale), axis=-1) for c in range(C)], axis=2)
            return {"grad": g.reshape(H * W, C, 2)}
        if self.mode == "lapl":
            lp = np.stack([dio.laplace_filter(img[..., c], self.target_scale) for c in range(C)], axis=-1)
            return {"lapl": lp.reshape(H * W, C)}
        return {"target": (img * self.target_scale).reshape(H * W, C)}

    def pixel_coords(self):
        H, W, _ = self.image.shape
        return dio.pixel_coords(H, W)

    def sample(self, model, rng):
        H, W, _ = self.image.shape
        table = model.table((W, H))
        if self._batch is None or self._batch.table is not table:
            c = self.pixel_coords()
            keep = len(c) <= OPS_CACHE_PIXELS
            self._batch = SampleBatch(c, table.cells_of(c), table, dict(self._payload), keep_ops=keep)
        return {"pixels": self._batch}

    def loss_term(self, name, u, batch):
        u = to_physical(u, self.scales)
        if self.mode == "grad":
            return poisson_grad_loss(u, batch)
        if self.mode == "lapl":
            return poisson_lapl_loss(u, batch)
        return signal_fit_loss(u, batch)

    def reconstruction(self, model):
        H, W, C = self.image.shape
        return model.predict(self.pixel_coords()).reshape(H, W, C) / self.target_scale

    def metrics(self, model):
        rec = self.reconstruction(model)
        align = self.mode != "fit"
        return {"psnr": dio.psnr(rec, self.image, dc_align=align), "mae": dio.mae(rec - (np.mean(rec - self.image) if align else 0.0), self.image)}

    def renders(self, model):
        rec = self.reconstruction(model)
        if self.mode != "fit":
            rec = rec - np.mean(rec - self.image)
        return {"image": np.clip(rec, 0.0, 1.0)}
