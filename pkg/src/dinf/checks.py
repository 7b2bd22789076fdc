"""Finite-difference validation of jet derivatives and loss parameter gradients.

Perturbed points reuse the lattice cell of the base point, so both sides see
the same truncated neighbourhood and the comparison isolates the derivative
code. Relative errors use ``|a - b| / max(|b|, floor)`` where ``floor`` is 1%
of the RMS of that derivative over the points of the model, which keeps
near-zero entries from dominating.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tape, hess_index, leaves_on, reverse_grad
from .field import BoundarySpec, Constraint, FieldModel
from .interp import SampleBatch, query_batch, stratified_sample
from . import pde

FIRST_TOL = 1e-5
SECOND_TOL = 1e-3
PARAM_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float
    count: int

    @property
    def passed(self) -> bool:
        return bool(self.max_err <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34s} max rel err {self.max_err:.3e}  (tol {self.tol:.0e}, n={self.count})"


def _rel(a, b, scale):
    floor = 1e-2 * scale if scale > 0 else 1e-12
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


def random_model(d: int, rng: np.random.Generator, m: int | None = None) -> FieldModel:
    """Small model with O(1) random parameters and a random architecture."""
    s = int(rng.integers(1, 4))
    n_max = int(rng.choice([4, 8, 16])) * 2 ** (s - 1)
    f = int(rng.integers(1, 4))
    m = int(rng.integers(1, 3)) if m is None else m
    mlp = bool(rng.random() < 0.5)
    act = str(rng.choice(["tanh", "swish"]))
    cons = []
    if d >= 2 and rng.random() < 0.5:
        cons.append(Constraint("box", float(rng.uniform(0.05, 0.5)), (0,), None, int(rng.integers(1, 3))))
        cons.append(
            Constraint("time-origin", float(rng.uniform(0.05, 0.5)), (d - 1,), lambda xs: xs[0] * xs[0], int(rng.integers(1, 3)))
        )
    model = FieldModel.create(
        d, m, n_max, s, f, decoder="mlp" if mlp else "linear", hidden=(int(rng.integers(4, 17)),) if mlp else (),
        activation=act, boundary=BoundarySpec(cons), seed=int(rng.integers(1 << 31)),
    )
    model.store.data[:] += rng.normal(0.0, 0.5, len(model.store))
    return model


def _values(model, coords, cells, table):
    return np.asarray(model.evaluate(SampleBatch(coords, cells, table)).value)


def derivative_check(d: int, n_pairs: int = 1000, seed: int = 0, per_model: int = 50, h1: float = 1e-6, h2: float = 3e-5):
    """Jet gradient/Hessian vs central differences at random (model, point) pairs."""
    rng = np.random.default_rng([seed, d])
    e1, e2 = [], []
    done = 0
    while done < n_pairs:
        k = min(per_model, n_pairs - done)
        model = random_model(d, rng)
        table = model.query_table()
        x = rng.uniform(-0.98, 0.98, size=(k, d))
        cells = table.cells_of(x)
        jet = model.evaluate(SampleBatch(x, cells, table)).numpy()
        f0 = _values(model, x, cells, table)
        g_fd = np.empty_like(jet.grad)
        h_fd = np.empty_like(jet.hess)
        for a in range(d):
            ea = np.zeros(d)
            ea[a] = 1.0
            fp = _values(model, x + h1 * ea, cells, table)
            fm = _values(model, x - h1 * ea, cells, table)
            g_fd[a] = (fp - fm) / (2 * h1)
            fp2 = _values(model, x + h2 * ea, cells, table)
            fm2 = _values(model, x - h2 * ea, cells, table)
            h_fd[hess_index(d, a, a)] = (fp2 - 2 * f0 + fm2) / h2**2
            for b in range(a + 1, d):
                eb = np.zeros(d)
                eb[b] = 1.0
                pp = _values(model, x + h2 * (ea + eb), cells, table)
                pm = _values(model, x + h2 * (ea - eb), cells, table)
                mp = _values(model, x - h2 * (ea - eb), cells, table)
                mm = _values(model, x - h2 * (ea + eb), cells, table)
                h_fd[hess_index(d, a, b)] = (pp - pm - mp + mm) / (4 * h2**2)
        for comp, fd, sink in ((jet.grad, g_fd, e1), (jet.hess, h_fd, e2)):
            for j in range(comp.shape[0]):
                for c in range(comp.shape[-1]):
                    scale = float(np.sqrt(np.mean(fd[j, :, c] ** 2)))
                    sink.append(_rel(comp[j, :, c], fd[j, :, c], scale).max())
        done += k
    return (
        CheckResult(f"d={d} first derivatives", float(np.max(e1)), FIRST_TOL, n_pairs),
        CheckResult(f"d={d} second derivatives", float(np.max(e2)), SECOND_TOL, n_pairs),
    )


# ---------------------------------------------------------------------------
# parameter gradients of every loss
# ---------------------------------------------------------------------------


def _loss_cases(rng):
    """(name, model, loss_fn(u, batch), batch) with random targets."""
    cases = []

    def batch_for(model, res):
        b = stratified_sample(res, rng, model.table(res), model.d)
        return b

    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    b.payload["target"] = rng.normal(size=(len(b), 1))
    cases.append(("signal_fit_loss", m, pde.signal_fit_loss, b, (1.0, 1.0)))

    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    b.payload["grad"] = rng.normal(size=(len(b), 1, 2))
    cases.append(("poisson_grad_loss", m, pde.poisson_grad_loss, b, (4.0, 4.0)))

    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    b.payload["lapl"] = rng.normal(size=(len(b), 1))
    cases.append(("poisson_lapl_loss", m, pde.poisson_lapl_loss, b, (4.0, 4.0)))

    for form in ("standard", "paper"):
        hp = pde.HelmholtzParams(omega=5.0, form=form, source_var=0.01)
        m = random_model(2, rng, m=2)
        b = batch_for(m, 8)
        cases.append((f"helmholtz_pml_loss[{form}]", m, lambda u, bb, hp=hp: pde.helmholtz_pml_loss(u, bb, hp), b, (1.0, 1.0)))

    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    cases.append(("eikonal_loss[domain]", m, lambda u, bb: pde.eikonal_domain_terms(u, bb, 3.0), b, (1.0, 1.0)))
    m = random_model(2, rng, m=1)
    ang = rng.uniform(0, 2 * np.pi, 40)
    pts = 0.5 * np.stack([np.cos(ang), np.sin(ang)], 1)
    b = query_batch(pts, m.query_table(), {"normal": pts / 0.5})
    cases.append(("eikonal_loss[surface]", m, pde.eikonal_surface_terms, b, (1.0, 1.0)))

    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    cases.append(("heat_loss", m, lambda u, bb: pde.heat_loss(u, bb, 0.7), b, (1.0, 2.0)))
    m = random_model(2, rng, m=1)
    b = batch_for(m, 8)
    cases.append(("advection_loss[1d]", m, lambda u, bb: pde.advection_loss(u, bb, (0.25,)), b, (2.0, 2.0)))
    cases.append(("advection_loss[1d,l2]", m, lambda u, bb: pde.advection_loss(u, bb, (0.25,), "l2"), b, (2.0, 2.0)))
    cases.append(("heat_loss[l2]", m, lambda u, bb: pde.heat_loss(u, bb, 0.7, "l2"), b, (1.0, 2.0)))
    m = random_model(3, rng, m=1)
    b = batch_for(m, 4)
    cases.append(("advection_loss[2d]", m, lambda u, bb: pde.advection_loss(u, bb, (0.3, -0.2)), b, (1.0, 1.0, 2.0)))
    return cases


def param_grad_check(n_params: int = 20, seed: int = 0, h: float = 1e-5):
    """Reverse-mode gradients of each loss vs central differences on random parameters."""
    rng = np.random.default_rng([seed, 99])
    results = []
    for name, model, fn, batch, scales in _loss_cases(rng):

        def loss_at(params=None):
            u = pde.to_physical(model.evaluate(batch, params), scales)
            return fn(u, batch)

        tape = Tape()
        leaves = leaves_on(model.store, tape)
        g = reverse_grad(loss_at(leaves), model.store, leaves=leaves)
        # FD resolves about 1e-10 in the loss; probe parameters it can see
        touched = np.flatnonzero(np.abs(g) > 1e-4 * np.abs(g).max())
        pick = rng.choice(touched, size=min(n_params, touched.size), replace=False)
        errs = []
        data = model.store.data
        for i in pick:
            old = data[i]
            data[i] = old + h
            lp = float(loss_at())
            data[i] = old - h
            lm = float(loss_at())
            data[i] = old
            fd = (lp - lm) / (2 * h)
            errs.append(abs(g[i] - fd) / max(abs(fd), 1e-8))
        results.append(CheckResult(f"grad {name}", float(max(errs)), PARAM_TOL, len(pick)))
    return results


def run_checks(points: int = 1000, params: int = 20, seed: int = 0, dims=(1, 2, 3)) -> list[CheckResult]:
    out = []
    for d in dims:
        out.extend(derivative_check(d, points, seed))
    out.extend(param_grad_check(params, seed))
    return out
