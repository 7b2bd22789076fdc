"""Closed-form reference solutions used for metrics and oracle checks."""
from __future__ import annotations

import math

import numpy as np

from .diffcore import Jet2, jet_exp, jet_mul, jet_sin, jet_sqrt, jet_unary
from .errors import ConfigError, NumericDomainError

# ---------------------------------------------------------------------------
# Bessel functions of order zero: Cephes rational approximations
# (S. L. Moshier, Cephes Math Library 2.1). Absolute error ~1e-15.
# ---------------------------------------------------------------------------

_PP = [
    7.96936729297347051624e-4, 8.28352392107440799803e-2, 1.23953371646414299388e0,
    5.44725003058768775090e0, 8.74716500199817011941e0, 5.30324038235394892183e0,
    9.99999999999999997821e-1,
]
_PQ = [
    9.24408810558863637013e-4, 8.56288474354474431428e-2, 1.25352743901058953537e0,
    5.47097740330417105182e0, 8.76190883237069594232e0, 5.30605288235394617618e0,
    1.00000000000000000218e0,
]
_QP = [
    -1.13663838898469149931e-2, -1.28252718670509318512e0, -1.95539544257735972385e1,
    -9.32060152123768231369e1, -1.77681167980488050595e2, -1.47077505154951170175e2,
    -5.14105326766599330220e1, -6.05014350600728481186e0,
]
_QQ = [
    6.43178256118178023184e1, 8.56430025976980587198e2, 3.88240183605401609683e3,
    7.24046774195652478189e3, 5.93072701187316984827e3, 2.06209331660327847417e3,
    2.42005740240291393179e2,
]
_RP = [
    -4.79443220978201773821e9, 1.95617491946556577543e12, -2.49248344360967716204e14,
    9.70862251047306323952e15,
]
_RQ = [
    4.99563147152651017219e2, 1.73785401676374683123e5, 4.84409658339962045305e7,
    1.11855537045356834862e10, 2.11277520115489217587e12, 3.10518229857422583814e14,
    3.18121955943204943306e16, 1.71086294081043136091e18,
]
_YP = [
    1.55924367855235737965e4, -1.46639295903971606143e7, 5.43526477051876500413e9,
    -9.82136065717911466409e11, 8.75906394395366999549e13, -3.46628303384729719441e15,
    4.42733268572569800351e16, -1.84950800436986690637e16,
]
_YQ = [
    1.04128353664259848412e3, 6.26107330137134956842e5, 2.68919633393814121987e8,
    8.64002487103935000337e10, 2.02979612750105546709e13, 3.17157752842975028269e15,
    2.50596256172653059228e17,
]
_DR1 = 5.78318596294678452118e0
_DR2 = 3.04712623436620863991e1
_SQ2OPI = 7.9788456080286535587989e-1
_PIO4 = 7.85398163397448309616e-1
_TWOOPI = 6.36619772367581343075535e-1


def _polevl(x, coef):
    ans = np.full_like(x, coef[0])
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def _p1evl(x, coef):
    ans = x + coef[0]
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def _large_arg0(x):
    w = 5.0 / x
    z = w * w
    p = _polevl(z, _PP) / _polevl(z, _PQ)
    q = _polevl(z, _QP) / _p1evl(z, _QQ)
    xn = x - _PIO4
    return p, w * q, xn


def bessel_j0(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.empty_like(x)
    tiny = x < 1e-5
    small = (x <= 5.0) & ~tiny
    big = x > 5.0
    out[tiny] = 1.0 - x[tiny] ** 2 / 4.0
    z = x[small] ** 2
    out[small] = (z - _DR1) * (z - _DR2) * _polevl(z, _RP) / _p1evl(z, _RQ)
    xb = x[big]
    p, wq, xn = _large_arg0(xb)
    out[big] = (p * np.cos(xn) - wq * np.sin(xn)) * _SQ2OPI / np.sqrt(xb)
    return out


def bessel_y0(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise NumericDomainError("bessel_y0", "requires x > 0")
    out = np.empty_like(x)
    small = x <= 5.0
    xs = x[small]
    z = xs * xs
    out[small] = _polevl(z, _YP) / _p1evl(z, _YQ) + _TWOOPI * np.log(xs) * bessel_j0(xs)
    xb = x[~small]
    p, wq, xn = _large_arg0(xb)
    out[~small] = (p * np.sin(xn) + wq * np.cos(xn)) * _SQ2OPI / np.sqrt(xb)
    return out


# ---------------------------------------------------------------------------
# order one (needed only for derivatives): ascending series below 12,
# Hankel asymptotic expansion above.
# ---------------------------------------------------------------------------

_EULER = 0.57721566490153286061
_SWITCH = 12.0


def _j1_series(x):
    h = 0.5 * x
    term = h.copy()
    total = term.copy()
    for k in range(1, 60):
        term = term * (-(h * h)) / (k * (k + 1))
        total = total + term
    return total


def _y1_series(x):
    h = 0.5 * x
    # psi(k+1) + psi(k+2) for k = 0, 1, ...
    term = h.copy()  # (x/2)^(2k+1) (-1)^k / (k! (k+1)!)
    harm_k, harm_k1 = 0.0, 1.0
    s = term * (2 * -_EULER + harm_k + harm_k1)
    for k in range(1, 60):
        term = term * (-(h * h)) / (k * (k + 1))
        harm_k += 1.0 / k
        harm_k1 += 1.0 / (k + 1)
        s = s + term * (2 * -_EULER + harm_k + harm_k1)
    return -2.0 / (math.pi * x) + _TWOOPI * np.log(h) * _j1_series(x) - s / math.pi


def _asymptotic(n, x):
    mu = 4.0 * n * n
    p = np.ones_like(x)
    q = np.zeros_like(x)
    a = np.ones_like(x)
    for k in range(1, 40):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if np.all(np.abs(a) < 1e-17):
            break
        if k % 2:
            q = q + (-1) ** (k // 2) * a
        else:
            p = p + (-1) ** (k // 2) * a
    chi = x - (0.5 * n + 0.25) * math.pi
    amp = np.sqrt(2.0 / (math.pi * x))
    return amp * (p * np.cos(chi) - q * np.sin(chi)), amp * (p * np.sin(chi) + q * np.cos(chi))


def bessel_j1(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < _SWITCH
    out[small] = _j1_series(ax[small])
    out[~small] = _asymptotic(1, ax[~small])[0]
    return np.sign(x) * out


def bessel_y1(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise NumericDomainError("bessel_y1", "requires x > 0")
    out = np.empty_like(x)
    small = x < _SWITCH
    out[small] = _y1_series(x[small])
    out[~small] = _asymptotic(1, x[~small])[1]
    return out


def hankel1_0(x):
    """H_0^(1)(x) = J_0(x) + i Y_0(x)."""
    return bessel_j0(x) + 1j * bessel_y0(x)


# ---------------------------------------------------------------------------
# reference fields
# ---------------------------------------------------------------------------


def heat_analytic(x, t, alpha=1.0):
    """exp(-alpha pi^2 t) sin(pi x)."""
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    x, t = np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)
    return np.exp(-alpha * math.pi**2 * t) * np.sin(math.pi * x)


def advection_analytic(x, t, a, mu=-1.5, s=0.1):
    """Gaussian bump exp(-|x - mu - a t|^2 / (2 s^2)) translated with velocity a.

    ``x`` has shape ``(..., dim)`` (or is scalar-per-point in 1D); ``a`` and
    ``mu`` are length-``dim`` vectors or scalars.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if a.ndim == 0:
        r2 = (x - mu - a * t) ** 2
    else:
        r2 = ((x - mu - a * np.expand_dims(t, -1)) ** 2).sum(-1)
    return np.exp(-r2 / (2.0 * s * s))


def circle_sdf(x, center=(0.0, 0.0), radius=0.5):
    if radius <= 0:
        raise ConfigError("radius must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.linalg.norm(x - np.asarray(center), axis=-1) - radius


def sphere_sdf(x, center=(0.0, 0.0, 0.0), radius=0.5):
    return circle_sdf(x, center, radius)


def sdf_normals(x, center):
    v = np.asarray(x, dtype=np.float64) - np.asarray(center)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_sphere(n, d, center=None, radius=0.5, rng=None):
    """Points and outward normals on a circle (d=2, evenly spaced) or sphere."""
    center = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)
    if d == 2:
        th = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        nrm = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        # Fibonacci sphere
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        rr = np.sqrt(1.0 - z * z)
        nrm = np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=-1)
    return center + radius * nrm, nrm


def helmholtz_green(x, omega, r_min=0.05):
    """Outgoing free-space field (i/4) H_0^(1)(omega |x|) as (real, imag)."""
    if omega <= 0:
        raise ConfigError("omega must be positive")
    x = np.asarray(x, dtype=np.float64)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= r_min):
        raise NumericDomainError("helmholtz_green", f"|x| must exceed r_min={r_min}")
    z = omega * r
    return -0.25 * bessel_y0(z), 0.25 * bessel_j0(z)


# ---------------------------------------------------------------------------
# jets of the reference fields (closed form, for residual checks)
# ---------------------------------------------------------------------------


def heat_jet(x: Jet2, t: Jet2, alpha=1.0) -> Jet2:
    return jet_mul(jet_exp(t * (-alpha * math.pi**2)), jet_sin(x * math.pi))


def advection_jet(xs: list[Jet2], t: Jet2, a, mu, s) -> Jet2:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    mu = np.broadcast_to(np.atleast_1d(np.asarray(mu, dtype=np.float64)), a.shape)
    r2 = None
    for k, xk in enumerate(xs):
        e = xk - t * a[k] - mu[k]
        e2 = jet_mul(e, e)
        r2 = e2 if r2 is None else r2 + e2
    return jet_exp(r2 * (-1.0 / (2.0 * s * s)))


def helmholtz_green_jet(xs: list[Jet2], omega) -> tuple[Jet2, Jet2]:
    """Real and imaginary jets of (i/4) H_0^(1)(omega r)."""
    r2 = jet_mul(xs[0], xs[0]) + jet_mul(xs[1], xs[1])
    r = jet_sqrt(r2)
    z = np.asarray(r.value) * omega
    j0, y0, j1, y1 = bessel_j0(z), bessel_y0(z), bessel_j1(z), bessel_y1(z)
    # d/dr C0(w r) = -w C1 ; d2/dr2 = -w^2 (C0 - C1 / (w r))
    re = jet_unary(r, -0.25 * y0, 0.25 * omega * y1, 0.25 * omega**2 * (y0 - y1 / z))
    im = jet_unary(r, 0.25 * j0, -0.25 * omega * j1, -0.25 * omega**2 * (j0 - j1 / z))
    return re, im
