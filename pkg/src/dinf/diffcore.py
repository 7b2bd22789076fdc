"""Reverse-over-forward differentiation engine.

Spatial derivatives (order <= 2) of field outputs travel forward as
:class:`Jet2` objects. Every array operation touching a :class:`Var` is
recorded on a :class:`Tape`, so one reverse sweep yields the gradient of a
loss with respect to all grid features and decoder weights.

Jet components may be plain ``numpy`` arrays (pure forward evaluation) or
taped ``Var`` objects; the same jet code serves both.

Layout convention: a jet over sample shape ``S`` stores ``value`` with shape
``S``, ``grad`` with shape ``(d,) + S`` and the upper triangle of the Hessian
with shape ``(T,) + S`` where ``T = d(d+1)/2``. Keeping the derivative axis in
front lets ``value`` broadcast against ``grad`` and lets ``jet @ W`` act on all
components at once.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DivergedError, InternalError, NumericDomainError

SINGULAR = 1e-300


# ---------------------------------------------------------------------------
# reverse tape
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Topologically ordered record of array operations.

    Node ``i`` stores its parents (ids ``< i``) and one local partial per
    parent. A partial is either an array (elementwise local derivative,
    broadcast against the upstream gradient) or a callable mapping the
    upstream gradient to the parent's gradient contribution.
    """

    def __init__(self):
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple] = []
        self.shapes: list[tuple[int, ...]] = []

    def __len__(self):
        return len(self.parents)

    def record(self, value, parents=(), partials=()) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        ids = tuple(p.id if isinstance(p, Var) else int(p) for p in parents)
        if len(ids) != len(partials):
            raise InternalError("one partial per parent is required")
        n = len(self.parents)
        for i in ids:
            if not 0 <= i < n:
                raise InternalError(f"unknown parent id {i} (tape length {n})")
        self.parents.append(ids)
        self.partials.append(tuple(partials))
        self.shapes.append(value.shape)
        return Var(self, n, value)

    def leaf(self, value) -> "Var":
        return self.record(value)

    def clear(self):
        self.parents.clear()
        self.partials.clear()
        self.shapes.clear()

    def backward(self, root: "Var") -> list:
        """Return d(root)/d(leaf) indexed by node id (``None`` elsewhere)."""
        if root.tape is not self:
            raise InternalError("root does not belong to this tape")
        grads: list = [None] * (root.id + 1)
        grads[root.id] = np.ones(root.value.shape)
        for i in range(root.id, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for p, partial in zip(self.parents[i], self.partials[i]):
                if callable(partial):
                    c = partial(g)
                elif isinstance(partial, (int, float)) and partial == 1:
                    c = _unbroadcast(g, self.shapes[p])
                else:
                    c = _unbroadcast(g * partial, self.shapes[p])
                grads[p] = c if grads[p] is None else grads[p] + c
            if self.parents[i]:
                grads[i] = None  # interior node: free early, only leaves are returned
        return grads


def tape_record(tape: Tape, value, parents=(), partials=()) -> "Var":
    """Append a node to ``tape``; see :meth:`Tape.record`."""
    return tape.record(value, parents, partials)


class Var:
    """An array-valued node on a :class:`Tape`."""

    __slots__ = ("tape", "id", "value")
    __array_ufunc__ = None  # make ndarray (op) Var defer to Var's reflected op

    def __init__(self, tape: Tape, id: int, value: np.ndarray):
        self.tape = tape
        self.id = id
        self.value = value

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return self.tape.record(-self.value, (self,), (-1.0,))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


# ---------------------------------------------------------------------------
# array primitives (dispatch: taped if any argument is a Var)
# ---------------------------------------------------------------------------


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def value_of(a):
    return a.value if isinstance(a, Var) else a


def add(a, b):
    va, vb = value_of(a), value_of(b)
    out = va + vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps = [(x, 1.0) for x in (a, b) if isinstance(x, Var)]
    return tape.record(out, [p for p, _ in ps], [q for _, q in ps])


def sub(a, b):
    va, vb = value_of(a), value_of(b)
    out = va - vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps, qs = [], []
    if isinstance(a, Var):
        ps.append(a)
        qs.append(1.0)
    if isinstance(b, Var):
        ps.append(b)
        qs.append(-1.0)
    return tape.record(out, ps, qs)


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va * vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps, qs = [], []
    if isinstance(a, Var):
        ps.append(a)
        qs.append(vb)
    if isinstance(b, Var):
        ps.append(b)
        qs.append(va)
    return tape.record(out, ps, qs)


def div(a, b):
    va, vb = value_of(a), value_of(b)
    out = va / vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps, qs = [], []
    if isinstance(a, Var):
        ps.append(a)
        qs.append(1.0 / vb)
    if isinstance(b, Var):
        ps.append(b)
        qs.append(-out / vb)
    return tape.record(out, ps, qs)


def _unary(x, f, df):
    vx = value_of(x)
    out = f(vx)
    if not isinstance(x, Var):
        return out
    return x.tape.record(out, (x,), (df(vx, out),))


def exp(x):
    return _unary(x, np.exp, lambda v, o: o)


def log(x):
    return _unary(x, np.log, lambda v, o: 1.0 / v)


def tanh(x):
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)


def sigmoid(x):
    def f(v):
        return 0.5 * (1.0 + np.tanh(0.5 * v))

    return _unary(x, f, lambda v, o: o * (1.0 - o))


def sin(x):
    return _unary(x, np.sin, lambda v, o: np.cos(v))


def cos(x):
    return _unary(x, np.cos, lambda v, o: -np.sin(v))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o)


def vabs(x):
    # subgradient at 0 is 0
    return _unary(x, np.abs, lambda v, o: np.sign(v))


def power(x, p: float):
    return _unary(x, lambda v: v**p, lambda v, o: p * v ** (p - 1))


def matmul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va @ vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps, qs = [], []
    if isinstance(a, Var):
        sa = va.shape
        ps.append(a)
        qs.append(lambda g: _unbroadcast(g @ np.swapaxes(vb, -1, -2), sa))
    if isinstance(b, Var):
        sb = vb.shape
        ps.append(b)
        qs.append(lambda g: _unbroadcast(np.swapaxes(va, -1, -2) @ g, sb))
    return tape.record(out, ps, qs)


def vsum(x, axis=None, keepdims=False):
    vx = value_of(x)
    out = vx.sum(axis=axis, keepdims=keepdims)
    if not isinstance(x, Var):
        return out
    shape = vx.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return x.tape.record(out, (x,), (back,))


def mean(x, axis=None):
    vx = value_of(x)
    n = vx.size if axis is None else vx.shape[axis]
    return mul(vsum(x, axis), 1.0 / n)


def reshape(x, shape):
    vx = value_of(x)
    out = vx.reshape(shape)
    if not isinstance(x, Var):
        return out
    old = vx.shape
    return x.tape.record(out, (x,), (lambda g: g.reshape(old),))


def expand_dims(x, axis):
    vx = value_of(x)
    return reshape(x, np.expand_dims(vx, axis).shape)


def getitem(x, key):
    vx = value_of(x)
    out = vx[key]
    if not isinstance(x, Var):
        return out
    shape = vx.shape

    if isinstance(key, np.ndarray) and key.ndim == 1 and key.dtype.kind == "i":
        # small integer index along axis 0 (jet hessian pairing); may repeat
        def back(g):
            r = np.zeros(shape)
            for pos, k in enumerate(key):
                r[k] += g[pos]
            return r

    else:

        def back(g):
            r = np.zeros(shape)
            np.add.at(r, key, g)
            return r

    return x.tape.record(out, (x,), (back,))


def take_rows(x, idx):
    """Rows ``x[idx]`` of a 2-D array; gradients scatter back to those rows."""
    vx = value_of(x)
    idx = np.asarray(idx)
    out = vx[idx]
    if not isinstance(x, Var):
        return out
    shape = vx.shape

    def back(g):
        r = np.zeros(shape)
        np.add.at(r, idx, g)
        return r

    return x.tape.record(out, (x,), (back,))


def concatenate(xs: Sequence, axis=-1):
    vs = [value_of(x) for x in xs]
    out = np.concatenate(vs, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    sizes = np.cumsum([v.shape[axis] for v in vs])[:-1]
    ps, qs = [], []
    for i, x in enumerate(xs):
        if isinstance(x, Var):
            ps.append(x)
            qs.append(lambda g, i=i: np.split(g, sizes, axis=axis)[i])
    return tape.record(out, ps, qs)


def where(cond, a, b):
    va, vb = value_of(a), value_of(b)
    out = np.where(cond, va, vb)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ps, qs = [], []
    if isinstance(a, Var):
        ps.append(a)
        qs.append(np.where(cond, 1.0, 0.0))
    if isinstance(b, Var):
        ps.append(b)
        qs.append(np.where(cond, 0.0, 1.0))
    return tape.record(out, ps, qs)


def spmm(A, x):
    """``A @ x`` for a constant scipy sparse matrix ``A`` and dense ``x``."""
    vx = value_of(x)
    out = A @ vx
    if not isinstance(x, Var):
        return out
    return x.tape.record(out, (x,), (lambda g: A.T @ g,))


# ---------------------------------------------------------------------------
# parameter storage
# ---------------------------------------------------------------------------


class ParamStore:
    """One flat float64 vector partitioned into named, shaped segments."""

    def __init__(self):
        self.data = np.zeros(0)
        self.segments: dict[str, tuple[int, tuple[int, ...]]] = {}
        self._bound: tuple[Tape, dict[str, int]] | None = None

    def add(self, name: str, values) -> str:
        if name in self.segments:
            raise InternalError(f"duplicate parameter segment {name!r}")
        values = np.asarray(values, dtype=np.float64)
        self.segments[name] = (self.data.size, values.shape)
        self.data = np.concatenate([self.data, values.ravel()])
        return name

    def __len__(self):
        return self.data.size

    def names(self):
        return list(self.segments)

    def range(self, name) -> slice:
        off, shape = self.segments[name]
        return slice(off, off + int(np.prod(shape, dtype=np.int64)))

    def view(self, name) -> np.ndarray:
        off, shape = self.segments[name]
        return self.data[self.range(name)].reshape(shape)

    def arrays(self) -> dict[str, np.ndarray]:
        """Untaped views (for pure forward evaluation)."""
        return {n: self.view(n) for n in self.segments}

    def bind(self, tape: Tape) -> dict[str, Var]:
        """Put every segment on ``tape`` as a leaf and remember the ids."""
        leaves = {n: tape.leaf(self.view(n)) for n in self.segments}
        self._bound = (tape, {n: v.id for n, v in leaves.items()})
        return leaves

    def segment_of(self, index: int) -> str:
        for name in self.segments:
            r = self.range(name)
            if r.start <= index < r.stop:
                return name
        raise IndexError(index)


def reverse_grad(loss: Var, store: ParamStore, clear: bool = True, leaves: dict | None = None) -> np.ndarray:
    """Gradient of scalar ``loss`` w.r.t. the whole store, as a flat vector.

    Segments not reached by the loss get exact zeros. The tape is cleared
    afterwards unless ``clear`` is False. ``leaves`` (from :func:`leaves_on`)
    replaces the store's own binding, which lets threads use private tapes.
    """
    if leaves is not None:
        tape, ids = loss.tape, {n: v.id for n, v in leaves.items()}
    else:
        if store._bound is None or store._bound[0] is not loss.tape:
            raise InternalError("store is not bound to the loss tape")
        tape, ids = store._bound
    lv = float(np.asarray(loss.value).sum())
    if not np.isfinite(lv):
        raise DivergedError(f"non-finite loss {lv}")
    grads = tape.backward(loss)
    out = np.zeros_like(store.data)
    for name, i in ids.items():
        g = grads[i] if i < len(grads) else None
        if g is not None:
            out[store.range(name)] = np.asarray(g).ravel()
    if clear:
        tape.clear()
        if leaves is None:
            store._bound = None
    return out


def leaves_on(store: ParamStore, tape: Tape) -> dict[str, Var]:
    """Leaves for every segment on a private tape (store binding untouched)."""
    return {n: tape.leaf(store.view(n)) for n in store.segments}


# ---------------------------------------------------------------------------
# second-order jets
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def tri_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index of each stored upper-triangle Hessian entry."""
    iu, ju = np.triu_indices(d)
    return iu.astype(np.intp), ju.astype(np.intp)


def hess_index(d: int, k: int, l: int) -> int:
    """Position of entry (k, l) in the stored upper triangle."""
    if k > l:
        k, l = l, k
    return k * d - k * (k - 1) // 2 + (l - k)


class Jet2:
    """Value with exact gradient and Hessian w.r.t. ``d`` query coordinates."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @property
    def d(self) -> int:
        return value_of(self.grad).shape[0]

    @property
    def shape(self):
        return value_of(self.value).shape

    def __repr__(self):
        return f"Jet2(d={self.d}, shape={self.shape})"

    @classmethod
    def constant(cls, value, d: int) -> "Jet2":
        value = np.asarray(value, dtype=np.float64)
        t = d * (d + 1) // 2
        return cls(value, np.zeros((d,) + value.shape), np.zeros((t,) + value.shape))

    def hess_matrix(self) -> np.ndarray:
        """Full symmetric ``(d, d) + S`` Hessian (numpy values)."""
        d = self.d
        h = value_of(self.hess)
        iu, ju = tri_indices(d)
        full = np.empty((d, d) + h.shape[1:])
        full[iu, ju] = h
        full[ju, iu] = h
        return full

    def second(self, k: int, l: int):
        return self.hess[hess_index(self.d, k, l)]

    def laplacian(self):
        d = self.d
        out = self.hess[hess_index(d, 0, 0)]
        for k in range(1, d):
            out = out + self.hess[hess_index(d, k, k)]
        return out

    def numpy(self) -> "Jet2":
        return Jet2(value_of(self.value), value_of(self.grad), value_of(self.hess))

    def map(self, fn: Callable) -> "Jet2":
        """Apply an operation on trailing (sample) axes to every component."""
        return Jet2(fn(self.value), fn(self.grad), fn(self.hess))

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        lead = (slice(None),) + key
        return Jet2(getitem(self.value, key), getitem(self.grad, lead), getitem(self.hess, lead))

    def sum(self, axis=-1, keepdims=False):
        if axis >= 0:
            raise ValueError("use negative axes for jet reductions")
        return Jet2(vsum(self.value, axis, keepdims), vsum(self.grad, axis, keepdims), vsum(self.hess, axis, keepdims))

    def __matmul__(self, w):
        return Jet2(matmul(self.value, w), matmul(self.grad, w), matmul(self.hess, w))

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(add(self.value, other.value), add(self.grad, other.grad), add(self.hess, other.hess))
        return Jet2(add(self.value, other), self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(mul(self.value, -1.0), mul(self.grad, -1.0), mul(self.hess, -1.0))

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(sub(self.value, other.value), sub(self.grad, other.grad), sub(self.hess, other.hess))
        return Jet2(sub(self.value, other), self.grad, self.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return jet_mul(self, other)
        return Jet2(mul(self.value, other), mul(self.grad, other), mul(self.hess, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return jet_mul(self, jet_reciprocal(other))
        return self * div(1.0, other)

    def __rtruediv__(self, other):
        return jet_reciprocal(self) * other

    def __pow__(self, p):
        return jet_pow(self, p)


def jet_seed(x, d: int | None = None) -> list[Jet2]:
    """Independent-variable jets for coordinates ``x`` of shape ``(..., d)``.

    The k-th jet has value ``x[..., k]``, gradient ``e_k`` and zero Hessian.
    """
    from .errors import ConfigError

    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x[None]
    if d is None:
        d = x.shape[-1]
    if d not in (1, 2, 3) or x.shape[-1] != d:
        raise ConfigError(f"input dimension must be 1, 2 or 3 and match x (got d={d}, x.shape={x.shape})")
    if not np.all(np.isfinite(x)):
        raise ConfigError("coordinates must be finite")
    s = x.shape[:-1]
    t = d * (d + 1) // 2
    jets = []
    for k in range(d):
        g = np.zeros((d,) + s)
        g[k] = 1.0
        jets.append(Jet2(x[..., k].copy(), g, np.zeros((t,) + s)))
    return jets


def jet_mul(a: Jet2, b: Jet2) -> Jet2:
    iu, ju = tri_indices(a.d)
    value = mul(a.value, b.value)
    grad = add(mul(a.grad, b.value), mul(b.grad, a.value))
    cross = add(mul(getitem(a.grad, iu), getitem(b.grad, ju)), mul(getitem(a.grad, ju), getitem(b.grad, iu)))
    hess = add(add(mul(a.hess, b.value), mul(b.hess, a.value)), cross)
    return Jet2(value, grad, hess)


def jet_unary(a: Jet2, f0, f1, f2) -> Jet2:
    """Chain rule for a scalar function with value/first/second derivative
    ``f0, f1, f2`` already evaluated at ``a.value``."""
    iu, ju = tri_indices(a.d)
    grad = mul(a.grad, f1)
    outer = mul(getitem(a.grad, iu), getitem(a.grad, ju))
    hess = add(mul(outer, f2), mul(a.hess, f1))
    return Jet2(f0, grad, hess)


def _check(op, ok, detail=""):
    if not np.all(ok):
        raise NumericDomainError(op, detail)


def jet_exp(a: Jet2) -> Jet2:
    e = exp(a.value)
    return jet_unary(a, e, e, e)


def jet_tanh(a: Jet2) -> Jet2:
    t = tanh(a.value)
    d1 = sub(1.0, mul(t, t))
    d2 = mul(mul(t, d1), -2.0)
    return jet_unary(a, t, d1, d2)


def jet_sigmoid(a: Jet2) -> Jet2:
    s = sigmoid(a.value)
    d1 = mul(s, sub(1.0, s))
    d2 = mul(d1, sub(1.0, mul(s, 2.0)))
    return jet_unary(a, s, d1, d2)


def jet_swish(a: Jet2) -> Jet2:
    # x * sigmoid(x)
    s = sigmoid(a.value)
    ds = mul(s, sub(1.0, s))
    f0 = mul(a.value, s)
    f1 = add(s, mul(a.value, ds))
    f2 = mul(ds, add(2.0, mul(a.value, sub(1.0, mul(s, 2.0)))))
    return jet_unary(a, f0, f1, f2)


def jet_sin(a: Jet2) -> Jet2:
    s = sin(a.value)
    return jet_unary(a, s, cos(a.value), mul(s, -1.0))


def jet_cos(a: Jet2) -> Jet2:
    c = cos(a.value)
    return jet_unary(a, c, mul(sin(a.value), -1.0), mul(c, -1.0))


def jet_sqrt(a: Jet2) -> Jet2:
    _check("sqrt", value_of(a.value) > SINGULAR, "requires value > 1e-300")
    s = sqrt(a.value)
    d1 = div(0.5, s)
    d2 = div(-0.25, mul(s, a.value))
    return jet_unary(a, s, d1, d2)


def jet_reciprocal(a: Jet2) -> Jet2:
    _check("div", np.abs(value_of(a.value)) > SINGULAR, "|denominator| <= 1e-300")
    r = div(1.0, a.value)
    r2 = mul(r, r)
    return jet_unary(a, r, mul(r2, -1.0), mul(mul(r2, r), 2.0))


def jet_div(a: Jet2, b: Jet2) -> Jet2:
    return jet_mul(a, jet_reciprocal(b))


def jet_abs_smooth(a: Jet2, delta: float = 1e-8) -> Jet2:
    """``sqrt(x^2 + delta^2)``: a C-infinity stand-in for ``|x|``."""
    s = sqrt(add(mul(a.value, a.value), delta * delta))
    d1 = div(a.value, s)
    d2 = div(delta * delta, mul(mul(s, s), s))
    return jet_unary(a, s, d1, d2)


def jet_pow(a: Jet2, p: float) -> Jet2:
    v = value_of(a.value)
    if float(p).is_integer():
        if p < 0:
            _check("pow", np.abs(v) > SINGULAR, "negative integer power of 0")
    else:
        _check("pow", v > SINGULAR, "non-integer power needs a positive base")
    f0 = power(a.value, p)
    f1 = mul(power(a.value, p - 1), p) if p != 1 else np.ones_like(v)
    if p in (0, 1):
        f2 = np.zeros_like(v)
    elif p == 2:
        f2 = np.full_like(v, 2.0)
    else:
        f2 = mul(power(a.value, p - 2), p * (p - 1))
    return jet_unary(a, f0, f1, f2)


_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: jet_div(a, b) if isinstance(b, Jet2) else a / b,
    "exp": jet_exp,
    "tanh": jet_tanh,
    "sin": jet_sin,
    "cos": jet_cos,
    "sqrt": jet_sqrt,
    "abs_smooth": jet_abs_smooth,
    "pow": jet_pow,
    "sigmoid": jet_sigmoid,
    "swish": jet_swish,
}


def jet_apply(op: str, *args) -> Jet2:
    """Apply a named primitive to jets (``pow`` takes the exponent second)."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown jet op {op!r}") from None
    return fn(*args)


def jet_concat(jets: Sequence[Jet2], axis=-1) -> Jet2:
    if axis >= 0:
        raise ValueError("use negative axes for jet concatenation")
    return Jet2(
        concatenate([j.value for j in jets], axis),
        concatenate([j.grad for j in jets], axis),
        concatenate([j.hess for j in jets], axis),
    )


def jet_stack_last(jets: Sequence[Jet2]) -> Jet2:
    """Stack jets of equal sample shape along a new trailing axis."""
    return jet_concat([j.map(lambda a: expand_dims(a, -1)) for j in jets], -1)
