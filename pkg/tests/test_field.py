import numpy as np
import pytest

from dinf.diffcore import Jet2, ParamStore, Tape, jet_seed, jet_sin, reverse_grad
from dinf import diffcore as dc
from dinf.errors import ConfigError, DivergedError
from dinf.field import (
    BoundarySpec,
    Constraint,
    FieldModel,
    boundary_blend,
    box_distance,
    build_decoder,
    decode,
)
from dinf.interp import query_batch


def _fd_points(model, x0):
    table = model.query_table()
    cells = table.cells_of(x0)
    from dinf.interp import SampleBatch

    def f(x):
        return model.evaluate(SampleBatch(x, cells, table)).value

    return f


def test_decoder_constant_output():
    store = ParamStore()
    dec = build_decoder(4, 2, store, "mlp", hidden=(8,))
    for name in store.names():
        store.view(name)[:] = 0.0
    store.view("dec1.b")[:] = [1.5, -2.0]
    feats = dc.Jet2(np.random.default_rng(1).normal(size=(5, 4)), np.ones((2, 5, 4)), np.ones((3, 5, 4)))
    out = decode(feats, dec, store.arrays())
    np.testing.assert_allclose(out.value, np.tile([1.5, -2.0], (5, 1)))
    assert not np.asarray(out.grad).any() and not np.asarray(out.hess).any()


def test_decoder_xavier_init():
    store = ParamStore()
    dec = build_decoder(30, 20, store, "linear", seed=3)
    w = store.view(dec.segments[0][0])
    assert np.abs(w).max() <= np.sqrt(6 / 50)
    assert not store.view(dec.segments[0][1]).any()


@pytest.mark.parametrize("kw", [{"kind": "conv"}, {"kind": "mlp"}, {"kind": "linear", "activation": "relu"}])
def test_decoder_errors(kw):
    with pytest.raises(ConfigError):
        build_decoder(4, 1, ParamStore(), **kw)


def test_decoder_width_mismatch():
    store = ParamStore()
    dec = build_decoder(4, 1, store)
    with pytest.raises(ConfigError):
        decode(Jet2(np.zeros((2, 3)), np.zeros((1, 2, 3)), np.zeros((1, 2, 3))), dec, store.arrays())


def test_fresh_model_is_small():
    m = FieldModel.create(2, 1, 32, 3, 2, seed=0)
    pts = np.random.default_rng(0).uniform(-1, 1, (500, 2))
    assert np.abs(m.predict(pts)).max() < 1e-2


def test_mlp64_derivatives_vs_fd():
    m = FieldModel.create(2, 1, 16, 2, 2, decoder="mlp", hidden=(64,), activation="tanh", seed=2)
    m.store.data[:] = np.random.default_rng(3).normal(size=len(m.store)) * 0.5
    x0 = np.array([[0.21, -0.37], [-0.6, 0.05]])
    j = m.evaluate(query_batch(x0, m.query_table()))
    f = _fd_points(m, x0)
    h = 1e-6
    for k in range(2):
        e = np.zeros_like(x0)
        e[:, k] = h
        fd = (f(x0 + e) - f(x0 - e)) / (2 * h)
        np.testing.assert_allclose(j.grad[k], fd, rtol=1e-6)


def test_laplacian_matches_fd_divergence():
    m = FieldModel.create(2, 1, 16, 2, 2, decoder="mlp", hidden=(16,), activation="swish", seed=4)
    m.store.data[:] = np.random.default_rng(5).normal(size=len(m.store)) * 0.5
    x0 = np.array([[0.3, 0.1]])
    table = m.query_table()
    cells = table.cells_of(x0)
    from dinf.interp import SampleBatch

    def grad(x):
        return m.evaluate(SampleBatch(x, cells, table)).grad

    h = 1e-5
    div = 0.0
    for k in range(2):
        e = np.zeros_like(x0)
        e[:, k] = h
        div += (grad(x0 + e)[k] - grad(x0 - e)[k]) / (2 * h)
    lap = m.evaluate(SampleBatch(x0, cells, table)).laplacian()
    assert abs(lap[0, 0] - div[0, 0]) <= 1e-3 * max(1.0, abs(div[0, 0]))


def test_box_distance():
    xs = jet_seed(np.array([[0.9, 0.0], [-0.2, -0.95]]))
    dist = box_distance(xs, (0, 1))
    np.testing.assert_allclose(dist.value, [0.1, 0.05])
    np.testing.assert_allclose(dist.grad[:, 0], [-1, 0])
    np.testing.assert_allclose(dist.grad[:, 1], [0, 1])


def test_blend_exact_on_boundary_and_identity_far():
    xs = jet_seed(np.array([[1.0, 0.3], [0.0, 0.0]]))
    raw = Jet2(np.array([[5.0], [5.0]]), np.ones((2, 2, 1)), np.ones((3, 2, 1)))
    spec = BoundarySpec([Constraint("box", 0.05, (0,), lambda xs: xs[1] * 2.0)])
    u = boundary_blend(raw, xs, spec)
    assert u.value[0, 0] == 0.6
    assert abs(u.value[1, 0] - 5.0) < np.exp(-1 / 0.05) * 10
    assert boundary_blend(raw, xs, None) is raw


def test_constraint_validation():
    with pytest.raises(ConfigError):
        Constraint("box", 0.0, (0,))
    with pytest.raises(ConfigError):
        Constraint("sphere", 0.1, (0,))
    with pytest.raises(ConfigError):
        Constraint("box", 0.1, (0,), None, 3)


@pytest.mark.parametrize("power", [1, 2])
def test_heat_composition_exact(power):
    h0 = lambda xs: jet_sin(xs[0] * np.pi)  # noqa: E731
    spec = BoundarySpec([Constraint("box", 0.5, (0,), None, power), Constraint("time-origin", 0.5, (1,), h0, power)])
    m = FieldModel.create(2, 1, 16, 2, 2, boundary=spec, seed=1)
    m.store.data[:] = np.random.default_rng(0).normal(size=len(m.store))
    x = np.linspace(-1, 1, 11)
    t0 = m.predict(np.stack([x, -np.ones_like(x)], 1))[:, 0]
    np.testing.assert_allclose(t0, np.sin(np.pi * x), atol=1e-15)
    ts = np.linspace(-1, 1, 11)
    for side in (-1.0, 1.0):
        edge = m.predict(np.stack([np.full_like(ts, side), ts], 1))[:, 0]
        assert np.abs(edge).max() < 1e-15


def test_gradient_touches_only_local_rows():
    m = FieldModel.create(1, 1, 16, 2, 1, seed=0)
    batch = query_batch(np.array([[0.5]]), m.query_table())
    tape = Tape()
    params = m.params(tape)
    u = m.evaluate(batch, params)
    g = reverse_grad(dc.vsum(u.value), m.store)
    for s, grid in enumerate(m.multigrid.grids):
        rows = g[m.store.range(grid.segment)]
        assert 0 < np.count_nonzero(rows) <= 6
    assert np.count_nonzero(g[m.store.range("dec0.W")]) == 2


def test_nonfinite_output_raises():
    m = FieldModel.create(1, 1, 8, 1, 1)
    m.store.data[0] = np.nan
    with pytest.raises(DivergedError, match="sample"):
        m.predict(np.array([[-0.99]]))


def test_save_load_roundtrip(tmp_path):
    m = FieldModel.create(3, 2, 8, 2, 2, decoder="mlp", hidden=(5,), activation="swish", seed=9)
    m.store.data[:] = np.random.default_rng(1).normal(size=len(m.store))
    m.save(tmp_path / "m.bin")
    back = FieldModel.load(tmp_path / "m.bin")
    pts = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    np.testing.assert_array_equal(m.predict(pts), back.predict(pts))


def test_fitted_linear_function_has_unit_gradient():
    from dinf.estimator import GridFieldRegressor

    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (1024, 2))
    reg = GridFieldRegressor(n_max=16, n_scales=3, n_features=2, iters=400, lr=1e-2).fit(X, X[:, 0])
    probe = rng.uniform(-0.7, 0.7, (200, 2))
    g = reg.gradient(probe)
    assert np.abs(np.median(g, axis=0) - [1.0, 0.0]).max() < 0.1
    lap = reg.model_.evaluate_points(probe).laplacian()
    assert np.median(np.abs(lap)) < 1.0
