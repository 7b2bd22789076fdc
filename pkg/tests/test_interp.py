import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dinf.errors import ConfigError, InternalError
from dinf.grid import create_multigrid
from dinf.interp import (
    RbfConfig,
    apply_weights,
    build_neighbor_table,
    interpolate,
    interpolation_weights,
    linear_weights,
    query_batch,
    rbf_weight,
    regular_grid,
    stratified_sample,
)


def _weights(n, d, pts, res=None, eps=1.0, rho=3, separable=True):
    mg = create_multigrid(n, 1, 1, d)
    table = build_neighbor_table(n if res is None else res, mg, rho)
    return mg, interpolation_weights(mg.grids[0], query_batch(pts, table), RbfConfig(eps, rho), separable)


def test_rbf_weight_values():
    assert rbf_weight(0.0, 1.0) == 1.0
    assert rbf_weight(9.0, 1.0) == pytest.approx(1.2341e-4, rel=1e-4)
    assert rbf_weight(1.0, 2.0) == pytest.approx(0.018316, rel=1e-4)


def test_rbf_config_validation():
    with pytest.raises(ConfigError):
        RbfConfig(0.0, 3)
    with pytest.raises(ConfigError):
        RbfConfig(1.0, 0)
    with pytest.warns(UserWarning, match="tail weight"):
        RbfConfig(0.5, 2)
    assert RbfConfig(1.0, 3).tail_weight == pytest.approx(np.exp(-9))


def test_neighbor_counts_1d():
    mg = create_multigrid(8, 1, 1, 1)
    t = build_neighbor_table(8, mg, 3)
    np.testing.assert_array_equal(t.nodes([0], 0)[:, 0], [0, 1, 2, 3])
    assert len(t.nodes([4], 0)) == 6
    assert len(t.nodes([7], 0)) == 4


def test_neighbor_counts_2d_and_bounds():
    mg = create_multigrid(16, 2, 1, 2)
    t = build_neighbor_table(16, mg, 3)
    assert len(t.nodes([8, 8], 0)) == 36
    for s, g in enumerate(mg.grids):
        for c in [(0, 0), (15, 3), (7, 15)]:
            nodes = t.nodes(c, s)
            assert 0 < len(nodes) <= 36
            assert nodes.min() >= 0 and nodes.max() <= g.n


def test_table_rejects_bad_res():
    with pytest.raises(ConfigError):
        build_neighbor_table(0, create_multigrid(4, 1, 1, 1), 3)


def test_stratified_one_per_cell():
    rng = np.random.default_rng(0)
    b = stratified_sample((16, 8), rng)
    assert len(b) == 128
    cells = np.floor((b.coords + 1) / 2 * np.array([16, 8])).astype(int)
    np.testing.assert_array_equal(cells, b.cells)
    b1 = stratified_sample(1, np.random.default_rng(0))
    assert len(b1) == 1 and -1 < b1.coords[0, 0] < 1
    again = stratified_sample((16, 8), np.random.default_rng(0))
    np.testing.assert_array_equal(b.coords, again.coords)
    with pytest.raises(ConfigError):
        stratified_sample((4, 0), rng)


def test_regular_grid_is_cell_centres():
    b = regular_grid(4, d=1)
    np.testing.assert_allclose(b.coords[:, 0], [-0.75, -0.25, 0.25, 0.75])


def test_stratified_full_size():
    assert len(stratified_sample((256, 256), np.random.default_rng(1))) == 65536


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_partition_of_unity(d, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(50, d))
    _, sw = _weights(8, d, pts)
    w = sw.weights
    np.testing.assert_allclose(w.value.sum(-1), 1.0, atol=1e-12)
    assert np.abs(w.grad.sum(-1)).max() < 1e-9
    assert np.abs(w.hess.sum(-1)).max() < 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
def test_separable_matches_direct(d):
    pts = np.random.default_rng(d).uniform(-1, 1, size=(40, d))
    _, a = _weights(8, d, pts, res=12)
    _, b = _weights(8, d, pts, res=12, separable=False)
    np.testing.assert_array_equal(a.index, b.index)
    for x, y in zip((a.weights.value, a.weights.grad, a.weights.hess), (b.weights.value, b.weights.grad, b.weights.hess)):
        np.testing.assert_allclose(x, y, atol=1e-14 * max(1.0, np.abs(y).max()))


def test_constant_features_give_constant_field():
    mg = create_multigrid(8, 2, 3, 2)
    for name in mg.store.names():
        mg.store.view(name)[:] = 2.5
    batch = query_batch(np.random.default_rng(0).uniform(-1, 1, (30, 2)), build_neighbor_table(8, mg, 3))
    out = interpolate(mg, mg.store.arrays(), batch, RbfConfig())
    np.testing.assert_allclose(out.value, 2.5, rtol=1e-13)
    assert np.abs(out.grad).max() < 1e-11 and np.abs(out.hess).max() < 1e-9
    assert out.value.shape == (30, 6)


def test_symmetric_weights_at_node():
    # node 4 sits at x = 0; pair nodes 4 - k and 4 + k
    _, sw = _weights(8, 1, np.array([[0.0]]))
    w = dict(zip(sw.index[0].tolist(), sw.weights.value[0]))
    for k in (1, 2):
        assert w[4 - k] == pytest.approx(w[4 + k], rel=1e-14)


def test_dense_rbf_oracle_1d():
    # untruncated normalised RBF over every node of an N=4 grid
    n = 4
    rng = np.random.default_rng(7)
    mg = create_multigrid(n, 1, 1, 1)
    F = rng.normal(size=(n + 1, 1))
    mg.store.view("grid0")[:] = F
    xs = np.linspace(-0.99, 0.99, 41)
    nodes = np.linspace(-1, 1, n + 1)
    r = (xs[:, None] - nodes) * n / 2
    phi = np.exp(-r * r)
    dphi = -2 * r * phi * n / 2
    S, S1 = phi.sum(1), dphi.sum(1)
    f = phi @ F[:, 0] / S
    df = (dphi @ F[:, 0] * S - phi @ F[:, 0] * S1) / S**2
    out = interpolate(mg, mg.store.arrays(), query_batch(xs[:, None], build_neighbor_table(n, mg, 3)), RbfConfig(1.0, 3))
    scale_f, scale_g = np.abs(f).max(), np.abs(df).max()
    assert np.abs(out.value[:, 0] - f).max() <= 2e-3 * scale_f
    assert np.abs(out.grad[0, :, 0] - df).max() <= 2e-3 * scale_g


def test_interpolate_derivatives_fd():
    mg = create_multigrid(8, 2, 2, 2, seed=0)
    mg.store.data[:] = np.random.default_rng(1).normal(size=len(mg.store))
    table = build_neighbor_table(8, mg, 3)
    x0 = np.array([[0.13, -0.41]])
    cells = table.cells_of(x0)

    def f(x):
        from dinf.interp import SampleBatch
        return interpolate(mg, mg.store.arrays(), SampleBatch(np.atleast_2d(x), cells, table), RbfConfig()).value[0]

    j = interpolate(mg, mg.store.arrays(), query_batch(x0, table), RbfConfig())
    h = 1e-6
    for k in range(2):
        e = np.zeros((1, 2))
        e[0, k] = h
        fd = (f(x0 + e) - f(x0 - e)) / (2 * h)
        np.testing.assert_allclose(j.grad[k, 0], fd, rtol=1e-6, atol=1e-8 * np.abs(fd).max())
    h = 1e-4
    e = np.array([[h, 0.0]])
    fd2 = (f(x0 + e) - 2 * f(x0) + f(x0 - e)) / h**2
    np.testing.assert_allclose(j.hess[0, 0], fd2, rtol=1e-4, atol=1e-4 * np.abs(fd2).max())


def test_linear_kernel_control():
    mg = create_multigrid(8, 1, 1, 1)
    g = mg.grids[0]
    F = np.random.default_rng(2).normal(size=(9, 1))
    xs = np.random.default_rng(3).uniform(-1, 1, (50, 1))
    out = apply_weights(linear_weights(g, xs), F)
    assert np.abs(out.hess).max() == 0.0
    # gradient jumps at a node
    node = 2 * 3 / 8 - 1
    d = 1e-7
    left = apply_weights(linear_weights(g, [[node - d]]), F).grad[0, 0, 0]
    right = apply_weights(linear_weights(g, [[node + d]]), F).grad[0, 0, 0]
    expected = (F[4, 0] - 2 * F[3, 0] + F[2, 0]) * 4
    assert right - left == pytest.approx(expected, rel=1e-5)


def test_rbf_smooth_across_cell_boundary():
    mg = create_multigrid(8, 1, 1, 1)
    F = np.random.default_rng(4).normal(size=(9, 1))
    mg.store.view("grid0")[:] = F
    table = build_neighbor_table(8, mg, 3)
    d = 1e-6
    b = np.array([-0.75, -0.25, 0.0, 0.5])[:, None]
    lo = interpolate(mg, mg.store.arrays(), query_batch(b - d / 2, table), RbfConfig())
    hi = interpolate(mg, mg.store.arrays(), query_batch(b + d / 2, table), RbfConfig())
    assert np.any(table.cells_of(b - d / 2) != table.cells_of(b + d / 2))
    C = np.abs(lo.grad).max() * 2
    assert np.abs(hi.value - lo.value).max() <= C * d + 2e-3 * np.abs(F).max()


def test_interpolate_errors():
    mg = create_multigrid(4, 1, 1, 1)
    with pytest.raises(InternalError):
        interpolate(mg, mg.store.arrays(), query_batch(np.zeros((0, 1)), build_neighbor_table(4, mg, 3)), RbfConfig())
    b = stratified_sample(4, np.random.default_rng(0))
    with pytest.raises(InternalError):
        interpolation_weights(mg.grids[0], b, RbfConfig())


def test_batch_split_keeps_norm():
    mg = create_multigrid(4, 1, 1, 1)
    b = stratified_sample(10, np.random.default_rng(0), build_neighbor_table(10, mg, 3))
    parts = b.split(3)
    assert sum(len(p) for p in parts) == 10
    assert all(p.norm == 10 for p in parts)
    assert b.check_cells()


def test_operator_cache_can_be_disabled():
    from dinf.field import FieldModel
    from dinf.interp import SampleBatch, batch_operators

    m = FieldModel.create(2, 1, 8, 2, 1)
    c = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    t = m.query_table()
    kept = SampleBatch(c, t.cells_of(c), t)
    batch_operators(m.multigrid, kept, m.rbf)
    assert kept.cache
    lean = SampleBatch(c, t.cells_of(c), t, keep_ops=False)
    batch_operators(m.multigrid, lean, m.rbf)
    assert not lean.cache and not lean.split(2)[0].keep_ops
    np.testing.assert_array_equal(m.evaluate(lean).value, m.evaluate(kept).value)
