import numpy as np
import pytest

from dinf.errors import ConfigError, InternalError, ParseError, ResourceError
from dinf.grid import (
    CHECKPOINT_MAGIC,
    INIT_RANGE,
    check_grid_shape,
    create_multigrid,
    load_checkpoint,
    node_coord,
    save_checkpoint,
)


def test_resolutions_halve_per_scale():
    mg = create_multigrid(64, 3, 2, 2, seed=1)
    assert [g.n for g in mg.grids] == [64, 32, 16]
    assert [g.n_nodes for g in mg.grids] == [65**2, 33**2, 17**2]
    assert mg.n_params == 2 * (65**2 + 33**2 + 17**2) == len(mg.store)
    assert mg.out_width == 6


def test_init_range_and_seed():
    a = create_multigrid(16, 2, 3, 1, seed=5)
    b = create_multigrid(16, 2, 3, 1, seed=5)
    c = create_multigrid(16, 2, 3, 1, seed=6)
    assert np.abs(a.store.data).max() <= INIT_RANGE
    np.testing.assert_array_equal(a.store.data, b.store.data)
    assert not np.array_equal(a.store.data, c.store.data)


def test_node_coord_endpoints_exact():
    g = create_multigrid(6, 1, 1, 1).grids[0]
    assert node_coord(g, 0) == -1.0
    assert node_coord(g, 6) == 1.0
    assert node_coord(g, 3) == 0.0
    with pytest.raises(InternalError):
        node_coord(g, 7)


def test_linear_index_row_major():
    g = create_multigrid(4, 1, 1, 3).grids[0]
    assert g.linear_index([1, 2, 3]) == 1 * 25 + 2 * 5 + 3
    with pytest.raises(InternalError):
        g.linear_index([0, 0, 5])


@pytest.mark.parametrize(
    "args,err",
    [
        ((48, 6, 2, 2), ConfigError),  # 48 not divisible by 32
        ((64, 3, 2, 4), ConfigError),
        ((64, 0, 2, 2), ConfigError),
        ((2048, 1, 4, 3), ResourceError),
    ],
)
def test_shape_errors(args, err):
    with pytest.raises(err):
        check_grid_shape(*args)


def test_checkpoint_roundtrip(tmp_path):
    mg = create_multigrid(8, 2, 2, 2, seed=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, mg.store, {"n_params": len(mg.store), "tag": "x"})
    header, params = load_checkpoint(path)
    assert header["tag"] == "x"
    np.testing.assert_array_equal(params, mg.store.data)


def test_checkpoint_corruption(tmp_path):
    mg = create_multigrid(4, 1, 1, 1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, mg.store, {"n_params": len(mg.store)})
    raw = path.read_bytes()
    (tmp_path / "magic").write_bytes(b"XXXXX" + raw[5:])
    (tmp_path / "trunc").write_bytes(raw[:-3])
    (tmp_path / "count").write_bytes(raw[:-8])
    for name, msg in [("magic", "magic"), ("trunc", "multiple of 8"), ("count", "expected")]:
        with pytest.raises(ParseError, match=msg):
            load_checkpoint(tmp_path / name)
    assert raw.startswith(CHECKPOINT_MAGIC)
