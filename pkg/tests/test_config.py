import pytest

from dinf.config import SCHEMA, builtin_configs, parse_config, reference_text, resolve_config
from dinf.errors import ConfigError

BASE = "grid.n_max = 16\ngrid.s = 2\ngrid.f = 2\ntrain.iters = 5\n"


def test_defaults_filled_and_comments():
    cfg = parse_config("# heading\n" + BASE + "train.lr = 1e-2  # inline\n", "heat")
    assert cfg["train.lr"] == 1e-2
    assert cfg["problem.alpha"] == 1.0
    assert cfg["sample.res"] == (64,)
    assert "problem.omega" not in cfg.values


def test_command_specific_defaults():
    assert parse_config(BASE, "eikonal")["problem.alpha"] == 100.0
    assert parse_config(BASE, "fit")["problem.scale"] == 1.0
    assert parse_config(BASE, "poisson")["problem.scale"] == 10.0


def test_overrides_win():
    cfg = parse_config(BASE, "heat", ["train.iters=9", "sample.res = 8,4"])
    assert cfg["train.iters"] == 9 and cfg["sample.res"] == (8, 4)
    assert cfg.origin["train.iters"] == "override 1"


@pytest.mark.parametrize(
    "text,cmd,msg",
    [
        (BASE + "grid.bogus = 1\n", "heat", "unknown key"),
        (BASE + "problem.omega = 3\n", "heat", "unknown key"),
        (BASE + "grid.s = 3\n", "heat", "duplicate key"),
        (BASE.replace("16", "sixteen"), "heat", "expects int"),
        ("grid.s = 2\ngrid.f = 2\ntrain.iters = 5\n", "heat", "missing required key 'grid.n_max'"),
        (BASE + "just words\n", "heat", "expected key=value"),
        (BASE, "nonsense", "unknown subcommand"),
        (BASE + "run.deterministic = maybe\n", "heat", "expects bool"),
    ],
)
def test_config_errors(text, cmd, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text, cmd)


def test_error_names_line():
    with pytest.raises(ConfigError, match=r"f\.cfg:5"):
        parse_config(BASE + "oops = 1\n", "heat", source="f.cfg")


def test_bundled_configs_parse():
    names = builtin_configs()
    assert {"heat_desk", "advect1d_desk", "poisson_grad_desk", "poisson_lapl_desk", "helmholtz_desk", "eikonal2d_desk"} <= set(names)
    for name in names:
        cmd = next(c for c in ("heat", "advect", "poisson", "helmholtz", "eikonal", "fit") if name.startswith(c))
        parse_config(resolve_config(name).read_text(), cmd, source=name)


def test_resolve_missing():
    with pytest.raises(FileNotFoundError):
        resolve_config("no_such_config")


def test_reference_lists_every_key():
    text = reference_text()
    for key in SCHEMA:
        assert key in text
