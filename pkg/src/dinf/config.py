"""Flat ``section.key=value`` run configuration with typed, documented keys."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

SUBCOMMANDS = ("poisson", "helmholtz", "eikonal", "heat", "advect", "fit", "check")
REQUIRED = ("grid.n_max", "grid.s", "grid.f", "train.iters")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in s.replace(",", " ").split())


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _str(s: str) -> str:
    return s.strip()


TYPES = {"int": int, "float": float, "bool": _bool, "floats": _floats, "ints": _ints, "ofloat": _opt_float, "str": _str}


@dataclass(frozen=True)
class Key:
    type: str
    default: object
    doc: str
    commands: tuple = SUBCOMMANDS


_ALL = SUBCOMMANDS
_TRAIN = tuple(c for c in SUBCOMMANDS if c != "check")
_SPACETIME = ("heat", "advect")
_IMAGE = ("poisson", "fit")

SCHEMA: dict[str, Key] = {
    "grid.n_max": Key("int", None, "finest grid resolution N_max (cells per axis)", _TRAIN),
    "grid.s": Key("int", None, "number of scales S; N_max must be divisible by 2^(S-1)", _TRAIN),
    "grid.f": Key("int", None, "features per node F", _TRAIN),
    "rbf.eps": Key("float", 1.0, "Gaussian shape parameter in cell units", _TRAIN),
    "rbf.rho": Key("int", 3, "neighbourhood ring (Chebyshev cells)", _TRAIN),
    "decoder.kind": Key("str", "linear", "linear | mlp", _TRAIN),
    "decoder.hidden": Key("ints", (), "hidden widths of an mlp decoder, e.g. 64 or 64,64", _TRAIN),
    "decoder.activation": Key("str", "tanh", "tanh | swish", _TRAIN),
    "boundary.sigma": Key("float", 0.05, "blend width of the spatial hard constraint", _SPACETIME),
    "boundary.sigma_t": Key("ofloat", None, "blend width of the initial-condition constraint (none: boundary.sigma)", _SPACETIME),
    "boundary.power": Key("int", 2, "spatial blend 1 - exp(-dist^p / sigma), p in {1, 2}", _SPACETIME),
    "boundary.time_power": Key("int", 2, "initial-condition blend exponent p in {1, 2}", _SPACETIME),
    "train.iters": Key("int", None, "optimisation steps", _TRAIN),
    "train.lr": Key("float", 5e-3, "Adam learning rate", _TRAIN),
    "train.seed": Key("int", 0, "seed for initialisation and sampling", _TRAIN),
    "train.log_every": Key("int", 100, "history/metric cadence in iterations", _TRAIN),
    "train.budget": Key("float", 0.0, "wall-clock budget in seconds (0: none)", _TRAIN),
    "train.chunks": Key("int", 1, "split every batch into this many chunks", _TRAIN),
    "train.decay_every": Key("int", 0, "step lr decay period (0: constant lr)", _TRAIN),
    "train.decay_factor": Key("float", 1.0, "lr multiplier per decay period", _TRAIN),
    "sample.res": Key("ints", (64,), "stratified sampling lattice, one value or one per axis", _TRAIN),
    "eval.res": Key("int", 256, "held-out evaluation grid per axis", _TRAIN),
    "run.out": Key("str", "dinf_out", "output directory (DINF_OUT overrides)", _ALL),
    "run.threads": Key("int", 1, "worker threads for chunk evaluation", _ALL),
    "run.deterministic": Key("bool", False, "single BLAS thread and fixed reduction order", _ALL),
    "run.checkpoint": Key("bool", True, "write model.ckpt at the end", _TRAIN),
    # heat
    "problem.alpha": Key("float", 1.0, "heat: diffusivity; eikonal: off-surface penalty alpha (default 100)", ("heat", "eikonal")),
    "problem.residual_norm": Key("str", "l1", "residual penalty: l1 (mean |r|) | l2 (mean r^2)", _SPACETIME),
    "problem.t_end": Key("float", 4.0, "final time of the space-time domain", _SPACETIME),
    # advection
    "problem.velocity": Key("floats", (0.25,), "advection velocity (1 or 2 components)", ("advect",)),
    "problem.center": Key("floats", (-1.5,), "initial Gaussian centre", ("advect",)),
    "problem.width": Key("float", 0.1, "initial Gaussian standard deviation", ("advect",)),
    "problem.half_extent": Key("float", 2.0, "spatial domain is [-h, h] per axis", ("advect",)),
    # helmholtz
    "problem.omega": Key("float", 20.0, "wave number", ("helmholtz",)),
    "problem.c": Key("float", 1.0, "wave speed", ("helmholtz",)),
    "problem.a0": Key("float", 5.0, "PML attenuation strength", ("helmholtz",)),
    "problem.source_var": Key("float", 1e-4, "variance of the Gaussian source", ("helmholtz",)),
    "problem.lam_ratio": Key("float", 5e3, "source weight is batch / lam_ratio", ("helmholtz",)),
    "problem.lam_threshold": Key("float", 1e-8, "source region: g > threshold * max g", ("helmholtz",)),
    "problem.pml_form": Key("str", "standard", "standard | paper (literal product form)", ("helmholtz",)),
    # eikonal
    "problem.d": Key("int", 2, "eikonal dimension (2 circle, 3 sphere)", ("eikonal",)),
    "problem.alpha_start": Key("float", 1.0, "eikonal: off-surface penalty during warm-up", ("eikonal",)),
    "problem.alpha_warmup": Key("int", 0, "eikonal: iterations at problem.alpha_start before switching to problem.alpha", ("eikonal",)),
    "problem.n_surface": Key("int", 512, "oriented surface samples of the analytic shape", ("eikonal",)),
    "problem.radius": Key("float", 0.5, "circle/sphere radius", ("eikonal",)),
    "problem.pointcloud": Key("str", "", "optional point-cloud file replacing the analytic shape", ("eikonal",)),
    # images
    "problem.image": Key("str", "camera128", "PGM/PPM path or a bundled image name", _IMAGE),
    "problem.mode": Key("str", "grad", "poisson supervision: grad | lapl", ("poisson",)),
    "problem.scale": Key("float", 10.0, "target scale (published runs: Sobel 10, Laplacian 1e4)", _IMAGE),
    # check
    "check.points": Key("int", 1000, "random (model, point) pairs per dimension", ("check",)),
    "check.params": Key("int", 20, "random parameters probed per loss", ("check",)),
    "check.seed": Key("int", 0, "seed of the check suite", ("check",)),
}

# defaults that differ per subcommand
COMMAND_DEFAULTS = {
    "eikonal": {"problem.alpha": 100.0},
    "fit": {"problem.scale": 1.0},
}


@dataclass
class RunConfig:
    command: str
    values: dict
    origin: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def _split(line: str, where: str):
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    if "=" not in body:
        raise ConfigError(f"{where}: expected key=value, got {body!r}")
    k, v = body.split("=", 1)
    return k.strip(), v.strip()


def _convert(command, key, raw, where):
    spec = SCHEMA.get(key)
    if spec is None or command not in spec.commands:
        raise ConfigError(f"{where}: unknown key '{key}' for '{command}'")
    try:
        return TYPES[spec.type](raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: key '{key}' expects {spec.type}, got {raw!r} ({exc})") from None


def parse_config(text: str, command: str, overrides=(), source: str = "<config>") -> RunConfig:
    """Parse file text, apply ``key=value`` overrides, fill defaults, check required keys."""
    if command not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand '{command}'")
    values, origin = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        where = f"{source}:{lineno}"
        kv = _split(line, where)
        if kv is None:
            continue
        k, v = kv
        if k in origin:
            raise ConfigError(f"{where}: duplicate key '{k}' (first set at {origin[k]})")
        values[k] = _convert(command, k, v, where)
        origin[k] = where
    for i, ov in enumerate(overrides, 1):
        where = f"override {i}"
        kv = _split(ov, where)
        if kv is None:
            raise ConfigError(f"{where}: empty override")
        k, v = kv
        values[k] = _convert(command, k, v, where)
        origin[k] = where
    for k, spec in SCHEMA.items():
        if command not in spec.commands or k in values:
            continue
        if k in REQUIRED:
            raise ConfigError(f"{source}: missing required key '{k}'")
        values[k] = COMMAND_DEFAULTS.get(command, {}).get(k, spec.default)
    return RunConfig(command, values, origin)


def config_dir() -> Path:
    return Path(str(resources.files("dinf") / "configs"))


def builtin_configs() -> list[str]:
    return sorted(p.stem for p in config_dir().glob("*.cfg"))


def resolve_config(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    q = config_dir() / f"{name_or_path}.cfg"
    if q.exists():
        return q
    raise FileNotFoundError(f"config '{name_or_path}' is neither a file nor a bundled config ({', '.join(builtin_configs())})")


def reference_text() -> str:
    """Generated reference of every key, its type, default and commands."""
    lines = ["# key = default    [type; commands] description"]
    for k, s in SCHEMA.items():
        d = s.default
        if isinstance(d, tuple):
            d = ",".join(str(x) for x in d)
        req = " (required)" if k in REQUIRED else ""
        lines.append(f"{k} = {'' if d is None else d}    [{s.type}; {','.join(s.commands)}] {s.doc}{req}")
    for cmd, over in COMMAND_DEFAULTS.items():
        for k, v in over.items():
            lines.append(f"# {cmd}: {k} defaults to {v}")
    return "\n".join(lines) + "\n"
