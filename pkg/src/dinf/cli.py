"""``dinf`` command line: build a problem from a config, train, write results."""
from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as dio
from .config import SUBCOMMANDS, RunConfig, builtin_configs, parse_config, reference_text, resolve_config
from .errors import ConfigError, DataError, DivergedError, NumericDomainError, ResourceError
from .field import FieldModel
from .interp import RbfConfig
from .optim import TrainConfig, train
from . import pde

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4

BUNDLED_IMAGES = ("camera128", "camera512")


def load_image(name: str) -> np.ndarray:
    if name in BUNDLED_IMAGES:
        with resources.as_file(resources.files("dinf") / "data" / f"{name}.pgm") as p:
            return dio.read_pgm(p)
    return dio.read_pgm(name)


def build_problem(cfg: RunConfig) -> pde.Problem:
    v = cfg.values
    cmd = cfg.command
    res = v["sample.res"]
    res = res[0] if len(res) == 1 else tuple(res)
    common = dict(sample_res=res, eval_res=v["eval.res"])
    if cmd in ("heat", "advect"):
        common.update(
            sigma_b=v["boundary.sigma"], sigma_t=v["boundary.sigma_t"], power=v["boundary.power"],
            time_power=v["boundary.time_power"], residual_norm=v["problem.residual_norm"],
        )
    if cmd == "heat":
        return pde.HeatProblem(alpha=v["problem.alpha"], t_end=v["problem.t_end"], **common)
    if cmd == "advect":
        return pde.AdvectionProblem(
            velocity=v["problem.velocity"], center=v["problem.center"], width=v["problem.width"],
            half_extent=v["problem.half_extent"], t_end=v["problem.t_end"], **common,
        )
    if cmd == "helmholtz":
        hp = pde.HelmholtzParams(
            omega=v["problem.omega"], c=v["problem.c"], a0=v["problem.a0"], source_var=v["problem.source_var"],
            lam_ratio=v["problem.lam_ratio"], lam_threshold=v["problem.lam_threshold"], form=v["problem.pml_form"],
        )
        return pde.HelmholtzProblem(params=hp, **common)
    if cmd == "eikonal":
        if v["problem.d"] not in (2, 3):
            raise ConfigError(f"problem.d must be 2 or 3 for eikonal, got {v['problem.d']}")
        return pde.EikonalProblem(
            d=v["problem.d"], alpha=v["problem.alpha"], alpha_start=v["problem.alpha_start"],
            alpha_warmup=v["problem.alpha_warmup"], n_surface=v["problem.n_surface"], radius=v["problem.radius"],
            pointcloud=v["problem.pointcloud"] or None, seed=v["train.seed"], **common,
        )
    if cmd in ("poisson", "fit"):
        mode = v["problem.mode"] if cmd == "poisson" else "fit"
        if mode not in ("grad", "lapl", "fit"):
            raise ConfigError(f"problem.mode must be 'grad' or 'lapl', got {mode!r}")
        img = load_image(v["problem.image"])
        return pde.ImageProblem(image=img, target_scale=v["problem.scale"], mode=mode, **common)
    raise ConfigError(f"no problem for subcommand '{cmd}'")


def build_model(cfg: RunConfig, problem: pde.Problem) -> FieldModel:
    v = cfg.values
    return FieldModel.create(
        problem.d, problem.m, v["grid.n_max"], v["grid.s"], v["grid.f"],
        rbf=RbfConfig(v["rbf.eps"], v["rbf.rho"]), decoder=v["decoder.kind"], hidden=v["decoder.hidden"],
        activation=v["decoder.activation"], boundary=problem.boundary(), seed=v["train.seed"],
    )


def train_config(cfg: RunConfig, out: Path | None, deterministic: bool, threads: int) -> TrainConfig:
    v = cfg.values
    return TrainConfig(
        iters=v["train.iters"], lr=v["train.lr"], seed=v["train.seed"], log_every=v["train.log_every"],
        budget=v["train.budget"] or None, chunks=v["train.chunks"], threads=threads, deterministic=deterministic,
        decay_every=v["train.decay_every"], decay_factor=v["train.decay_factor"],
        history_path=str(out / "history.csv") if out else None,
        checkpoint_path=str(out / "model.ckpt") if out and v["run.checkpoint"] else None,
    )


def format_metrics(values: dict) -> str:
    """key=value lines, sorted, full precision; nothing time-dependent."""
    lines = []
    for k in sorted(values):
        val = values[k]
        lines.append(f"{k}={repr(float(val)) if isinstance(val, (float, np.floating)) else val}")
    return "\n".join(lines) + "\n"


def write_outputs(out: Path, model: FieldModel, problem: pde.Problem, hist, cfg: RunConfig):
    renders = problem.renders(model)
    for name, arr in renders.items():
        img = arr if problem.kind in ("poisson_grad", "poisson_lapl", "fit") else dio.to_unit_range(arr)
        dio.write_pgm(out / f"{name}.pgm", img)
    first = next(iter(renders.values()), None)
    if first is not None:
        a = np.asarray(first)
        dio.write_csv_field(out / "field.csv", a.reshape(a.shape[0], -1))
    metrics = dict(hist.final_metrics)
    metrics["final_loss"] = hist.rows[-1][1]
    metrics["initial_loss"] = hist.rows[0][1]
    metrics["iterations"] = hist.rows[-1][0]
    metrics["stopped_early"] = str(hist.stopped_early).lower()
    metrics["problem"] = problem.kind
    metrics["seed"] = cfg["train.seed"]
    (out / "metrics.txt").write_text(format_metrics(metrics))
    return metrics


def run_check(cfg: RunConfig) -> int:
    from .checks import run_checks

    results = run_checks(cfg["check.points"], cfg["check.params"], cfg["check.seed"])
    for r in results:
        print(r.line())
    worst = max(r.max_err / r.tol for r in results)
    print(f"max relative derivative error / tolerance: {worst:.3e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def run(command: str, config: str | None, overrides=(), deterministic=False, threads=None, quiet=False) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        if config is None:
            if command != "check":
                raise ConfigError("--config is required")
            text, source = "", "<defaults>"
        else:
            path = resolve_config(config)
            text, source = path.read_text(), str(path)
        cfg = parse_config(text, command, overrides, source)
        deterministic = deterministic or cfg["run.deterministic"]
        threads = threads or cfg["run.threads"]
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        if command == "check":
            return run_check(cfg)
        problem = build_problem(cfg)
        model = build_model(cfg, problem)
        out = Path(os.environ.get("DINF_OUT") or cfg["run.out"])
        out.mkdir(parents=True, exist_ok=True)
        tc = train_config(cfg, out, deterministic, threads)
        hist = train(model, problem, tc, log=None if quiet else print)
        metrics = write_outputs(out, model, problem, hist, cfg)
        if not quiet:
            print(format_metrics(metrics), end="")
            print(f"outputs written to {out}")
        return EXIT_OK
    except (ConfigError, ResourceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergedError, NumericDomainError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DataError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dinf", description="PDE solving with differentiable RBF feature grids")
    ap.add_argument("command", choices=SUBCOMMANDS + ("defaults", "configs"))
    ap.add_argument("overrides", nargs="*", help="key=value overrides (win over the config file)")
    ap.add_argument("--config", help="config file or bundled config name")
    ap.add_argument("--deterministic", action="store_true", help="single BLAS thread, fixed reduction order")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for chunk evaluation")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_intermixed_args(argv)
    if args.command == "defaults":
        print(reference_text(), end="")
        return EXIT_OK
    if args.command == "configs":
        print("\n".join(builtin_configs()))
        return EXIT_OK
    return run(args.command, args.config, args.overrides, args.deterministic, args.threads, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
