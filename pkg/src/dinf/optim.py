"""Adam and the training loop: sample, evaluate, loss, reverse gradient, step."""
from __future__ import annotations

import contextlib
import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .diffcore import ParamStore, Tape, leaves_on, reverse_grad
from .errors import ConfigError, DivergedError
from .field import FieldModel
from .interp import SampleBatch


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    decay_every: int = 0
    decay_factor: float = 1.0

    @classmethod
    def zeros(cls, n: int, lr: float = 5e-3, **kw) -> "AdamState":
        if not lr > 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        return cls(np.zeros(n), np.zeros(n), lr, **kw)

    def current_lr(self) -> float:
        if self.decay_every > 0:
            return self.lr * self.decay_factor ** (self.step // self.decay_every)
        return self.lr


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, store: ParamStore | None = None,
              iteration: int | None = None) -> np.ndarray:
    """In-place bias-corrected Adam update of ``params``; returns it."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ConfigError(f"Adam vector lengths differ: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    bad = ~np.isfinite(grads)
    if bad.any():
        i = int(np.argmax(bad))
        seg = store.segment_of(i) if store is not None else "?"
        it = state.step if iteration is None else iteration
        raise DivergedError(f"non-finite gradient at iteration {it} in parameter segment '{seg}' (index {i})")
    lr = state.current_lr()
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    mhat = state.m / (1.0 - b1**state.step)
    vhat = state.v / (1.0 - b2**state.step)
    params -= lr * mhat / (np.sqrt(vhat) + state.eps)
    return params


@dataclass
class TrainConfig:
    iters: int = 1000
    lr: float = 5e-3
    seed: int = 0
    log_every: int = 100
    budget: float | None = None
    chunks: int = 1
    threads: int = 1
    deterministic: bool = False
    decay_every: int = 0
    decay_factor: float = 1.0
    history_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.iters < 0:
            raise ConfigError(f"train.iters must be >= 0, got {self.iters}")
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.log_every < 1 or self.chunks < 1 or self.threads < 1:
            raise ConfigError("train.log_every, train.chunks and threads must be >= 1")
        if self.budget is not None and not self.budget > 0:
            raise ConfigError(f"train.budget must be positive seconds, got {self.budget}")


@dataclass
class History:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    metric_name: str = "metric"
    final_metrics: dict = field(default_factory=dict)
    stopped_early: bool = False

    def add(self, it, loss, metric, seconds):
        self.rows.append((int(it), float(loss), float(metric), float(seconds)))

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iteration", "loss", "metric", "seconds"])
            for it, loss, metric, sec in self.rows:
                wr.writerow([it, repr(loss), repr(metric), f"{sec:.3f}"])


def _chunks(batch: SampleBatch, n: int) -> list[SampleBatch]:
    """Split once and memoise, so fixed batches keep their cached operators."""
    if n <= 1:
        return [batch]  # caching [batch] on itself would form a reference cycle
    key = ("split", n)
    parts = batch.cache.get(key)
    if parts is None:
        parts = batch.split(n)
        batch.cache[key] = parts
    return parts


def _chunk_grad(model: FieldModel, problem, name: str, batch: SampleBatch):
    tape = Tape()
    leaves = leaves_on(model.store, tape)
    u = model.evaluate(batch, leaves)
    loss = problem.loss_term(name, u, batch)
    value = float(np.asarray(loss.value))
    return value, reverse_grad(loss, model.store, leaves=leaves)


def loss_and_grad(model: FieldModel, problem, batches: dict[str, SampleBatch], chunks: int = 1, pool=None):
    """Total loss and flat gradient; chunk results are combined in a fixed order."""
    tasks = [(name, part) for name, b in batches.items() for part in _chunks(b, chunks)]
    if pool is None or len(tasks) == 1:
        results = [_chunk_grad(model, problem, n, p) for n, p in tasks]
    else:
        results = list(pool.map(lambda t: _chunk_grad(model, problem, *t), tasks))
    loss = 0.0
    grad = np.zeros(len(model.store))
    for value, g in results:
        loss += value
        grad += g
    return loss, grad


def train(model: FieldModel, problem, cfg: TrainConfig, log=None) -> History:
    """Optimise ``model`` on ``problem``; returns the logged history.

    Row ``i`` holds the loss at the parameters before step ``i``; the last
    row is evaluated after the final step. A wall-clock budget stops the run
    cleanly after the step that crosses it.
    """
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros(len(model.store), cfg.lr, decay_every=cfg.decay_every, decay_factor=cfg.decay_factor)
    hist = History(metric_name=problem.primary)
    limits = threadpool_limits(1) if cfg.deterministic else contextlib.nullcontext()
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    start = time.perf_counter()

    def record(it, loss):
        metrics = problem.metrics(model)
        hist.add(it, loss, metrics.get(problem.primary, float("nan")), time.perf_counter() - start)
        if log:
            extra = "  ".join(f"{k} {v:.6g}" for k, v in metrics.items())
            log(f"iter {it:6d}  loss {loss:.6e}  {extra}")
        return metrics

    try:
        with limits:
            it = 0
            while it < cfg.iters:
                problem.on_step(it)
                loss, grad = loss_and_grad(model, problem, problem.sample(model, rng), cfg.chunks, pool)
                if not np.isfinite(loss):
                    raise DivergedError(f"non-finite loss {loss} at iteration {it}")
                if it % cfg.log_every == 0:
                    record(it, loss)
                adam_step(model.store.data, grad, state, model.store, it)
                it += 1
                if cfg.budget is not None and time.perf_counter() - start > cfg.budget:
                    hist.stopped_early = it < cfg.iters
                    break
            problem.on_step(it)
            loss, _ = loss_and_grad(model, problem, problem.sample(model, rng), cfg.chunks, pool)
            hist.final_metrics = record(it, loss)
    finally:
        if pool is not None:
            pool.shutdown()
    if cfg.history_path:
        hist.to_csv(cfg.history_path)
    if cfg.checkpoint_path:
        model.save(cfg.checkpoint_path)
    return hist
