"""Training loop: per-frame anticipation and aggregation updates over sampled windows.

For every window of ``l_m`` frames and every prefix length ``t = 1..l_m``:

1. phase-1 cycle loss on ``x[:t]`` and an anticipation update,
2. phase-2 cycle loss on ``x[:t]`` and another anticipation update,
3. aggregation over ``x[:t]`` followed by the ``l_g`` futures generated in
   step 1, loss against the label of frame ``t - 1``, classifier update.

A batch of windows is processed in lockstep; every update uses the
batch-mean gradient.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Sequence

import numpy as np

from .anticipation import phase1_step, phase2_step
from .model import Model, ModelDims
from .numerics import AdamState, adam_update, named_arrays
from .pfa import SMOOTHING_MODES, pfa_step

log = logging.getLogger(__name__)

Dataset = Sequence[tuple[np.ndarray, np.ndarray]]


class NumericError(RuntimeError):
    """A loss or gradient became non-finite."""


@dataclass
class TrainConfig:
    l_m: int = 32
    l_g: int = 8
    batch_size: int = 32
    lr: float = 5e-5
    epochs: int = 10
    seed: int = 0
    D: int = 32
    H: int = 512
    H_p: int = 512
    K: int = 6
    cls_hidden: int = 256
    wgen_hidden: int = 64
    smoothing: str = "learned"
    batches_per_epoch: int | None = None
    early_stop: bool = False
    early_stop_patience: int = 3
    early_stop_tol: float = 1e-4

    def validate(self) -> None:
        if self.l_m < 1:
            raise ValueError("l_m must be >= 1")
        if self.l_g < 0:
            raise ValueError("l_g must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if min(self.D, self.H, self.H_p, self.K, self.cls_hidden, self.wgen_hidden) < 1:
            raise ValueError("model sizes must be >= 1")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ValueError("batches_per_epoch must be >= 1")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.D, self.H, self.H_p, self.K, self.cls_hidden, self.wgen_hidden)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    phase1: float
    phase2: float
    pfa: float
    updates: int
    wall_time: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def wall_time(self) -> float:
        return sum(e.wall_time for e in self.epochs)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e)) + "\n" for e in self.epochs)


def one_hot(labels, num_outputs: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (num_outputs,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def sample_windows(dataset: Dataset, l_m: int, batch_size: int, rng: np.random.Generator):
    """Draw ``batch_size`` windows with start offsets uniform over all valid positions.

    Sequences shorter than ``l_m`` are skipped. Returns time-major
    ``(x (l_m, B, D), y (l_m, B))``.
    """
    counts = np.array([max(0, len(x) - l_m + 1) for x, _ in dataset])
    total = int(counts.sum())
    if total == 0:
        raise ValueError(f"dataset has no sequence with at least {l_m} frames")
    flat = rng.integers(total, size=batch_size)
    bounds = np.cumsum(counts)
    seq = np.searchsorted(bounds, flat, side="right")
    offset = flat - (bounds[seq] - counts[seq])
    xs = np.stack([dataset[s][0][o : o + l_m] for s, o in zip(seq, offset)], axis=1)
    ys = np.stack([dataset[s][1][o : o + l_m] for s, o in zip(seq, offset)], axis=1)
    return xs, ys


def _check(value: float, what: str) -> None:
    if not np.isfinite(value):
        raise NumericError(f"non-finite {what} loss ({value})")


class Trainer:
    """Holds a model and its two optimizers (anticipation, aggregation)."""

    def __init__(self, cfg: TrainConfig, model: Model | None = None):
        cfg.validate()
        self.cfg = cfg
        self.model = model or Model.init(cfg.dims, np.random.default_rng(cfg.seed))
        self.ant_params = named_arrays(self.model.ant)
        self.pfa_params = named_arrays(self.model.pfa)
        self.ant_opt = AdamState(lr=cfg.lr)
        self.pfa_opt = AdamState(lr=cfg.lr)
        self.updates = 0

    def train_frame(self, x: np.ndarray, y: np.ndarray, t: int, prev: np.ndarray):
        """The three updates for prefix length ``t``; returns ``(losses, smoothed probs)``."""
        xt = x[:t]
        l_g = self.cfg.l_g
        r1 = phase1_step(xt, l_g, self.model.ant)
        _check(r1.loss, "phase-1")
        adam_update(self.ant_params, r1.grads, self.ant_opt)
        r2 = phase2_step(xt, l_g, self.model.ant)
        _check(r2.loss, "phase-2")
        adam_update(self.ant_params, r2.grads, self.ant_opt)
        feats = np.concatenate([xt, r1.generated], axis=0) if l_g else xt
        target = one_hot(y[t - 1], self.model.dims.num_outputs)
        rp = pfa_step(feats, x[t - 1], prev, target, self.model.pfa, self.cfg.smoothing)
        _check(rp.loss, "aggregation")
        adam_update(self.pfa_params, rp.grads, self.pfa_opt)
        self.updates += 1
        return (r1.loss, r2.loss, rp.loss), rp.probs

    def train_window(self, x: np.ndarray, y: np.ndarray, max_t: int | None = None) -> np.ndarray:
        """Run ``t = 1..l_m`` in order; returns per-t losses, shape (t, 3)."""
        l_m = x.shape[0]
        stop = l_m if max_t is None else min(l_m, max_t)
        prev = np.full((x.shape[1], self.model.dims.num_outputs), 0.5)
        losses = np.empty((stop, 3))
        for t in range(1, stop + 1):
            losses[t - 1], prev = self.train_frame(x, y, t, prev)
        return losses


def train_window(x, y, trainer: Trainer) -> np.ndarray:
    return trainer.train_window(np.asarray(x, dtype=np.float64), np.asarray(y))


def evaluate_cycle_losses(model: Model, x: np.ndarray, l_g: int) -> tuple[float, float]:
    """Mean phase-1 / phase-2 losses over all prefixes of ``x`` (l_m, B, D), no updates."""
    p1 = [phase1_step(x[:t], l_g, model.ant).loss for t in range(1, len(x) + 1)]
    p2 = [phase2_step(x[:t], l_g, model.ant).loss for t in range(1, len(x) + 1)]
    return float(np.mean(p1)), float(np.mean(p2))


def _default_batches(dataset: Dataset, cfg: TrainConfig) -> int:
    frames = sum(len(x) for x, _ in dataset)
    return max(1, int(np.ceil(frames / (cfg.l_m * cfg.batch_size))))


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    checkpoint_path=None,
    report_stream: IO[str] | None = None,
    model: Model | None = None,
) -> tuple[Model, TrainReport]:
    """Train for ``cfg.epochs`` epochs; checkpoint and report after each one."""
    cfg.validate()
    if not dataset:
        raise ValueError("empty dataset")
    trainer = Trainer(cfg, model)
    rng = np.random.default_rng([cfg.seed, 1])
    n_batches = cfg.batches_per_epoch or _default_batches(dataset, cfg)
    report = TrainReport()
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        totals = np.zeros(3)
        for _ in range(n_batches):
            x, y = sample_windows(dataset, cfg.l_m, cfg.batch_size, rng)
            totals += trainer.train_window(x, y).mean(axis=0)
        means = totals / n_batches
        rec = EpochRecord(epoch, *map(float, means), trainer.updates, time.perf_counter() - start)
        report.epochs.append(rec)
        log.info("epoch %d: phase1 %.4f phase2 %.4f pfa %.4f", epoch, *means)
        if report_stream is not None:
            report_stream.write(json.dumps(asdict(rec)) + "\n")
            report_stream.flush()
        if checkpoint_path is not None:
            trainer.model.save(checkpoint_path, {"train": asdict(cfg), "epoch": epoch})
        if cfg.early_stop:
            if best - rec.pfa < cfg.early_stop_tol:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    report.stopped_early = True
                    break
            else:
                stale = 0
            best = min(best, rec.pfa)
    if cfg.epochs == 0 and checkpoint_path is not None:
        trainer.model.save(checkpoint_path, {"train": asdict(cfg), "epoch": -1})
    return trainer.model, report
