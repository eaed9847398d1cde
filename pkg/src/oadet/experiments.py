"""Synthetic benchmark harness: train/evaluate grids behind the ablation tables.

Every run trains a fresh model on one fixed synthetic split and evaluates
per-frame mAP on a held-out split with the streaming ensemble. Results are
cached per ``(seed, l_g, smoothing)`` so sweeps that share a configuration
train it once.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data.synth import SynthConfig, generate_split
from .metrics import evaluate_many
from .model import Model
from .streaming import StreamConfig, predict_sequence
from .training import TrainConfig, train

LG_SWEEP = (0, 4, 8, 12, 16)
STREAM_SWEEP = (1, 2, 4, 8, 16)


def _bench_train() -> TrainConfig:
    return TrainConfig(
        H=32, H_p=32, cls_hidden=32, wgen_hidden=16, lr=3e-3, batch_size=16, epochs=1, batches_per_epoch=60
    )


@dataclass
class BenchmarkConfig:
    """Sizes of the synthetic benchmark; the defaults train one model in well under a minute."""

    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=_bench_train)
    n_train: int = 40
    train_len: int = 400
    n_test: int = 6
    test_len: int = 320
    seeds: tuple[int, ...] = (0, 1, 2)
    streams: int = 4

    def validate(self) -> None:
        self.synth.validate()
        self.train.validate()
        if min(self.n_train, self.n_test) < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if self.train_len < self.train.l_m:
            raise ValueError(f"train_len must be >= l_m={self.train.l_m}")
        if self.test_len < 1 or not self.seeds:
            raise ValueError("test_len must be >= 1 and seeds non-empty")
        if self.train.D != self.synth.dim or self.train.K != self.synth.num_classes:
            raise ValueError("train D/K must match the synthetic dim/num_classes")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown benchmark keys: {sorted(unknown)}")
        d = dict(d)
        if "synth" in d:
            d["synth"] = _strict(SynthConfig, d["synth"], "synth")
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def _strict(kind, d: dict, what: str):
    known = {f.name for f in fields(kind)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")
    return kind(**d)


class Benchmark:
    """Holds the two splits and a cache of trained models."""

    def __init__(self, cfg: BenchmarkConfig | None = None):
        self.cfg = cfg or BenchmarkConfig()
        self.cfg.validate()
        c = self.cfg
        self.train_set = generate_split(c.synth, c.n_train, c.train_len)
        self.test_set = generate_split(c.synth, c.n_test, c.test_len, offset=c.n_train)
        self._models: dict[tuple[int, int, str], Model] = {}

    def model(self, seed: int, l_g: int, smoothing: str = "learned") -> Model:
        key = (seed, l_g, smoothing)
        if key not in self._models:
            tc = replace(self.cfg.train, seed=seed, l_g=l_g, smoothing=smoothing)
            self._models[key] = train(self.train_set, tc)[0]
        return self._models[key]

    def score(self, model: Model, l_g: int, n: int, smoothing: str = "learned") -> float:
        sc = StreamConfig(l_m=self.cfg.train.l_m, l_g=l_g, n=n, smoothing=smoothing)
        pairs = [(predict_sequence(model, x, sc), y) for x, y in self.test_set]
        return evaluate_many(pairs, self.cfg.synth.num_classes).mAP

    def lg_sweep(self, values=LG_SWEEP) -> dict[int, list[float]]:
        """Per-seed mAP for models trained and run with each ``l_g``."""
        n = self.cfg.streams
        return {lg: [self.score(self.model(s, lg), lg, n) for s in self.cfg.seeds] for lg in values}

    def stream_sweep(self, values=STREAM_SWEEP, l_g: int | None = None) -> dict[int, list[float]]:
        """Per-seed mAP of one trained model per seed, run with each stream count."""
        lg = self.cfg.train.l_g if l_g is None else l_g
        return {n: [self.score(self.model(s, lg), lg, n) for s in self.cfg.seeds] for n in values}

    def smoothing_sweep(self, modes=("none", "uniform", "learned"), l_g: int | None = None) -> dict[str, list[float]]:
        """Per-seed mAP of models trained and run with each smoothing mode."""
        lg = self.cfg.train.l_g if l_g is None else l_g
        n = self.cfg.streams
        return {m: [self.score(self.model(s, lg, m), lg, n, m) for s in self.cfg.seeds] for m in modes}


def mean_table(title: str, key_name: str, results: dict) -> str:
    """Plain-text table: one row per setting, mean and per-seed mAP in points."""
    width = max(len(str(k)) for k in results) if results else 1
    width = max(width, len(key_name))
    n_seeds = max((len(v) for v in results.values()), default=0)
    head = f"{key_name:>{width}}  {'mAP':>7}" + "".join(f"  {'seed' + str(i):>7}" for i in range(n_seeds))
    lines = [title, head]
    for k, vals in results.items():
        row = f"{str(k):>{width}}  {100 * np.mean(vals):7.2f}" + "".join(f"  {100 * v:7.2f}" for v in vals)
        lines.append(row)
    return "\n".join(lines)
