"""Online frame-by-frame inference with phase-offset, periodically reset streams.

Stream ``j`` of ``n`` starts at frame ``j * l_m / n`` and resets its recurrent
state every ``l_m`` frames, the length it was trained on. The output at each
frame is the mean over streams that have started.

Two implementations share these semantics:

* :func:`stream_step` advances one :class:`StreamState` and re-encodes the
  stream's buffered past for anticipation every frame. It is the plain
  reference.
* :class:`Ensemble` advances all streams in one batched call and rolls the
  anticipation state forward incrementally over real frames only, branching
  a copy for the generated futures. It is the production path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anticipation import forward_pass
from .data.io import FeatureReader, PredictionWriter
from .model import Model
from .numerics import ShapeError, gru_roll, gru_step, kernels
from .pfa import SMOOTHING_MODES, SmoothState, blend, head, smooth_weights


@dataclass
class StreamConfig:
    l_m: int = 32
    l_g: int = 8
    n: int = 4
    smoothing: str = "learned"

    def validate(self) -> None:
        if self.l_m < 1 or self.n < 1:
            raise ValueError("l_m and n must be >= 1")
        if self.l_m % self.n:
            raise ValueError(f"l_m={self.l_m} must be divisible by the stream count n={self.n}")
        if self.l_g < 0:
            raise ValueError("l_g must be >= 0")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")

    def offsets(self) -> list[int]:
        return [j * self.l_m // self.n for j in range(self.n)]


@dataclass
class StreamState:
    agg_hidden: np.ndarray
    smooth: SmoothState
    age: int = 0
    start_offset: int = 0
    buffer: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def initial(cls, model: Model, start_offset: int = 0) -> StreamState:
        return cls(np.zeros(model.dims.H_p), SmoothState.initial(model.dims.num_outputs), 0, start_offset)

    def reset(self) -> None:
        self.agg_hidden = np.zeros_like(self.agg_hidden)
        self.smooth = SmoothState.initial(len(self.smooth.prev_probs))
        self.age = 0
        self.buffer = []


def stream_step(s: StreamState, x_t, model: Model, cfg: StreamConfig) -> np.ndarray:
    """Advance one active stream by frame ``x_t``; returns its prediction."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (model.dims.D,):
        raise ShapeError(f"frame must have shape ({model.dims.D},), got {x_t.shape}")
    s.buffer.append(x_t)
    future = forward_pass(np.stack(s.buffer), cfg.l_g, model.ant).generated
    s.agg_hidden = gru_step(x_t, s.agg_hidden, model.pfa.agg_gru)
    h = gru_roll(future, model.pfa.agg_gru, s.agg_hidden)[-1] if cfg.l_g else s.agg_hidden
    p_t = blend(head(h, model.pfa), s.smooth.prev_probs, x_t, model.pfa, cfg.smoothing)
    s.smooth = SmoothState(p_t)
    s.age += 1
    if s.age == cfg.l_m:
        s.reset()
    return p_t


class Ensemble:
    """n streams evaluated together; memory is O(n * (H + H_p)) regardless of stream length."""

    def __init__(self, model: Model, cfg: StreamConfig):
        cfg.validate()
        self.model = model
        self.cfg = cfg
        self.offsets = np.array(cfg.offsets())
        d = model.dims
        n = cfg.n
        self.ant_h = np.zeros((n, d.H))
        self.agg_h = np.zeros((n, d.H_p))
        self.prev = np.full((n, d.num_outputs), 0.5)
        self.age = np.zeros(n, dtype=np.int64)
        self.frame = 0

    def reset(self) -> None:
        self.ant_h[:] = 0.0
        self.agg_h[:] = 0.0
        self.prev[:] = 0.5
        self.age[:] = 0
        self.frame = 0

    def step(self, x_t) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        d = self.model.dims
        if x_t.shape != (d.D,):
            raise ShapeError(f"frame must have shape ({d.D},), got {x_t.shape}")
        ant, pfa, l_g = self.model.ant, self.model.pfa, self.cfg.l_g
        n = self.cfg.n

        xp = np.broadcast_to(x_t @ ant.fgru.w_in.T + ant.fgru.bias, (1, n, 3 * d.H))
        self.ant_h = kernels.gru_forward(xp, self.ant_h, ant.fgru.w_rec)[0][0]
        g = pfa.agg_gru
        xp = np.broadcast_to(x_t @ g.w_in.T + g.bias, (1, n, 3 * d.H_p))
        self.agg_h = kernels.gru_forward(xp, self.agg_h, g.w_rec)[0][0]
        if l_g:
            _, future, _ = kernels.gru_generate(
                self.ant_h, ant.fgru.w_in, ant.fgru.bias, ant.fgru.w_rec, ant.dec.weight, ant.dec.bias, l_g
            )
            h = kernels.gru_forward(future @ g.w_in.T + g.bias, self.agg_h, g.w_rec)[0][-1]
        else:
            h = self.agg_h
        p_c = head(h, pfa)
        mode = self.cfg.smoothing
        if mode == "learned":
            w = smooth_weights(x_t, pfa)
            p_t = w[0] * p_c + w[1] * self.prev
        else:
            p_t = blend(p_c, self.prev, x_t, pfa, mode)

        active = self.frame >= self.offsets
        out = p_t[active].mean(axis=0)

        self.prev = p_t
        self.age += 1
        done = (self.age == self.cfg.l_m) | ~active
        if done.any():
            self.ant_h[done] = 0.0
            self.agg_h[done] = 0.0
            self.prev[done] = 0.5
            self.age[done] = 0
        self.frame += 1
        return out


EnsembleState = Ensemble


def ensemble_step(e: Ensemble, x_t) -> np.ndarray:
    return e.step(x_t)


def predict_sequence(model: Model, x, cfg: StreamConfig) -> np.ndarray:
    """Per-frame predictions (T, K+1) for an in-memory sequence."""
    e = Ensemble(model, cfg)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((len(x), model.dims.num_outputs))
    for t, frame in enumerate(x):
        out[t] = e.step(frame)
    return out


def run_offline_file(features_path, model: Model, cfg: StreamConfig, out_path) -> int:
    """Stream a feature file through an :class:`Ensemble` into a prediction file.

    Frames are read and written one at a time. Returns the frame count.
    """
    with FeatureReader(features_path) as reader:
        if reader.D != model.dims.D:
            raise ShapeError(f"feature dim {reader.D} does not match model D={model.dims.D}")
        if reader.K != model.dims.K:
            raise ShapeError(f"feature file declares K={reader.K}, model has K={model.dims.K}")
        e = Ensemble(model, cfg)
        with PredictionWriter(out_path, reader.T, model.dims.K) as w:
            for frame in reader:
                w.write(e.step(frame))
        return reader.T
