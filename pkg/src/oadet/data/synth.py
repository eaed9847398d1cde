"""Synthetic per-frame feature sequences with semi-Markov class segments.

Segments alternate between background (class 0) and actions (1..K, a new
action never repeats the previous one when K > 1). Segment lengths are
geometric. Inside a segment of class ``c`` a latent state is pulled toward the
class prototype through class-specific rotating dynamics

    z <- A_c z + (I - A_c) proto_c,     A_c = rho * expm(theta * S_c)

with ``S_c`` a random unit-norm skew-symmetric matrix, so ``A_c`` has spectral
radius ``rho`` and rotates by an angle that grows with ``theta``
(``theta = 0`` gives pure class-independent decay toward the prototype)

and each frame observes ``x = z + N(0, noise^2)``. A fraction
``glitch_rate`` of frames is instead observed with ``N(0, glitch_noise^2)``,
a corrupted frame that carries little information about the class. Because ``z`` keeps moving
after a label change, the recent past predicts the next frames.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import expm


@dataclass
class SynthConfig:
    num_classes: int = 6
    dim: int = 32
    mean_segment: float = 12.0
    background_fraction: float = 0.5
    noise: float = 0.1
    glitch_rate: float = 0.1
    glitch_noise: float = 1.0
    spectral_radius: float = 0.95
    rotation: float = 0.2
    prototype_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 1 or self.dim < 1:
            raise ValueError("num_classes and dim must be >= 1")
        if self.mean_segment < 1.0:
            raise ValueError("mean_segment must be >= 1")
        if not 0.0 <= self.background_fraction < 1.0:
            raise ValueError("background_fraction must be in [0, 1)")
        if self.noise < 0 or self.glitch_noise < 0:
            raise ValueError("noise levels must be >= 0")
        if not 0.0 <= self.glitch_rate <= 1.0:
            raise ValueError("glitch_rate must be in [0, 1]")
        if not 0.0 <= self.spectral_radius < 1.0:
            raise ValueError("spectral_radius must be in [0, 1)")
        if self.rotation < 0:
            raise ValueError("rotation must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class World:
    """Per-class prototypes (K+1, D) and dynamics matrices (K+1, D, D)."""

    prototypes: np.ndarray
    dynamics: np.ndarray


def make_world(cfg: SynthConfig) -> World:
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 0])
    C, D = cfg.num_classes + 1, cfg.dim
    protos = rng.normal(scale=cfg.prototype_scale, size=(C, D))
    dyn = np.empty((C, D, D))
    for c in range(C):
        a = rng.normal(size=(D, D))
        skew = a - a.T
        skew /= np.linalg.norm(skew, 2)
        dyn[c] = cfg.spectral_radius * expm(cfg.rotation * skew)
    return World(protos, dyn)


def _segment_labels(cfg: SynthConfig, T: int, rng: np.random.Generator) -> tuple[np.ndarray, list[int]]:
    f = cfg.background_fraction
    bg_mean = cfg.mean_segment * f / (1.0 - f) if f > 0 else 0.0
    labels = np.empty(T, dtype=np.int64)
    lengths = []
    background = bool(f > 0 and rng.random() < f)
    last_action = 0
    pos = 0
    while pos < T:
        if background:
            c = 0
            length = int(rng.geometric(min(1.0, 1.0 / bg_mean)))
        else:
            choices = [a for a in range(1, cfg.num_classes + 1) if a != last_action] or [last_action]
            c = int(choices[rng.integers(len(choices))])
            last_action = c
            length = int(rng.geometric(1.0 / cfg.mean_segment))
        lengths.append(length)
        labels[pos : pos + length] = c
        pos += length
        if f > 0:
            background = not background
    return labels, lengths


def generate(cfg: SynthConfig, T: int, index: int = 0, world: World | None = None):
    """Return ``(features (T, D), labels (T,))`` for sequence number ``index``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    world = world or make_world(cfg)
    rng = np.random.default_rng([cfg.seed, 1, index])
    labels, _ = _segment_labels(cfg, T, rng)
    D = cfg.dim
    x = np.empty((T, D))
    z = np.zeros(D)
    noise = rng.normal(size=(T, D))
    scale = np.where(rng.random(T) < cfg.glitch_rate, cfg.glitch_noise, cfg.noise)
    noise *= scale[:, None]
    for t in range(T):
        c = labels[t]
        a, p = world.dynamics[c], world.prototypes[c]
        z = a @ (z - p) + p
        x[t] = z + noise[t]
    return x, labels


def generate_split(cfg: SynthConfig, n_sequences: int, T: int, offset: int = 0):
    """List of ``(features, labels)`` sequences sharing one class world."""
    world = make_world(cfg)
    return [generate(cfg, T, offset + i, world) for i in range(n_sequences)]


def segment_lengths(cfg: SynthConfig, T: int, index: int = 0) -> list[int]:
    """Segment lengths the generator draws for sequence ``index`` (last one uncut)."""
    rng = np.random.default_rng([cfg.seed, 1, index])
    return _segment_labels(cfg, T, rng)[1]
