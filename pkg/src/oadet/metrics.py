"""Per-frame average precision, calibrated AP, and evaluation of prediction files.

Frames are ranked by descending score; ties go to the lower frame index.
AP is the interpolation-free sum ``sum_k Prec(k) * I(k) / P`` over ranks,
cAP replaces ``Prec`` with ``TP / (TP + FP / w)`` where ``w = N / P``.
Background (class 0) is excluded from the means.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data.io import read_labels, read_predictions


def _ranked_hits(scores, labels) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length 1-D arrays")
    order = np.argsort(-s, kind="stable")
    return (y[order] > 0).astype(np.float64)


def average_precision(scores, labels) -> float:
    """AP over frames; raises ValueError when there are no positives."""
    hits = _ranked_hits(scores, labels)
    P = hits.sum()
    if P == 0:
        raise ValueError("no positive frames")
    tp = np.cumsum(hits)
    prec = tp / np.arange(1, len(hits) + 1)
    return float((prec * hits).sum() / P)


def calibrated_precision(tp, fp, w) -> float:
    if w <= 0:
        raise ValueError("w must be > 0")
    if tp + fp < 1:
        raise ValueError("tp + fp must be >= 1")
    return tp / (tp + fp / w)


def calibrated_ap(scores, labels) -> float:
    """cAP with ``w`` = negatives / positives over the given frames."""
    hits = _ranked_hits(scores, labels)
    P = hits.sum()
    if P == 0:
        raise ValueError("no positive frames")
    N = len(hits) - P
    w = N / P
    tp = np.cumsum(hits)
    fp = np.arange(1, len(hits) + 1) - tp
    if w == 0:
        # no negatives: every prefix is all-positive
        return 1.0
    cprec = tp / (tp + fp / w)
    return float((cprec * hits).sum() / P)


@dataclass
class EvalResult:
    ap: dict[int, float]
    cap: dict[int, float]
    mAP: float
    mcAP: float
    positives: dict[int, int]
    negatives: dict[int, int]
    skipped: list[int]

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("ap", "cap", "positives", "negatives"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return json.dumps(d, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'class':>5}  {'AP':>8}  {'cAP':>8}  {'P':>7}  {'N':>7}"]
        for c in sorted(self.positives):
            if c in self.ap:
                lines.append(f"{c:>5}  {self.ap[c]:8.4f}  {self.cap[c]:8.4f}  {self.positives[c]:7d}  {self.negatives[c]:7d}")
            else:
                lines.append(f"{c:>5}  {'-':>8}  {'-':>8}  {self.positives[c]:7d}  {self.negatives[c]:7d}")
        lines.append(f"{'mean':>5}  {self.mAP:8.4f}  {self.mcAP:8.4f}")
        return "\n".join(lines)


def evaluate(probs, labels, num_classes: int) -> EvalResult:
    """Per-class AP/cAP for classes ``1..K``; classes without positives are skipped.

    ``probs`` is (T, K+1); ``labels`` holds class indices (T,) or a binary
    (T, K+1) matrix.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    C = num_classes + 1
    if probs.ndim != 2 or probs.shape[1] != C:
        raise ValueError(f"predictions must be (T, {C}), got {probs.shape}")
    if labels.ndim == 1:
        if len(labels) != len(probs):
            raise ValueError(f"{len(probs)} prediction frames but {len(labels)} labels")
        binary = labels[:, None] == np.arange(C)[None, :]
    else:
        if labels.shape != probs.shape:
            raise ValueError(f"label matrix {labels.shape} does not match predictions {probs.shape}")
        binary = labels > 0
    ap, cap, pos, neg, skipped = {}, {}, {}, {}, []
    for c in range(1, C):
        P = int(binary[:, c].sum())
        pos[c] = P
        neg[c] = len(probs) - P
        if P == 0:
            skipped.append(c)
            continue
        ap[c] = average_precision(probs[:, c], binary[:, c])
        cap[c] = calibrated_ap(probs[:, c], binary[:, c])
    mAP = float(np.mean(list(ap.values()))) if ap else float("nan")
    mcAP = float(np.mean(list(cap.values()))) if cap else float("nan")
    return EvalResult(ap, cap, mAP, mcAP, pos, neg, skipped)


def evaluate_many(pairs, num_classes: int) -> EvalResult:
    """Evaluate several (probs, labels) sequences pooled into one frame set."""
    probs = np.concatenate([p for p, _ in pairs])
    labels = np.concatenate([y for _, y in pairs])
    return evaluate(probs, labels, num_classes)


def evaluate_files(pred_path, label_path, num_classes: int | None = None) -> EvalResult:
    probs, ph = read_predictions(pred_path)
    labels, lh = read_labels(label_path)
    K = ph["K"] if num_classes is None else num_classes
    if ph["K"] != K or lh["K"] != K:
        raise ValueError(f"class count mismatch: predictions K={ph['K']}, labels K={lh['K']}, requested {K}")
    if len(probs) != len(labels):
        raise ValueError(f"{len(probs)} prediction frames but {len(labels)} labels")
    return evaluate(probs, labels, K)


def centered_window_smoothing(probs, radius: int) -> np.ndarray:
    """Offline reference: mean over frames ``t - radius .. t + radius`` (clipped at the ends).

    Uses future frames, so it is only a comparison point for offline
    evaluation, never part of the streaming path.
    """
    p = np.asarray(probs, dtype=np.float64)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    T = len(p)
    c = np.concatenate([np.zeros((1,) + p.shape[1:]), np.cumsum(p, axis=0)])
    lo = np.clip(np.arange(T) - radius, 0, T)
    hi = np.clip(np.arange(T) + radius + 1, 0, T)
    return (c[hi] - c[lo]) / (hi - lo)[:, None]
