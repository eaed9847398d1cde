"""Binary containers: one compact JSON header line, then a raw payload.

* features:    {version, kind, D, T, K, dtype="f64le"}, then T*D floats
* labels:      {version, kind, T, K, dtype="u16le"}, then T class indices
* predictions: {version, kind, T, K, C=K+1, dtype="f64le"}, then T*C floats
* checkpoint:  {version, kind, dtype="f64le", tensors=[{name, shape}], meta},
  then every tensor's floats in list order

All numbers are little-endian. The header is UTF-8 JSON terminated by a
single ``\\n``. Readers check the payload size against the header and report
problems with byte offsets.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

import numpy as np

VERSION = 1
MAX_HEADER = 1 << 20
_F64 = np.dtype("<f8")
_U16 = np.dtype("<u2")


class FormatError(ValueError):
    def __init__(self, message: str, path=None, offset: int | None = None):
        self.path = None if path is None else str(path)
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        prefix = f"{self.path}: " if self.path else ""
        super().__init__(f"{prefix}{message}{where}")


class HeaderError(FormatError):
    """Header missing, not JSON, or inconsistent."""


class TruncatedError(FormatError):
    """Payload shorter than the header promises."""


class PayloadMismatchError(FormatError):
    """Payload longer than the header promises."""


class LabelRangeError(FormatError):
    """A class index exceeds K."""


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, separators=(",", ":"), sort_keys=True).encode() + b"\n"


def _read_header(fh, path, kind: str, required: tuple[str, ...]) -> tuple[dict, int]:
    raw = fh.readline(MAX_HEADER + 1)
    if not raw.endswith(b"\n"):
        raise HeaderError("missing or unterminated header line", path, len(raw))
    try:
        header = json.loads(raw[:-1].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid JSON ({exc})", path, 0) from None
    if not isinstance(header, dict):
        raise HeaderError("header must be a JSON object", path, 0)
    if header.get("kind") != kind:
        raise HeaderError(f"expected kind {kind!r}, found {header.get('kind')!r}", path, 0)
    if header.get("version") != VERSION:
        raise HeaderError(f"unsupported version {header.get('version')!r}", path, 0)
    for key in required:
        v = header.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise HeaderError(f"header field {key!r} must be a nonnegative integer", path, 0)
    return header, len(raw)


def _check_size(path, start: int, expected: int) -> None:
    actual = os.path.getsize(path) - start
    if actual < expected:
        raise TruncatedError(f"payload has {actual} bytes, header promises {expected}", path, start + actual)
    if actual > expected:
        raise PayloadMismatchError(
            f"payload has {actual} bytes, header promises {expected}", path, start + expected
        )


class _AtomicWriter:
    """Writes to ``<path>.partial`` and renames on clean close; removes it on error."""

    def __init__(self, path):
        self.path = Path(path)
        self.tmp = self.path.with_name(self.path.name + ".partial")
        self.fh = open(self.tmp, "wb")

    def write(self, data: bytes) -> None:
        self.fh.write(data)

    def commit(self) -> None:
        self.fh.close()
        os.replace(self.tmp, self.path)

    def abort(self) -> None:
        self.fh.close()
        self.tmp.unlink(missing_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False


# -- features ------------------------------------------------------------------


def write_features(path, x, num_classes: int) -> None:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be (T, D), got {x.shape}")
    T, D = x.shape
    header = {"version": VERSION, "kind": "features", "D": D, "T": T, "K": int(num_classes), "dtype": "f64le"}
    with _AtomicWriter(path) as w:
        w.write(_encode_header(header))
        w.write(x.astype(_F64, copy=False).tobytes())


class FeatureReader:
    """Frame-by-frame reader; memory use is one frame."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        try:
            self.header, self._start = _read_header(self._fh, self.path, "features", ("D", "T", "K"))
            if self.header.get("dtype") != "f64le":
                raise HeaderError(f"unsupported dtype {self.header.get('dtype')!r}", self.path, 0)
            _check_size(self.path, self._start, self.T * self.D * 8)
        except Exception:
            self._fh.close()
            raise

    @property
    def T(self) -> int:
        return self.header["T"]

    @property
    def D(self) -> int:
        return self.header["D"]

    @property
    def K(self) -> int:
        return self.header["K"]

    def __iter__(self) -> Iterator[np.ndarray]:
        n = self.D * 8
        for t in range(self.T):
            buf = self._fh.read(n)
            if len(buf) != n:
                raise TruncatedError("file shrank while reading", self.path, self._start + t * n + len(buf))
            yield np.frombuffer(buf, dtype=_F64).astype(np.float64)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_features(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header, start = _read_header(fh, path, "features", ("D", "T", "K"))
        if header.get("dtype") != "f64le":
            raise HeaderError(f"unsupported dtype {header.get('dtype')!r}", path, 0)
        _check_size(path, start, header["T"] * header["D"] * 8)
        data = np.frombuffer(fh.read(), dtype=_F64).astype(np.float64)
    return data.reshape(header["T"], header["D"]), header


# -- labels --------------------------------------------------------------------


def write_labels(path, labels, num_classes: int) -> None:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError("labels must be 1-D")
    if len(y) and (y.min() < 0 or y.max() > num_classes):
        raise ValueError(f"class indices must lie in [0, {num_classes}]")
    if num_classes > np.iinfo(np.uint16).max:
        raise ValueError("too many classes for u16 labels")
    header = {"version": VERSION, "kind": "labels", "T": len(y), "K": int(num_classes), "dtype": "u16le"}
    with _AtomicWriter(path) as w:
        w.write(_encode_header(header))
        w.write(y.astype(_U16).tobytes())


def read_labels(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header, start = _read_header(fh, path, "labels", ("T", "K"))
        if header.get("dtype") != "u16le":
            raise HeaderError(f"unsupported dtype {header.get('dtype')!r}", path, 0)
        _check_size(path, start, header["T"] * 2)
        y = np.frombuffer(fh.read(), dtype=_U16).astype(np.int64)
    bad = np.flatnonzero(y > header["K"])
    if len(bad):
        i = int(bad[0])
        raise LabelRangeError(f"class index {y[i]} exceeds K={header['K']}", path, start + 2 * i)
    return y, header


# -- predictions ---------------------------------------------------------------


class PredictionWriter:
    """Streaming writer for per-frame probabilities; checks the frame count on close."""

    def __init__(self, path, T: int, num_classes: int):
        self.T = T
        self.C = num_classes + 1
        self._count = 0
        self._w = _AtomicWriter(path)
        header = {"version": VERSION, "kind": "predictions", "T": T, "K": int(num_classes),
                  "C": self.C, "dtype": "f64le"}
        self._w.write(_encode_header(header))

    def write(self, probs) -> None:
        p = np.asarray(probs, dtype=np.float64)
        if p.shape != (self.C,):
            raise ValueError(f"prediction must have shape ({self.C},), got {p.shape}")
        if self._count >= self.T:
            raise ValueError("more frames than declared")
        self._w.write(p.astype(_F64, copy=False).tobytes())
        self._count += 1

    def close(self) -> None:
        if self._count != self.T:
            self._w.abort()
            raise ValueError(f"wrote {self._count} frames, declared {self.T}")
        self._w.commit()

    def abort(self) -> None:
        self._w.abort()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
        return False


def write_predictions(path, probs, num_classes: int) -> None:
    probs = np.asarray(probs, dtype=np.float64)
    with PredictionWriter(path, len(probs), num_classes) as w:
        for row in probs:
            w.write(row)


def read_predictions(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header, start = _read_header(fh, path, "predictions", ("T", "K", "C"))
        if header["C"] != header["K"] + 1:
            raise HeaderError("C must equal K + 1", path, 0)
        _check_size(path, start, header["T"] * header["C"] * 8)
        data = np.frombuffer(fh.read(), dtype=_F64).astype(np.float64)
    return data.reshape(header["T"], header["C"]), header


# -- checkpoints ---------------------------------------------------------------


def write_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()]
    header = {"version": VERSION, "kind": "checkpoint", "dtype": "f64le", "tensors": entries, "meta": meta or {}}
    with _AtomicWriter(path) as w:
        w.write(_encode_header(header))
        for v in tensors.values():
            w.write(np.ascontiguousarray(v, dtype=_F64).tobytes())


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        header, start = _read_header(fh, path, "checkpoint", ())
        entries = header.get("tensors")
        if not isinstance(entries, list):
            raise HeaderError("checkpoint header needs a tensor list", path, 0)
        sizes = []
        for e in entries:
            if not isinstance(e, dict) or not isinstance(e.get("name"), str) or not isinstance(e.get("shape"), list):
                raise HeaderError(f"bad tensor entry {e!r}", path, 0)
            sizes.append(int(np.prod(e["shape"], dtype=np.int64)))
        _check_size(path, start, 8 * sum(sizes))
        out = {}
        for e, n in zip(entries, sizes):
            out[e["name"]] = np.frombuffer(fh.read(8 * n), dtype=_F64).astype(np.float64).reshape(e["shape"])
    return out, header.get("meta", {})
