"""Trained model bundle: anticipation + aggregation parameters and their sizes."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .anticipation import AnticipationParams
from .data.io import FormatError, read_checkpoint, write_checkpoint
from .numerics import named_arrays
from .pfa import PfaParams


@dataclass(frozen=True)
class ModelDims:
    D: int
    H: int
    H_p: int
    K: int
    cls_hidden: int = 256
    wgen_hidden: int = 64

    @property
    def num_outputs(self) -> int:
        return self.K + 1


@dataclass
class Model:
    dims: ModelDims
    ant: AnticipationParams
    pfa: PfaParams

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator) -> Model:
        ant = AnticipationParams.init(dims.D, dims.H, rng)
        pfa = PfaParams.init(dims.D, dims.H_p, dims.num_outputs, rng, dims.cls_hidden, dims.wgen_hidden)
        return cls(dims, ant, pfa)

    @classmethod
    def zeros(cls, dims: ModelDims) -> Model:
        return cls(
            dims,
            AnticipationParams.zeros(dims.D, dims.H),
            PfaParams.zeros(dims.D, dims.H_p, dims.num_outputs, dims.cls_hidden, dims.wgen_hidden),
        )

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"ant.{k}": v for k, v in named_arrays(self.ant).items()}
        out.update({f"pfa.{k}": v for k, v in named_arrays(self.pfa).items()})
        return out

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"dims": asdict(self.dims)}
        if extra_meta:
            meta.update(extra_meta)
        write_checkpoint(path, self.tensors(), meta)

    @classmethod
    def load(cls, path) -> tuple[Model, dict]:
        tensors, meta = read_checkpoint(path)
        try:
            dims = ModelDims(**meta["dims"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"checkpoint meta lacks model dimensions ({exc})", path) from None
        model = cls.zeros(dims)
        expected = model.tensors()
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise FormatError(f"checkpoint tensors do not match model (missing {missing}, extra {extra})", path)
        for name, arr in expected.items():
            if tensors[name].shape != arr.shape:
                raise FormatError(f"tensor {name} has shape {tensors[name].shape}, expected {arr.shape}", path)
            arr[...] = tensors[name]
        return model, meta
