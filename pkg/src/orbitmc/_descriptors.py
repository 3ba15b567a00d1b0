"""Packed parameter descriptors for the compiled trajectory core.

Built-in target families describe themselves with a small bundle of flat
arrays so the compiled backend (or its NumPy twin) can evaluate log-density
and gradient without calling back into Python.  Targets without a descriptor
always take the generic Python path.
"""

from dataclasses import dataclass, field

import numpy as np

KIND_DIAG_GAUSS = 0
KIND_BANANA = 1
KIND_LOGISTIC = 2
KIND_ITEM_RESPONSE = 3

_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_I = np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class CoreSpec:
    """Flat-array parameterization of a built-in target family.

    kind: one of the KIND_* constants.
    f0, f1: float64 parameter arrays (meaning depends on kind).
    i0, i1: int64 index arrays (meaning depends on kind).
    meta: int64 shape/size metadata.
    """

    kind: int
    f0: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    f1: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    i0: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    i1: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    meta: np.ndarray = field(default_factory=lambda: _EMPTY_I)

    def __post_init__(self):
        object.__setattr__(self, "f0", np.ascontiguousarray(self.f0, dtype=np.float64))
        object.__setattr__(self, "f1", np.ascontiguousarray(self.f1, dtype=np.float64))
        object.__setattr__(self, "i0", np.ascontiguousarray(self.i0, dtype=np.int64))
        object.__setattr__(self, "i1", np.ascontiguousarray(self.i1, dtype=np.int64))
        object.__setattr__(self, "meta", np.ascontiguousarray(self.meta, dtype=np.int64))
