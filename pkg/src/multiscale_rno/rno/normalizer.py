"""Min-max scaling of surrogate inputs and outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..types import INPUT_NAMES, OUTPUT_NAMES

K_FLOOR = 1e-12
LOG_COMPONENTS = (0, 2)  # K11, K22

# components sharing one range when grouping by physical quantity
QUANTITY_GROUPS = {
    "component": [[i] for i in range(len(OUTPUT_NAMES))],
    "quantity": [[0, 2], [1], [3, 4, 5, 6], [7, 8], [9], [10]],
}


def transform_outputs(values):
    """Physical outputs -> training representation (log of diagonal K)."""
    y = np.array(values, dtype=float, copy=True)
    for c in LOG_COMPONENTS:
        y[..., c] = np.log(np.maximum(y[..., c], K_FLOOR))
    return y


def inverse_transform_outputs(y):
    x = np.array(y, dtype=float, copy=True)
    for c in LOG_COMPONENTS:
        x[..., c] = np.exp(x[..., c])
    return x


def _ranges(data, groups):
    lo = np.empty(data.shape[-1])
    hi = np.empty(data.shape[-1])
    flat = data.reshape(-1, data.shape[-1])
    for g in groups:
        lo[g] = flat[:, g].min()
        hi[g] = flat[:, g].max()
    return lo, hi


@dataclass
class Normalizer:
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray  # in the transformed (log K) representation
    out_max: np.ndarray
    grouping: str = "component"
    log_k: bool = True

    @staticmethod
    def _scale(lo, hi):
        span = hi - lo
        const = span <= 0
        return np.where(const, 1.0, span), const

    # inputs -----------------------------------------------------------------
    def normalize_inputs(self, x):
        span, const = self._scale(self.in_min, self.in_max)
        return np.where(const, 0.5, (np.asarray(x, dtype=float) - self.in_min) / span)

    def count_out_of_range(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return int(np.sum((x < self.in_min - tol) | (x > self.in_max + tol)))

    # outputs ----------------------------------------------------------------
    def normalize_outputs(self, values):
        y = transform_outputs(values) if self.log_k else np.asarray(values, dtype=float)
        span, const = self._scale(self.out_min, self.out_max)
        return np.where(const, 0.5, (y - self.out_min) / span)

    def denormalize_outputs(self, yn):
        span, const = self._scale(self.out_min, self.out_max)
        y = np.where(const, self.out_min, self.out_min + np.asarray(yn) * span)
        return inverse_transform_outputs(y) if self.log_k else y

    def to_dict(self):
        return {"in_min": self.in_min.tolist(), "in_max": self.in_max.tolist(),
                "out_min": self.out_min.tolist(), "out_max": self.out_max.tolist(),
                "grouping": self.grouping, "log_k": self.log_k}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["in_min"]), np.array(d["in_max"]), np.array(d["out_min"]),
                   np.array(d["out_max"]), d.get("grouping", "component"), d.get("log_k", True))


def fit_normalizer(dataset, grouping: str = "component", log_k: bool = True) -> Normalizer:
    """Global min/max per component over every trajectory and time."""
    entries = dataset.entries if hasattr(dataset, "entries") else dataset
    if len(entries) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    if grouping not in QUANTITY_GROUPS:
        raise DataError(f"unknown normalizer grouping {grouping!r}")
    inputs = np.concatenate([tr.inputs for tr, _ in entries])
    outputs = np.concatenate([ps.values for _, ps in entries])
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
        raise DataError("dataset contains non-finite values")
    y = transform_outputs(outputs) if log_k else outputs
    in_lo, in_hi = inputs.min(axis=0), inputs.max(axis=0)
    out_lo, out_hi = _ranges(y, QUANTITY_GROUPS[grouping])
    assert len(in_lo) == len(INPUT_NAMES)
    return Normalizer(in_lo, in_hi, out_lo, out_hi, grouping, log_k)
