"""Feature sequences, the dimension-matching projection and cost matrices."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

TINY_NORM = 1e-12


class Side(enum.Enum):
    ACOUSTIC = "acoustic"
    LINGUISTIC = "linguistic"


class Metric(enum.Enum):
    COSINE = "cosine"
    SQEUCLIDEAN = "sqeuclidean"


@dataclass(frozen=True)
class FeatureSequence:
    """A length x dim block of real feature vectors, one row per position."""

    data: np.ndarray
    side: Side = Side.ACOUSTIC

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError(f"feature sequence must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("feature sequence contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.length


@dataclass(frozen=True)
class ProjectionParams:
    """Affine map from acoustic dim d_a to linguistic dim d_l: x @ weight + bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ShapeError(f"projection weight {w.shape} and bias {b.shape} are inconsistent")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeError("projection parameters contain non-finite entries")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionParams":
        return cls(np.eye(dim), np.zeros(dim))


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    metric: Metric = Metric.COSINE

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ShapeError(f"cost matrix must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ShapeError("cost entries must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _data(x) -> np.ndarray:
    if isinstance(x, FeatureSequence):
        return x.data
    return np.asarray(x, dtype=float)


def project_features(A: FeatureSequence, p: ProjectionParams) -> FeatureSequence:
    """Map every acoustic row a_i to a_i @ weight + bias in the linguistic space."""
    a = _data(A)
    if a.shape[1] != p.in_dim:
        raise ShapeError(f"acoustic dim {a.shape[1]} does not match projection input dim {p.in_dim}")
    return FeatureSequence(a @ p.weight + p.bias, Side.LINGUISTIC)


def unit_rows(x: np.ndarray, tiny: float = TINY_NORM) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array-level row normalization.

    Returns ``(unit, norms, degenerate)``; degenerate rows come back as zeros.
    """
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    degenerate = norms <= tiny
    safe = np.where(degenerate, 1.0, norms)
    unit = np.where(degenerate[:, None], 0.0, x / safe[:, None])
    return unit, norms, degenerate


def normalize_rows(F: FeatureSequence) -> tuple[FeatureSequence, np.ndarray]:
    """Scale each row to unit Euclidean norm.

    Rows with norm at most 1e-12 are returned as zeros; the second return value
    is a boolean mask flagging them.
    """
    side = F.side if isinstance(F, FeatureSequence) else Side.ACOUSTIC
    unit, _, degenerate = unit_rows(_data(F))
    return FeatureSequence(unit, side), degenerate


def cosine_cost(h: np.ndarray, l: np.ndarray) -> np.ndarray:
    hu, _, _ = unit_rows(h)
    lu, _, _ = unit_rows(l)
    # zero rows give a dot product of 0, hence cost 1
    return np.clip(1.0 - hu @ lu.T, 0.0, 2.0)


def sqeuclidean_cost(h: np.ndarray, l: np.ndarray) -> np.ndarray:
    diff = h[:, None, :] - l[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def cost_matrix(H: FeatureSequence, L: FeatureSequence, metric: Metric = Metric.COSINE) -> CostMatrix:
    """Pairwise cost between the rows of ``H`` (m) and ``L`` (n), shape (m, n)."""
    h, l = _data(H), _data(L)
    if h.shape[1] != l.shape[1]:
        raise ShapeError(f"feature dims differ: {h.shape[1]} vs {l.shape[1]}")
    metric = Metric(metric)
    if metric is Metric.COSINE:
        return CostMatrix(cosine_cost(h, l), metric)
    return CostMatrix(sqeuclidean_cost(h, l), metric)
