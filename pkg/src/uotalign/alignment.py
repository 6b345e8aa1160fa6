"""Cross-modal projection through a coupling, alignment loss, adapter and prediction head."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .geometry import FeatureSequence, Side, _data, unit_rows
from .io import arrays_from_json, arrays_to_json

LN_EPS = 1e-5


class Direction(enum.Enum):
    A2L = "A2L"
    L2A = "L2A"
    BALANCED = "Balanced"
    FREE = "Free"


_PRESETS = {
    Direction.A2L: (0.5, 1.0),
    Direction.L2A: (1.0, 0.5),
    Direction.BALANCED: (10.0, 10.0),
    Direction.FREE: (0.0, 0.0),
}


def preset_marginals(mode) -> tuple[float, float]:
    """(lambda1, lambda2) for a directional preset.

    A2L keeps every token covered (lambda2 > lambda1); L2A keeps every
    acoustic frame (lambda1 > lambda2).
    """
    if isinstance(mode, str):
        mode = {d.value.lower(): d for d in Direction}[mode.lower()]
    return _PRESETS[Direction(mode)]


def _check(a: np.ndarray, shape: tuple, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != shape:
        raise ShapeError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name} contains non-finite entries")
    return a


@dataclass
class AdapterParams:
    fc_l2a_weight: np.ndarray
    fc_l2a_bias: np.ndarray
    ln_in_gain: np.ndarray
    ln_in_bias: np.ndarray
    ln_out_gain: np.ndarray
    ln_out_bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.fc_l2a_weight, dtype=float)
        if w.ndim != 2:
            raise ShapeError("fc_l2a_weight must be a matrix")
        d_l, d_a = w.shape
        self.fc_l2a_weight = _check(w, (d_l, d_a), "fc_l2a_weight")
        self.fc_l2a_bias = _check(self.fc_l2a_bias, (d_a,), "fc_l2a_bias")
        self.ln_in_gain = _check(self.ln_in_gain, (d_l,), "ln_in_gain")
        self.ln_in_bias = _check(self.ln_in_bias, (d_l,), "ln_in_bias")
        self.ln_out_gain = _check(self.ln_out_gain, (d_a,), "ln_out_gain")
        self.ln_out_bias = _check(self.ln_out_bias, (d_a,), "ln_out_bias")

    @property
    def d_l(self) -> int:
        return self.fc_l2a_weight.shape[0]

    @property
    def d_a(self) -> int:
        return self.fc_l2a_weight.shape[1]

    @classmethod
    def init(cls, d_l: int, d_a: int, rng=None, scale: float = 0.1) -> "AdapterParams":
        rng = np.random.default_rng(rng)
        return cls(
            rng.normal(scale=scale, size=(d_l, d_a)),
            np.zeros(d_a),
            np.ones(d_l),
            np.zeros(d_l),
            np.ones(d_a),
            np.zeros(d_a),
        )

    def arrays(self) -> dict:
        return {
            "fc_l2a_weight": self.fc_l2a_weight,
            "fc_l2a_bias": self.fc_l2a_bias,
            "ln_in_gain": self.ln_in_gain,
            "ln_in_bias": self.ln_in_bias,
            "ln_out_gain": self.ln_out_gain,
            "ln_out_bias": self.ln_out_bias,
        }


@dataclass
class PredictionHead:
    """Linear layer onto the vocabulary; index 0 is the CTC blank."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if w.ndim != 2:
            raise ShapeError("head weight must be a matrix")
        if w.shape[1] < 2:
            raise ShapeError("vocabulary needs the blank plus at least one symbol")
        self.weight = _check(w, w.shape, "head weight")
        self.bias = _check(self.bias, (w.shape[1],), "head bias")

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, d_a: int, vocab_size: int, rng=None, scale: float = 0.1) -> "PredictionHead":
        rng = np.random.default_rng(rng)
        return cls(rng.normal(scale=scale, size=(d_a, vocab_size)), np.zeros(vocab_size))

    def arrays(self) -> dict:
        return {"head_weight": self.weight, "head_bias": self.bias}


def project_to_linguistic(gamma, H, column_normalized: bool = False) -> FeatureSequence:
    """Transport acoustic rows onto the tokens: row j is sum_i gamma_ij h_i.

    ``column_normalized`` divides each row by its column mass, giving a
    barycentre; useful for display only.
    """
    g = np.asarray(getattr(gamma, "gamma", gamma), dtype=float)
    h = _data(H)
    if g.ndim != 2 or g.shape[0] != h.shape[0]:
        raise ShapeError(f"plan shape {g.shape} does not match {h.shape[0]} acoustic frames")
    out = g.T @ h
    if column_normalized:
        mass = g.sum(axis=0)
        out = out / np.where(mass > 0, mass, 1.0)[:, None]
    return FeatureSequence(out, Side.LINGUISTIC)


def rowwise_cosine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """cos(x_j, y_j) per row; zero-norm rows give 0."""
    xu, _, _ = unit_rows(x)
    yu, _, _ = unit_rows(y)
    return np.sum(xu * yu, axis=1)


def alignment_loss(L_proj, L) -> float:
    """sum_j (1 - cos(projected_j, token_j))."""
    a, b = _data(L_proj), _data(L)
    if a.shape != b.shape:
        raise ShapeError(f"projected {a.shape} and linguistic {b.shape} sequences differ in shape")
    return float(np.sum(1.0 - rowwise_cosine(a, b)))


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def adapter_forward(A, H, p: AdapterParams) -> FeatureSequence:
    """A + LN_out(FC_{L->A}(LN_in(H)))."""
    a, h = _data(A), _data(H)
    if a.shape[0] != h.shape[0]:
        raise ShapeError(f"A has {a.shape[0]} frames but H has {h.shape[0]}")
    if a.shape[1] != p.d_a or h.shape[1] != p.d_l:
        raise ShapeError(f"adapter expects dims (d_a={p.d_a}, d_l={p.d_l}), got ({a.shape[1]}, {h.shape[1]})")
    z = layer_norm(h, p.ln_in_gain, p.ln_in_bias) @ p.fc_l2a_weight + p.fc_l2a_bias
    return FeatureSequence(a + layer_norm(z, p.ln_out_gain, p.ln_out_bias), Side.ACOUSTIC)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(A_tilde, head: PredictionHead) -> np.ndarray:
    """Per-frame token distribution, shape (m, V)."""
    a = _data(A_tilde)
    if a.shape[1] != head.weight.shape[0]:
        raise ShapeError(f"head expects dim {head.weight.shape[0]}, got {a.shape[1]}")
    return softmax(a @ head.weight + head.bias)


def params_to_json(adapter: AdapterParams, head: PredictionHead, extra: dict | None = None) -> dict:
    arrays = dict(adapter.arrays())
    arrays.update(head.arrays())
    if extra:
        arrays.update(extra)
    return arrays_to_json(arrays)


def params_from_json(obj: dict) -> tuple[AdapterParams, PredictionHead, dict]:
    """Inverse of :func:`params_to_json`; unrecognized arrays come back in the third slot."""
    arrays = arrays_from_json(obj)
    adapter = AdapterParams(**{k: arrays.pop(k) for k in list(AdapterParams.__dataclass_fields__)})
    head = PredictionHead(arrays.pop("head_weight"), arrays.pop("head_bias"))
    return adapter, head, arrays
