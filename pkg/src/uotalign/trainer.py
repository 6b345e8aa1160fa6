"""Desk-scale joint training with the combined CTC + alignment + transport loss.

The model is a linear acoustic encoder followed by the dimension-matching
projection, the residual adapter and a softmax head. Per instance the loss is

    eta * ctc + (1 - eta) * (align + uot)

where ``uot`` is the converged transport objective. The coupling returned by
the solver is held constant when differentiating (stop-gradient), so only the
transport-cost term of ``uot`` carries gradient, through the cost matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .alignment import AdapterParams, PredictionHead, layer_norm, preset_marginals, softmax
from .ctc import ctc_grad, edit_distance, greedy_decode, log_softmax
from .ctc import ctc_loss as _ctc_loss
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .geometry import Metric, ProjectionParams, cosine_cost, sqeuclidean_cost, unit_rows
from .io import arrays_from_json, arrays_to_json
from .uot import SolverConfig, TransportPlan, objective, solve_uot

log = logging.getLogger(__name__)

_A2L = preset_marginals("A2L")


@dataclass
class ToyModelParams:
    encoder_weight: np.ndarray
    encoder_bias: np.ndarray
    projection: ProjectionParams
    adapter: AdapterParams
    head: PredictionHead

    @classmethod
    def init(cls, raw_dim: int, d_a: int, d_l: int, vocab_size: int, seed=0, scale: float = 0.3):
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(scale=scale, size=(raw_dim, d_a)),
            np.zeros(d_a),
            ProjectionParams(rng.normal(scale=scale, size=(d_a, d_l)), np.zeros(d_l)),
            AdapterParams.init(d_l, d_a, rng, scale),
            PredictionHead.init(d_a, vocab_size, rng, scale),
        )

    def arrays(self) -> dict:
        out = {
            "encoder_weight": self.encoder_weight,
            "encoder_bias": self.encoder_bias,
            "projection_weight": self.projection.weight,
            "projection_bias": self.projection.bias,
        }
        out.update(self.adapter.arrays())
        out.update(self.head.arrays())
        return out

    @classmethod
    def from_arrays(cls, a: dict) -> "ToyModelParams":
        return cls(
            np.array(a["encoder_weight"], dtype=float),
            np.array(a["encoder_bias"], dtype=float),
            ProjectionParams(a["projection_weight"], a["projection_bias"]),
            AdapterParams(**{f.name: np.array(a[f.name], dtype=float) for f in fields(AdapterParams)}),
            PredictionHead(a["head_weight"], a["head_bias"]),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(v) for v in self.arrays().values()])

    def from_vector(self, vec: np.ndarray) -> "ToyModelParams":
        out, k = {}, 0
        for name, v in self.arrays().items():
            out[name] = np.asarray(vec[k:k + v.size], dtype=float).reshape(v.shape)
            k += v.size
        return ToyModelParams.from_arrays(out)

    def to_json(self) -> dict:
        return arrays_to_json(self.arrays())

    @classmethod
    def from_json(cls, obj: dict) -> "ToyModelParams":
        return cls.from_arrays(arrays_from_json(obj))


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.3
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(epsilon=0.05, lambda1=_A2L[0], lambda2=_A2L[1]))
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 1
    seed: int = 0
    acoustic_dim: int = 4
    dev_fraction: float = 0.2
    metric: str = "cosine"
    init_scale: float = 0.3

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0 <= self.dev_fraction < 1:
            raise ConfigError("dev_fraction must lie in [0, 1)")
        Metric(self.metric)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        if isinstance(d.get("solver"), dict):
            bad = set(d["solver"]) - set(SolverConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown solver keys: {sorted(bad)}")
            d["solver"] = SolverConfig(**{**_default_solver_dict(), **d["solver"]})
        return cls(**d)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["solver"] = {f.name: getattr(self.solver, f.name) for f in fields(SolverConfig)}
        return d


def _default_solver_dict() -> dict:
    s = TrainConfig().solver
    return {f.name: getattr(s, f.name) for f in fields(SolverConfig)}


@dataclass
class LossResult:
    total: float
    ctc: float
    align: float
    uot: float
    converged: bool
    gamma: np.ndarray
    plan: TransportPlan | None = None

    @property
    def parts(self) -> dict:
        return {"ctc": self.ctc, "align": self.align, "uot": self.uot}


def _cost(h, l, metric):
    return cosine_cost(h, l) if Metric(metric) is Metric.COSINE else sqeuclidean_cost(h, l)


def _unpack(instance):
    x = instance.acoustic.data
    l = instance.linguistic.data
    return x, l, np.asarray(instance.labels, dtype=int)


def _forward(instance, params: ToyModelParams, cfg: TrainConfig, gamma=None, warm=None):
    x, l, y = _unpack(instance)
    if x.shape[1] != params.encoder_weight.shape[0]:
        raise ShapeError(f"raw acoustic dim {x.shape[1]} does not match encoder input {params.encoder_weight.shape[0]}")
    if l.shape[1] != params.projection.out_dim:
        raise ShapeError(f"linguistic dim {l.shape[1]} does not match projection output {params.projection.out_dim}")
    c = {}
    c["x"], c["l"], c["y"] = x, l, y
    c["a"] = a = x @ params.encoder_weight + params.encoder_bias
    c["h"] = h = a @ params.projection.weight + params.projection.bias
    cost = _cost(h, l, cfg.metric)
    converged = True
    plan = None
    if gamma is None:
        plan = solve_uot(cost, None, None, cfg.solver, init=warm)
        gamma, converged = plan.gamma, plan.converged
    c["gamma"] = gamma
    ad = params.adapter
    c["zin"] = zin = layer_norm(h, ad.ln_in_gain, ad.ln_in_bias)
    c["f"] = f = zin @ ad.fc_l2a_weight + ad.fc_l2a_bias
    c["at"] = at = a + layer_norm(f, ad.ln_out_gain, ad.ln_out_bias)
    c["lp"] = lp = log_softmax(at @ params.head.weight + params.head.bias)
    ctc = _ctc_loss(lp, y)
    lt = gamma.T @ h
    c["lt"] = lt
    lt_u, _, _ = unit_rows(lt)
    l_u, _, _ = unit_rows(l)
    align = float(np.sum(1.0 - np.sum(lt_u * l_u, axis=1)))
    uot = objective(gamma, cost, None, None, cfg.solver).total
    total = cfg.eta * ctc + (1.0 - cfg.eta) * (align + uot)
    return LossResult(total, ctc, align, uot, converged, gamma, plan), c


def total_loss(instance, params: ToyModelParams, cfg: TrainConfig, gamma=None) -> LossResult:
    """Evaluate the combined loss; pass ``gamma`` to reuse a fixed coupling."""
    return _forward(instance, params, cfg, gamma)[0]


def _ln_backward(x, gain, dy, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    sigma = np.sqrt(x.var(axis=1, keepdims=True) + eps)
    xhat = (x - mu) / sigma
    dgain = np.sum(dy * xhat, axis=0)
    dbias = np.sum(dy, axis=0)
    dxhat = dy * gain
    dx = (dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True)) / sigma
    return dx, dgain, dbias


def _cos_grad_x(x, y):
    """d cos(x_k, y_k) / d x_k for each row pair; zero where either row vanishes."""
    xu, xn, xz = unit_rows(x)
    yu, _, yz = unit_rows(y)
    cos = np.sum(xu * yu, axis=1, keepdims=True)
    g = (yu - cos * xu) / np.where(xz, 1.0, xn)[:, None]
    g[xz | yz] = 0.0
    return g


def _transport_cost_grad(h, l, gamma, metric):
    """Gradient of sum_ij gamma_ij C_ij(h) with respect to h, gamma held fixed."""
    if Metric(metric) is Metric.SQEUCLIDEAN:
        return 2.0 * (gamma.sum(axis=1)[:, None] * h - gamma @ l)
    hu, hn, hz = unit_rows(h)
    lu, _, _ = unit_rows(l)
    cos = hu @ lu.T
    weighted = np.sum(gamma * cos, axis=1)
    g = -(gamma @ lu - weighted[:, None] * hu) / np.where(hz, 1.0, hn)[:, None]
    g[hz] = 0.0
    return g


def loss_and_grad(instance, params: ToyModelParams, cfg: TrainConfig, gamma=None, warm=None):
    """Loss and analytic gradient; ``warm`` warm-starts the transport solver."""
    res, c = _forward(instance, params, cfg, gamma, warm)
    eta = cfg.eta
    ad, head = params.adapter, params.head

    d_lp = eta * ctc_grad(c["lp"], c["y"]) if eta > 0 else np.zeros_like(c["lp"])
    d_logits = d_lp - np.exp(c["lp"]) * d_lp.sum(axis=1, keepdims=True)
    d_head_w = c["at"].T @ d_logits
    d_head_b = d_logits.sum(axis=0)
    d_at = d_logits @ head.weight.T

    d_a = d_at.copy()
    d_f, d_lnout_g, d_lnout_b = _ln_backward(c["f"], ad.ln_out_gain, d_at)
    d_fc_w = c["zin"].T @ d_f
    d_fc_b = d_f.sum(axis=0)
    d_zin = d_f @ ad.fc_l2a_weight.T
    d_h, d_lnin_g, d_lnin_b = _ln_backward(c["h"], ad.ln_in_gain, d_zin)

    gam = c["gamma"]
    w_align = 1.0 - eta
    if w_align > 0:
        d_lt = -w_align * _cos_grad_x(c["lt"], c["l"])
        d_h = d_h + gam @ d_lt
        d_h = d_h + w_align * _transport_cost_grad(c["h"], c["l"], gam, cfg.metric)

    d_proj_w = c["a"].T @ d_h
    d_proj_b = d_h.sum(axis=0)
    d_a = d_a + d_h @ params.projection.weight.T
    d_enc_w = c["x"].T @ d_a
    d_enc_b = d_a.sum(axis=0)

    parts = (d_enc_w, d_enc_b, d_proj_w, d_proj_b, d_fc_w, d_fc_b, d_lnin_g, d_lnin_b, d_lnout_g, d_lnout_b,
             d_head_w, d_head_b)
    if not all(np.all(np.isfinite(p)) for p in parts):
        raise TrainingDivergedError(f"non-finite gradient (loss parts ctc={res.ctc}, align={res.align}, uot={res.uot})")
    grads = ToyModelParams(
        d_enc_w,
        d_enc_b,
        ProjectionParams(d_proj_w, d_proj_b),
        AdapterParams(d_fc_w, d_fc_b, d_lnin_g, d_lnin_b, d_lnout_g, d_lnout_b),
        PredictionHead(d_head_w, d_head_b),
    )
    return res, grads


def grad_params(instance, params: ToyModelParams, cfg: TrainConfig, gamma=None) -> ToyModelParams:
    """Analytic gradient of :func:`total_loss`, the coupling treated as a constant."""
    return loss_and_grad(instance, params, cfg, gamma)[1]


def token_error_rate(dataset, params: ToyModelParams, cfg: TrainConfig) -> float:
    """Greedy-decode edit distance over total reference length; needs no linguistic input."""
    errors = 0
    ref_len = 0
    for inst in dataset:
        x = inst.acoustic.data
        a = x @ params.encoder_weight + params.encoder_bias
        h = a @ params.projection.weight + params.projection.bias
        ad = params.adapter
        f = layer_norm(h, ad.ln_in_gain, ad.ln_in_bias) @ ad.fc_l2a_weight + ad.fc_l2a_bias
        at = a + layer_norm(f, ad.ln_out_gain, ad.ln_out_bias)
        hyp = greedy_decode(softmax(at @ params.head.weight + params.head.bias))
        ref = [int(t) for t in inst.labels]
        errors += edit_distance(hyp, ref)
        ref_len += len(ref)
    return errors / max(ref_len, 1)


def split_dataset(dataset: list, dev_fraction: float) -> tuple[list, list]:
    """Hold out the last ``round(dev_fraction * N)`` instances (at least one).

    A single-instance dataset is used for both training and evaluation.
    """
    if len(dataset) < 2 or dev_fraction == 0:
        return list(dataset), list(dataset)
    k = min(max(1, int(round(dev_fraction * len(dataset)))), len(dataset) - 1)
    return list(dataset[:-k]), list(dataset[-k:])


HISTORY_COLUMNS = ("epoch", "total", "ctc", "align", "uot", "dev_token_error")


def train(dataset: list, cfg: TrainConfig, params: ToyModelParams | None = None):
    """Plain minibatch SGD; returns ``(params, history)``.

    ``history`` holds one dict per epoch with the mean losses over the training
    split (each instance evaluated just before its update) and the greedy
    token error on the held-out split.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    train_set, dev_set = split_dataset(dataset, cfg.dev_fraction)
    first = dataset[0]
    vocab = getattr(first.spec, "vocab_size", None) or int(max(max(i.labels) for i in dataset) + 1)
    if params is None:
        params = ToyModelParams.init(
            first.acoustic.dim, cfg.acoustic_dim, first.linguistic.dim, vocab, cfg.seed, cfg.init_scale
        )
    rng = np.random.default_rng(cfg.seed)
    history = []
    per = np.zeros((len(train_set), 4))
    # last plan per training instance; parameters move little per step so
    # warm-started solves need a handful of sweeps instead of ~100
    warm = [None] * len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc = None
            for idx in batch:
                res, g = loss_and_grad(train_set[idx], params, cfg, warm=warm[idx])
                warm[idx] = res.plan
                if not math.isfinite(res.total):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} (ctc={res.ctc}, align={res.align}, uot={res.uot})"
                    )
                per[idx] = (res.total, res.ctc, res.align, res.uot)
                vec = g.to_vector()
                acc = vec if acc is None else acc + vec
            if cfg.learning_rate > 0:
                params = params.from_vector(params.to_vector() - cfg.learning_rate * acc / len(batch))
        means = per.mean(axis=0)
        row = {
            "epoch": epoch,
            "total": float(means[0]),
            "ctc": float(means[1]),
            "align": float(means[2]),
            "uot": float(means[3]),
            "dev_token_error": token_error_rate(dev_set, params, cfg),
        }
        history.append(row)
        log.debug("epoch %d total %.4f dev_ter %.3f", epoch, row["total"], row["dev_token_error"])
    return params, history
