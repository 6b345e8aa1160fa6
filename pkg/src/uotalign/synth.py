"""Synthetic paired acoustic/linguistic sequences with ground-truth alignments.

Each token j of a random label sequence emits a run of frames near its
embedding (many-to-one). Optional transition frames blend two adjacent
embeddings (one-to-many), and NULL frames carry no token at all. The
generating case of every frame is recorded so alignments can be scored as
detections.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .geometry import FeatureSequence, ProjectionParams, Side
from .io import read_json, read_matrix_csv, write_json, write_matrix_csv

TOKEN, PAIR, NULL = "token", "pair", "null"


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 30
    num_tokens: int = 8
    frames_per_token_range: tuple[int, int] = (4, 8)
    transition_width: int = 0
    noise_frame_rate: float = 0.15
    embed_dim: int = 16
    noise_scale: float = 0.1
    seed: int = 0
    # when set, acoustic frames are pushed through a random full-rank
    # embed_dim x raw_dim map; see undistort_params()
    raw_dim: int | None = None
    # codebook and distortion come from this seed when set, so a dataset of
    # instances with different seeds can share one vocabulary
    codebook_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames_per_token_range", tuple(int(x) for x in self.frames_per_token_range))
        lo, hi = self.frames_per_token_range
        if self.num_tokens < 1:
            raise ConfigError("num_tokens must be at least 1")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2 (blank plus one symbol)")
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad frames_per_token_range {self.frames_per_token_range}")
        if self.transition_width < 0:
            raise ConfigError("transition_width must be nonnegative")
        if not 0 <= self.noise_frame_rate < 1:
            raise ConfigError("noise_frame_rate must lie in [0, 1)")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be positive")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be nonnegative")
        if self.raw_dim is not None and self.raw_dim < self.embed_dim:
            raise ConfigError("raw_dim must be at least embed_dim so the distortion is invertible")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frames_per_token_range"] = list(self.frames_per_token_range)
        return d


@dataclass(frozen=True)
class FrameTruth:
    kind: str
    tokens: tuple[int, ...] = ()
    weight: float | None = None

    def to_json(self, frame: int) -> dict:
        return {"frame": frame, "kind": self.kind, "tokens": list(self.tokens), "weight": self.weight}

    @classmethod
    def from_json(cls, d: dict) -> "FrameTruth":
        return cls(d["kind"], tuple(int(t) for t in d.get("tokens", [])), d.get("weight"))


@dataclass
class SyntheticInstance:
    acoustic: FeatureSequence
    linguistic: FeatureSequence
    labels: np.ndarray
    truth: list
    spec: SynthSpec = field(default_factory=SynthSpec)
    distortion: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.acoustic.length

    @property
    def n(self) -> int:
        return self.linguistic.length

    def truth_mask(self) -> np.ndarray:
        return truth_mask(self.truth, self.n)

    def null_fraction(self) -> float:
        return sum(t.kind == NULL for t in self.truth) / self.m


def truth_mask(truth, n: int) -> np.ndarray:
    """Boolean (m, n) matrix of true frame-token pairs."""
    if isinstance(truth, np.ndarray):
        return truth.astype(bool)
    mask = np.zeros((len(truth), n), dtype=bool)
    for i, t in enumerate(truth):
        for j in t.tokens:
            mask[i, j] = True
    return mask


def _draw_labels(rng, n: int, vocab_size: int) -> np.ndarray:
    symbols = vocab_size - 1
    if n <= symbols:
        return rng.choice(np.arange(1, vocab_size), size=n, replace=False)
    labels = [int(rng.integers(1, vocab_size))]
    for _ in range(n - 1):
        if symbols == 1:
            labels.append(1)
            continue
        nxt = int(rng.integers(1, vocab_size - 1))
        labels.append(nxt + 1 if nxt >= labels[-1] else nxt)
    return np.array(labels)


def generate_instance(spec: SynthSpec) -> SyntheticInstance:
    """Draw one instance; the result depends only on ``spec`` (seed included).

    NULL frames are random directions of unit expected norm, drawn
    independently of ``noise_scale`` so they stay unrelated to every token
    even in the noiseless limit.
    """
    d = spec.embed_dim
    shared = spec.codebook_seed is not None
    rng = np.random.default_rng(spec.seed)
    code_rng = np.random.default_rng(spec.codebook_seed) if shared else rng
    codebook = code_rng.normal(size=(spec.vocab_size, d))
    codebook /= np.linalg.norm(codebook, axis=1, keepdims=True)
    distortion = None
    if spec.raw_dim is not None and shared:
        distortion = code_rng.normal(size=(d, spec.raw_dim)) / math.sqrt(d)
    labels = _draw_labels(rng, spec.num_tokens, spec.vocab_size)
    emb = codebook[labels]
    lo, hi = spec.frames_per_token_range
    durations = rng.integers(lo, hi + 1, size=spec.num_tokens)

    core, core_truth = [], []
    for j in range(spec.num_tokens):
        for _ in range(durations[j]):
            core.append(emb[j] + spec.noise_scale * rng.normal(size=d))
            core_truth.append(FrameTruth(TOKEN, (j,)))
        if j + 1 < spec.num_tokens:
            for k in range(spec.transition_width):
                t = (k + 1) / (spec.transition_width + 1)
                blend = (1 - t) * emb[j] + t * emb[j + 1]
                core.append(blend + spec.noise_scale * rng.normal(size=d))
                core_truth.append(FrameTruth(PAIR, (j, j + 1), t))

    m_core = len(core)
    rate = spec.noise_frame_rate
    num_null = int(round(rate * m_core / (1 - rate)))
    m = m_core + num_null
    null_pos = set(rng.choice(m, size=num_null, replace=False).tolist()) if num_null else set()
    frames = np.empty((m, d))
    truth = []
    src = 0
    for i in range(m):
        if i in null_pos:
            frames[i] = rng.normal(size=d) / math.sqrt(d)
            truth.append(FrameTruth(NULL))
        else:
            frames[i] = core[src]
            truth.append(core_truth[src])
            src += 1

    if spec.raw_dim is not None:
        if distortion is None:
            distortion = rng.normal(size=(d, spec.raw_dim)) / math.sqrt(d)
        frames = frames @ distortion

    return SyntheticInstance(
        acoustic=FeatureSequence(frames, Side.ACOUSTIC),
        linguistic=FeatureSequence(emb, Side.LINGUISTIC),
        labels=labels.astype(int),
        truth=truth,
        spec=spec,
        distortion=distortion,
    )


def generate_dataset(spec: SynthSpec, count: int) -> list:
    """``count`` instances with seeds ``spec.seed + k`` sharing one codebook."""
    code = spec.codebook_seed if spec.codebook_seed is not None else spec.seed
    return [generate_instance(replace(spec, seed=spec.seed + k, codebook_seed=code)) for k in range(count)]


def undistort_params(instance: SyntheticInstance) -> ProjectionParams:
    """Projection that maps distorted acoustic frames back to the embedding space."""
    if instance.distortion is None:
        return ProjectionParams.identity(instance.acoustic.dim)
    w = np.linalg.pinv(instance.distortion)
    return ProjectionParams(w, np.zeros(w.shape[1]))


def uniform_alignment(m: int, n: int, window: float) -> np.ndarray:
    """Gaussian-smoothed uniform segmentation baseline, shape (m, n).

    Frame i is centred on token ``floor(i * n / m)``; its row is a Gaussian over
    token indices with standard deviation ``window`` (token units), scaled so
    the row sums to 1/m.
    """
    if not (m >= n >= 1):
        raise ShapeError(f"uniform alignment needs m >= n >= 1, got m={m}, n={n}")
    if not window > 0:
        raise ConfigError("window must be positive")
    centers = (np.arange(m) * n) // m
    dist = np.arange(n)[None, :] - centers[:, None]
    with np.errstate(over="ignore"):
        expo = np.where(dist == 0, 0.0, dist.astype(float) ** 2 / (2.0 * window**2))
    rows = np.exp(-expo)
    return rows / rows.sum(axis=1, keepdims=True) / m


@dataclass(frozen=True)
class DetectionMetrics:
    precision: float
    recall: float
    token_coverage: float
    # set when nothing was predicted; precision is then reported as 1
    empty_prediction: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def detection_metrics(gamma, truth, mass_threshold: float = 0.1) -> DetectionMetrics:
    """Score a coupling as a detector of true frame-token pairs.

    A pair is predicted when its mass exceeds ``mass_threshold`` times the
    average row mass; a token is covered when its column mass exceeds
    ``mass_threshold`` times the average column mass.
    """
    if not 0 < mass_threshold < 1:
        raise ConfigError(f"mass_threshold must lie in (0, 1), got {mass_threshold}")
    g = np.asarray(gamma, dtype=float)
    m, n = g.shape
    if len(truth) != m:
        raise ShapeError(f"truth has {len(truth)} frames but the plan has {m} rows")
    true = truth_mask(truth, n)
    total = g.sum()
    predicted = g > mass_threshold * total / m
    hits = np.count_nonzero(predicted & true)
    n_pred = np.count_nonzero(predicted)
    n_true = np.count_nonzero(true)
    empty = n_pred == 0
    precision = 1.0 if empty else hits / n_pred
    recall = hits / n_true if n_true else 1.0
    coverage = float(np.mean(g.sum(axis=0) > mass_threshold * total / n))
    return DetectionMetrics(float(precision), float(recall), coverage, bool(empty))


def save_instance(instance: SyntheticInstance, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "acoustic.csv", instance.acoustic.data)
    write_matrix_csv(out / "linguistic.csv", instance.linguistic.data)
    write_json(out / "labels.json", [int(x) for x in instance.labels])
    write_json(out / "truth.json", [t.to_json(i) for i, t in enumerate(instance.truth)])
    write_json(out / "spec.json", instance.spec.to_dict())
    if instance.distortion is not None:
        write_matrix_csv(out / "distortion.csv", instance.distortion)
    return out


def load_truth(path) -> list:
    return [FrameTruth.from_json(d) for d in read_json(path)]


def load_instance(directory) -> SyntheticInstance:
    src = Path(directory)
    spec_path = src / "spec.json"
    spec = SynthSpec.from_dict(read_json(spec_path)) if spec_path.exists() else SynthSpec()
    dist_path = src / "distortion.csv"
    return SyntheticInstance(
        acoustic=FeatureSequence(read_matrix_csv(src / "acoustic.csv"), Side.ACOUSTIC),
        linguistic=FeatureSequence(read_matrix_csv(src / "linguistic.csv"), Side.LINGUISTIC),
        labels=np.asarray(read_json(src / "labels.json"), dtype=int),
        truth=load_truth(src / "truth.json"),
        spec=spec,
        distortion=read_matrix_csv(dist_path) if dist_path.exists() else None,
    )
