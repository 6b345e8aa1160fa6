"""CTC loss by the forward recursion, its gradient, a brute-force oracle and greedy decoding.

Blank is index 0 throughout. Lattices are (T, V) arrays of log-probabilities.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DomainError, InfeasibleError, ShapeError, SizeError

BLANK = 0


def _lattice(lattice) -> np.ndarray:
    lp = np.asarray(lattice, dtype=float)
    if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 2:
        raise ShapeError(f"lattice must be (T, V) with V >= 2, got {lp.shape}")
    return lp


def _labels(y, vocab_size: int) -> np.ndarray:
    y = np.asarray(y, dtype=int).reshape(-1)
    if np.any(y < 1) or np.any(y >= vocab_size):
        raise DomainError(f"labels must lie in [1, {vocab_size - 1}], got {y.tolist()}")
    return y


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def min_frames(y) -> int:
    """Shortest input length that can emit ``y``: one frame per label plus a
    separating blank between each pair of equal neighbours."""
    y = np.asarray(y, dtype=int).reshape(-1)
    return int(y.size + np.count_nonzero(y[1:] == y[:-1]))


def is_feasible(T: int, y) -> bool:
    return T >= min_frames(y)


def _extend(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ext = np.full(2 * y.size + 1, BLANK, dtype=int)
    ext[1::2] = y
    # skip transition s-2 -> s allowed onto a label that differs from the previous label
    skip = np.zeros(ext.size, dtype=bool)
    skip[3::2] = y[1:] != y[:-1]
    return ext, skip


def _logaddexp3(a, b, c):
    return np.logaddexp(np.logaddexp(a, b), c)


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    """x moved k places right (k > 0) or left (k < 0), padded with -inf."""
    out = np.full_like(x, -np.inf)
    if k > 0:
        out[k:] = x[:-k]
    else:
        out[:k] = x[-k:]
    return out


def _forward(lp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = lp.shape[0], ext.size
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        jump = np.where(skip, _shift(prev, 2), -np.inf)
        alpha[t] = _logaddexp3(prev, _shift(prev, 1), jump) + lp[t, ext]
    return alpha


def _backward(lp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = lp.shape[0], ext.size
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = lp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = lp[T - 1, ext[S - 2]]
    # a skip into s + 2 is allowed iff skip[s + 2]
    skip_from = np.zeros(S, dtype=bool)
    skip_from[: max(S - 2, 0)] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        jump = np.where(skip_from, _shift(nxt, -2), -np.inf)
        beta[t] = _logaddexp3(nxt, _shift(nxt, -1), jump) + lp[t, ext]
    return beta


def ctc_loss(lattice, y) -> float:
    """Negative log-probability of ``y`` summed over all blank-augmented paths.

    Returns ``inf`` when the lattice is too short to emit ``y`` (see
    :func:`is_feasible`).
    """
    lp = _lattice(lattice)
    y = _labels(y, lp.shape[1])
    if not is_feasible(lp.shape[0], y):
        return math.inf
    ext, skip = _extend(y)
    alpha = _forward(lp, ext, skip)
    last = alpha[-1, -2:] if ext.size > 1 else alpha[-1, -1:]
    return float(-np.logaddexp.reduce(last))


def ctc_grad(lattice, y) -> np.ndarray:
    """Gradient of :func:`ctc_loss` with respect to every lattice entry.

    Entries are treated as free variables, so the result is minus the
    posterior occupation of each (frame, symbol) cell.
    """
    lp = _lattice(lattice)
    y = _labels(y, lp.shape[1])
    if not is_feasible(lp.shape[0], y):
        raise InfeasibleError(f"{lp.shape[0]} frames cannot emit {y.size} labels")
    ext, skip = _extend(y)
    alpha = _forward(lp, ext, skip)
    beta = _backward(lp, ext, skip)
    last = alpha[-1, -2:] if ext.size > 1 else alpha[-1, -1:]
    log_z = np.logaddexp.reduce(last)
    # alpha and beta both include the emission at t, remove it once
    occ = alpha + beta - lp[:, ext] - log_z
    post = np.zeros_like(lp)
    with np.errstate(under="ignore"):
        np.add.at(post.T, ext, np.exp(occ).T)
    return -post


def ctc_grad_logits(logits, y) -> np.ndarray:
    """Gradient of the CTC loss of ``log_softmax(logits)`` with respect to the logits."""
    lp = log_softmax(logits)
    g = ctc_grad(lp, y)
    return g - np.exp(lp) * g.sum(axis=1, keepdims=True)


def collapse(path) -> list[int]:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for k in path:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out


def ctc_bruteforce(lattice, y) -> float:
    """Reference CTC loss by enumerating all V**T frame paths (V**T <= 1e6)."""
    lp = _lattice(lattice)
    T, V = lp.shape
    y = _labels(y, V).tolist()
    if V**T > 10**6:
        raise SizeError(f"{V}**{T} paths exceed the enumeration limit")
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) == y:
            total += math.exp(sum(lp[t, k] for t, k in enumerate(path)))
    return math.inf if total == 0.0 else -math.log(total)


def greedy_decode(P) -> list[int]:
    """Per-frame argmax (ties go to the lowest index), then collapse."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2:
        raise ShapeError(f"expected a (T, V) matrix, got shape {P.shape}")
    return collapse(np.argmax(P, axis=1))


def edit_distance(a, b) -> int:
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, z in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != z))
        prev = cur
    return prev[-1]
