import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uotalign.ctc import (BLANK, collapse, ctc_bruteforce, ctc_grad, ctc_grad_logits, ctc_loss, edit_distance,
                          greedy_decode, is_feasible, log_softmax, min_frames)
from uotalign.errors import DomainError, InfeasibleError, SizeError


def lattice(rng, T, V):
    return log_softmax(rng.normal(scale=2.0, size=(T, V)))


@st.composite
def ctc_case(draw):
    T = draw(st.integers(1, 6))
    V = draw(st.integers(2, 4))
    y = draw(st.lists(st.integers(1, V - 1), min_size=0, max_size=3))
    seed = draw(st.integers(0, 2**31))
    return lattice(np.random.default_rng(seed), T, V), y


class TestLoss:
    def test_single_frame(self):
        p = np.array([[0.2, 0.5, 0.3]])
        assert ctc_loss(np.log(p), [2]) == pytest.approx(-math.log(0.3), rel=1e-14)

    def test_two_frames_three_paths(self):
        p = np.array([[0.3, 0.7], [0.6, 0.4]])
        ref = -math.log(p[0, 1] * p[1, 1] + p[0, 1] * p[1, 0] + p[0, 0] * p[1, 1])
        assert ctc_loss(np.log(p), [1]) == pytest.approx(ref, rel=1e-14)

    def test_random_against_bruteforce(self, rng):
        lp = lattice(rng, 5, 4)
        assert ctc_loss(lp, [1, 3]) == pytest.approx(ctc_bruteforce(lp, [1, 3]), rel=1e-9)

    def test_infeasible(self, rng):
        lp = lattice(rng, 2, 3)
        assert ctc_loss(lp, [1, 1]) == math.inf
        assert ctc_bruteforce(lp, [1, 1]) == math.inf
        assert ctc_loss(lp, [1, 2, 1]) == math.inf

    def test_min_frames(self):
        assert min_frames([1, 1, 2]) == 4
        assert min_frames([]) == 0
        assert is_feasible(3, [1, 2, 3]) and not is_feasible(3, [1, 1, 2])

    def test_empty_target_is_all_blank(self, rng):
        lp = lattice(rng, 4, 3)
        assert ctc_loss(lp, []) == pytest.approx(-lp[:, BLANK].sum(), rel=1e-14)

    def test_bad_labels(self, rng):
        with pytest.raises(DomainError):
            ctc_loss(lattice(rng, 3, 3), [0])
        with pytest.raises(DomainError):
            ctc_loss(lattice(rng, 3, 3), [3])

    def test_bruteforce_size_limit(self, rng):
        with pytest.raises(SizeError):
            ctc_bruteforce(lattice(rng, 11, 4), [1])

    def test_long_lattice_stays_finite(self, rng):
        lp = lattice(rng, 400, 6)
        y = rng.integers(1, 6, size=60)
        loss = ctc_loss(lp, y)
        assert math.isfinite(loss) and loss > 0

    @given(ctc_case())
    def test_matches_bruteforce(self, case):
        lp, y = case
        ref = ctc_bruteforce(lp, y)
        got = ctc_loss(lp, y)
        if math.isinf(ref):
            assert got == math.inf
        else:
            assert got == pytest.approx(ref, rel=1e-9)
            assert got >= 0


def _fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


class TestGrad:
    def test_single_frame(self):
        lp = np.log(np.array([[0.2, 0.5, 0.3]]))
        np.testing.assert_allclose(ctc_grad(lp, [1]), [[0.0, -1.0, 0.0]])
        np.testing.assert_allclose(ctc_grad_logits(lp, [1]), [[0.2, -0.5, 0.3]], atol=1e-12)

    def test_finite_difference(self, rng):
        for _ in range(5):
            lp = lattice(rng, 5, 4)
            y = [1, 3]
            np.testing.assert_allclose(ctc_grad(lp, y), _fd(lambda z: ctc_loss(z, y), lp), rtol=1e-4, atol=1e-8)
            z = rng.normal(size=(5, 4))
            np.testing.assert_allclose(ctc_grad_logits(z, y), _fd(lambda q: ctc_loss(log_softmax(q), y), z),
                                       rtol=1e-4, atol=1e-8)

    def test_unreachable_cells_are_zero(self, rng):
        # with T == |y| every frame must emit its own label, so blanks get no posterior
        g = ctc_grad(lattice(rng, 3, 4), [1, 2, 3])
        np.testing.assert_allclose(g, -np.eye(4)[[1, 2, 3]], atol=1e-15)

    def test_rows_sum_to_minus_one(self, rng):
        g = ctc_grad(lattice(rng, 7, 4), [2, 2, 1])
        np.testing.assert_allclose(g.sum(axis=1), -1.0, atol=1e-12)

    def test_infeasible_raises(self, rng):
        with pytest.raises(InfeasibleError):
            ctc_grad(lattice(rng, 1, 3), [1, 2])


class TestDecode:
    def test_collapse(self):
        assert greedy_decode(np.eye(3)[[1, 1, 0, 2]]) == [1, 2]
        assert greedy_decode(np.eye(3)[[0, 0]]) == []
        assert greedy_decode(np.eye(3)[[1, 0, 1]]) == [1, 1]

    def test_tie_goes_to_lowest_index(self):
        assert greedy_decode(np.array([[0.1, 0.45, 0.45]])) == [1]

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=12))
    def test_equals_collapse_of_argmax(self, path):
        P = np.eye(4)[path] * 0.9 + 0.025
        out = greedy_decode(P)
        assert out == collapse(path)
        assert BLANK not in out

    def test_edit_distance(self):
        assert edit_distance([1, 2, 3], [1, 3]) == 1
        assert edit_distance([], [1, 2]) == 2
        assert edit_distance([1, 2], [2, 1]) == 2
