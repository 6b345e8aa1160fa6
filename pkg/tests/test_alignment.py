import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_unit_rows
from uotalign.alignment import (AdapterParams, Direction, PredictionHead, adapter_forward, alignment_loss,
                                layer_norm, params_from_json, params_to_json, predict, preset_marginals,
                                project_to_linguistic)
from uotalign.errors import ShapeError
from uotalign.geometry import FeatureSequence, cost_matrix
from uotalign.synth import SynthSpec, generate_instance
from uotalign.uot import solve_uot


class TestProjection:
    def test_one_hot_column_selects_frame(self, rng):
        H = rng.normal(size=(3, 4))
        g = np.zeros((3, 2))
        g[1, 0] = 1.0
        g[2, 1] = 1.0
        out = project_to_linguistic(g, FeatureSequence(H)).data
        np.testing.assert_array_equal(out, H[[1, 2]])

    def test_uniform_plan_by_hand(self):
        H = np.array([[1.0, 2.0], [3.0, 4.0]])
        g = np.full((2, 2), 0.25)
        out = project_to_linguistic(g, FeatureSequence(H)).data
        np.testing.assert_allclose(out, [[1.0, 1.5], [1.0, 1.5]])
        bary = project_to_linguistic(g, FeatureSequence(H), column_normalized=True).data
        np.testing.assert_allclose(bary, [[2.0, 3.0], [2.0, 3.0]])

    def test_solver_plan_against_dense_sum(self):
        inst = generate_instance(SynthSpec(seed=4))
        plan = solve_uot(cost_matrix(inst.acoustic, inst.linguistic))
        out = project_to_linguistic(plan, inst.acoustic).data
        H = inst.acoustic.data
        ref = np.array([sum(plan.gamma[i, j] * H[i] for i in range(inst.m)) for j in range(inst.n)])
        np.testing.assert_allclose(out, ref, atol=1e-14)

    @given(st.integers(0, 2**31))
    def test_linear_in_h(self, seed):
        r = np.random.default_rng(seed)
        g = r.random((5, 3))
        h1, h2 = r.normal(size=(5, 2)), r.normal(size=(5, 2))
        lhs = project_to_linguistic(g, FeatureSequence(h1 + h2)).data
        rhs = project_to_linguistic(g, FeatureSequence(h1)).data + project_to_linguistic(g, FeatureSequence(h2)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            project_to_linguistic(np.ones((2, 2)), FeatureSequence(rng.normal(size=(3, 2))))


class TestAlignmentLoss:
    def test_examples(self, rng):
        L = random_unit_rows(rng, 4, 3)
        assert alignment_loss(FeatureSequence(L), FeatureSequence(L)) == pytest.approx(0.0, abs=1e-14)
        assert alignment_loss(FeatureSequence(-L), FeatureSequence(L)) == pytest.approx(8.0)
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        b = np.array([[0.0, 2.0], [-3.0, 0.0]])
        assert alignment_loss(FeatureSequence(a), FeatureSequence(b)) == pytest.approx(2.0)

    def test_zero_row_contributes_one(self):
        assert alignment_loss(FeatureSequence([[0.0, 0.0]]), FeatureSequence([[1.0, 0.0]])) == 1.0

    @given(st.integers(0, 2**31))
    def test_scale_invariant_and_bounded(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=(5, 3)), r.normal(size=(5, 3))
        s = r.uniform(0.1, 10, size=(5, 1))
        base = alignment_loss(FeatureSequence(a), FeatureSequence(b))
        assert 0 <= base <= 10
        assert alignment_loss(FeatureSequence(s * a), FeatureSequence(b)) == pytest.approx(base, abs=1e-10)
        assert alignment_loss(FeatureSequence(a), FeatureSequence(s * b)) == pytest.approx(base, abs=1e-10)


class TestAdapter:
    def test_pure_residual(self, rng):
        p = AdapterParams.init(3, 2, rng)
        p.fc_l2a_weight[:] = 0
        p.ln_out_gain[:] = 0
        A = rng.normal(size=(4, 2))
        out = adapter_forward(FeatureSequence(A), FeatureSequence(rng.normal(size=(4, 3))), p)
        np.testing.assert_array_equal(out.data, A)

    def test_hand_evaluation(self):
        # d = 2: LN maps (x1, x2) to +-(x1 - x2)/sqrt((x1 - x2)^2 / 4 + eps) / 2
        H = np.array([[1.0, 3.0]])
        p = AdapterParams(np.array([[1.0, 0.0], [0.5, 1.0]]), np.array([0.1, 0.0]),
                          np.ones(2), np.zeros(2), np.array([2.0, 1.0]), np.array([0.0, 0.5]))
        s = np.sqrt(1.0 + 1e-5)
        z = np.array([-1.0, 1.0]) / s
        f = np.array([z[0] + 0.5 * z[1] + 0.1, z[1]])
        d = (f[0] - f[1]) / 2
        ln = np.array([d, -d]) / np.sqrt(d * d + 1e-5) * np.array([2.0, 1.0]) + np.array([0.0, 0.5])
        out = adapter_forward(FeatureSequence(np.zeros((1, 2))), FeatureSequence(H), p).data
        np.testing.assert_allclose(out[0], ln, rtol=1e-12)

    def test_scale_invariance(self, rng):
        p = AdapterParams.init(3, 2, rng, scale=1.0)
        A, H = rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
        a = adapter_forward(FeatureSequence(A), FeatureSequence(H), p).data
        b = adapter_forward(FeatureSequence(A), FeatureSequence(2 * H), p).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_layer_norm_statistics(self, rng):
        y = layer_norm(rng.normal(size=(6, 5)) * 3 + 1, np.ones(5), np.zeros(5))
        np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
        np.testing.assert_allclose(y.var(axis=1), 1, atol=1e-5)

    def test_dim_checks(self, rng):
        p = AdapterParams.init(3, 2, rng)
        with pytest.raises(ShapeError):
            adapter_forward(FeatureSequence(np.zeros((4, 2))), FeatureSequence(np.zeros((3, 3))), p)
        with pytest.raises(ShapeError):
            adapter_forward(FeatureSequence(np.zeros((4, 3))), FeatureSequence(np.zeros((4, 3))), p)


class TestPredict:
    def test_uniform_and_saturated(self):
        A = FeatureSequence(np.ones((3, 2)))
        P = predict(A, PredictionHead(np.zeros((2, 4)), np.zeros(4)))
        np.testing.assert_allclose(P, 0.25)
        P = predict(A, PredictionHead(np.zeros((2, 4)), np.array([10.0, 0, 0, 0])))
        assert np.all(P[:, 0] > 0.9998)

    @given(st.integers(0, 2**31))
    def test_rows_are_distributions(self, seed):
        r = np.random.default_rng(seed)
        P = predict(FeatureSequence(r.normal(scale=20, size=(5, 3))), PredictionHead.init(3, 6, r, scale=5.0))
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


class TestPresets:
    def test_values(self):
        assert preset_marginals("A2L") == (0.5, 1.0)
        assert preset_marginals(Direction.L2A) == (1.0, 0.5)
        assert preset_marginals("balanced") == (10.0, 10.0)
        assert preset_marginals("Free") == (0.0, 0.0)

    def test_directions(self):
        l1, l2 = preset_marginals("A2L")
        assert l2 > l1
        l1, l2 = preset_marginals("L2A")
        assert l1 > l2


def test_params_json_round_trip(rng):
    ad, head = AdapterParams.init(3, 2, rng), PredictionHead.init(2, 5, rng)
    ad2, head2, extra = params_from_json(params_to_json(ad, head, {"note": np.array([1.0])}))
    np.testing.assert_array_equal(ad2.fc_l2a_weight, ad.fc_l2a_weight)
    np.testing.assert_array_equal(head2.weight, head.weight)
    assert list(extra) == ["note"]
