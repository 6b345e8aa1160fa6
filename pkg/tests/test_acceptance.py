"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line with the measured
numbers. Run directly (``python3 tests/test_acceptance.py``) for the lines alone.
"""

import itertools
import math
import time

import numpy as np
import pytest

import conftest
from gradcheck import gradient_error, taylor_error, toy_problem
from uotalign.cli import main as cli_main
from uotalign.ctc import ctc_bruteforce, ctc_loss, log_softmax
from uotalign.errors import SolverError
from uotalign.geometry import FeatureSequence, Metric, cost_matrix
from uotalign.synth import NULL, SynthSpec, detection_metrics, generate_dataset, generate_instance, \
    save_instance, uniform_alignment
from uotalign.trainer import TrainConfig, train
from uotalign.uot import (SolverConfig, factorization_error, fixed_point_residual, gibbs_kernel, marginals,
                          oracle_solve_uot, solve_balanced, solve_uot)


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_cosine(rng, m, n, dim=8):
    return cost_matrix(FeatureSequence(rng.normal(size=(m, dim))), FeatureSequence(rng.normal(size=(n, dim)))).values


def test_criterion_01_fixed_point():
    rng = np.random.default_rng(101)
    costs = [random_cosine(rng, 50, 20) for _ in range(100)]
    start = time.perf_counter()
    worst_fp = worst_fact = 0.0
    counts = {}
    for lam in (0.05, 0.5, 1.0, 10.0):
        cfg = SolverConfig(epsilon=0.05, lambda1=lam, lambda2=lam)
        counts[lam] = 0
        for C in costs:
            plan = solve_uot(C, None, None, cfg)
            if plan.converged:
                counts[lam] += 1
                worst_fp = max(worst_fp, fixed_point_residual(plan, C, None, None, cfg))
                worst_fact = max(worst_fact, factorization_error(plan, C, cfg.epsilon))
    elapsed = time.perf_counter() - start
    ok = worst_fp < 1e-5 and worst_fact < 1e-8 and elapsed < 30 and all(counts.values())
    report(1, ok, f"converged {counts}; max fixed-point residual {worst_fp:.2e}, "
                  f"max factorization error {worst_fact:.2e}, {elapsed:.1f}s")


def test_criterion_02_free_matching():
    rng = np.random.default_rng(102)
    shapes = [(1, 1), (3, 2), (2, 3), (50, 20), (17, 9)] * 10
    mismatches = 0
    for m, n in shapes:
        C = random_cosine(rng, m, n)
        eps = float(rng.choice([0.01, 0.05, 0.5]))
        plan = solve_uot(C, None, None, SolverConfig(epsilon=eps, lambda1=0, lambda2=0, log_domain=False))
        mismatches += not np.array_equal(plan.gamma, gibbs_kernel(C, eps))
    report(2, mismatches == 0, f"{len(shapes) - mismatches}/{len(shapes)} plans bitwise equal to the kernel")


def test_criterion_03_balanced_limit():
    rng = np.random.default_rng(103)
    worst_marg = worst_plan = 0.0
    for _ in range(10):
        C = random_cosine(rng, 50, 20)
        plan = solve_uot(C, None, None, SolverConfig(epsilon=0.05, lambda1=10, lambda2=10,
                                                     tolerance=1e-10, max_iters=100_000))
        ref = solve_balanced(C, None, None, epsilon=0.05, tolerance=1e-12, max_iters=100_000)
        row, col = marginals(plan.gamma)
        worst_marg = max(worst_marg, np.abs(row - 1 / 50).max(), np.abs(col - 1 / 20).max())
        worst_plan = max(worst_plan, np.abs(plan.gamma - ref.gamma).max())
    report(3, worst_marg < 1e-3 and worst_plan < 1e-3,
           f"max marginal deviation {worst_marg:.2e}, max plan gap to balanced {worst_plan:.2e} (limit 1e-3)")


def test_criterion_04_oracle():
    rng = np.random.default_rng(104)
    lams = (0.0, 0.1, 0.5, 1.0, 10.0)
    worst = -math.inf
    for k in range(50):
        m, n = (3, 2) if k % 2 else (2, 2)
        C = rng.random((m, n))
        cfg = SolverConfig(epsilon=float(rng.choice([0.05, 0.5])), lambda1=float(rng.choice(lams)),
                           lambda2=float(rng.choice(lams)), tolerance=1e-12, max_iters=100_000)
        plan = solve_uot(C, None, None, cfg)
        oracle = oracle_solve_uot(C, None, None, cfg, seed=k)
        worst = max(worst, plan.objective.total - oracle.total)
    report(4, worst <= 1e-4, f"max (solver - oracle) objective {worst:.2e} over 50 instances")


def test_criterion_05_ctc_oracle():
    rng = np.random.default_rng(105)
    worst = 0.0
    inf_agree = inf_cases = 0
    for _ in range(200):
        T, V = int(rng.integers(1, 7)), int(rng.integers(2, 5))
        y = rng.integers(1, V, size=int(rng.integers(0, 4))).tolist()
        lp = log_softmax(rng.normal(scale=2.0, size=(T, V)))
        ref, got = ctc_bruteforce(lp, y), ctc_loss(lp, y)
        if math.isinf(ref):
            inf_cases += 1
            inf_agree += got == math.inf
        else:
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    ok = worst < 1e-9 and inf_agree == inf_cases
    report(5, ok, f"max relative error {worst:.2e}; infeasible {inf_agree}/{inf_cases} agree on +inf")


def test_criterion_06_gradients():
    rng = np.random.default_rng(106)
    worst_fd = worst_taylor = 0.0
    worst_ratio = 0.0
    for k in range(20):
        d_l = int(rng.integers(3, 5))
        # the synthetic distortion needs raw_dim >= d_l to stay invertible
        dims = dict(raw_dim=int(rng.integers(d_l, 7)), d_a=int(rng.integers(3, 5)), d_l=d_l,
                    vocab=int(rng.integers(3, 5)), tokens=2)
        problem = toy_problem(1000 + k, **dims)
        assert problem[0].m <= 10
        worst_fd = max(worst_fd, gradient_error(*problem))
        gap = taylor_error(*problem, delta=1e-5)
        worst_taylor = max(worst_taylor, gap)
        # o(delta): a 10x smaller step should shrink the relative gap ~10x
        worst_ratio = max(worst_ratio, taylor_error(*problem, delta=1e-6) / max(gap, 1e-300))
    report(6, worst_fd < 1e-4 and worst_taylor < 1e-4,
           f"max finite-difference rel. error {worst_fd:.2e}; stop-gradient Taylor gap at delta=1e-5 "
           f"{worst_taylor:.2e} (limit 1e-4), gap(1e-6)/gap(1e-5) <= {worst_ratio:.2f}")


def test_criterion_07_sweep(tmp_path):
    import csv
    inst = generate_instance(SynthSpec(num_tokens=8, frames_per_token_range=(5, 7), noise_frame_rate=0.15,
                                       noise_scale=0.25, seed=7))
    save_instance(inst, tmp_path / "inst")
    code = cli_main(["sweep", str(tmp_path / "inst"), "--out", str(tmp_path / "sweep")])
    with open(tmp_path / "sweep" / "summary.csv") as fh:
        cells = {(float(r["lambda1"]), float(r["lambda2"])): r for r in csv.DictReader(fh)}

    def f(pair, key):
        return float(cells[pair][key])

    a = all(f((10.0, 10.0), k) < f((1.0, 1.0), k) < f((0.05, 0.05), k) for k in ("kl_row", "kl_col"))
    b = f((0.05, 0.05), "total_mass") < f((10.0, 10.0), "total_mass")
    c = all(f(p, "coverage") == 1.0 for p in cells if p[1] >= 1)
    report(7, code == 0 and a and b and c,
           f"m={inst.m} n={inst.n}; KL ordering {a}, mass {f((0.05, 0.05), 'total_mass'):.3f} < "
           f"{f((10.0, 10.0), 'total_mass'):.3f} {b}, coverage where lambda2>=1 {c}")


def test_criterion_08_detection():
    wins = 0
    for seed in range(20):
        inst = generate_instance(SynthSpec(noise_frame_rate=0.15, seed=seed))
        plan = solve_uot(cost_matrix(inst.acoustic, inst.linguistic), None, None,
                         SolverConfig(epsilon=0.05, lambda1=0.5, lambda2=1.0))
        uot = detection_metrics(plan.gamma, inst.truth, 0.1)
        beats = True
        for window in (10, 5, 2):
            base = detection_metrics(uniform_alignment(inst.m, inst.n, window), inst.truth, 0.1)
            beats &= uot.precision > base.precision and uot.recall >= base.recall
        wins += beats
    report(8, wins >= 18, f"UOT beats every uniform window on {wins}/20 instances (need 18)")


TRANSFER_SPEC = SynthSpec(vocab_size=6, num_tokens=4, frames_per_token_range=(2, 4), noise_frame_rate=0.15,
                          embed_dim=4, noise_scale=0.15, raw_dim=6)


def test_criterion_09_transfer():
    from dataclasses import replace
    start = time.perf_counter()
    outcomes = []
    for seed in range(5):
        data = generate_dataset(replace(TRANSFER_SPEC, seed=100 * seed), 25)
        ters = []
        for eta in (1.0, 0.3):
            cfg = TrainConfig(eta=eta, epochs=200, learning_rate=0.1, seed=seed, acoustic_dim=4)
            _, hist = train(data, cfg)
            ters.append(hist[-1]["dev_token_error"])
        outcomes.append(tuple(ters))
    elapsed = time.perf_counter() - start
    wins = sum(t <= b for b, t in outcomes)
    detail = ", ".join(f"{b:.2f}->{t:.2f}" for b, t in outcomes)
    report(9, wins >= 4 and elapsed < 300,
           f"transfer <= baseline dev TER on {wins}/5 seeds (baseline->transfer: {detail}); {elapsed:.0f}s")


def noise_burst_instance():
    """Synthetic instance whose NULL frames are loud bursts, scored by squared distance."""
    inst = generate_instance(SynthSpec(seed=3))
    frames = inst.acoustic.data.copy()
    frames[[i for i, t in enumerate(inst.truth) if t.kind == NULL]] *= 4.0
    return cost_matrix(FeatureSequence(frames), inst.linguistic, Metric.SQEUCLIDEAN)


def test_criterion_10_stability():
    C = noise_burst_instance()
    try:
        linear = solve_uot(C, None, None, SolverConfig(epsilon=0.01, log_domain=False))
        linear_failed, note = not linear.converged, f"linear converged={linear.converged}"
    except SolverError as exc:
        linear_failed, note = True, f"linear raised: {exc}"
    log = solve_uot(C, None, None, SolverConfig(epsilon=0.01, log_domain=True))
    report(10, linear_failed and log.converged,
           f"max cost {C.values.max():.1f}; {note}; log domain converged={log.converged} "
           f"in {log.iterations} iterations")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
    sys.exit(0 if all("PASS" in line for line in conftest.ACCEPTANCE_LINES) else 1)
