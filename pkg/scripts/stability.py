"""Linear against log-domain scaling as epsilon shrinks.

Two instances: the plain synthetic one under cosine cost, and the same
instance with loud NULL frames under squared distance, whose cost range
exceeds what exp(-C / epsilon) can represent once epsilon is small.
"""

import argparse

from uotalign.errors import SolverError
from uotalign.geometry import FeatureSequence, Metric, cost_matrix
from uotalign.synth import NULL, SynthSpec, generate_instance
from uotalign.uot import SolverConfig, solve_uot


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--burst", type=float, default=4.0, help="amplitude factor on NULL frames")
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 0.05, 0.02, 0.01, 0.005])
    return p.parse_args()


def run(C, eps, log_domain):
    try:
        plan = solve_uot(C, None, None, SolverConfig(epsilon=eps, log_domain=log_domain))
    except SolverError:
        return "overflow"
    return f"{'ok' if plan.converged else 'no-conv'}({plan.iterations})"


def main():
    args = parse_args()
    inst = generate_instance(SynthSpec(seed=args.seed))
    frames = inst.acoustic.data.copy()
    frames[[i for i, t in enumerate(inst.truth) if t.kind == NULL]] *= args.burst
    cases = {
        "cosine": cost_matrix(inst.acoustic, inst.linguistic),
        "sqeuclid+bursts": cost_matrix(FeatureSequence(frames), inst.linguistic, Metric.SQEUCLIDEAN),
    }
    print(f"{'instance':<16} {'max C':>6} {'eps':>6} {'linear':>14} {'log':>14}")
    for name, C in cases.items():
        for eps in args.epsilons:
            print(f"{name:<16} {C.values.max():6.2f} {eps:6.3f} {run(C, eps, False):>14} {run(C, eps, True):>14}")


if __name__ == "__main__":
    main()
