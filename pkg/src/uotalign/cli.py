"""Command-line entry point: solve, sweep, synth, train and eval.

Exit codes: 0 success, 1 bad input or config, 2 the solver did not converge
(outputs are still written) or training diverged.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .alignment import preset_marginals
from .errors import SolverError, TrainingDivergedError, UOTAlignError
from .geometry import FeatureSequence, Metric, ProjectionParams, Side, cost_matrix, normalize_rows, project_features
from .io import read_json, read_matrix_csv, write_json, write_matrix_csv, write_pgm
from .synth import SynthSpec, detection_metrics, generate_dataset, generate_instance, load_instance, load_truth, \
    save_instance
from .trainer import HISTORY_COLUMNS, TrainConfig, train
from .uot import SolverConfig, solve_grid, solve_uot

log = logging.getLogger("uotalign")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

DEFAULT_GRID = ((10.0, 10.0), (0.1, 1.0), (1.0, 1.0), (0.01, 1.0), (1.0, 0.01), (0.05, 0.05))

SUMMARY_COLUMNS = ("lambda1", "lambda2", "total_mass", "kl_row", "kl_col", "entropy",
                   "precision", "recall", "coverage", "status")

_SOLVER_KEYS = {"epsilon", "lambda1", "lambda2", "preset", "max_iters", "tolerance", "log_domain"}
SOLVE_KEYS = _SOLVER_KEYS | {"metric", "normalize", "projection", "seed"}
SWEEP_KEYS = _SOLVER_KEYS - {"lambda1", "lambda2", "preset"} | {"metric", "normalize", "undistort", "threshold",
                                                                  "jobs", "seed"}


class CLIError(UOTAlignError):
    """Bad command-line input; reported and mapped to exit code 1."""


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _load_config(path, allowed: set | None) -> dict:
    if path is None:
        return {}
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise CLIError(f"{path}: config must be a JSON object")
    if allowed is not None:
        unknown = set(cfg) - allowed
        if unknown:
            raise CLIError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def solver_config(cfg: dict, log_domain: bool | None = None) -> SolverConfig:
    """Build a SolverConfig from a flat config dict; a preset fills lambda1/lambda2
    unless they are given explicitly."""
    kw = {k: cfg[k] for k in ("epsilon", "max_iters", "tolerance", "log_domain") if k in cfg}
    lam1, lam2 = preset_marginals(cfg["preset"]) if "preset" in cfg else preset_marginals("A2L")
    kw["lambda1"] = float(cfg.get("lambda1", lam1))
    kw["lambda2"] = float(cfg.get("lambda2", lam2))
    if log_domain is not None:
        kw["log_domain"] = log_domain
    return SolverConfig(**kw)


def _features(acoustic, linguistic, cfg: dict, projection: ProjectionParams | None = None):
    """Cost matrix from raw feature arrays per the config's metric and normalization."""
    metric = Metric(cfg.get("metric", "cosine"))
    A = FeatureSequence(acoustic, Side.ACOUSTIC)
    L = FeatureSequence(linguistic, Side.LINGUISTIC)
    if "projection" in cfg:
        proj = cfg["projection"]
        projection = ProjectionParams(np.asarray(proj["weight"], dtype=float), np.asarray(proj["bias"], dtype=float))
    H = project_features(A, projection) if projection is not None else A
    if H.dim != L.dim:
        raise CLIError(f"acoustic dim {H.dim} does not match linguistic dim {L.dim}; supply a projection")
    if cfg.get("normalize", True):
        H, _ = normalize_rows(H)
        L, _ = normalize_rows(L)
    return cost_matrix(H, L, metric)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    cfg = _load_config(args.config, SOLVE_KEYS)
    solver = solver_config(cfg, args.log_domain)
    A = read_matrix_csv(args.acoustic)
    L = read_matrix_csv(args.linguistic)
    C = _features(A, L, cfg)
    out = _out_dir(args)
    plan = solve_uot(C, None, None, solver)
    write_matrix_csv(out / "plan.csv", plan.gamma)
    write_pgm(out / "plan.pgm", plan.gamma)
    diag = plan.diagnostics()
    diag["mass"] = plan.mass
    diag["config"] = {"epsilon": solver.epsilon, "lambda1": solver.lambda1, "lambda2": solver.lambda2,
                      "max_iters": solver.max_iters, "tolerance": solver.tolerance,
                      "log_domain": solver.log_domain}
    write_json(out / "diagnostics.json", diag)
    if not plan.converged:
        log.warning("no convergence after %d iterations (residual %.3g)", plan.iterations, plan.residual)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _read_grid(path) -> list:
    if path is None:
        return [tuple(p) for p in DEFAULT_GRID]
    raw = read_json(path)
    if isinstance(raw, dict):
        raw = raw.get("pairs")
    try:
        pairs = [(float(a), float(b)) for a, b in raw]
    except (TypeError, ValueError):
        raise CLIError(f"{path}: grid must be a list of [lambda1, lambda2] pairs") from None
    if not pairs:
        raise CLIError(f"{path}: empty grid")
    return pairs


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, SWEEP_KEYS)
    pairs = _read_grid(args.grid)
    base = solver_config(cfg, args.log_domain)
    src = Path(args.instance_dir)
    A = read_matrix_csv(src / "acoustic.csv")
    L = read_matrix_csv(src / "linguistic.csv")
    projection = None
    dist = src / "distortion.csv"
    if cfg.get("undistort", True) and dist.exists():
        inverse = np.linalg.pinv(read_matrix_csv(dist))
        projection = ProjectionParams(inverse, np.zeros(inverse.shape[1]))
    C = _features(A, L, cfg, projection)
    truth_path = src / "truth.json"
    truth = load_truth(truth_path) if truth_path.exists() else None
    threshold = float(cfg.get("threshold", 0.1))
    results = solve_grid(C, None, None, pairs, base, jobs=int(cfg.get("jobs", 1)))

    out = _out_dir(args)
    rows = []
    worst = EXIT_OK
    for pair in pairs:
        res = results[pair]
        lam1, lam2 = pair
        if isinstance(res, SolverError):
            rows.append([_fmt(lam1), _fmt(lam2)] + [""] * 7 + [f"failed: {res}"])
            worst = EXIT_NONCONVERGED
            continue
        write_pgm(out / f"plan_{lam1:g}_{lam2:g}.pgm", res.gamma)
        metrics = detection_metrics(res.gamma, truth, threshold) if truth is not None else None
        status = "converged" if res.converged else "not_converged"
        if not res.converged:
            worst = EXIT_NONCONVERGED
        obj = res.objective
        rows.append([
            _fmt(lam1), _fmt(lam2), _fmt(res.mass),
            _fmt(obj.kl_row), _fmt(obj.kl_col), _fmt(obj.entropy),
            _fmt(metrics.precision if metrics else None),
            _fmt(metrics.recall if metrics else None),
            _fmt(metrics.token_coverage if metrics else None),
            status,
        ])
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(rows)
    return worst


def cmd_synth(args) -> int:
    raw = _load_config(args.spec or args.config, None)
    spec = SynthSpec.from_dict(raw)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = _out_dir(args)
    if args.count == 1:
        save_instance(generate_instance(spec), out)
    else:
        for k, inst in enumerate(generate_dataset(spec, args.count)):
            save_instance(inst, out / f"instance_{k:03d}")
    return EXIT_OK


def load_dataset(directory) -> list:
    """An instance directory, or a directory whose subdirectories are instances (sorted by name)."""
    src = Path(directory)
    if (src / "acoustic.csv").exists():
        return [load_instance(src)]
    subdirs = sorted(p for p in src.iterdir() if p.is_dir() and (p / "acoustic.csv").exists()) if src.is_dir() else []
    if not subdirs:
        raise CLIError(f"{src}: no instances found")
    return [load_instance(p) for p in subdirs]


def cmd_train(args) -> int:
    raw = _load_config(args.train_config or args.config, None)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.log_domain is not None:
        raw["solver"] = {**raw.get("solver", {}), "log_domain": args.log_domain}
    cfg = TrainConfig.from_dict(raw)
    dataset = load_dataset(args.dataset_dir)
    out = _out_dir(args)
    try:
        params, history = train(dataset, cfg)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    with open(out / "history.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])
    write_json(out / "params.json", params.to_json())
    write_json(out / "train_config.json", cfg.to_dict())
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config, {"threshold"})
    threshold = args.threshold if args.threshold is not None else float(cfg.get("threshold", 0.1))
    gamma = read_matrix_csv(args.plan)
    truth = load_truth(args.truth)
    metrics = detection_metrics(gamma, truth, threshold)
    out = _out_dir(args)
    d = metrics.as_dict()
    d["threshold"] = threshold
    write_json(out / "metrics.json", d)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--log-domain", type=_bool, default=None, metavar="BOOL",
                        help="run the solver in the log domain (true) or linear mode (false)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uotalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="align one acoustic/linguistic pair")
    p.add_argument("acoustic")
    p.add_argument("linguistic")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[common], help="solve a (lambda1, lambda2) grid on one instance")
    p.add_argument("instance_dir")
    p.add_argument("grid", nargs="?", help="JSON list of [lambda1, lambda2] pairs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic instances")
    p.add_argument("spec", nargs="?", help="JSON synth spec (defaults apply to missing keys)")
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="run the toy joint trainer")
    p.add_argument("dataset_dir")
    p.add_argument("train_config", nargs="?", help="JSON train config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a plan against ground truth")
    p.add_argument("plan")
    p.add_argument("truth")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (UOTAlignError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
