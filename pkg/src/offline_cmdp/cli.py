"""Command-line harness: ``solve``, ``run``, ``counterexamples``, ``validate``.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem or
violated assumption, 4 failed assertion.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Cmdp, CmdpFormatError, Policy, cmdp_from_json, validate_cmdp
from .counterexamples import build_figure1_mdp, demonstrate_prop1, demonstrate_prop2
from .data import build_mixture_distribution, sample_dataset, save_dataset
from .generators import random_feasible_cmdp, random_cmdp
from .oracle import concentrability, slater_margin, solve_constrained_lp
from .solvers import (
    SolverConfig,
    SolverProblem,
    default_classes,
    dual_bound_from_margin,
    make_evaluator,
    run_pdocrl,
    run_pdorl,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ASSERT = 0, 2, 3, 4
ALGORITHMS = ("pdorl", "pdocrl")


class ConfigError(ValueError):
    pass


class AssumptionError(RuntimeError):
    pass


def fmt(x) -> str:
    """Floats with 12 significant digits."""
    return f"{float(x):.12g}"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    cmdp: Cmdp
    algorithm: str = "pdorl"
    beta: float = 0.5
    anchor: str = "optimal"
    n_list: list = field(default_factory=lambda: [1000])
    seeds: list = field(default_factory=lambda: [0])
    T: object = "n"
    alpha: float | None = None
    eta: float | None = None
    weight_slack: float = 1.0
    tie_weights: bool = False
    traces: bool = False
    save_datasets: bool = False


def load_cmdp_spec(spec, base_dir: Path = Path(".")) -> Cmdp:
    """A CMDP document, ``{"path": ...}``, ``{"builtin": "figure1"}`` or
    ``{"generator": {...}}``."""
    if not isinstance(spec, dict):
        raise ConfigError("cmdp: expected an object")
    if "path" in spec:
        path = base_dir / spec["path"]
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cmdp.path: {exc}") from None
        return cmdp_from_json(doc)
    if "builtin" in spec:
        if spec["builtin"] != "figure1":
            raise ConfigError(f"cmdp.builtin: unknown instance {spec['builtin']!r}")
        return build_figure1_mdp(float(spec.get("l2_reward", 4.0)))
    if "generator" in spec:
        g = dict(spec["generator"])
        try:
            S, A = int(g["n_states"]), int(g["n_actions"])
            I, gamma, seed = int(g.get("n_constraints", 0)), float(g.get("gamma", 0.9)), int(g.get("seed", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"cmdp.generator: {exc}") from None
        if I > 0:
            return random_feasible_cmdp(S, A, I, gamma, seed, float(g.get("min_margin", 0.1)))[0]
        return random_cmdp(S, A, 0, gamma, seed)
    return cmdp_from_json(spec)


def parse_experiment(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>: expected a JSON object")
    if "cmdp" not in doc:
        raise ConfigError("cmdp: missing field")
    cmdp = load_cmdp_spec(doc["cmdp"], base_dir)
    data = doc.get("data", {})
    solver = doc.get("solver", {})
    out = doc.get("output", {})
    cfg = ExperimentConfig(
        cmdp=cmdp,
        algorithm=solver.get("algorithm", "pdorl"),
        beta=float(data.get("beta", 0.5)),
        anchor=data.get("anchor", "optimal"),
        n_list=list(data.get("n", [1000])),
        seeds=list(data.get("seeds", [0])),
        T=solver.get("T", "n"),
        alpha=solver.get("alpha"),
        eta=solver.get("eta"),
        weight_slack=float(solver.get("weight_slack", 1.0)),
        tie_weights=bool(solver.get("tie_weights", False)),
        traces=bool(out.get("traces", False)),
        save_datasets=bool(out.get("datasets", False)),
    )
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"solver.algorithm: expected one of {ALGORITHMS}, got {cfg.algorithm!r}")
    if not cfg.n_list or any(not isinstance(n, int) or n < 1 for n in cfg.n_list):
        raise ConfigError("data.n: need a nonempty list of positive integers")
    if not cfg.seeds or any(not isinstance(s, int) for s in cfg.seeds):
        raise ConfigError("data.seeds: need a nonempty list of integers")
    if not 0 <= cfg.beta <= 1:
        raise ConfigError("data.beta: must lie in [0, 1]")
    if cfg.anchor not in ("optimal", "uniform"):
        raise ConfigError("data.anchor: expected 'optimal' or 'uniform'")
    if cfg.T != "n" and not (isinstance(cfg.T, int) and cfg.T >= 1):
        raise ConfigError("solver.T: expected 'n' or a positive integer")
    if cfg.algorithm == "pdocrl" and cmdp.n_constraints < 1:
        raise ConfigError("solver.algorithm: pdocrl needs at least one constraint")
    violations = validate_cmdp(cmdp)
    if violations:
        raise ConfigError("cmdp: " + "; ".join(str(v) for v in violations))
    return cfg


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"--config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# run: one (n, seed) cell


@dataclass
class CellPlan:
    cmdp: Cmdp
    algorithm: str
    target: Cmdp
    anchor: Policy
    beta: float
    anchor_name: str
    j0_star: float
    c_star: float
    phi: float | None
    n: int
    seed: int
    T: int
    alpha: float | None
    eta: float | None
    weight_slack: float
    tie_weights: bool
    trace_path: str | None
    dataset_path: str | None


def run_cell(plan: CellPlan) -> tuple[list[str], float]:
    start = time.perf_counter()
    cmdp = plan.cmdp
    dist = build_mixture_distribution(cmdp, plan.anchor, plan.beta, plan.anchor_name)
    ds = sample_dataset(cmdp, dist, plan.n, plan.seed)
    if plan.dataset_path:
        save_dataset(ds, plan.dataset_path)
    problem = SolverProblem.from_cmdp(plan.target)
    weight_cap = plan.weight_slack * plan.c_star
    evaluator = make_evaluator(cmdp)
    if plan.algorithm == "pdocrl":
        B = dual_bound_from_margin(plan.phi)
        config = SolverConfig(plan.T, plan.alpha, B, plan.seed, plan.trace_path is not None,
                              plan.eta, plan.tie_weights)
        res = run_pdocrl(problem, ds, default_classes(problem, weight_cap, plan.n, B), config, evaluator)
    else:
        config = SolverConfig(plan.T, plan.alpha, None, plan.seed, plan.trace_path is not None,
                              plan.eta, plan.tie_weights)
        res = run_pdorl(problem, ds, default_classes(problem, weight_cap, plan.n), config, evaluator)
    if plan.trace_path:
        res.write_trace(plan.trace_path)
    J = res.mixture_returns
    I = cmdp.n_constraints
    viol = max([0.0] + [cmdp.thresholds[i] - (1 - cmdp.gamma) * J[i + 1] for i in range(I)])
    row = [plan.algorithm, str(plan.n), str(plan.seed), str(plan.T), fmt(J[0]), fmt(plan.j0_star),
           fmt(plan.j0_star - J[0])]
    row += [fmt(J[i + 1]) for i in range(I)]
    row += [fmt(viol), fmt(plan.c_star), "" if plan.phi is None else fmt(plan.phi)]
    return row, (time.perf_counter() - start) * 1000.0


def plan_cells(cfg: ExperimentConfig, out_dir: Path | None) -> list[CellPlan]:
    cmdp = cfg.cmdp
    phi = slater_margin(cmdp) if cmdp.n_constraints >= 1 else None
    if cfg.algorithm == "pdocrl":
        if phi is None or phi <= 0:
            raise AssumptionError(
                f"Slater margin {phi} is not positive: the constraints cannot be met strictly")
        target = cmdp
    else:
        target = cmdp.unconstrained()
    lp = solve_constrained_lp(target)
    if not lp.feasible:
        raise AssumptionError(f"infeasible; violated constraints {lp.violated}")
    S, A = cmdp.n_states, cmdp.n_actions
    anchor = lp.policy_star if cfg.anchor == "optimal" else Policy.uniform(S, A)
    dist = build_mixture_distribution(cmdp, anchor, cfg.beta, cfg.anchor)
    c_star = concentrability(cmdp, lp.policy_star, dist.probs)
    if not np.isfinite(c_star):
        raise AssumptionError("data distribution does not cover the optimal policy (C* is infinite)")
    j0_star = lp.objective / (1 - cmdp.gamma)
    plans = []
    for n in cfg.n_list:
        for seed in cfg.seeds:
            T = n if cfg.T == "n" else int(cfg.T)
            tag = f"{cfg.algorithm}_n{n}_s{seed}"
            plans.append(CellPlan(
                cmdp, cfg.algorithm, target, anchor, cfg.beta, cfg.anchor, j0_star, c_star, phi,
                n, seed, T, cfg.alpha, cfg.eta, cfg.weight_slack, cfg.tie_weights,
                str(out_dir / f"trace_{tag}.csv") if (cfg.traces and out_dir) else None,
                str(out_dir / f"data_{tag}.csv") if (cfg.save_datasets and out_dir) else None,
            ))
    return plans


def results_header(cmdp: Cmdp) -> list[str]:
    I = cmdp.n_constraints
    return (["algo", "n", "seed", "T", "J0_mix", "J0_star", "subopt"]
            + [f"J{i + 1}_mix" for i in range(I)]
            + ["violation_max", "C_star", "phi", "wall_ms"])


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None, threads: int = 1) -> str:
    """Run every (n, seed) cell and return the results CSV text. Rows are in
    config order whatever the completion order."""
    plans = plan_cells(cfg, out_dir)
    if threads > 1 and len(plans) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_cell, plans))
    else:
        outcomes = [run_cell(p) for p in plans]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(results_header(cfg.cmdp))
    for row, ms in outcomes:
        w.writerow(row + [f"{ms:.1f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def _emit(args, text: str) -> None:
    if not args.json_only:
        print(text)


def cmd_validate(args) -> int:
    doc = _read_json(args.config)
    cmdp = load_cmdp_spec(doc.get("cmdp", doc) if isinstance(doc, dict) else doc, Path(args.config).parent)
    violations = validate_cmdp(cmdp)
    report = {"valid": not violations, "violations": [str(v) for v in violations]}
    if args.json_only:
        print(json.dumps(report))
    else:
        print("valid" if not violations else "\n".join(report["violations"]))
    return EXIT_OK if not violations else EXIT_CONFIG


def cmd_solve(args) -> int:
    doc = _read_json(args.config)
    cmdp = load_cmdp_spec(doc.get("cmdp", doc) if isinstance(doc, dict) else doc, Path(args.config).parent)
    violations = validate_cmdp(cmdp)
    if violations:
        raise ConfigError("; ".join(str(v) for v in violations))
    sol = solve_constrained_lp(cmdp)
    phi = None
    if cmdp.n_constraints >= 1:
        phi = slater_margin(cmdp)
    report = sol.to_json(phi)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "lp_solution.json").write_text(json.dumps(report, indent=2))
    if args.json_only:
        print(json.dumps(report))
    if not sol.feasible:
        print(f"infeasible: violated constraints {sol.violated}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(args, f"objective {fmt(sol.objective)}  (J* = {fmt(sol.objective / (1 - cmdp.gamma))})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = parse_experiment(_read_json(args.config), Path(args.config).parent)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = run_experiment(cfg, out, args.threads)
    (out / "results.csv").write_text(text)
    _emit(args, text.rstrip("\n"))
    return EXIT_OK


def cmd_counterexamples(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [demonstrate_prop1(args.l2_reward), demonstrate_prop2(args.l2_reward)]
    for rep in reports:
        (out / f"{rep['name']}.json").write_text(json.dumps(rep, indent=2))
    if args.json_only:
        print(json.dumps(reports))
    else:
        for rep in reports:
            status = "ok" if rep["passed"] else "FAILED"
            print(f"{rep['name']}: {status}")
            for f in rep["failures"]:
                print(f"  {json.dumps(f)}")
        lit = reports[1]["literal"]
        if not lit["holds"]:
            print("  note: with U = {mu*} alone the decomposed values are "
                  f"{[fmt(v) for v in lit['values']]}; the saddle needs mu^ in U")
    if not all(r["passed"] for r in reports):
        print("assertion failure in counterexample demonstration", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offline-cmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON config or CMDP file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--json-only", action="store_true", help="only JSON on standard output")

    p = sub.add_parser("validate", help="check CMDP invariants")
    common(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("solve", help="exact LP solution")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("run", help="offline solver sweep over (n, seed)")
    common(p)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("counterexamples", help="spurious saddle point demonstrations")
    common(p, config_required=False)
    p.add_argument("--l2-reward", type=float, default=4.0,
                   help="debug: reward of the l2 self-loop in the five-state example")
    p.set_defaults(func=cmd_counterexamples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CmdpFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
