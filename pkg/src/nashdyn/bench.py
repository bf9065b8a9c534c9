"""Benchmark CLI: configuration files, sweeps, and trace/summary persistence.

Config files are JSON documents with nested sections (see README for the
schema).  A sweep runs every configured algorithm from the same sampled
initial points (per-run seeds are derived counter-style from the base seed,
so results do not depend on scheduling), classifies converged terminals, and
writes a deterministic JSON summary plus optional per-run trace CSVs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import classify as _classify
from . import constrained as _constrained
from .dynamics import (
    ALGORITHMS,
    STATUS_CONVERGED,
    STATUS_DIVERGED,
    STATUS_EVAL_ERROR,
    STATUS_MAX_ITERS,
    CespParams,
    IterateTrace,
    LssParams,
    PerturbParams,
    SolverConfig,
    run,
)
from .errors import ConfigError, EvaluationError, NumericError
from .game import GameOracle, make_builtin
from .spectral import RegularizerParams

CONSTRAINED_ALGORITHMS = ("dnd", "second", "second-constrained")

CLUSTER_TOL = 1e-3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    problem: dict
    algorithms: list[str]
    init: dict
    seed: int
    solver: SolverConfig
    constraint: dict | None = None
    output: dict = field(default_factory=dict)
    n_jobs: int = 1

    @property
    def count(self) -> int:
        return 1 if self.init["mode"] == "fixed" else int(self.init["count"])


def _take(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key '{where}.{key}'")
    return section[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{where}' must be a number, got {value!r}")
    return float(value)


def _build_dataclass(cls, section: dict, where: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key '{where}.{sorted(unknown)[0]}'")
    try:
        return cls(**section)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid section '{where}': {exc}") from exc


def solver_from_dict(section: dict | None) -> SolverConfig:
    section = dict(section or {})
    for sub_key, sub_cls in (
        ("reg", RegularizerParams),
        ("lss", LssParams),
        ("cesp", CespParams),
        ("perturb", PerturbParams),
    ):
        if sub_key in section:
            if not isinstance(section[sub_key], dict):
                raise ConfigError(f"key 'solver.{sub_key}' must be an object")
            section[sub_key] = _build_dataclass(sub_cls, section[sub_key], f"solver.{sub_key}")
    return _build_dataclass(SolverConfig, section, "solver")


def problem_from_spec(spec: dict) -> GameOracle:
    kind = _take(spec, "kind", "problem")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        return make_builtin(kind, params)
    except ValueError as exc:
        raise ConfigError(f"invalid 'problem' section: {exc}") from exc


def constraint_from_spec(spec: dict | None):
    if spec is None:
        return None
    try:
        return _constrained.make_set(spec)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid 'constraint' section: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    problem = _take(doc, "problem", "<root>")
    problem_from_spec(problem)  # validate early

    algorithms = doc.get("algorithms", ["second"])
    if not isinstance(algorithms, list) or not algorithms:
        raise ConfigError("key 'algorithms' must be a nonempty list")
    constraint = doc.get("constraint")
    constraint_from_spec(constraint)
    for algo in algorithms:
        valid = CONSTRAINED_ALGORITHMS if constraint is not None else ALGORITHMS
        if algo not in valid:
            raise ConfigError(f"key 'algorithms' contains {algo!r}; expected one of {valid}")

    init = _take(doc, "init", "<root>")
    mode = _take(init, "mode", "init")
    if mode == "fixed":
        _take(init, "z0", "init")
    elif mode == "uniform_box":
        lo = np.asarray(_take(init, "lo", "init"), dtype=float)
        hi = np.asarray(_take(init, "hi", "init"), dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ConfigError("key 'init' requires lo < hi componentwise")
        count = _take(init, "count", "init")
        if not isinstance(count, int) or count < 1:
            raise ConfigError("key 'init.count' must be an integer >= 1")
    else:
        raise ConfigError(f"key 'init.mode' must be 'fixed' or 'uniform_box', got {mode!r}")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("key 'seed' must be a nonnegative integer")

    n_jobs = doc.get("n_jobs", 1)
    if not isinstance(n_jobs, int) or n_jobs < 1:
        raise ConfigError("key 'n_jobs' must be an integer >= 1")

    return ExperimentConfig(
        problem=problem,
        algorithms=list(algorithms),
        init=init,
        seed=seed,
        solver=solver_from_dict(doc.get("solver")),
        constraint=constraint,
        output=dict(doc.get("output", {})),
        n_jobs=n_jobs,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# initial points
# ---------------------------------------------------------------------------


def derived_rng(seed: int, run_index: int) -> np.random.Generator:
    """Counter-based per-run generator keyed by seed XOR run index."""
    return np.random.Generator(np.random.Philox(key=seed ^ run_index))


def initial_points(config: ExperimentConfig, dim: int) -> np.ndarray:
    init = config.init
    if init["mode"] == "fixed":
        z0 = np.asarray(init["z0"], dtype=float).reshape(1, -1)
        if z0.shape[1] != dim:
            raise ConfigError(f"key 'init.z0' has {z0.shape[1]} coordinates, problem expects {dim}")
        return z0
    lo = np.broadcast_to(np.asarray(init["lo"], dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(init["hi"], dtype=float), (dim,))
    count = int(init["count"])
    points = np.empty((count, dim))
    for i in range(count):
        points[i] = derived_rng(config.seed, i).uniform(lo, hi)
    return points


def points_hash(points: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(points, dtype=float).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def run_algorithm(
    problem: GameOracle,
    algorithm: str,
    z0: np.ndarray,
    solver: SolverConfig,
    cset=None,
) -> IterateTrace:
    if cset is not None:
        return _constrained.run_second(problem, cset, z0, solver)
    return run(algorithm, problem, z0, solver)


def _run_record(problem: GameOracle, trace: IterateTrace, solver: SolverConfig) -> dict:
    record = {
        "status": trace.status,
        "iterations": trace.iterations(),
        "final": [float(v) for v in trace.final.values],
        "flags": list(trace.flags),
        "verdict": None,
        "report": None,
    }
    if trace.status == STATUS_CONVERGED:
        report = trace.terminal_report
        if report is None:
            report = _classify.classify_unconstrained(
                problem, trace.final.values, tol=solver.tol, config=solver
            )
        record["verdict"] = report.verdict
        record["report"] = report.to_json_dict()
    return record


def _sweep_task(args) -> tuple[int, int, dict]:
    algo_idx, run_idx, problem_spec, constraint_spec, algorithm, z0, solver = args
    problem = problem_from_spec(problem_spec)
    cset = constraint_from_spec(constraint_spec)
    try:
        trace = run_algorithm(problem, algorithm, np.asarray(z0), solver, cset)
        record = _run_record(problem, trace, solver)
    except (EvaluationError, NumericError) as exc:
        record = {
            "status": STATUS_EVAL_ERROR, "iterations": 0, "final": list(map(float, z0)),
            "flags": [str(exc)], "verdict": None, "report": None,
        }
    return algo_idx, run_idx, record


def _cluster_terminals(records: list[dict]) -> list[dict]:
    clusters: list[dict] = []
    for idx, rec in enumerate(records):
        if rec["status"] != STATUS_CONVERGED:
            rec["cluster"] = None
            continue
        point = np.asarray(rec["final"])
        for cid, cluster in enumerate(clusters):
            center = np.asarray(cluster["center"])
            if np.linalg.norm(point - center) <= CLUSTER_TOL * (1.0 + np.linalg.norm(center)):
                cluster["count"] += 1
                rec["cluster"] = cid
                break
        else:
            clusters.append(
                {
                    "center": rec["final"],
                    "count": 1,
                    "verdict": rec["verdict"],
                    "example_run": idx,
                }
            )
            rec["cluster"] = len(clusters) - 1
    return clusters


@dataclass
class SweepSummary:
    per_algorithm: dict
    reference_algorithm: str
    initial_points_hash: str
    n_runs: int
    created_at: str

    def to_json_dict(self) -> dict:
        return {
            "per_algorithm": self.per_algorithm,
            "reference_algorithm": self.reference_algorithm,
            "initial_points_hash": self.initial_points_hash,
            "n_runs": self.n_runs,
            "created_at": self.created_at,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)


def sweep(config: ExperimentConfig, trace_hook=None) -> SweepSummary:
    """Run every configured algorithm from every sampled initial point.

    Initial points are identical across algorithms so iteration counts pair
    up; per-run failures are recorded, never raised.  ``trace_hook(algorithm,
    run_index, trace)`` is invoked for in-process runs when given (used by
    run_experiment to persist traces; ignored when n_jobs > 1).
    """
    problem = problem_from_spec(config.problem)
    cset = constraint_from_spec(config.constraint)
    points = initial_points(config, problem.size)

    results: dict[str, list[dict | None]] = {a: [None] * len(points) for a in config.algorithms}
    if config.n_jobs > 1:
        tasks = [
            (ai, ri, config.problem, config.constraint, algo, points[ri].tolist(), config.solver)
            for ai, algo in enumerate(config.algorithms)
            for ri in range(len(points))
        ]
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            for ai, ri, record in pool.map(_sweep_task, tasks, chunksize=8):
                results[config.algorithms[ai]][ri] = record
    else:
        for algo in config.algorithms:
            for ri in range(len(points)):
                try:
                    trace = run_algorithm(problem, algo, points[ri], config.solver, cset)
                    record = _run_record(problem, trace, config.solver)
                    if trace_hook is not None:
                        trace_hook(algo, ri, trace)
                except (EvaluationError, NumericError) as exc:
                    record = {
                        "status": STATUS_EVAL_ERROR, "iterations": 0,
                        "final": [float(v) for v in points[ri]], "flags": [str(exc)],
                        "verdict": None, "report": None,
                    }
                results[algo][ri] = record

    reference = config.algorithms[0]
    ref_iters = [rec["iterations"] for rec in results[reference]]
    per_algorithm = {}
    for algo in config.algorithms:
        records = results[algo]
        iters = [rec["iterations"] for rec in records]
        statuses = [rec["status"] for rec in records]
        clusters = _cluster_terminals(records)
        entry = {
            "n_runs": len(records),
            "n_converged": statuses.count(STATUS_CONVERGED),
            "n_diverged": statuses.count(STATUS_DIVERGED),
            "n_maxiter": statuses.count(STATUS_MAX_ITERS),
            "n_error": statuses.count(STATUS_EVAL_ERROR),
            "iterations": {
                "min": int(np.min(iters)),
                "median": float(np.median(iters)),
                "max": int(np.max(iters)),
            },
            "clusters": clusters,
            "runs": records,
        }
        if algo != reference:
            entry["iteration_diffs_vs_reference"] = [
                int(i - r) for i, r in zip(iters, ref_iters)
            ]
        per_algorithm[algo] = entry

    return SweepSummary(
        per_algorithm=per_algorithm,
        reference_algorithm=reference,
        initial_points_hash=points_hash(points),
        n_runs=len(points),
        created_at=datetime.now(timezone.utc).isoformat(),
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_trace_csv(trace: IterateTrace, path) -> None:
    """Write one row per recorded step; the final row repeats in a status comment."""
    path = Path(path)
    dim = trace.final.values.size
    header = ["k", "mode", "alpha", "omega_norm", "merit"] + [f"z_{i}" for i in range(dim)]
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            last = None
            for s in trace.steps:
                row = [str(s.k), s.mode, _fmt(s.alpha_used), _fmt(s.omega_norm), _fmt(s.merit)]
                row += [_fmt(v) for v in s.z]
                writer.writerow(row)
                last = row
            fh.write(f"# status: {trace.status} " + ",".join(last) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write trace to {path}: {exc}") from exc


def parse_trace_csv(path) -> dict:
    """Read a trace CSV back; returns columns plus the status comment."""
    path = Path(path)
    rows = []
    status = None
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            if row and row[0].startswith("# status:"):
                status = row[0].split("# status:")[1].strip().split(" ")[0]
                continue
            rows.append(row)
    dim = len(header) - 5
    return {
        "k": np.array([int(r[0]) for r in rows]),
        "mode": [r[1] for r in rows],
        "alpha": np.array([float(r[2]) for r in rows]),
        "omega_norm": np.array([float(r[3]) for r in rows]),
        "merit": np.array([float(r[4]) for r in rows]),
        "z": np.array([[float(v) for v in r[5 : 5 + dim]] for r in rows]),
        "status": status,
    }


def emit_plot_data(trace: IterateTrace, path) -> None:
    """Iterate coordinates for 2-d problems, ||omega|| vs k otherwise."""
    path = Path(path)
    dim = trace.final.values.size
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if dim == 2:
            writer.writerow(["k", "z_0", "z_1"])
            for s in trace.steps:
                writer.writerow([str(s.k), _fmt(s.z[0]), _fmt(s.z[1])])
        else:
            writer.writerow(["k", "omega_norm"])
            for s in trace.steps:
                writer.writerow([str(s.k), _fmt(s.omega_norm)])


def emit_diff_plot_data(summary: SweepSummary, path) -> None:
    """Raw paired iteration-count differences against the reference algorithm."""
    path = Path(path)
    algos = [a for a in summary.per_algorithm if a != summary.reference_algorithm]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run"] + [f"diff_{a}_vs_{summary.reference_algorithm}" for a in algos])
        for i in range(summary.n_runs):
            row = [str(i)]
            for a in algos:
                row.append(str(summary.per_algorithm[a]["iteration_diffs_vs_reference"][i]))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# experiment driver and CLI
# ---------------------------------------------------------------------------


def run_experiment(path) -> int:
    """Execute a config file; exit status 0 ok, 2 config error, 3 numeric failure."""
    try:
        config = load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    trace_dir = config.output.get("trace_dir")
    traces: dict[tuple[str, int], IterateTrace] = {}

    def hook(algo, ri, trace):
        if trace_dir is not None:
            traces[(algo, ri)] = trace

    try:
        summary = sweep(config, trace_hook=hook if config.n_jobs == 1 else None)
    except (EvaluationError, NumericError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3

    if trace_dir is not None:
        out = Path(trace_dir)
        out.mkdir(parents=True, exist_ok=True)
        for (algo, ri), trace in traces.items():
            emit_trace_csv(trace, out / f"trace_{algo}_{ri:05d}.csv")

    summary_path = config.output.get("summary_path")
    if summary_path is not None:
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        Path(summary_path).write_text(summary.to_json())

    plot_path = config.output.get("plot_data_path")
    if plot_path is not None:
        Path(plot_path).parent.mkdir(parents=True, exist_ok=True)
        if config.count == 1 and traces:
            algo0 = config.algorithms[0]
            emit_plot_data(traces[(algo0, 0)], plot_path)
        else:
            emit_diff_plot_data(summary, plot_path)

    statuses = [
        rec["status"] for entry in summary.per_algorithm.values() for rec in entry["runs"]
    ]
    if statuses and all(s == STATUS_EVAL_ERROR for s in statuses):
        print("numeric failure: every run failed", file=sys.stderr)
        return 3
    return 0


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"cannot parse vector {text!r}: {exc}") from exc


def _cmd_solve(args) -> int:
    config = load_config(args.config)
    if args.algo is not None:
        config.algorithms = [args.algo]
    if args.x0 is not None:
        config.init = {"mode": "fixed", "z0": _parse_vector(args.x0).tolist()}
    if args.out is not None:
        config.output["trace_dir"] = args.out

    problem = problem_from_spec(config.problem)
    cset = constraint_from_spec(config.constraint)
    algo = config.algorithms[0]
    valid = CONSTRAINED_ALGORITHMS if cset is not None else ALGORITHMS
    if algo not in valid:
        raise ConfigError(f"algorithm {algo!r} not valid here; expected one of {valid}")
    z0 = initial_points(config, problem.size)[0]
    trace = run_algorithm(problem, algo, z0, config.solver, cset)

    out_dir = config.output.get("trace_dir")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        emit_trace_csv(trace, out / f"trace_{algo}_00000.csv")
    plot_path = config.output.get("plot_data_path")
    if plot_path is not None:
        Path(plot_path).parent.mkdir(parents=True, exist_ok=True)
        emit_plot_data(trace, plot_path)

    final = ", ".join(_fmt(v) for v in trace.final.values)
    print(f"{algo}: {trace.status} after {trace.iterations()} iterations at [{final}]")
    if trace.terminal_report is not None:
        print(f"terminal verdict: {trace.terminal_report.verdict}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.count is not None:
        if config.init["mode"] != "uniform_box":
            raise ConfigError("--count requires init.mode = uniform_box")
        config.init["count"] = args.count
    if args.seed is not None:
        config.seed = args.seed
    if args.jobs is not None:
        config.n_jobs = args.jobs

    summary = sweep(config)
    summary_path = config.output.get("summary_path", args.out)
    if summary_path is not None:
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        Path(summary_path).write_text(summary.to_json())
    for algo, entry in summary.per_algorithm.items():
        print(
            f"{algo}: {entry['n_converged']}/{entry['n_runs']} converged, "
            f"median iterations {entry['iterations']['median']:.0f}"
        )
    return 0


def _cmd_classify(args) -> int:
    config = load_config(args.config)
    problem = problem_from_spec(config.problem)
    cset = constraint_from_spec(config.constraint)
    point = _parse_vector(args.point)
    if cset is not None and (
        not cset.full_dimensional
        or _constrained.locate(cset, point) == _constrained.LOCATION_BOUNDARY
    ):
        report = _classify.check_boundary_gne(problem, cset, point, tol=config.solver.tol)
    else:
        report = _classify.classify_unconstrained(
            problem, point, tol=config.solver.tol, config=config.solver
        )
    print(json.dumps(report.to_json_dict(), sort_keys=True, indent=1))
    return 0


def _cmd_rate(args) -> int:
    data = parse_trace_csv(args.trace)
    from .dynamics import TraceStep

    steps = [
        TraceStep(k=int(k), z=z, omega_norm=w, merit=m, alpha_used=a, mode=mode)
        for k, z, w, m, a, mode in zip(
            data["k"], data["z"], data["omega_norm"], data["merit"], data["alpha"], data["mode"]
        )
    ]
    from .game import JointPoint

    dim = data["z"].shape[1]  # always n + m >= 2; the split does not matter here
    trace = IterateTrace(
        steps=steps, status=data["status"] or STATUS_MAX_ITERS,
        final=JointPoint(data["z"][-1], dim - 1, 1),
    )
    estimate = _classify.estimate_rate(trace, _parse_vector(args.zstar), tail_len=args.tail)
    print(json.dumps(estimate.to_json_dict(), sort_keys=True, indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nashdyn", description="Local Nash equilibrium solvers for zero-sum games."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one algorithm from one initial point")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--algo", default=None)
    p_solve.add_argument("--x0", default=None, help="comma-separated initial point")
    p_solve.add_argument("--out", default=None, help="trace output directory")
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run all algorithms over sampled initializations")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--count", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--jobs", type=int, default=None)
    p_sweep.add_argument("--out", default=None, help="summary JSON path")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_classify = sub.add_parser("classify", help="classify a candidate point")
    p_classify.add_argument("--config", required=True)
    p_classify.add_argument("--point", required=True, help="comma-separated coordinates")
    p_classify.set_defaults(func=_cmd_classify)

    p_rate = sub.add_parser("rate", help="estimate the convergence order of a trace CSV")
    p_rate.add_argument("--trace", required=True)
    p_rate.add_argument("--zstar", required=True, help="comma-separated limit point")
    p_rate.add_argument("--tail", type=int, default=20)
    p_rate.set_defaults(func=_cmd_rate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EvaluationError, NumericError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
