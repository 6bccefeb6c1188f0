"""Seeded Monte Carlo sweeps, convergence study, aggregation and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import phase_mm
from .alternating import SolverOptions, Status, solve
from .baselines import (BudgetExceededError, DimensionTooLargeError, global_search, grid_oracle,
                        random_phase_baseline)
from .scenario import (STREAM_PHASE_INIT, ConfigError, RngSeed, generate_channels, parse_rate_floor_mode,
                       random_phases, snr_config)
from .zf import RankDeficientError

EXPERIMENTS = ("sweep_snr", "sweep_n", "convergence", "single")
METHODS = ("algorithm1", "random_phase", "global_search", "grid")

CSV_COLUMNS = (
    "experiment", "K", "M", "N", "snr_db", "r_min_mode", "method", "realization", "status",
    "sum_rate_bps_hz", "power_cost", "mm_iterations", "outer_iterations", "wall_time_ms",
)

SOLVER_KEYS = ("zf_tol", "mm_mse_tol", "outer_rel_tol", "mm_max_iter", "outer_max_iter")

DEFAULTS = {
    "sweep_snr": {"scenarios": {"K": [8], "M": [8], "N": [8], "snr_db": [0, 5, 10, 15, 20]},
                  "rate_floor_mode": "fig2_rule", "methods": ["algorithm1", "random_phase"]},
    "sweep_n": {"scenarios": {"K": [8], "M": [8], "N": [8, 16, 24, 32], "snr_db": [20]},
                "rate_floor_mode": "fixed(2)", "methods": ["algorithm1", "random_phase"]},
    "convergence": {"scenarios": {"K": [16], "M": [8], "N": [16, 32, 64], "snr_db": [20]},
                    "rate_floor_mode": "fixed(2)", "methods": ["algorithm1"]},
    "single": {"scenarios": {"K": [8], "M": [8], "N": [8], "snr_db": [20]},
               "rate_floor_mode": "fig2_rule", "methods": ["algorithm1", "random_phase"]},
}


@dataclass(frozen=True)
class Scenario:
    K: int
    M: int
    N: int
    snr_db: float


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    scenarios: tuple
    realizations: int = 100
    rate_floor_mode: str = "fig2_rule"
    methods: tuple = ("algorithm1", "random_phase")
    options: SolverOptions = SolverOptions()
    solver: dict = field(default_factory=dict)
    global_restarts: int = 20
    grid_steps: int = 720
    master_seed: int = 0
    workers: int = 1
    output_path: str = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not isinstance(self.realizations, int) or isinstance(self.realizations, bool) or self.realizations < 1:
            raise ConfigError("realizations must be a positive integer")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if not self.methods:
            raise ConfigError("at least one method must be selected")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        unknown = set(self.solver) - set(SOLVER_KEYS)
        if unknown:
            raise ConfigError(f"unknown solver settings {sorted(unknown)}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        parse_rate_floor_mode(self.rate_floor_mode)
        # fail fast on dimension problems rather than per row
        for sc in self.scenarios:
            self.config_for(sc)

    @property
    def r_min_label(self) -> str:
        return parse_rate_floor_mode(self.rate_floor_mode).label

    def config_for(self, sc: Scenario):
        return snr_config(sc.K, sc.M, sc.N, sc.snr_db, self.rate_floor_mode,
                          require_zf=self.experiment != "convergence", **self.solver)


def _expand_scenarios(raw) -> tuple:
    if isinstance(raw, dict):
        keys = ("K", "M", "N", "snr_db")
        missing = [k for k in keys if k not in raw]
        if missing:
            raise ConfigError(f"scenario grid is missing {missing}")
        axes = [raw[k] if isinstance(raw[k], list) else [raw[k]] for k in keys]
        raw = [dict(zip(keys, combo)) for combo in itertools.product(*axes)]
    if not isinstance(raw, list):
        raise ConfigError("scenarios must be a list of {K, M, N, snr_db} objects or a grid object")
    out = []
    for item in raw:
        try:
            out.append(Scenario(int(item["K"]), int(item["M"]), int(item["N"]), float(item["snr_db"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario entry {item!r}: {exc}") from None
    return tuple(out)


def spec_from_dict(cfg: dict, experiment: str = None, **overrides) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a parsed JSON config plus CLI overrides.

    Keys left out of ``cfg`` fall back to the desk-scale defaults of the experiment.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    exp = experiment or cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    known = {"experiment", "scenarios", "realizations", "rate_floor_mode", "methods", "solver",
             "global_restarts", "grid_steps", "master_seed", "workers", "output_path", "format"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    merged = {**DEFAULTS[exp], **cfg}
    solver = dict(merged.get("solver") or {})
    opt_keys = ("surrogate", "weighting", "waterfill", "anchor")
    opts = {k: solver.pop(k) for k in opt_keys if k in solver}
    opts.update({k: overrides.pop(k) for k in opt_keys if overrides.get(k) is not None})
    try:
        options = SolverOptions(**opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    args = dict(
        experiment=exp,
        scenarios=_expand_scenarios(merged["scenarios"]),
        realizations=merged.get("realizations", 100),
        rate_floor_mode=merged["rate_floor_mode"],
        methods=tuple(merged["methods"]),
        options=options,
        solver=solver,
        global_restarts=int(merged.get("global_restarts", 20)),
        grid_steps=int(merged.get("grid_steps", 720)),
        master_seed=int(merged.get("master_seed", 0)),
        workers=int(merged.get("workers", 1)),
        output_path=merged.get("output_path"),
        output_format=merged.get("format", "csv"),
    )
    args.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(**args)


@dataclass
class ResultRow:
    experiment: str
    K: int
    M: int
    N: int
    snr_db: float
    r_min_mode: str
    method: str
    realization: int
    status: str
    sum_rate_bps_hz: float
    power_cost: float
    mm_iterations: int
    outer_iterations: int
    wall_time_ms: float
    trace: dict = field(default_factory=dict, repr=False)

    @property
    def sort_key(self):
        return (self.K, self.M, self.N, self.snr_db, METHODS.index(self.method) if self.method in METHODS else 99,
                self.method, self.realization)


def _run_method(spec: ExperimentSpec, sc: Scenario, method: str, realization: int) -> ResultRow:
    cfg = spec.config_for(sc)
    seed = RngSeed(spec.master_seed, realization)
    ch = generate_channels(cfg, seed)
    rate, cost, mm_it, outer_it, trace = float("nan"), float("nan"), 0, 0, {}
    t0 = time.perf_counter()
    try:
        if method == "algorithm1":
            sol = solve(ch, cfg, seed, spec.options)
            status = sol.status.value
            rate, cost, mm_it, outer_it = sol.sum_rate, sol.power_cost, sol.mm_iterations, sol.outer_iterations
            trace = {"sum_rate": [s.sum_rate for s in sol.outer_trace],
                     "power_cost": [s.power_cost for s in sol.outer_trace],
                     "mm_iterations": [s.mm_iterations for s in sol.outer_trace],
                     "theta": sol.phases.theta.tolist()}
        else:
            if method == "random_phase":
                res = random_phase_baseline(ch, cfg, seed, spec.options.waterfill)
            elif method == "global_search":
                res = global_search(ch, cfg, spec.global_restarts, seed)
            else:
                res = grid_oracle(ch, cfg, spec.grid_steps)
            status = res.status.value
            rate, cost = res.sum_rate, res.power_cost
            trace = {"evaluations": res.evaluations, "theta": res.phases.theta.tolist()}
    except RankDeficientError:
        status = "RankDeficient"
    except BudgetExceededError:
        status = "BudgetExceeded"
    except DimensionTooLargeError:
        status = "DimensionTooLarge"
    wall = 1e3 * (time.perf_counter() - t0)
    return ResultRow(spec.experiment, sc.K, sc.M, sc.N, sc.snr_db, spec.r_min_label, method, realization,
                     status, rate, cost, mm_it, outer_it, wall, trace)


def _run_convergence(spec: ExperimentSpec, sc: Scenario, method: str, realization: int) -> ResultRow:
    cfg = spec.config_for(sc)
    seed = RngSeed(spec.master_seed, realization)
    ch = generate_channels(cfg, seed)
    t0 = time.perf_counter()
    try:
        rmap = phase_mm.build_reduced_map(ch, None, cfg.zf_tol)
        x0 = phase_mm.phases_to_x(random_phases(cfg.N, seed.generator(STREAM_PHASE_INIT)))
        st = phase_mm.mm_loop(rmap, x0, cfg.mm_mse_tol, cfg.mm_max_iter, spec.options.surrogate)
        status = Status.CONVERGED.value if st.converged else Status.MAX_ITERATIONS.value
        cost, it = st.objective_trace[-1], st.iterations
        trace = {"mse": st.mse_trace, "objective": st.objective_trace, "switched_at": st.switched_at}
    except RankDeficientError:
        status, cost, it, trace = "RankDeficient", float("nan"), 0, {}
    wall = 1e3 * (time.perf_counter() - t0)
    return ResultRow(spec.experiment, sc.K, sc.M, sc.N, sc.snr_db, spec.r_min_label, f"mm_{spec.options.surrogate}",
                     realization, status, float("nan"), cost, it, 0, wall, trace)


def _task(args):
    spec, sc, method, r = args
    if spec.experiment == "convergence":
        return _run_convergence(spec, sc, method, r)
    return _run_method(spec, sc, method, r)


def _tasks(spec: ExperimentSpec):
    methods = ("mm",) if spec.experiment == "convergence" else spec.methods
    for sc in spec.scenarios:
        for m in methods:
            for r in range(spec.realizations):
                yield spec, sc, m, r


def run_experiment(spec: ExperimentSpec) -> list:
    """One row per (scenario, method, realization), ordered deterministically.

    Failures (infeasible QoS, rank-deficient cascade, exhausted search budget) are
    reported in the ``status`` column instead of aborting the sweep.
    """
    tasks = list(_tasks(spec))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        rows = [_task(t) for t in tasks]
    rows.sort(key=lambda r: r.sort_key)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows, include_wall_time: bool = True) -> str:
    cols = CSV_COLUMNS if include_wall_time else CSV_COLUMNS[:-1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "experiment": spec.experiment,
        "scenarios": [asdict(s) for s in spec.scenarios],
        "realizations": spec.realizations,
        "rate_floor_mode": spec.r_min_label,
        "methods": list(spec.methods),
        "solver": {**asdict(spec.options), **spec.solver},
        "global_restarts": spec.global_restarts,
        "grid_steps": spec.grid_steps,
        "master_seed": spec.master_seed,
    }


def rows_to_json(spec: ExperimentSpec, rows, summary=None) -> str:
    doc = {
        "spec": spec_to_dict(spec),
        "rows": [_jsonable(asdict(r)) for r in rows],
    }
    if summary is not None:
        doc["summary"] = _jsonable(summary)
    return json.dumps(doc, indent=1, sort_keys=True)


def aggregate(rows, group_keys=("experiment", "K", "M", "N", "snr_db", "r_min_mode", "method"),
              value: str = "sum_rate_bps_hz") -> list:
    """Population statistics of ``value`` per group, in sorted group order.

    Infeasible rows contribute their reported value (zero rate). Rows with a NaN value
    (rank-deficient or failed search) are counted as skipped; a group with no usable
    value is flagged ``empty`` and gets NaN statistics.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to aggregate")
    groups = {}
    for r in rows:
        groups.setdefault(tuple(getattr(r, k) for k in group_keys), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple((0, x) if isinstance(x, (int, float)) else (1, str(x)) for x in k)):
        members = groups[key]
        vals = np.array([getattr(r, value) for r in members], dtype=float)
        ok = vals[~np.isnan(vals)]
        entry = dict(zip(group_keys, key))
        entry.update(
            count=len(members),
            n_valid=int(ok.size),
            mean=float(ok.mean()) if ok.size else float("nan"),
            std=float(ok.std()) if ok.size else float("nan"),
            min=float(ok.min()) if ok.size else float("nan"),
            max=float(ok.max()) if ok.size else float("nan"),
            infeasible=sum(r.status == Status.INFEASIBLE.value for r in members),
            skipped=int(np.isnan(vals).sum()),
            empty=ok.size == 0,
        )
        out.append(entry)
    return out


@dataclass
class ConvergenceReport:
    mse_table: list
    median_iterations: dict
    unconverged: dict
    rows: list

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(("K", "M", "N", "realization", "iteration", "mse"))
        for rec in self.mse_table:
            w.writerow([_fmt(x) for x in rec])
        return buf.getvalue()


def convergence_report(spec: ExperimentSpec, rows=None) -> ConvergenceReport:
    """Per-iteration MSE of the MM phase loop and the median iteration count to ``mm_mse_tol`` per N.

    A realization that never reaches the tolerance counts as ``mm_max_iter + 1`` in the median.
    """
    if spec.experiment != "convergence":
        raise ConfigError("convergence_report needs experiment='convergence'")
    rows = run_experiment(spec) if rows is None else rows
    table, per_n, unconverged = [], {}, {}
    for r in rows:
        mse = r.trace.get("mse", [])
        for i, m in enumerate(mse, start=1):
            table.append((r.K, r.M, r.N, r.realization, i, m))
        cfg = spec.config_for(Scenario(r.K, r.M, r.N, r.snr_db))
        hit = next((i for i, m in enumerate(mse, start=1) if m < cfg.mm_mse_tol), None)
        per_n.setdefault(r.N, []).append(hit if hit is not None else cfg.mm_max_iter + 1)
        unconverged[r.N] = unconverged.get(r.N, 0) + (hit is None)
    medians = {n: float(np.median(v)) for n, v in sorted(per_n.items())}
    return ConvergenceReport(table, medians, unconverged, rows)


def with_overrides(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})
