"""Experiment configuration, replications, grid sweeps and scaling fits."""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from .eg import EgInstance, load_food_bank, solve_fluid_eg
from .engine import Lanes, LaneResults, MultiLanes, simulate, simulate_multi
from .env import DistributionSpec, RngStream, sample_demand, sample_supply
from .inventory import InventoryState, MultiInventoryState, step, step_multi
from .metrics import EnvyTracker, MetricsTracker, MultiEnvyTracker, RunSummary
from .policies import PolicySpec, branch_allocations, decide, multi_branch_tables

PLOT_FLOOR = 1e-4
CSV_COLUMNS = (
    "M", "delta", "delta_eff_mean", "delta_eff_se", "w_bar_mean", "v_bar_mean",
    "delta_fair_mean", "h_m_mean", "h_0_mean", "delta_eff_plot", "reps",
)
SUMMARY_COLUMNS = (
    "policy", "M", "delta", "seed", "T", "W_bar", "V_bar", "delta_eff", "delta_fair", "H_M", "H_0", "replication",
)
TRACE_COLUMNS = (
    "round", "level", "budget", "demand", "allocation", "drift", "waste", "stockout", "at_upper", "at_lower",
)


# -- configuration ------------------------------------------------------------


def _grid(value, name: str) -> tuple[float, ...]:
    if isinstance(value, Mapping):
        unknown = set(value) - {"start", "stop", "num"}
        if unknown or not {"start", "stop", "num"} <= set(value):
            raise ValueError(f"{name} grid spec needs exactly start, stop, num")
        out = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
        return tuple(float(v) for v in out)
    if isinstance(value, (int, float)):
        return (float(value),)
    out = tuple(float(v) for v in value)
    if not out:
        raise ValueError(f"{name} grid must be nonempty")
    return out


def _check_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    ``supply``/``demand`` are single specs for the one-resource model, or
    sequences (one per resource / per agent type) for virtual stores, in
    which case ``weights`` gives the type-by-resource utility table.
    ``S0`` of ``None`` starts every store half full.
    """

    supply: DistributionSpec | tuple[DistributionSpec, ...]
    demand: DistributionSpec | tuple[DistributionSpec, ...]
    policy: PolicySpec
    M_grid: tuple[float, ...]
    delta_grid: tuple[float, ...] = (0.0,)
    T: int = 10_000
    replications: int = 100
    h: float = 1.0
    b: float = 1.0
    root_seed: int = 0
    S0: float | None = None
    weights: np.ndarray | None = None
    output_path: str | None = None
    output_format: str = "csv"
    trace: bool = False

    def __post_init__(self) -> None:
        if not self.M_grid or not self.delta_grid:
            raise ValueError("grids must be nonempty")
        if self.T < 1 or self.replications < 1:
            raise ValueError("T and replications must be at least 1")
        if any(m <= 0 for m in self.M_grid):
            raise ValueError("capacities must be positive")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")
        if isinstance(self.supply, (list, tuple)) != isinstance(self.demand, (list, tuple)):
            raise ValueError("supply and demand must both be single specs or both be lists")
        if self.multi:
            object.__setattr__(self, "supply", tuple(self.supply))
            object.__setattr__(self, "demand", tuple(self.demand))
            if self.weights is None:
                object.__setattr__(self, "weights", np.ones((len(self.demand), len(self.supply))))
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(self.demand), len(self.supply)):
                raise ValueError("weights must have shape (types, resources)")
            object.__setattr__(self, "weights", w)

    @property
    def multi(self) -> bool:
        return isinstance(self.supply, (list, tuple))

    def bound_policy(self, delta: float | None = None) -> PolicySpec:
        """The policy with reference means filled in from the environment."""
        pol = self.policy if delta is None else self.policy.with_delta(delta)
        if self.multi:
            pol = pol.bind(
                supply_mean=tuple(s.nominal_mean for s in self.supply),
                demand_mean=sum(d.nominal_mean for d in self.demand),
                n_types=len(self.demand),
            )
            if pol.kind == "eg_bang_bang" and pol.eg_allocations is None:
                sol = solve_fluid_eg(self.eg_instance())
                pol = replace(pol, eg_allocations=tuple(map(tuple, sol.allocations)))
            return pol
        return pol.bind(
            supply_mean=self.supply.nominal_mean,
            demand_mean=self.demand.nominal_mean,
            supply_schedule=self.supply.mean_schedule,
            demand_schedule=self.demand.mean_schedule,
        )

    def eg_instance(self) -> EgInstance:
        if not self.multi:
            raise ValueError("EG instances need a multi-resource environment")
        return EgInstance(
            self.weights,
            [d.nominal_mean for d in self.demand],
            [s.nominal_mean for s in self.supply],
        )

    def start_level(self, M: float) -> float:
        return M / 2 if self.S0 is None else float(self.S0)

    # -- serialization --------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        _check_keys(data, {"seed", "env", "policy", "grid", "costs", "output"}, "config")
        for name in ("env", "policy", "grid"):
            if name not in data:
                raise ValueError(f"config is missing the {name} section")
        env = data["env"]
        _check_keys(env, {"supply", "demand", "weights", "fixture"}, "env")
        weights = None
        if env.get("fixture") is not None:
            if env["fixture"] != "food_bank":
                raise ValueError(f"unknown fixture {env['fixture']!r}")
            inst, sigma = load_food_bank()
            supply = tuple(DistributionSpec.truncated_normal(m, sigma) for m in inst.supply_means)
            demand = tuple(DistributionSpec.truncated_normal(m, sigma) for m in inst.type_means)
            weights = inst.weights
        else:
            supply = _parse_specs(env["supply"])
            demand = _parse_specs(env["demand"])
        if env.get("weights") is not None:
            weights = np.asarray(env["weights"], dtype=float)

        grid = data["grid"]
        _check_keys(grid, {"M", "delta", "T", "replications", "S0"}, "grid")
        policy = PolicySpec.from_dict(data["policy"])
        costs = data.get("costs", {})
        _check_keys(costs, {"h", "b"}, "costs")
        output = data.get("output", {})
        _check_keys(output, {"path", "format", "trace"}, "output")
        return cls(
            supply=supply,
            demand=demand,
            policy=policy,
            M_grid=_grid(grid["M"], "M"),
            delta_grid=_grid(grid.get("delta", [policy.delta]), "delta"),
            T=int(grid.get("T", 10_000)),
            replications=int(grid.get("replications", 100)),
            h=float(costs.get("h", 1.0)),
            b=float(costs.get("b", 1.0)),
            root_seed=int(data.get("seed", 0)),
            S0=None if grid.get("S0") is None else float(grid["S0"]),
            weights=weights,
            output_path=output.get("path"),
            output_format=output.get("format", "csv"),
            trace=bool(output.get("trace", False)),
        )

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        if self.multi:
            env: dict[str, Any] = {
                "supply": [s.to_dict() for s in self.supply],
                "demand": [d.to_dict() for d in self.demand],
                "weights": np.asarray(self.weights).tolist(),
            }
        else:
            env = {"supply": self.supply.to_dict(), "demand": self.demand.to_dict()}
        grid: dict[str, Any] = {
            "M": list(self.M_grid), "delta": list(self.delta_grid),
            "T": self.T, "replications": self.replications,
        }
        if self.S0 is not None:
            grid["S0"] = self.S0
        output: dict[str, Any] = {"format": self.output_format, "trace": self.trace}
        if self.output_path is not None:
            output["path"] = self.output_path
        return {
            "seed": self.root_seed, "env": env, "policy": self.policy.to_dict(), "grid": grid,
            "costs": {"h": self.h, "b": self.b}, "output": output,
        }


def _parse_specs(value):
    if isinstance(value, (list, tuple)):
        return tuple(DistributionSpec.from_dict(v) for v in value)
    return DistributionSpec.from_dict(value)


# -- single runs ----------------------------------------------------------------


def _single_lanes(config: ExperimentConfig, cells: Sequence[tuple[float, float]], n_reps: int) -> Lanes:
    caps, lows, highs, starts, clamped = [], [], [], [], []
    for M, delta in cells:
        pol = config.bound_policy(delta)
        if pol.kind == "full_depletion":
            low = high = 0.0
            clamp = False
        else:
            low, high, clamp = branch_allocations(pol)
        caps.append(M)
        lows.append(low)
        highs.append(high)
        starts.append(config.start_level(M))
        clamped.append(clamp)
    rep = np.tile(np.arange(n_reps), len(cells))
    rep_n = lambda v: np.repeat(np.asarray(v), n_reps)  # noqa: E731
    pol = config.bound_policy()
    return Lanes(
        rep_n(caps), rep_n(lows), rep_n(highs), rep_n(starts), rep,
        full_depletion=pol.kind == "full_depletion", a_max=pol.a_max, clamped=rep_n(clamped),
    )


def _multi_lanes(config: ExperimentConfig, cells: Sequence[tuple[float, float]], n_reps: int) -> MultiLanes:
    k = len(config.supply)
    caps, lows, highs, starts, clamped = [], [], [], [], []
    for M, delta in cells:
        low, high, clamp = multi_branch_tables(config.bound_policy(delta), k)
        caps.append(M)
        lows.append(low)
        highs.append(high)
        starts.append(np.full(k, config.start_level(M) / k))
        clamped.append(clamp)
    rep = np.tile(np.arange(n_reps), len(cells))
    rep_n = lambda v: np.repeat(np.asarray(v), n_reps, axis=0)  # noqa: E731
    return MultiLanes(rep_n(caps), rep_n(lows), rep_n(highs), rep, start=rep_n(starts), clamped=rep_n(clamped))


def _run_cells(config: ExperimentConfig, cells, replication_ids: Sequence[int], horizon: int | None = None) -> LaneResults:
    T = config.T if horizon is None else horizon
    if config.multi:
        lanes = _multi_lanes(config, cells, len(replication_ids))
        return simulate_multi(
            lanes, config.supply, config.demand, config.weights, T, config.root_seed,
            replication_ids, config.h, config.b,
        )
    lanes = _single_lanes(config, cells, len(replication_ids))
    return simulate(lanes, config.supply, config.demand, T, config.root_seed, replication_ids, config.h, config.b)


def run_replication(config: ExperimentConfig, M: float, delta: float, replication_id: int) -> RunSummary:
    """One replication of one grid cell; deterministic in (seed, replication_id, M, delta)."""
    return _run_cells(config, [(M, delta)], [replication_id]).summary(0)


def reference_run(
    config: ExperimentConfig, M: float, delta: float, replication_id: int, trace: bool = False
) -> tuple[RunSummary, list[dict[str, Any]]]:
    """Round-by-round run through the scalar store and policy functions.

    Draws come from the same streams as :func:`run_replication`, so the two
    agree; this path is slower but can emit a per-round trace.
    """
    rng = RngStream(config.root_seed, replication_id)
    pol = config.bound_policy(delta)
    rows: list[dict[str, Any]] = []
    if config.multi:
        return _reference_multi(config, pol, M, rng, trace)
    state = InventoryState(config.start_level(M), M)
    tracker = MetricsTracker(EnvyTracker())
    clamp = pol.kind != "full_depletion" and branch_allocations(pol).clamped
    for t in range(config.T):
        budget = sample_supply(config.supply, rng, t)
        demand = sample_demand(config.demand, rng, t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alloc = decide(pol, state, budget, demand)
        state, rec = step(state, budget, demand, alloc)
        tracker.accumulate(rec, capacity=M)
        if trace:
            rows.append(_trace_row(t + 1, rec))
    tracker.clamp_warnings = int(clamp)
    return tracker.finalize(config.h, config.b), rows


def _reference_multi(config, pol, M, rng, trace):
    k = len(config.supply)
    state = MultiInventoryState.split(M, k, np.full(k, config.start_level(M) / k))
    tracker = MetricsTracker(MultiEnvyTracker(config.weights))
    rows = []
    for t in range(config.T):
        budgets = [sample_supply(s, rng, t, j) for j, s in enumerate(config.supply)]
        demands = [sample_demand(d, rng, t, j) for j, d in enumerate(config.demand)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alloc = decide(pol, state)
        state, recs = step_multi(state, budgets, demands, alloc)
        tracker.accumulate(recs, capacity=M / k)
        if trace:
            for j, rec in enumerate(recs):
                row = _trace_row(t + 1, rec)
                row["resource"] = j
                rows.append(row)
    tracker.clamp_warnings = int(multi_branch_tables(pol, k)[2])
    return tracker.finalize(config.h, config.b), rows


def _trace_row(t: int, rec) -> dict[str, Any]:
    def scalar(v):
        return float(v) if np.ndim(v) == 0 else ";".join(repr(float(x)) for x in np.ravel(v))

    return {
        "round": t, "level": rec.level, "budget": rec.budget, "demand": scalar(rec.demand),
        "allocation": scalar(rec.allocation), "drift": rec.drift, "waste": rec.waste,
        "stockout": rec.stockout, "at_upper": int(rec.at_upper), "at_lower": int(rec.at_lower),
    }


def summary_row(
    config: ExperimentConfig, M: float, delta: float, replication_id: int, summary: RunSummary
) -> dict[str, Any]:
    """Flat record of one run for CSV or JSON output."""
    return {
        "policy": config.policy.kind, "M": M, "delta": delta, "seed": config.root_seed, "T": summary.T,
        "W_bar": summary.w_bar, "V_bar": summary.v_bar, "delta_eff": summary.delta_eff,
        "delta_fair": summary.delta_fair, "H_M": summary.h_m, "H_0": summary.h_0,
        "replication": replication_id,
    }


def write_summaries(rows: Sequence[Mapping[str, Any]], fh, fmt: str = "csv") -> None:
    if fmt == "json":
        json.dump(list(rows), fh, indent=2)
        fh.write("\n")
        return
    writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})


def write_trace(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    extra = [k for k in ("resource", "replication") if rows and k in rows[0]]
    columns = list(TRACE_COLUMNS) + extra
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


# -- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    M: float
    delta: float
    delta_eff_mean: float
    delta_eff_se: float
    w_bar_mean: float
    v_bar_mean: float
    delta_fair_mean: float
    h_m_mean: float
    h_0_mean: float
    delta_eff_plot: float
    reps: int


@dataclass
class SweepResult:
    """One row per grid cell plus the per-replication summaries behind each row."""

    rows: list[SweepRow]
    runs: dict[tuple[float, float], list[RunSummary]] = field(default_factory=dict)
    failures: list[dict[str, Any]] = field(default_factory=list)

    def row(self, M: float, delta: float) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.M, M) and math.isclose(r.delta, delta, abs_tol=1e-12):
                return r
        raise KeyError((M, delta))

    def select(self, delta: float) -> list[SweepRow]:
        return [r for r in self.rows if math.isclose(r.delta, delta, abs_tol=1e-12)]

    def to_csv(self, path) -> None:
        """Write to a path or an open text stream."""
        if hasattr(path, "write"):
            self._write_csv(path)
            return
        with open(path, "w", newline="") as fh:
            self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                str(getattr(r, c)) if c == "reps" else "%.17g" % getattr(r, c) for c in CSV_COLUMNS
            ])

    @classmethod
    def from_csv(cls, path: str | Path) -> SweepResult:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"unexpected sweep CSV header {reader.fieldnames}")
            rows = [
                SweepRow(**{c: (int(rec[c]) if c == "reps" else float(rec[c])) for c in CSV_COLUMNS})
                for rec in reader
            ]
        return cls(rows)

    def to_json(self, path: str | Path | None = None) -> str:
        doc = {
            "columns": list(CSV_COLUMNS),
            "rows": [asdict(r) for r in self.rows],
            "failures": self.failures,
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def write(self, path: str | Path, fmt: str = "csv") -> None:
        if fmt == "csv":
            self.to_csv(path)
        elif fmt == "json":
            self.to_json(path)
        else:
            raise ValueError("format must be csv or json")


def _cell_row(M: float, delta: float, runs: Sequence[RunSummary]) -> SweepRow:
    n = len(runs)
    col = lambda name: np.array([getattr(s, name) for s in runs])  # noqa: E731
    eff = col("delta_eff")
    mean = float(eff.mean())
    se = float(eff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SweepRow(
        M=float(M), delta=float(delta), delta_eff_mean=mean, delta_eff_se=se,
        w_bar_mean=float(col("w_bar").mean()), v_bar_mean=float(col("v_bar").mean()),
        delta_fair_mean=float(col("delta_fair").mean()), h_m_mean=float(col("h_m").mean()),
        h_0_mean=float(col("h_0").mean()), delta_eff_plot=max(mean, PLOT_FLOOR), reps=n,
    )


def _sweep_chunk(args) -> list[RunSummary]:
    config, cells, reps = args
    return _run_cells(config, cells, reps).summaries()


def run_sweep(config: ExperimentConfig, parallel: int = 1) -> SweepResult:
    """Evaluate every (M, delta) cell over ``config.replications`` replications.

    Cells whose policy cannot be built (for instance a delta outside the
    admissible range) are listed in ``failures`` and skipped.  Replications
    are split across ``parallel`` worker processes; since every lane depends
    only on its own replication stream the result does not depend on the split.
    """
    cells, failures = [], []
    for M in config.M_grid:
        for delta in config.delta_grid:
            try:
                if config.multi:
                    multi_branch_tables(config.bound_policy(delta), len(config.supply))
                else:
                    pol = config.bound_policy(delta)
                    if pol.kind != "full_depletion":
                        branch_allocations(pol)
                cells.append((M, delta))
            except (ValueError, RuntimeError) as exc:
                failures.append({"M": M, "delta": delta, "error": str(exc)})

    reps = list(range(config.replications))
    runs: dict[tuple[float, float], list[RunSummary]] = {c: [None] * len(reps) for c in cells}
    if cells:
        n_jobs = max(1, min(int(parallel), len(reps)))
        chunks = [reps[i::n_jobs] for i in range(n_jobs)]
        jobs = [(config, cells, chunk) for chunk in chunks]
        if n_jobs == 1:
            outputs = [_sweep_chunk(jobs[0])]
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                outputs = list(pool.map(_sweep_chunk, jobs))
        for chunk, out in zip(chunks, outputs):
            for ci, cell in enumerate(cells):
                for ri, rep in enumerate(chunk):
                    runs[cell][rep] = out[ci * len(chunk) + ri]
    rows = [_cell_row(M, d, runs[(M, d)]) for M, d in cells]
    return SweepResult(rows, runs, failures)


# -- scaling fits -----------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    n: int


def fit_scaling(
    rows: Sequence[Any],
    x_field: str = "M",
    y_field: str = "delta_eff_mean",
    transform: str = "loglog",
    floor: float | None = None,
) -> ScalingFit:
    """Least-squares line through (x, log y) or (log x, log y).

    Rows with nonpositive ``y`` (or ``y`` below ``floor``) are dropped.
    Accepts objects with the named attributes, mappings, or (x, y) pairs.
    """
    if transform not in ("loglog", "linlog"):
        raise ValueError("transform must be loglog or linlog")
    xs, ys = [], []
    for r in rows:
        if isinstance(r, Mapping):
            x, y = r[x_field], r[y_field]
        elif isinstance(r, (tuple, list)):
            x, y = r
        else:
            x, y = getattr(r, x_field), getattr(r, y_field)
        if y > 0 and (floor is None or y >= floor):
            xs.append(float(x))
            ys.append(float(y))
    if len(xs) < 3:
        raise ValueError(f"need at least 3 usable points, got {len(xs)}")
    x = np.log(xs) if transform == "loglog" else np.asarray(xs)
    fit = stats.linregress(x, np.log(ys))
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), len(xs))
