"""Seeded experiment sweeps and result emission.

Every trial draws its channel from ``SeedSequence([seed_group, trial])``,
so all grid points of a sweep see the same user drops (common random
numbers) and the output does not depend on the order the grid is walked.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .digital import SolverError, dinkelbach_solve
from .feasible import PhaseShifterSpec
from .hybrid import factorize
from .metrics import monte_carlo_sum_rate, rate_upper_bound
from .model import (CONTINUOUS, Architecture, ConfigError, PowerModel, SystemConfig, db_to_linear,
                    linear_to_db, noise_power, parse_resolution, sample_channel, transmit_power_static)

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "experiment", "architecture", "resolution", "m_rf", "power_budget_dbw", "seed_group",
    "ee_mean_bit_per_j", "ee_std", "sumrate_mean_bit_s", "sumrate_mc_mean_bit_s",
    "residual_frobenius", "runtime_s",
    # extra columns, appended after the fixed ones
    "method", "n_trials", "p_static_w", "p_rad_mean_w", "error",
]

DEFAULT_RF_GRID = (9, 12, 16, 18, 24, 36)
SMALL_RF_GRID = (4, 8, 16)
DEFAULT_POWER_GRID_DBW = tuple(range(-10, 21, 5))
ALL_RESOLUTIONS = (2.0, 3.0, 4.0, CONTINUOUS)
ALL_ARCHITECTURES = (Architecture.FULLY_CONNECTED, Architecture.PARTIALLY_CONNECTED,
                     Architecture.FULLY_DIGITAL)


class ExperimentKind(str, Enum):
    EE_VS_RF_CHAINS = "EeVsRfChains"
    EE_VS_POWER_BUDGET = "EeVsPowerBudget"
    BOUND_TIGHTNESS = "BoundTightness"
    METHOD_COMPARE = "MethodCompare"

    @property
    def sweeps_rf_chains(self) -> bool:
        return self in (ExperimentKind.EE_VS_RF_CHAINS, ExperimentKind.METHOD_COMPARE)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.

    ``sweep`` holds RF-chain counts for the RF-chain sweeps and power
    budgets in dBW for the power sweeps. Each entry of ``seeds`` is a seed
    group whose rows average ``trials_per_point`` channel drops.
    """

    kind: ExperimentKind
    sweep: tuple
    architectures: tuple = ALL_ARCHITECTURES
    resolutions: tuple = ALL_RESOLUTIONS
    seeds: tuple = (0,)
    trials_per_point: int = 1
    methods: tuple = ("proposed",)
    mc_samples: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "sweep", tuple(self.sweep))
        object.__setattr__(self, "architectures", tuple(Architecture(a) for a in self.architectures))
        object.__setattr__(self, "resolutions", tuple(parse_resolution(r) for r in self.resolutions))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.kind == ExperimentKind.METHOD_COMPARE and self.methods == ("proposed",):
            object.__setattr__(self, "methods", ("proposed", "npp"))
        self.validate()

    def validate(self) -> "ExperimentSpec":
        if not self.sweep:
            raise ConfigError("sweep must be non-empty")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.trials_per_point < 1:
            raise ConfigError("trials_per_point must be >= 1")
        if not self.architectures:
            raise ConfigError("architectures must be non-empty")
        if any(m not in ("proposed", "npp") for m in self.methods):
            raise ConfigError(f"unknown method in {self.methods}")
        if self.mc_samples < 0:
            raise ConfigError("mc_samples must be >= 0")
        if self.kind.sweeps_rf_chains and any(int(m) != m or m < 1 for m in self.sweep):
            raise ConfigError("RF-chain sweep values must be positive integers")
        return self

    @classmethod
    def default(cls, kind, small: bool = False, **changes) -> "ExperimentSpec":
        kind = ExperimentKind(kind)
        if kind.sweeps_rf_chains:
            sweep = SMALL_RF_GRID if small else DEFAULT_RF_GRID
        else:
            sweep = DEFAULT_POWER_GRID_DBW
        base = dict(kind=kind, sweep=sweep)
        if kind == ExperimentKind.METHOD_COMPARE:
            base.update(architectures=(Architecture.FULLY_CONNECTED, Architecture.PARTIALLY_CONNECTED),
                        resolutions=(4.0, CONTINUOUS))
        elif kind == ExperimentKind.BOUND_TIGHTNESS:
            base.update(architectures=(Architecture.FULLY_DIGITAL,))
        base.update(changes)
        return cls(**base)


@dataclass
class TrialRecord:
    trial: int
    ee: float
    sumrate_bit_s: float
    sumrate_mc_bit_s: float
    sumrate_mc_stderr_bit_s: float
    p_rad_w: float
    residual: float


@dataclass
class ResultRow:
    experiment: str
    architecture: str
    resolution: str
    m_rf: int
    power_budget_dbw: float
    seed_group: int
    ee_mean_bit_per_j: float = math.nan
    ee_std: float = math.nan
    sumrate_mean_bit_s: float = math.nan
    sumrate_mc_mean_bit_s: float = math.nan
    residual_frobenius: float = math.nan
    runtime_s: float = 0.0
    method: str = "proposed"
    n_trials: int = 0
    p_static_w: float = math.nan
    p_rad_mean_w: float = math.nan
    error: str = ""
    trials: list = field(default_factory=list, repr=False)

    def record(self) -> dict:
        d = asdict(self)
        d.pop("trials")
        return d


@dataclass
class ResultTable:
    rows: list

    def __len__(self):
        return len(self.rows)

    def records(self) -> list:
        return [r.record() for r in self.rows]

    @property
    def has_errors(self) -> bool:
        return any(r.error for r in self.rows)

    def select(self, **match) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    @classmethod
    def from_records(cls, records) -> "ResultTable":
        return cls([ResultRow(**{c: rec[c] for c in CSV_COLUMNS}) for rec in records])


def format_resolution(res) -> str:
    if res is None:
        return "none"
    res = parse_resolution(res)
    return "inf" if math.isinf(res) else str(int(res))


def channel_rng(seed_group: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed_group, trial]))


def mc_rng(seed_group: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed_group, trial, 1]))


@dataclass(frozen=True)
class _Point:
    arch: Architecture
    resolution: float | None
    m_rf: int
    power_w: float
    method: str


def check_grid(spec: ExperimentSpec, cfg: SystemConfig) -> None:
    """Raise :class:`ConfigError` if any grid point violates a config invariant."""
    for pt in _grid(spec, cfg):
        cfg.with_(power_budget_w=pt.power_w, m_rf=pt.m_rf).validate(pt.arch)


def _grid(spec: ExperimentSpec, cfg: SystemConfig) -> list:
    points = []
    for x in spec.sweep:
        if spec.kind.sweeps_rf_chains:
            m_rf, power_w = int(x), cfg.power_budget_w
        else:
            m_rf, power_w = cfg.m_rf, float(db_to_linear(x))
        for arch in spec.architectures:
            if arch == Architecture.FULLY_DIGITAL:
                points.append(_Point(arch, None, cfg.n_tx, power_w, "digital"))
                continue
            for res in spec.resolutions:
                for method in spec.methods:
                    points.append(_Point(arch, res, m_rf, power_w, method))
    return points


class _Runner:
    """Evaluates grid points, caching digital solves per (drop, budget, static power)."""

    def __init__(self, spec: ExperimentSpec, cfg: SystemConfig, pm: PowerModel, record_runtime: bool):
        self.spec, self.cfg, self.pm = spec, cfg, pm
        self.record_runtime = record_runtime
        self._channels = {}
        self._digital = {}

    def channel(self, seed_group, trial):
        key = (seed_group, trial)
        if key not in self._channels:
            self._channels[key] = sample_channel(self.cfg, channel_rng(seed_group, trial))
        return self._channels[key]

    def digital(self, seed_group, trial, cfg, p_static):
        key = (seed_group, trial, cfg.power_budget_w, p_static)
        if key not in self._digital:
            b, _ = dinkelbach_solve(self.channel(seed_group, trial), cfg, p_static)
            self._digital[key] = b
        return self._digital[key]

    def run_point(self, pt: _Point, seed_group: int) -> ResultRow:
        cfg = self.cfg.with_(power_budget_w=pt.power_w, m_rf=pt.m_rf)
        row = ResultRow(experiment=self.spec.kind.value, architecture=pt.arch.value,
                        resolution=format_resolution(pt.resolution), m_rf=pt.m_rf,
                        power_budget_dbw=round(float(linear_to_db(pt.power_w)), 10),
                        seed_group=seed_group, method=pt.method)
        t0 = time.perf_counter()
        try:
            cfg.validate(pt.arch)
            p_static = transmit_power_static(pt.arch, pt.m_rf, pt.resolution, self.pm, cfg.n_tx)
            row.p_static_w = p_static
            n0 = noise_power(cfg)
            for trial in range(self.spec.trials_per_point):
                ch = self.channel(seed_group, trial)
                b = self.digital(seed_group, trial, cfg, p_static)
                residual = 0.0
                if pt.arch != Architecture.FULLY_DIGITAL:
                    ps = PhaseShifterSpec.from_resolution(pt.arch, pt.resolution)
                    hyb = factorize(b, ps, pt.m_rf, method=pt.method)
                    residual = hyb.residual(b)
                    b = hyb.product
                p_rad = float(np.sum(np.abs(b) ** 2))
                sumrate = cfg.bandwidth_hz * float(rate_upper_bound(b, ch, n0).sum())
                mc_mean, mc_se = math.nan, math.nan
                if self.spec.mc_samples:
                    mc_mean, mc_se = monte_carlo_sum_rate(b, ch, cfg, mc_rng(seed_group, trial),
                                                          n_samples=self.spec.mc_samples)
                    mc_mean, mc_se = cfg.bandwidth_hz * mc_mean, cfg.bandwidth_hz * mc_se
                ee = sumrate / (cfg.xi * p_rad + p_static)
                row.trials.append(TrialRecord(trial, ee, sumrate, mc_mean, mc_se, p_rad, residual))
        except (SolverError, ConfigError, KeyError, ValueError, np.linalg.LinAlgError) as exc:
            log.error("grid point %s seed %d failed: %s", pt, seed_group, exc)
            row.error = f"{type(exc).__name__}: {exc}"
            row.trials = []
        if row.trials:
            ees = np.array([t.ee for t in row.trials])
            row.n_trials = len(row.trials)
            row.ee_mean_bit_per_j = float(ees.mean())
            row.ee_std = float(ees.std(ddof=1)) if len(ees) > 1 else 0.0
            row.sumrate_mean_bit_s = float(np.mean([t.sumrate_bit_s for t in row.trials]))
            row.sumrate_mc_mean_bit_s = float(np.mean([t.sumrate_mc_bit_s for t in row.trials]))
            row.residual_frobenius = float(np.mean([t.residual for t in row.trials]))
            row.p_rad_mean_w = float(np.mean([t.p_rad_w for t in row.trials]))
        if self.record_runtime:
            row.runtime_s = time.perf_counter() - t0
        return row


def _run_group(args) -> list:
    spec, cfg, pm, record_runtime, seed_group = args
    runner = _Runner(spec, cfg, pm, record_runtime)
    return [runner.run_point(pt, seed_group) for pt in _grid(spec, cfg)]


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig, pm: PowerModel | None = None,
                   *, workers: int = 1, record_runtime: bool = True) -> ResultTable:
    """Run every (grid point, seed group) and return rows in grid order.

    Grid points that violate a configuration invariant raise
    :class:`ConfigError` before anything runs; solver failures are
    recorded in the row's ``error`` field instead of aborting the sweep. Seed groups run concurrently when ``workers > 1``;
    rows are merged in the same order either way. With
    ``record_runtime=False`` the runtime column is zero so that repeated
    runs are byte-identical.
    """
    pm = (pm or PowerModel()).validate()
    spec.validate()
    check_grid(spec, cfg)
    jobs = [(spec, cfg, pm, record_runtime, s) for s in spec.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            groups = list(ex.map(_run_group, jobs))
    else:
        groups = [_run_group(j) for j in jobs]
    n_points = len(groups[0])
    rows = [groups[g][i] for i in range(n_points) for g in range(len(groups))]
    return ResultTable(rows)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def emit_results(table: ResultTable, format: str, path) -> Path:
    """Write ``table`` as CSV (fixed column order) or as a JSON list of records."""
    if not len(table):
        raise ValueError("refusing to write an empty result table")
    path = Path(path)
    try:
        if format == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
                w.writeheader()
                for rec in table.records():
                    w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
        elif format == "json":
            with open(path, "w") as fh:
                json.dump(table.records(), fh, indent=1, default=_json_default)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"could not write results to {path}: {exc}") from exc
    return path


def _parse_csv_value(col, text):
    if col in ("experiment", "architecture", "resolution", "method", "error"):
        return text
    if col in ("m_rf", "seed_group", "n_trials"):
        return int(text)
    return float(text)


def load_results(path) -> ResultTable:
    """Inverse of :func:`emit_results` for either format (chosen by suffix)."""
    path = Path(path)
    if path.suffix == ".json":
        return ResultTable.from_records(json.loads(path.read_text()))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        recs = [{c: _parse_csv_value(c, r[c]) for c in CSV_COLUMNS} for r in reader]
    return ResultTable.from_records(recs)
