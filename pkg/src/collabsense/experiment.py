"""Experiment configuration, distortion-vs-power sweeps, and report emission.

A sweep covers a grid of collaboration degrees q and power budgets P0 on one
fixed network realization. Cells run in a fixed order (ascending q outside,
ascending P0 inside) and each cell warm-starts from the previous budget (its
solution rescaled up) and from the previous collaboration degree (the same
matrix, legal because the patterns nest). Those warm starts make the
resulting distortion curves monotone by construction, not just typically.

Results are written as a plain CSV with one row per cell, a JSON manifest
holding the fully resolved configuration (explicit positions, gains, and all
seeds), and a rendered distortion-vs-budget figure. Re-running from the
manifest reproduces the CSV byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ModelError
from .montecarlo import run_trials
from .network import (
    CovarianceSpec,
    EquicorrelatedSpec,
    SensorField,
    SignalCovarianceSpec,
    equicorrelated_covariance,
    generate_field,
    nearest_neighbor_adjacency,
    signal_covariance,
)
from .optimizer import SolverConfig, StepRule, optimize_mixing

# Documented default scenario: six sensors, all connected, scattered in a
# 20 x 10 rectangle, strongly correlated signals (decay scale comparable to
# the box), weak equi-correlated noise on both stages, unit gains.
#
# Not every seed is usable here: the signal correlation decays faster than
# the kernel's positive-definite range allows, so some placements produce an
# indefinite signal covariance and are rejected at build time. Seeds 1, 7,
# 12, 16, 19 and 22 (of 1..24) pass; 1 is the default realization and 19 is
# the documented second one, a tighter cluster with stronger correlation and
# visibly larger collaboration gains.
DEFAULT_FIELD_SEED = 1
DEFAULT_SECOND_FIELD_SEED = 19
DEFAULT_RECT = (-10.0, 10.0, -5.0, 5.0)
DEFAULT_SOLVER_SEED = 2718
DEFAULT_VALIDATION_SEED = 99
# Log-spaced budgets covering the power-starved regime where collaboration
# pays. Past roughly P0 = 0.6 the observation-noise floor dominates and the
# full-collaboration curve collapses onto the no-collaboration one, so the
# grid stops before that.
DEFAULT_P0_GRID = (
    0.01,
    0.01778279410038923,
    0.03162277660168379,
    0.056234132519034905,
    0.1,
    0.1778279410038923,
    0.31622776601683794,
)

CSV_HEADER = "q,p0,distortion,surrogate,lower_bound,power_used,converged,restart_index,mc_mse,mc_stderr"

# deterministic per-cell seed offsets; primes keep (q, p0) cells distinct
_Q_STRIDE = 100003
_P_STRIDE = 193


@dataclass(frozen=True)
class FieldConfig:
    """Network realization: sampled from a seed, or given explicitly."""

    k: int = 6
    m: int = 6
    rect: tuple[float, float, float, float] = DEFAULT_RECT
    seed: int = DEFAULT_FIELD_SEED
    positions: tuple | None = None
    gains: tuple | None = None

    def __post_init__(self):
        if self.positions is not None and len(self.positions) != self.k:
            raise ConfigurationError(
                f"field.positions must list {self.k} sensors, got {len(self.positions)}"
            )
        if self.gains is not None and len(self.gains) != self.m:
            raise ConfigurationError(
                f"field.gains must list {self.m} gains, got {len(self.gains)}"
            )

    def build(self) -> SensorField:
        if self.positions is not None:
            field = SensorField(np.asarray(self.positions, dtype=float), self.m,
                                np.ones(self.m))
        else:
            field = generate_field(self.k, self.m, self.rect, self.seed)
        if self.gains is not None:
            field = field.with_gains(np.asarray(self.gains, dtype=float))
        return field


@dataclass(frozen=True)
class SolverSettings:
    """Solver parameters shared by every sweep cell."""

    max_iterations: int = 300
    gradient_tolerance: float = 1e-8
    restarts: int = 8
    step_rule: str = "backtracking"
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    seed: int = DEFAULT_SOLVER_SEED

    def solver_config(self, power_budget: float, rng_seed: int) -> SolverConfig:
        return SolverConfig(
            power_budget=power_budget,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            restarts=self.restarts,
            step_rule=StepRule(
                kind=self.step_rule,
                initial_step=self.initial_step,
                shrink=self.shrink,
                sufficient_decrease=self.sufficient_decrease,
            ),
            rng_seed=rng_seed,
        )


@dataclass(frozen=True)
class ValidationConfig:
    """Optional Monte Carlo cross-check per sweep cell."""

    enabled: bool = False
    num_trials: int = 100000
    seed: int = DEFAULT_VALIDATION_SEED

    def __post_init__(self):
        if self.num_trials < 1:
            raise ConfigurationError(
                f"validation.num_trials must be at least 1, got {self.num_trials}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; fully determines its output."""

    field: FieldConfig
    covariance: CovarianceSpec
    q_values: tuple[int, ...]
    p0_values: tuple[float, ...]
    solver: SolverSettings = SolverSettings()
    validation: ValidationConfig = ValidationConfig()
    output: str = "results"

    def __post_init__(self):
        if len(self.q_values) == 0:
            raise ConfigurationError("q_values must not be empty")
        qs = tuple(int(q) for q in self.q_values)
        if len(set(qs)) != len(qs):
            raise ConfigurationError(f"q_values contains duplicates: {qs}")
        for q in qs:
            if not 0 <= q <= self.field.k - 1:
                raise ConfigurationError(
                    f"q values must lie in [0, {self.field.k - 1}], got {q}"
                )
        # ascending order is the documented sweep order; sort silently
        object.__setattr__(self, "q_values", tuple(sorted(qs)))
        if len(self.p0_values) == 0:
            raise ConfigurationError("p0_values must not be empty")
        p0s = tuple(float(p) for p in self.p0_values)
        for p in p0s:
            if not p > 0:
                raise ConfigurationError(f"p0 values must be strictly positive, got {p}")
        if any(b <= a for a, b in zip(p0s, p0s[1:])):
            raise ConfigurationError(
                "p0_values must be sorted strictly ascending (the warm-start chain order)"
            )
        object.__setattr__(self, "p0_values", p0s)


def paper_defaults(field_seed: int = DEFAULT_FIELD_SEED, output: str = "results") -> ExperimentConfig:
    """The built-in default scenario behind the --paper-defaults CLI flag."""
    return ExperimentConfig(
        field=FieldConfig(k=6, m=6, rect=DEFAULT_RECT, seed=field_seed),
        covariance=CovarianceSpec(
            signal=SignalCovarianceSpec(variance=1.0, beta1=6.0, beta2=3.0),
            observation_noise=EquicorrelatedSpec(variance=0.1, correlation=0.1),
            channel_noise=EquicorrelatedSpec(variance=0.01, correlation=0.1),
        ),
        q_values=(0, 1, 2, 3, 4, 5),
        p0_values=DEFAULT_P0_GRID,
        solver=SolverSettings(),
        validation=ValidationConfig(),
        output=output,
    )


# ---- config file parsing --------------------------------------------------


_REQUIRED = object()


def _expect_mapping(raw, path: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping, got {type(raw).__name__}")
    return raw


def _take(raw: dict, key: str, path: str, default=_REQUIRED):
    if key in raw:
        return raw.pop(key)
    if default is _REQUIRED:
        raise ConfigurationError(f"{path}: missing required key '{key}'")
    return default


def _no_leftovers(raw: dict, path: str):
    if raw:
        raise ConfigurationError(f"{path}: unknown keys {sorted(raw)}")


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed mapping, naming bad fields."""
    raw = dict(_expect_mapping(data, "config"))

    fraw = dict(_expect_mapping(_take(raw, "field", "config", {}), "field"))
    positions = _take(fraw, "positions", "field", None)
    gains = _take(fraw, "gains", "field", None)
    field_cfg = FieldConfig(
        k=int(_take(fraw, "k", "field", 6)),
        m=int(_take(fraw, "m", "field", 6)),
        rect=tuple(float(v) for v in _take(fraw, "rect", "field", DEFAULT_RECT)),
        seed=int(_take(fraw, "seed", "field", DEFAULT_FIELD_SEED)),
        positions=tuple(tuple(float(c) for c in p) for p in positions) if positions is not None else None,
        gains=tuple(float(gv) for gv in gains) if gains is not None else None,
    )
    _no_leftovers(fraw, "field")

    craw = dict(_expect_mapping(_take(raw, "covariance", "config", {}), "covariance"))
    sraw = dict(_expect_mapping(_take(craw, "signal", "covariance", {}), "covariance.signal"))
    signal = SignalCovarianceSpec(
        variance=float(_take(sraw, "variance", "covariance.signal", 1.0)),
        beta1=float(_take(sraw, "beta1", "covariance.signal", 6.0)),
        beta2=float(_take(sraw, "beta2", "covariance.signal", 3.0)),
    )
    _no_leftovers(sraw, "covariance.signal")

    def equi(key: str, default_variance: float) -> EquicorrelatedSpec:
        eraw = dict(_expect_mapping(_take(craw, key, "covariance", {}), f"covariance.{key}"))
        spec = EquicorrelatedSpec(
            variance=float(_take(eraw, "variance", f"covariance.{key}", default_variance)),
            correlation=float(_take(eraw, "correlation", f"covariance.{key}", 0.1)),
        )
        _no_leftovers(eraw, f"covariance.{key}")
        return spec

    covariance = CovarianceSpec(
        signal=signal,
        observation_noise=equi("observation_noise", 0.1),
        channel_noise=equi("channel_noise", 0.01),
    )
    _no_leftovers(craw, "covariance")

    q_values = tuple(int(q) for q in _take(raw, "q_values", "config"))
    p0_values = tuple(float(p) for p in _take(raw, "p0_values", "config"))

    soraw = dict(_expect_mapping(_take(raw, "solver", "config", {}), "solver"))
    solver = SolverSettings(
        max_iterations=int(_take(soraw, "max_iterations", "solver", 300)),
        gradient_tolerance=float(_take(soraw, "gradient_tolerance", "solver", 1e-8)),
        restarts=int(_take(soraw, "restarts", "solver", 8)),
        step_rule=str(_take(soraw, "step_rule", "solver", "backtracking")),
        initial_step=float(_take(soraw, "initial_step", "solver", 1.0)),
        shrink=float(_take(soraw, "shrink", "solver", 0.5)),
        sufficient_decrease=float(_take(soraw, "sufficient_decrease", "solver", 1e-4)),
        seed=int(_take(soraw, "seed", "solver", DEFAULT_SOLVER_SEED)),
    )
    _no_leftovers(soraw, "solver")

    vraw = dict(_expect_mapping(_take(raw, "validation", "config", {}), "validation"))
    validation = ValidationConfig(
        enabled=bool(_take(vraw, "enabled", "validation", False)),
        num_trials=int(_take(vraw, "num_trials", "validation", 100000)),
        seed=int(_take(vraw, "seed", "validation", DEFAULT_VALIDATION_SEED)),
    )
    _no_leftovers(vraw, "validation")

    output = str(_take(raw, "output", "config", "results"))
    _no_leftovers(raw, "config")

    return ExperimentConfig(
        field=field_cfg,
        covariance=covariance,
        q_values=q_values,
        p0_values=p0_values,
        solver=solver,
        validation=validation,
        output=output,
    )


def config_from_file(path) -> ExperimentConfig:
    """Parse a JSON config file; parse errors carry line/column diagnostics."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from exc
    return config_from_dict(data)


def resolved_manifest(config: ExperimentConfig, field: SensorField) -> dict:
    """Fully explicit config mapping: positions, gains, and every seed.

    The manifest is itself a valid config, so feeding it back through the
    run command reproduces the experiment exactly.
    """
    return {
        "field": {
            "k": field.num_sensors,
            "m": field.num_connected,
            "rect": list(config.field.rect),
            "seed": config.field.seed,
            "positions": [list(row) for row in field.positions.tolist()],
            "gains": list(field.channel_gains.tolist()),
        },
        "covariance": {
            "signal": dataclasses.asdict(config.covariance.signal),
            "observation_noise": dataclasses.asdict(config.covariance.observation_noise),
            "channel_noise": dataclasses.asdict(config.covariance.channel_noise),
        },
        "q_values": list(config.q_values),
        "p0_values": list(config.p0_values),
        "solver": dataclasses.asdict(config.solver),
        "validation": dataclasses.asdict(config.validation),
        "output": config.output,
    }


# ---- the sweep -------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """One (q, P0) cell of the sweep, exactly as written to the CSV."""

    q: int
    p0: float
    distortion: float
    surrogate: float
    lower_bound: float
    power_used: float
    converged: bool
    restart_index: int
    mc_mse: float | None = None
    mc_stderr: float | None = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    manifest: dict


def _check_monotone(rows: list[SweepRow], q_values, p0_values):
    """Distortion must not increase with budget (within q) or with q (within budget)."""
    by_cell = {(r.q, r.p0): r.distortion for r in rows}

    def ok(previous, current):
        if math.isinf(previous):
            return True
        return current <= previous * (1 + 1e-9) + 1e-15

    for q in q_values:
        for a, b in zip(p0_values, p0_values[1:]):
            if not ok(by_cell[(q, a)], by_cell[(q, b)]):
                raise ModelError(
                    f"distortion increased with budget at q={q}: "
                    f"{by_cell[(q, a)]} (P0={a}) -> {by_cell[(q, b)]} (P0={b})"
                )
    for p0 in p0_values:
        for qa, qb in zip(q_values, q_values[1:]):
            if not ok(by_cell[(qa, p0)], by_cell[(qb, p0)]):
                raise ModelError(
                    f"distortion increased with collaboration at P0={p0}: "
                    f"{by_cell[(qa, p0)]} (q={qa}) -> {by_cell[(qb, p0)]} (q={qb})"
                )


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Execute the full sweep described by the config.

    Returns the per-cell rows (ascending q outside, ascending P0 inside)
    plus the resolved manifest. Cells whose information matrix never becomes
    invertible are recorded with infinite distortion rather than aborting
    the sweep.
    """
    field = config.field.build()
    r_theta = signal_covariance(field, config.covariance)
    r_n = equicorrelated_covariance(
        field.num_sensors,
        config.covariance.observation_noise.variance,
        config.covariance.observation_noise.correlation,
    )
    r_v = equicorrelated_covariance(
        field.num_connected,
        config.covariance.channel_noise.variance,
        config.covariance.channel_noise.correlation,
    )

    rows: list[SweepRow] = []
    previous_q_solutions: dict[int, np.ndarray] = {}
    for qi, q in enumerate(config.q_values):
        adjacency = nearest_neighbor_adjacency(field, q)
        current_q_solutions: dict[int, np.ndarray] = {}
        previous_p_solution: np.ndarray | None = None
        for pi, p0 in enumerate(config.p0_values):
            warm_starts = [w for w in (previous_p_solution, previous_q_solutions.get(pi))
                           if w is not None]
            cell_seed = config.solver.seed + _Q_STRIDE * qi + _P_STRIDE * pi
            result = optimize_mixing(
                field, r_theta, r_n, r_v, adjacency,
                config.solver.solver_config(p0, cell_seed),
                warm_starts=warm_starts,
            )
            mc_mse = mc_stderr = None
            if config.validation.enabled and result.report.rank_ok:
                batch = run_trials(
                    result.w_opt, field.channel_gains, r_theta, r_n, r_v,
                    config.validation.num_trials,
                    config.validation.seed + _Q_STRIDE * qi + _P_STRIDE * pi,
                )
                mc_mse = batch.empirical_mse_total
                mc_stderr = batch.mse_stderr
            rows.append(SweepRow(
                q=q,
                p0=p0,
                distortion=result.report.distortion,
                surrogate=result.report.surrogate,
                lower_bound=result.report.lower_bound,
                power_used=result.report.power,
                converged=result.converged,
                restart_index=result.restart_index,
                mc_mse=mc_mse,
                mc_stderr=mc_stderr,
            ))
            previous_p_solution = result.w_opt.entries
            current_q_solutions[pi] = result.w_opt.entries
        previous_q_solutions = current_q_solutions

    _check_monotone(rows, config.q_values, config.p0_values)
    return SweepResult(rows=tuple(rows), manifest=resolved_manifest(config, field))


# ---- emission ---------------------------------------------------------------


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def render_rows_csv(rows) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in (
            row.q, row.p0, row.distortion, row.surrogate, row.lower_bound,
            row.power_used, row.converged, row.restart_index, row.mc_mse, row.mc_stderr,
        )))
    return "\n".join(lines) + "\n"


def emit_results(result: SweepResult, out_dir, figure: bool = True) -> dict:
    """Write results.csv, manifest.json, and (optionally) the figure.

    Returns a mapping of artifact names to paths. CSV and manifest bytes are
    deterministic functions of the sweep result.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    csv_path = out / "results.csv"
    csv_path.write_bytes(render_rows_csv(result.rows).encode("utf-8"))

    manifest_path = out / "manifest.json"
    manifest_path.write_bytes(
        (json.dumps(result.manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )

    paths = {"csv": csv_path, "manifest": manifest_path}
    if figure:
        from .figures import render_sweep_figure

        paths["figure"] = render_sweep_figure(result.rows, out / "distortion_vs_power.png")
    return paths


# ---- stored solutions (solve/validate/power round trip) ---------------------


def write_solution(path, config: ExperimentConfig, field: SensorField, q: int, p0: float,
                   result) -> None:
    """Persist one optimized cell with everything needed to re-evaluate it."""
    r_theta = signal_covariance(field, config.covariance)
    r_n = equicorrelated_covariance(
        field.num_sensors,
        config.covariance.observation_noise.variance,
        config.covariance.observation_noise.correlation,
    )
    r_v = equicorrelated_covariance(
        field.num_connected,
        config.covariance.channel_noise.variance,
        config.covariance.channel_noise.correlation,
    )
    payload = {
        "kind": "collabsense-solution",
        "q": int(q),
        "p0": float(p0),
        "mixing": result.w_opt.entries.tolist(),
        "adjacency": result.w_opt.pattern.entries.tolist(),
        "gains": field.channel_gains.tolist(),
        "signal_covariance": np.asarray(r_theta).tolist(),
        "observation_noise_covariance": np.asarray(r_n).tolist(),
        "channel_noise_covariance": np.asarray(r_v).tolist(),
        "report": {
            "distortion": result.report.distortion,
            "surrogate": result.report.surrogate,
            "lower_bound": result.report.lower_bound,
            "power_used": result.report.power,
            "rank_ok": result.report.rank_ok,
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_solution(path) -> dict:
    """Load a stored solution; returns arrays ready for the estimator API."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"solution file not found: {path}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from exc
    if not isinstance(data, dict) or data.get("kind") != "collabsense-solution":
        raise ConfigurationError(f"{path}: not a stored solution file")
    try:
        return {
            "q": int(data["q"]),
            "p0": float(data["p0"]),
            "mixing": np.asarray(data["mixing"], dtype=float),
            "adjacency": np.asarray(data["adjacency"], dtype=int),
            "gains": np.asarray(data["gains"], dtype=float),
            "r_theta": np.asarray(data["signal_covariance"], dtype=float),
            "r_n": np.asarray(data["observation_noise_covariance"], dtype=float),
            "r_v": np.asarray(data["channel_noise_covariance"], dtype=float),
        }
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing solution key {exc}") from exc
