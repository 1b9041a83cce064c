"""Scenario files: the single JSON input that drives every CLI command.

A scenario pins the plant parameters, the network/protocol description, the
sweep grid, the robust design interval, solver tolerances, Monte Carlo
settings and the master seed.  Parsing is strict: unknown keys anywhere are
rejected, every value is range-checked, and all complaints are collected
into one error with (key path, line, reason) entries so a bad file can be
fixed in one pass.

`canonical_dumps` defines the canonical serialized form (sorted keys,
two-space indent, LF, UTF-8, trailing newline); the shipped scenario is
stored in canonical form, so parse -> dump round-trips byte-identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .lmi import SolverTolerances
from .mjls import MjlsModel
from .netproto import HopLink, MntpPolicy
from .plant import ChannelConfig, LinearPlant, TankParams, build_plant, to_mjls

__all__ = [
    "Scenario",
    "ScenarioError",
    "PlantSettings",
    "NetworkSettings",
    "SweepSettings",
    "RobustInterval",
    "SolverSettings",
    "MonteCarloSettings",
    "parse_scenario",
    "scenario_from_text",
    "canonical_dumps",
    "scenario_to_dict",
    "build_mjls",
    "scenario_links",
    "scenario_policy",
    "scenario_tolerances",
]


class ScenarioError(ValueError):
    """Carries every (key, line, reason) complaint found in a scenario file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class PlantSettings:
    area1: float
    area2: float
    coupling_coeff: float
    outlet_coeff: float
    gravity: float
    inflow1: float
    inflow2: float
    sample_time: float
    input_scale: float
    disturbance_scale: float
    disturbance_entry: str
    level_weights: tuple[float, float]
    control_weight: float


@dataclass(frozen=True)
class NetworkSettings:
    node_count: int
    link_success: tuple[float, ...]   # one per node
    mntp_levels: tuple[int, ...]
    battery_threshold: float
    attempt_cost: float


@dataclass(frozen=True)
class SweepSettings:
    grid_count: int
    q_min: float
    q_max: float


@dataclass(frozen=True)
class RobustInterval:
    q_lo: float
    q_hi: float


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float
    feas_tol: float
    max_iterations: int


@dataclass(frozen=True)
class MonteCarloSettings:
    trials: int
    horizon: int
    power_iterations: int
    restarts: int


@dataclass(frozen=True)
class Scenario:
    seed: int
    output_dir: str
    plant: PlantSettings
    network: NetworkSettings
    sweep: SweepSettings
    robust_interval: RobustInterval
    solver: SolverSettings
    monte_carlo: MonteCarloSettings


# ---------------------------------------------------------------------------
# validation machinery
# ---------------------------------------------------------------------------


class _Checker:
    def __init__(self, text: str, name: str):
        self.text_lines = text.splitlines()
        self.name = name
        self.errors: list[str] = []

    def line_of(self, key: str) -> int | None:
        token = f'"{key}"'
        for i, line in enumerate(self.text_lines, start=1):
            if token in line:
                return i
        return None

    def complain(self, path: str, reason: str) -> None:
        key = path.rsplit(".", 1)[-1]
        line = self.line_of(key)
        at = f" (line {line})" if line else ""
        self.errors.append(f"{path}{at}: {reason}")

    def section(self, obj: dict, path: str, keys: set[str]) -> bool:
        if not isinstance(obj, dict):
            self.complain(path, f"must be an object, got {type(obj).__name__}")
            return False
        for k in obj:
            if k not in keys:
                self.complain(f"{path}.{k}", "unknown key")
        for k in sorted(keys):
            if k not in obj:
                self.complain(f"{path}.{k}", "missing required key")
        return all(k in obj for k in keys)

    def number(self, obj, path, lo=None, hi=None, strict_lo=False, integer=False):
        val = obj.get(path.rsplit(".", 1)[-1])
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.complain(path, f"must be a number, got {type(val).__name__}")
            return None
        if integer and not isinstance(val, int):
            self.complain(path, f"must be an integer, got {val!r}")
            return None
        if lo is not None and (val <= lo if strict_lo else val < lo):
            op = ">" if strict_lo else ">="
            self.complain(path, f"must be {op} {lo}, got {val!r}")
            return None
        if hi is not None and val > hi:
            self.complain(path, f"must be <= {hi}, got {val!r}")
            return None
        return int(val) if integer else float(val)


_PLANT_KEYS = {
    "area1", "area2", "coupling_coeff", "outlet_coeff", "gravity", "inflow1",
    "inflow2", "sample_time", "input_scale", "disturbance_scale",
    "disturbance_entry", "level_weights", "control_weight",
}
_NETWORK_KEYS = {
    "node_count", "link_success", "mntp_levels", "battery_threshold", "attempt_cost",
}
_SWEEP_KEYS = {"grid_count", "q_min", "q_max"}
_ROBUST_KEYS = {"q_lo", "q_hi"}
_SOLVER_KEYS = {"gap_tol", "feas_tol", "max_iterations"}
_MC_KEYS = {"trials", "horizon", "power_iterations", "restarts"}
_TOP_KEYS = {
    "seed", "output_dir", "plant", "network", "sweep", "robust_interval",
    "solver", "monte_carlo",
}


def scenario_from_text(text: str, name: str = "<scenario>") -> Scenario:
    """Parse and fully validate one scenario document."""
    chk = _Checker(text, name)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{name} (line {exc.lineno}): invalid JSON: {exc.msg}"])
    if not isinstance(raw, dict):
        raise ScenarioError([f"{name}: top level must be an object"])

    chk.section(raw, "scenario", _TOP_KEYS)

    seed = chk.number(raw, "scenario.seed", lo=0, integer=True) if "seed" in raw else None
    output_dir = raw.get("output_dir")
    if "output_dir" in raw and (not isinstance(output_dir, str) or not output_dir):
        chk.complain("scenario.output_dir", "must be a non-empty string")
        output_dir = None

    plant = _parse_plant(chk, raw.get("plant")) if isinstance(raw.get("plant"), dict) else None
    network = _parse_network(chk, raw.get("network")) if isinstance(raw.get("network"), dict) else None
    sweep = _parse_sweep(chk, raw.get("sweep")) if isinstance(raw.get("sweep"), dict) else None
    robust = _parse_robust(chk, raw.get("robust_interval")) if isinstance(raw.get("robust_interval"), dict) else None
    solver = _parse_solver(chk, raw.get("solver")) if isinstance(raw.get("solver"), dict) else None
    mc = _parse_mc(chk, raw.get("monte_carlo")) if isinstance(raw.get("monte_carlo"), dict) else None

    if chk.errors or None in (seed, output_dir, plant, network, sweep, robust, solver, mc):
        if not chk.errors:
            chk.errors.append(f"{name}: scenario is incomplete")
        raise ScenarioError(chk.errors)
    return Scenario(
        seed=seed, output_dir=output_dir, plant=plant, network=network,
        sweep=sweep, robust_interval=robust, solver=solver, monte_carlo=mc,
    )


def _parse_plant(chk: _Checker, obj: dict) -> PlantSettings | None:
    if not chk.section(obj, "plant", _PLANT_KEYS):
        return None
    vals = {}
    for key in ("area1", "area2", "outlet_coeff", "gravity", "sample_time",
                "input_scale", "disturbance_scale"):
        vals[key] = chk.number(obj, f"plant.{key}", lo=0.0, strict_lo=True)
    for key in ("coupling_coeff", "inflow1", "inflow2", "control_weight"):
        vals[key] = chk.number(obj, f"plant.{key}", lo=0.0)
    entry = obj.get("disturbance_entry")
    if entry not in ("tank1", "tank2"):
        chk.complain("plant.disturbance_entry", f"must be 'tank1' or 'tank2', got {entry!r}")
        return None
    weights = obj.get("level_weights")
    if (
        not isinstance(weights, list) or len(weights) != 2
        or any(isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0 for w in weights)
    ):
        chk.complain("plant.level_weights", "must be a list of two non-negative numbers")
        return None
    if any(v is None for v in vals.values()):
        return None
    return PlantSettings(
        disturbance_entry=entry,
        level_weights=(float(weights[0]), float(weights[1])),
        **vals,
    )


def _parse_network(chk: _Checker, obj: dict) -> NetworkSettings | None:
    if not chk.section(obj, "network", _NETWORK_KEYS):
        return None
    count = chk.number(obj, "network.node_count", lo=1, integer=True)
    threshold = chk.number(obj, "network.battery_threshold", lo=0.0, hi=1.0)
    cost = chk.number(obj, "network.attempt_cost", lo=0.0, strict_lo=True)
    raw_p = obj.get("link_success")
    probs = None
    if isinstance(raw_p, (int, float)) and not isinstance(raw_p, bool):
        if 0.0 < raw_p <= 1.0:
            probs = (float(raw_p),) * (count or 0)
        else:
            chk.complain("network.link_success", f"must lie in (0, 1], got {raw_p!r}")
    elif isinstance(raw_p, list):
        if count is not None and len(raw_p) != count:
            chk.complain("network.link_success", f"needs {count} entries, got {len(raw_p)}")
        elif any(isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 < p <= 1.0 for p in raw_p):
            chk.complain("network.link_success", "every entry must lie in (0, 1]")
        else:
            probs = tuple(float(p) for p in raw_p)
    else:
        chk.complain("network.link_success", "must be a number or a list of numbers")
    levels = obj.get("mntp_levels")
    lv = None
    if (
        not isinstance(levels, list) or not levels
        or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in levels)
        or list(levels) != sorted(set(levels))
    ):
        chk.complain(
            "network.mntp_levels",
            "must be a strictly increasing list of positive integers",
        )
    else:
        lv = tuple(int(v) for v in levels)
    if None in (count, threshold, cost, probs, lv):
        return None
    return NetworkSettings(
        node_count=count, link_success=probs, mntp_levels=lv,
        battery_threshold=threshold, attempt_cost=cost,
    )


def _parse_sweep(chk: _Checker, obj: dict) -> SweepSettings | None:
    if not chk.section(obj, "sweep", _SWEEP_KEYS):
        return None
    count = chk.number(obj, "sweep.grid_count", lo=2, integer=True)
    q_min = chk.number(obj, "sweep.q_min", lo=0.0, hi=1.0, strict_lo=True)
    q_max = chk.number(obj, "sweep.q_max", lo=0.0, hi=1.0, strict_lo=True)
    if None in (count, q_min, q_max):
        return None
    if q_min > q_max:
        chk.complain("sweep.q_min", f"must be <= q_max, got [{q_min}, {q_max}]")
        return None
    return SweepSettings(grid_count=count, q_min=q_min, q_max=q_max)


def _parse_robust(chk: _Checker, obj: dict) -> RobustInterval | None:
    if not chk.section(obj, "robust_interval", _ROBUST_KEYS):
        return None
    q_lo = chk.number(obj, "robust_interval.q_lo", lo=0.0, hi=1.0, strict_lo=True)
    q_hi = chk.number(obj, "robust_interval.q_hi", lo=0.0, hi=1.0, strict_lo=True)
    if None in (q_lo, q_hi):
        return None
    if q_lo > q_hi:
        chk.complain("robust_interval.q_lo", f"must be <= q_hi, got [{q_lo}, {q_hi}]")
        return None
    return RobustInterval(q_lo=q_lo, q_hi=q_hi)


def _parse_solver(chk: _Checker, obj: dict) -> SolverSettings | None:
    if not chk.section(obj, "solver", _SOLVER_KEYS):
        return None
    gap = chk.number(obj, "solver.gap_tol", lo=0.0, strict_lo=True)
    feas = chk.number(obj, "solver.feas_tol", lo=0.0, strict_lo=True)
    iters = chk.number(obj, "solver.max_iterations", lo=1, integer=True)
    if None in (gap, feas, iters):
        return None
    return SolverSettings(gap_tol=gap, feas_tol=feas, max_iterations=iters)


def _parse_mc(chk: _Checker, obj: dict) -> MonteCarloSettings | None:
    if not chk.section(obj, "monte_carlo", _MC_KEYS):
        return None
    trials = chk.number(obj, "monte_carlo.trials", lo=1, integer=True)
    horizon = chk.number(obj, "monte_carlo.horizon", lo=2, integer=True)
    iters = chk.number(obj, "monte_carlo.power_iterations", lo=1, integer=True)
    restarts = chk.number(obj, "monte_carlo.restarts", lo=1, integer=True)
    if None in (trials, horizon, iters, restarts):
        return None
    return MonteCarloSettings(
        trials=trials, horizon=horizon, power_iterations=iters, restarts=restarts
    )


def parse_scenario(path: str | Path) -> Scenario:
    """Read, parse and validate a scenario file (UTF-8 JSON)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([f"{p}: cannot read scenario file: {exc}"])
    except UnicodeDecodeError as exc:
        raise ScenarioError([f"{p}: scenario file is not valid UTF-8: {exc}"])
    return scenario_from_text(text, name=str(p))


def scenario_to_dict(scn: Scenario) -> dict:
    d = asdict(scn)
    d["plant"]["level_weights"] = list(scn.plant.level_weights)
    net = d["network"]
    probs = scn.network.link_success
    # collapse a uniform per-node list back to the scalar shorthand
    net["link_success"] = probs[0] if len(set(probs)) == 1 else list(probs)
    net["mntp_levels"] = list(scn.network.mntp_levels)
    return d


def canonical_dumps(scn: Scenario) -> str:
    """Canonical serialized form; stable under parse/dump round-trips."""
    return json.dumps(scenario_to_dict(scn), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# bridges into the model-side modules
# ---------------------------------------------------------------------------


def _tank_params(scn: Scenario) -> TankParams:
    p = scn.plant
    return TankParams(
        area1=p.area1, area2=p.area2, coupling_coeff=p.coupling_coeff,
        outlet_coeff=p.outlet_coeff, gravity=p.gravity,
        inflow1=p.inflow1, inflow2=p.inflow2, sample_time=p.sample_time,
    )


def _channels(scn: Scenario) -> ChannelConfig:
    p = scn.plant
    return ChannelConfig(
        input_scale=p.input_scale, disturbance_scale=p.disturbance_scale,
        disturbance_entry=p.disturbance_entry, level_weights=p.level_weights,
        control_weight=p.control_weight,
    )


def build_mjls(scn: Scenario) -> tuple[MjlsModel, LinearPlant]:
    """Scenario -> linearized plant -> two-mode dropout jump model."""
    plant = build_plant(_tank_params(scn), _channels(scn))
    return to_mjls(plant), plant


def scenario_links(scn: Scenario) -> tuple[HopLink, ...]:
    return tuple(
        HopLink(node_id=n, success_prob=p)
        for n, p in enumerate(scn.network.link_success)
    )


def scenario_policy(scn: Scenario) -> MntpPolicy:
    return MntpPolicy(
        levels=scn.network.mntp_levels,
        battery_threshold=scn.network.battery_threshold,
    )


def scenario_tolerances(scn: Scenario) -> SolverTolerances:
    return SolverTolerances(
        gap=scn.solver.gap_tol,
        feas=scn.solver.feas_tol,
        max_iters=scn.solver.max_iterations,
    )
