"""Command line front end.

Subcommands:
  sweep       robust design + per-q optimal designs over the scenario grid;
              writes sweep.csv, sweep_plot.dat, designs.json (and sweep.svg
              with --plot)
  protocol    enumerate transmission-count configurations; writes
              protocol_census.csv and optionally a scenario copy whose
              robust interval is the census range
  validate    re-derive every claim in previously written artifacts
  analyze     re-certify stored designs and report the robustness gap
  synthesize  one design (optimal at --q, else robust over the interval)

Exit codes: 0 success, 1 validation failure, 2 bad usage or bad scenario
file, 3 solver failure.  A grid point whose synthesis is infeasible is data,
not an error: the row is recorded with status "not_stabilizable" and the
sweep continues.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .hinf import (
    NotStabilizable,
    SolverFailure,
    BrlCertificate,
    brl_analysis,
    certificate_residual,
    mc_lower_bound,
    optimal_design,
    robust_design,
)
from .mjls import close_loop, dropout_chain, mss_spectral_radius
from .netproto import (
    NetworkConfiguration,
    ProbabilityRange,
    census,
    end_to_end_success,
    enumerate_configurations,
    probability_interval_to_polytope,
)
from .rng import make_rng
from .scenario import (
    Scenario,
    ScenarioError,
    build_mjls,
    canonical_dumps,
    parse_scenario,
    scenario_links,
    scenario_policy,
    scenario_tolerances,
)

__all__ = ["main", "entrypoint"]

CSV_HEADER = "q,gamma_op,gamma_ro,mss_op,mss_ro,mc_lb,status"
STATUS_OK = "ok"
STATUS_NOT_STABILIZABLE = "not_stabilizable"
STATUS_SOLVER_FAILURE = "solver_failure"


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips; deterministic across runs."""
    return repr(float(x))


def _dump_json(obj, path: Path) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def _grid(scn: Scenario) -> np.ndarray:
    s = scn.sweep
    return np.linspace(s.q_min, s.q_max, s.grid_count)


def _mc_seed(scn: Scenario, row: int) -> np.random.Generator:
    # stream (seed, 2, row): independent of row order and of --jobs
    return make_rng(scn.seed, 2, row)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _compute_row(scn: Scenario, robust_gain: list[list[float]], index: int, q: float) -> dict:
    model, _ = build_mjls(scn)
    tol = scenario_tolerances(scn)
    mc_cfg = scn.monte_carlo
    gamma_q = dropout_chain(q)
    k_ro = np.asarray(robust_gain, dtype=float)
    closed_ro = close_loop(model, k_ro)
    row: dict = {
        "q": q,
        "mss_ro": float(mss_spectral_radius(closed_ro, gamma_q)),
    }
    try:
        design = optimal_design(model, q, tol=tol)
    except NotStabilizable:
        row.update(status=STATUS_NOT_STABILIZABLE, gamma_op=float("nan"),
                   mss_op=float("nan"), mc_lb=float("nan"))
        return row
    except SolverFailure:
        row.update(status=STATUS_SOLVER_FAILURE, gamma_op=float("nan"),
                   mss_op=float("nan"), mc_lb=float("nan"))
        return row
    closed_op = close_loop(model, design.gain.k)
    lb = mc_lower_bound(
        closed_op, gamma_q, seed=_mc_seed(scn, index),
        trials=mc_cfg.trials, horizon=mc_cfg.horizon,
        power_iters=mc_cfg.power_iterations, restarts=mc_cfg.restarts,
    )
    row.update(
        status=STATUS_OK,
        gamma_op=float(design.certificate.gamma),
        mss_op=float(mss_spectral_radius(closed_op, gamma_q)),
        mc_lb=float(lb),
        gain=design.gain.k.tolist(),
        p=[p.tolist() for p in design.certificate.p],
        method=design.method,
        gamma_history=[float(g) for g in design.gamma_history],
        iterations=design.iterations,
    )
    return row


def cmd_sweep(scn: Scenario, out: Path, jobs: int, plot: bool) -> int:
    model, _ = build_mjls(scn)
    tol = scenario_tolerances(scn)
    interval = scn.robust_interval
    try:
        robust = robust_design(model, interval.q_lo, interval.q_hi, tol=tol)
    except NotStabilizable as exc:
        print(f"robust design infeasible over [{interval.q_lo}, {interval.q_hi}]: {exc}",
              file=sys.stderr)
        return 3
    except SolverFailure as exc:
        print(f"robust design solver failure: {exc}", file=sys.stderr)
        return 3
    gamma_ro = float(robust.certificate.gamma)
    robust_gain = robust.gain.k.tolist()

    grid = _grid(scn)
    tasks = list(enumerate(grid))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                _compute_row, [scn] * len(tasks), [robust_gain] * len(tasks),
                [i for i, _ in tasks], [float(q) for _, q in tasks],
            ))
    else:
        rows = [_compute_row(scn, robust_gain, i, float(q)) for i, q in tasks]

    out.mkdir(parents=True, exist_ok=True)
    csv_lines = [CSV_HEADER]
    plot_lines = ["# closed-loop disturbance attenuation vs delivery probability",
                  "# q gamma_op gamma_ro"]
    for row in rows:
        csv_lines.append(",".join([
            _fmt(row["q"]), _fmt(row["gamma_op"]), _fmt(gamma_ro),
            _fmt(row["mss_op"]), _fmt(row["mss_ro"]), _fmt(row["mc_lb"]),
            row["status"],
        ]))
        plot_lines.append(f"{_fmt(row['q'])} {_fmt(row['gamma_op'])} {_fmt(gamma_ro)}")
    (out / "sweep.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    (out / "sweep_plot.dat").write_text("\n".join(plot_lines) + "\n", encoding="utf-8")

    designs = {
        "schema": "dropctl-designs-v1",
        "seed": scn.seed,
        "interval": [interval.q_lo, interval.q_hi],
        "robust": {
            "gain": robust_gain,
            "gamma": gamma_ro,
            "method": robust.method,
            "gamma_history": [float(g) for g in robust.gamma_history],
            "iterations": robust.iterations,
            "p": [p.tolist() for p in robust.certificate.p],
        },
        "rows": [
            {k: row[k] for k in
             ("q", "status", "gamma_op", "gain", "p", "method", "gamma_history", "iterations")
             if k in row and row["status"] == STATUS_OK or k in ("q", "status")}
            for row in rows
        ],
    }
    _dump_json(designs, out / "designs.json")

    if plot:
        _write_plot(rows, gamma_ro, out / "sweep.svg")

    ok_rows = [r for r in rows if r["status"] == STATUS_OK]
    if ok_rows:
        worst = max(r["gamma_op"] for r in ok_rows)
        gap = (gamma_ro - worst) / gamma_ro if gamma_ro > 0 else float("nan")
        print(f"sweep: {len(rows)} points, gamma_ro={gamma_ro:.6g}, "
              f"max gamma_op={worst:.6g}, robustness gap={100 * gap:.2f}%")
    else:
        print(f"sweep: {len(rows)} points, no stabilizable grid point")
    print(f"artifacts written to {out}")
    return 0


def _write_plot(rows: list[dict], gamma_ro: float, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dropctl"
    import matplotlib.pyplot as plt

    qs = [r["q"] for r in rows if r["status"] == STATUS_OK]
    gs = [r["gamma_op"] for r in rows if r["status"] == STATUS_OK]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(qs, gs, "o-", ms=3.5, label="optimal per q")
    ax.axhline(gamma_ro, color="tab:red", ls="--", lw=1.0, label="robust (interval)")
    ax.set_xlabel("delivery probability q")
    ax.set_ylabel("certified attenuation $\\gamma$")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------


def cmd_protocol(scn: Scenario, out: Path, emit_scenario: str | None) -> int:
    links = scenario_links(scn)
    policy = scenario_policy(scn)
    result = census(links, policy)
    out.mkdir(parents=True, exist_ok=True)

    lines = [
        f"# configurations={result.count} "
        f"q_min={_fmt(result.q_range.q_min)} q_max={_fmt(result.q_range.q_max)}",
        "config_id,q",
    ]
    for config_id, _config, q in enumerate_configurations(links, policy):
        lines.append(f"{config_id},{_fmt(q)}")
    (out / "protocol_census.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(f"protocol: {result.count} configurations, "
          f"q in [{result.q_range.q_min:.6g}, {result.q_range.q_max:.6g}]")
    print(f"  min at budgets {result.argmin.budgets}")
    print(f"  max at budgets {result.argmax.budgets}")
    uniform = end_to_end_success(
        links, NetworkConfiguration(budgets=(1,) * len(links))
    )
    print(f"  single-attempt end-to-end success: {uniform:.6g}")

    if emit_scenario is not None:
        updated = dataclasses.replace(
            scn,
            robust_interval=dataclasses.replace(
                scn.robust_interval,
                q_lo=float(result.q_range.q_min),
                q_hi=float(result.q_range.q_max),
            ),
        )
        Path(emit_scenario).write_text(canonical_dumps(updated), encoding="utf-8")
        print(f"  scenario with census interval written to {emit_scenario}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def _load_rows(csv_path: Path) -> list[dict]:
    text = csv_path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{csv_path}: bad header {lines[0]!r}")
    names = CSV_HEADER.split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(names):
            raise ValueError(f"{csv_path}: malformed row {ln!r}")
        row = dict(zip(names, parts))
        for key in names[:-1]:
            row[key] = float(row[key])
        rows.append(row)
    return rows


def cmd_validate(scn: Scenario, out: Path) -> int:
    try:
        rows = _load_rows(out / "sweep.csv")
        designs = json.loads((out / "designs.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"FAIL: cannot load artifacts: {exc}", file=sys.stderr)
        return 1
    try:
        failures = _validate_artifacts(scn, rows, designs)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"FAIL: malformed artifacts: {exc!r}", file=sys.stderr)
        return 1
    if failures:
        for msg in failures:
            print(f"FAIL: {msg}", file=sys.stderr)
        print(f"validate: {len(failures)} failure(s)", file=sys.stderr)
        return 1
    print(f"validate: all checks passed ({len(rows)} rows)")
    return 0


def _validate_artifacts(scn: Scenario, rows: list[dict], designs: dict) -> list[str]:
    failures: list[str] = []

    def check(cond: bool, msg: str) -> None:
        if not cond:
            failures.append(msg)

    model, _ = build_mjls(scn)
    mc_cfg = scn.monte_carlo
    # the grid is read off the artifact so sweeps run with --grid overrides
    # still validate; endpoints must match the scenario
    grid = [row["q"] for row in rows]
    check(len(grid) >= 2, f"need at least 2 rows, found {len(grid)}")
    check(all(b > a for a, b in zip(grid, grid[1:])), "q column not strictly increasing")
    if grid:
        check(abs(grid[0] - scn.sweep.q_min) < 1e-12,
              f"first q {grid[0]!r} != scenario q_min {scn.sweep.q_min!r}")
        check(abs(grid[-1] - scn.sweep.q_max) < 1e-12,
              f"last q {grid[-1]!r} != scenario q_max {scn.sweep.q_max!r}")
    slack = 1e-6 * (1.0 + abs(rows[0]["gamma_ro"])) if rows else 0.0

    robust = designs.get("robust", {})
    k_ro = np.asarray(robust.get("gain", []), dtype=float)
    gamma_ro = float(robust.get("gamma", float("nan")))
    interval = designs.get("interval", [None, None])
    cert_ro = BrlCertificate(
        p=tuple(np.asarray(p, dtype=float) for p in robust.get("p", [])),
        gamma=gamma_ro,
        polytope=probability_interval_to_polytope(
            ProbabilityRange(q_min=float(interval[0]), q_max=float(interval[1]))
        ),
    )
    res_ro = certificate_residual(close_loop(model, k_ro), cert_ro)
    check(res_ro >= -1e-7 * (1.0 + gamma_ro ** 2),
          f"robust certificate violated: min residual {res_ro:.3e}")

    design_rows = {round(r["q"], 12): r for r in designs.get("rows", [])}
    for i, (q, row) in enumerate(zip(grid, rows)):
        tag = f"row {i} (q={q:.6g})"
        check(abs(row["q"] - q) < 1e-12, f"{tag}: q mismatch {row['q']!r}")
        gamma_q = dropout_chain(float(q))
        stored = design_rows.get(round(float(q), 12))
        check(stored is not None, f"{tag}: missing designs.json entry")
        if stored is None:
            continue
        check(stored["status"] == row["status"],
              f"{tag}: status mismatch {stored['status']} vs {row['status']}")
        if row["status"] != STATUS_OK:
            check(np.isnan(row["gamma_op"]), f"{tag}: non-finite gamma expected")
            continue
        k_op = np.asarray(stored["gain"], dtype=float)
        closed = close_loop(model, k_op)
        check(abs(stored["gamma_op"] - row["gamma_op"]) <= 1e-12 * (1 + abs(row["gamma_op"])),
              f"{tag}: csv/designs gamma mismatch")
        rho = mss_spectral_radius(closed, gamma_q)
        check(rho < 1.0, f"{tag}: closed loop not mean-square stable (rho={rho:.6g})")
        check(abs(rho - row["mss_op"]) <= 1e-9 * (1 + rho), f"{tag}: mss_op mismatch")
        rho_ro = mss_spectral_radius(close_loop(model, k_ro), gamma_q)
        check(abs(rho_ro - row["mss_ro"]) <= 1e-9 * (1 + rho_ro), f"{tag}: mss_ro mismatch")
        cert = BrlCertificate(
            p=tuple(np.asarray(p, dtype=float) for p in stored["p"]),
            gamma=row["gamma_op"],
            polytope=probability_interval_to_polytope(
                ProbabilityRange(q_min=float(q), q_max=float(q))
            ),
        )
        res = certificate_residual(closed, cert)
        check(res >= -1e-7 * (1.0 + row["gamma_op"] ** 2),
              f"{tag}: certificate violated (min residual {res:.3e})")
        lb = mc_lower_bound(
            closed, gamma_q, seed=_mc_seed(scn, i),
            trials=mc_cfg.trials, horizon=mc_cfg.horizon,
            power_iters=mc_cfg.power_iterations, restarts=mc_cfg.restarts,
        )
        check(abs(lb - row["mc_lb"]) <= 1e-9 * (1 + lb), f"{tag}: mc_lb not reproducible")
        check(row["mc_lb"] <= row["gamma_op"] * 1.02,
              f"{tag}: simulated gain {row['mc_lb']:.6g} exceeds "
              f"certified {row['gamma_op']:.6g} by more than 2%")
        check(abs(row["gamma_ro"] - gamma_ro) <= 1e-12 * (1 + gamma_ro),
              f"{tag}: gamma_ro column mismatch")
        if interval[0] is not None and interval[0] - 1e-12 <= q <= interval[1] + 1e-12:
            check(row["gamma_ro"] >= row["gamma_op"] - slack,
                  f"{tag}: robust gamma {row['gamma_ro']:.6g} below "
                  f"optimal {row['gamma_op']:.6g}")
    return failures


# ---------------------------------------------------------------------------
# analyze / synthesize
# ---------------------------------------------------------------------------


def cmd_analyze(scn: Scenario, out: Path) -> int:
    try:
        designs = json.loads((out / "designs.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"FAIL: cannot load designs: {exc}", file=sys.stderr)
        return 1
    model, _ = build_mjls(scn)
    tol = scenario_tolerances(scn)
    gamma_ro = float(designs["robust"]["gamma"])
    print(f"{'q':>10} {'gamma_op':>12} {'recertified':>12} {'drift':>10} {'mss':>8}")
    worst = float("nan")
    for stored in designs.get("rows", []):
        q = float(stored["q"])
        if stored["status"] != STATUS_OK:
            print(f"{q:>10.6g} {stored['status']:>12}")
            continue
        closed = close_loop(model, np.asarray(stored["gain"], dtype=float))
        gamma_q = dropout_chain(q)
        try:
            cert = brl_analysis(closed, gamma_q, tol=tol)
        except Exception as exc:  # noqa: BLE001 - report, keep going
            print(f"{q:>10.6g} recertification failed: {exc}")
            continue
        stored_g = float(stored["gamma_op"])
        drift = abs(cert.gamma - stored_g) / (1.0 + stored_g)
        rho = mss_spectral_radius(closed, gamma_q)
        worst = max(stored_g, worst) if worst == worst else stored_g
        print(f"{q:>10.6g} {stored_g:>12.6g} {cert.gamma:>12.6g} {drift:>10.2e} {rho:>8.4f}")
    if worst == worst and gamma_ro > 0:
        gap = (gamma_ro - worst) / gamma_ro
        print(f"robust gamma {gamma_ro:.6g}; worst optimal {worst:.6g}; "
              f"robustness gap {100 * gap:.2f}%")
    return 0


def cmd_synthesize(scn: Scenario, out: Path, q: float | None) -> int:
    if q is not None and not 0.0 < q <= 1.0:
        print(f"--q must lie in (0, 1], got {q}", file=sys.stderr)
        return 2
    model, _ = build_mjls(scn)
    tol = scenario_tolerances(scn)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "design.json"
    try:
        if q is not None:
            result = optimal_design(model, q, tol=tol)
            label = f"optimal at q={q:.6g}"
        else:
            iv = scn.robust_interval
            result = robust_design(model, iv.q_lo, iv.q_hi, tol=tol)
            label = f"robust over [{iv.q_lo:.6g}, {iv.q_hi:.6g}]"
    except NotStabilizable as exc:
        _dump_json({"status": STATUS_NOT_STABILIZABLE, "q": exc.q}, target)
        print(f"synthesize: not stabilizable at q={exc.q:.6g}")
        return 0
    except SolverFailure as exc:
        print(f"synthesize: solver failure: {exc}", file=sys.stderr)
        return 3
    _dump_json(
        {
            "status": STATUS_OK,
            "gain": result.gain.k.tolist(),
            "gamma": float(result.certificate.gamma),
            "gamma_history": [float(g) for g in result.gamma_history],
            "iterations": result.iterations,
            "method": result.method,
            "p": [p.tolist() for p in result.certificate.p],
        },
        target,
    )
    print(f"synthesize: {label}: gamma={result.certificate.gamma:.6g}, "
          f"gain={np.array2string(result.gain.k, precision=6)}")
    print(f"design written to {target}")
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dropctl",
        description="Certified disturbance attenuation for control loops with "
                    "Bernoulli packet loss.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", default=None, help="artifact directory "
                        "(default: scenario output_dir)")
    common.add_argument("--seed", type=int, default=None, help="override master seed")
    common.add_argument("--tol-gap", type=float, default=None, help="override solver gap tolerance")
    common.add_argument("--tol-feas", type=float, default=None,
                        help="override solver feasibility tolerance")

    sub = parser.add_subparsers(dest="command", required=True)
    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="design over the delivery probability grid")
    p_sweep.add_argument("--grid", type=int, default=None, help="override grid point count")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument("--plot", action="store_true", help="also write sweep.svg")

    p_proto = sub.add_parser("protocol", parents=[common],
                             help="enumerate protocol configurations")
    p_proto.add_argument("--emit-scenario", default=None,
                         help="write a scenario copy whose robust interval is the census range")

    sub.add_parser("validate", parents=[common], help="re-derive artifact claims")
    sub.add_parser("analyze", parents=[common], help="re-certify stored designs")

    p_synth = sub.add_parser("synthesize", parents=[common], help="write a single design")
    p_synth.add_argument("--q", type=float, default=None,
                         help="delivery probability (default: robust over the interval)")
    return parser


def _apply_overrides(scn: Scenario, args: argparse.Namespace) -> Scenario:
    if args.seed is not None:
        if args.seed < 0:
            raise ScenarioError(["--seed: must be non-negative"])
        scn = dataclasses.replace(scn, seed=args.seed)
    solver = scn.solver
    if args.tol_gap is not None:
        if args.tol_gap <= 0:
            raise ScenarioError(["--tol-gap: must be positive"])
        solver = dataclasses.replace(solver, gap_tol=args.tol_gap)
    if args.tol_feas is not None:
        if args.tol_feas <= 0:
            raise ScenarioError(["--tol-feas: must be positive"])
        solver = dataclasses.replace(solver, feas_tol=args.tol_feas)
    scn = dataclasses.replace(scn, solver=solver)
    if getattr(args, "grid", None) is not None:
        if args.grid < 2:
            raise ScenarioError(["--grid: must be at least 2"])
        scn = dataclasses.replace(
            scn, sweep=dataclasses.replace(scn.sweep, grid_count=args.grid)
        )
    return scn


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        scn = parse_scenario(args.scenario)
        scn = _apply_overrides(scn, args)
    except ScenarioError as exc:
        for err in exc.errors:
            print(f"scenario error: {err}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out is not None else Path(scn.output_dir)
    try:
        if args.command == "sweep":
            return cmd_sweep(scn, out, jobs=max(1, args.jobs), plot=args.plot)
        if args.command == "protocol":
            return cmd_protocol(scn, out, emit_scenario=args.emit_scenario)
        if args.command == "validate":
            return cmd_validate(scn, out)
        if args.command == "analyze":
            return cmd_analyze(scn, out)
        if args.command == "synthesize":
            return cmd_synthesize(scn, out, q=args.q)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    raise AssertionError(f"unhandled command {args.command!r}")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
