"""Command-line entry point: ``safestab {run, sweep, validate, selftest}``.

Exit status: 0 clean run, 1 invalid configuration (or failed self-test),
2 safety violation detected (some recorded ``h`` channel reached ``<= 0``, even
if the run then aborted), 3 numeric abort (divergence or an evaluation error
inside the run with no safety violation recorded).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ScenarioConfig
from .dde import Trajectory
from .errors import ContractError, DomainError
from .scenarios import (
    CCCParams,
    MasterSlaveParams,
    PiecewiseConstant,
    ScalarParams,
    Scenario,
    build_ccc,
    build_master_slave,
    build_scalar,
    metrics,
    run_scenario,
)
from .smc import GainSpec

log = logging.getLogger("safestab")

EXIT_OK, EXIT_CONFIG, EXIT_UNSAFE, EXIT_ABORT = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration -> scenario
# ---------------------------------------------------------------------------


def gain_from_config(cfg: ScenarioConfig) -> GainSpec:
    v = cfg.get("gain", "variant").strip()
    if v == "sign":
        return GainSpec.sign(cfg.num("gain", "K"))
    if v == "sigmoid":
        return GainSpec.sigmoid(cfg.num("gain", "K"), cfg.num("gain", "eps"))
    if v == "krasovskii":
        return GainSpec.krasovskii(cfg.num("gain", "K1"))
    return GainSpec.razumikhin(cfg.num("gain", "K1"), cfg.num("gain", "alpha_slope"))


def scenario_from_config(cfg: ScenarioConfig) -> Scenario:
    """Build the scenario described by a resolved configuration."""
    gain = gain_from_config(cfg)
    dt, tf = cfg.num("numerics", "dt"), cfg.num("numerics", "tf")
    floor = cfg.opt_num("numerics", "floor")
    extra = {} if floor is None else {"floor": floor}
    name = cfg.scenario
    if name == "ccc":
        c = lambda k: cfg.num("ccc", k)  # noqa: E731
        p = CCCParams(
            M=c("M"), a0=c("a0"), a1=c("a1"), a2=c("a2"), v_d=c("v_d"), headway=c("headway"),
            rho=c("rho"), tau=c("tau"),
            leader_accel=PiecewiseConstant(cfg.vec("ccc", "leader_levels"), c("leader_period"),
                                           c("leader_bound")),
            gain=gain, xi=cfg.vec("ccc", "xi", 3), dt=dt, tf=tf, **extra,
        )
        sc = build_ccc(p)
    elif name == "master_slave":
        c = lambda k: cfg.num("master_slave", k)  # noqa: E731
        p = MasterSlaveParams(
            delta_m=c("delta_m"), delta_s=c("delta_s"), eps_m=c("eps_m"), eps_s=c("eps_s"),
            radius=c("radius"), omega=c("omega"),
            delay_law=cfg.get("master_slave", "delay_law").strip(),
            delay_omega=c("delay_omega"), literal_gate=cfg.flag("master_slave", "literal_gate"),
            gain=gain, xi=cfg.vec("master_slave", "xi", 4), dt=dt, tf=tf, **extra,
        )
        sc = build_master_slave(p)
    else:
        p = ScalarParams(
            a=cfg.num("custom", "a"), b=cfg.num("custom", "b"), delay=cfg.num("custom", "delay"),
            xi=cfg.vec("custom", "xi", 1)[0], limit=cfg.opt_num("custom", "limit"),
            rho=cfg.num("custom", "rho"), gain=gain, dt=dt, tf=tf, **extra,
        )
        sc = build_scalar(p)
    sc.surface.refine = int(cfg.num("numerics", "refine"))
    return sc


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def write_trajectory_csv(path: str, traj: Trajectory) -> None:
    """Columns ``t, x_1..x_n, u_1..u_m`` then channels in recording order."""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    names = list(traj.channels)
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)] + names
    cols = [traj.times[:, None], traj.states, traj.inputs] + [
        np.asarray(traj.channels[c])[:, None] for c in names]
    table = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary(path: str, summary: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def read_summary(path: str) -> Dict[str, str]:
    """Parse a ``key = value`` summary file back into strings."""
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def execute(cfg: ScenarioConfig, outdir: Optional[str] = None) -> Tuple[int, Dict[str, object]]:
    """Run one resolved configuration and write its three output files.

    Returns the exit status and the summary mapping.
    """
    outdir = outdir or cfg.get("output", "directory")
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.resolved"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
    sc = scenario_from_config(cfg)
    traj = run_scenario(sc, cfg.channels)
    summary: Dict[str, object] = {
        "scenario": cfg.scenario,
        "fig": cfg.get("scenario", "fig") or "none",
        "gain": sc.controller.gain.describe(),
        "dt": traj.dt,
        "tf": float(traj.times[-1]) if len(traj) else 0.0,
        "samples": len(traj),
        "aborted": traj.aborted,
        "message": traj.message or "none",
        "near_floor_count": sc.controller.near_floor_count,
        "input_clamped": traj.diagnostics.get("clamped", 0),
    }
    barrier = sc.extras.get("barrier")
    if hasattr(barrier, "clamp_count"):
        summary["h_floor_clamps"] = barrier.clamp_count
    if len(traj) and traj.channels:
        summary.update(metrics(traj, band=cfg.band, final_window=cfg.num("metrics", "final_window")))
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), traj)
    # a run that leaves the safe set usually aborts right after (reciprocal
    # barriers are undefined outside), so the safety verdict takes precedence
    status = EXIT_OK
    if "min_h_all" in summary and float(summary["min_h_all"]) <= 0.0:  # type: ignore[arg-type]
        status = EXIT_UNSAFE
    elif traj.aborted:
        status = EXIT_ABORT
    summary["exit_status"] = status
    write_summary(os.path.join(outdir, "summary.txt"), summary)
    return status, summary


def _resolve(args) -> ScenarioConfig:
    overrides = cfgmod.parse_overrides(args.set or [])
    if getattr(args, "scenario", None):
        overrides.setdefault("scenario.name", args.scenario)
    text = ""
    source = "<defaults>"
    if args.config:
        source = args.config
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from exc
    return cfgmod.loads(text, overrides, getattr(args, "fig", None), source=source)


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args)
        status, summary = execute(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ContractError) as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for k in ("scenario", "gain", "aborted", "min_h_all", "settle_time", "exit_status"):
        if k in summary:
            print(f"{k} = {_fmt(summary[k])}")
    return status


def _sweep_one(job: Tuple[Dict[str, Dict[str, str]], str]) -> Tuple[str, int]:
    data, outdir = job
    try:
        status, _ = execute(ScenarioConfig(data).validate(), outdir)
    except (ConfigError, DomainError, ContractError) as exc:
        log.error("%s: %s", outdir, exc)
        status = EXIT_CONFIG
    return outdir, status


def cmd_sweep(args) -> int:
    try:
        base = _resolve(args)
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("--values: empty list")
        jobs = []
        root = args.out or base.get("output", "directory")
        for v in values:
            cfg = cfgmod.loads(base.dumps(), {args.param: v})
            jobs.append((cfg.data, os.path.join(root, f"{args.param}={v}")))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    worst = EXIT_OK
    for outdir, status in results:
        print(f"{outdir}: exit {status}")
        worst = max(worst, status)
    return worst


def cmd_validate(args) -> int:
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: scenario={cfg.scenario} fig={cfg.get('scenario', 'fig') or 'none'}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    seed = int(os.environ.get("SEED", "0"))
    try:
        results = selftest.run_suite(args.suite, seed=seed)
    except ContractError as exc:
        print(f"selftest error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"summary: {len(results) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="safestab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--scenario", choices=cfgmod.SCENARIOS)
        p.add_argument("--fig", choices=sorted(cfgmod.PRESETS), help="figure preset")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a configuration entry (repeatable)")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario for several values of one entry")
    common(p)
    p.add_argument("--param", required=True, metavar="SECTION.KEY")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    p.add_argument("--out", help="root output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a configuration without running it")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("selftest", help="run property suites")
    p.add_argument("suite", nargs="?", default="all")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.func(args))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
