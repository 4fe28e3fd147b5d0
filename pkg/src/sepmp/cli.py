"""Command-line front end.

Subcommands::

    sepmp simulate
    sepmp verify poisson|martingale|covariation
    sepmp logutil solve|compare
    sepmp gradient

Exit codes: 0 success, 1 invalid configuration or arguments, 2 a reported
statistic was flagged, 3 a path could not be simulated.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .control import (
    PathPrefix, hamiltonian, hamiltonian_dpi, hamiltonian_dx, linear_bsde_solve, performance,
)
from .engine import STATE_CSV_COLUMNS, base_grid, draw_noise, simulate_state, state_rows
from .errors import AdmissibilityError, ConfigError, SimulationError
from .logutility import (
    dominance_experiment, first_order_condition_check, gradient_check,
    optimal_control,
)
from .martingale import (
    LINEAR, SQUARED, build_compensated, covariation_experiment, default_checkpoints,
    martingale_test, poisson_check,
)
from .mc import map_paths
from .policy import ControlPolicy, time_function
from .process import ATJUMP, EVENT_CSV_COLUMNS, IntensityModel, event_rows, simulate_events
from .report import TestReport, fmt
from .rng import PathStreams

EXIT_OK, EXIT_CONFIG, EXIT_FLAGGED, EXIT_SIMULATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment file (defaults otherwise)")
    common.add_argument("--paths", type=int, help="override mc.paths")
    common.add_argument("--seed", type=int, help="override mc.master_seed")
    common.add_argument("--out", type=Path, help="override output_dir")
    common.add_argument("--mode", choices=["predictable", "atjump"], help="override kernel.mode")

    parser = _Parser(prog="sepmp", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"sepmp {version_string()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="event and state paths as CSV")
    verify = sub.add_parser("verify", help="statistical checks")
    vsub = verify.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name in ("poisson", "martingale", "covariation"):
        vsub.add_parser(name, parents=[common])
    lu = sub.add_parser("logutil", help="log-utility application")
    lsub = lu.add_subparsers(dest="action", required=True, parser_class=_Parser)
    lsub.add_parser("solve", parents=[common], help="optimal control curve and adjoint check")
    lsub.add_parser("compare", parents=[common], help="paired comparison against rival controls")
    sub.add_parser("gradient", parents=[common], help="directional derivatives and Hamiltonian trace")
    return parser


def version_string() -> str:
    return f"v{__version__}"


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(columns)
        for row in rows:
            out.writerow([fmt(v) for v in row])


class Run:
    """Collects artifacts and summary fields of one subcommand invocation."""

    def __init__(self, name: str, cfg: ExperimentConfig):
        self.name = name
        self.cfg = cfg
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.results = {}
        self.reports = []

    def csv(self, filename, columns, rows):
        write_csv(self.out / filename, columns, rows)
        self.files.append(filename)

    def report(self, report: TestReport, filename: str, expect_pass: bool = True):
        (self.out / filename).write_text(report.to_text())
        self.files.append(filename)
        self.reports.append((report, expect_pass))
        self.results[report.name] = {"passed": report.passed, "records": len(report.records),
                                     "failures": len(report.failures)}

    @property
    def flagged(self) -> bool:
        return any(not r.passed for r, expect in self.reports if expect)

    def summary(self, exit_code: int) -> dict:
        return {
            "command": self.name,
            "version": version_string(),
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.mc.master_seed,
            "paths": self.cfg.mc.paths,
            "mode": self.cfg.kernel.mode,
            "exit_code": exit_code,
            "files": sorted(self.files),
            "results": self.results,
        }


def _event_paths(cfg: ExperimentConfig, model=None, kernel=None):
    model = cfg.model if model is None else model
    kernel = cfg.kernel if kernel is None else kernel
    mc = cfg.mc

    def work(ids):
        return [simulate_events(model, kernel, mc.horizon, PathStreams(mc.master_seed, pid),
                                mc.max_events) for pid in ids]

    return [p for chunk in map_paths(work, mc.paths) for p in chunk]


def _state_policy(cfg: ExperimentConfig) -> ControlPolicy:
    pi = cfg.raw["state"]["pi"]
    lu = cfg.logutility
    if pi == "optimal":
        return lu.optimal_policy()
    if isinstance(pi, bool) or not isinstance(pi, (int, float)):
        raise ConfigError("state.pi", f"must be 'optimal' or a number, got {pi!r}")
    return ControlPolicy.deterministic(float(pi), lu.bounds, f"constant_{pi!r}")


def cmd_simulate(run: Run):
    cfg, mc = run.cfg, run.cfg.mc
    coeffs, policy, model, kernel = cfg.coefficients, _state_policy(cfg), cfg.model, cfg.kernel

    def work(ids):
        out = []
        for pid in ids:
            noise = draw_noise(model, kernel, mc.horizon, mc.base_steps, mc.master_seed, pid, mc.max_events)
            out.append(simulate_state(coeffs, policy, noise.events, noise.grid, x0=cfg.x0,
                                      brownian=noise.dB))
        return out

    states = [s for chunk in map_paths(work, mc.paths) for s in chunk]
    run.csv("events.csv", EVENT_CSV_COLUMNS, (r for s in states for r in event_rows(s.events)))
    run.csv("states.csv", STATE_CSV_COLUMNS, (r for s in states for r in state_rows(s)))
    NT = np.array([s.events.n_events for s in states], dtype=float)
    XT = np.array([s.x_post[-1] for s in states])
    run.results["N_T_mean"] = float(np.mean(NT))
    run.results["X_T_mean"] = float(np.mean(XT))
    run.results["truncated_paths"] = int(sum(s.events.max_events_hit for s in states))


def cmd_verify_poisson(run: Run):
    cfg, mc = run.cfg, run.cfg.mc
    lam0 = cfg.model.lambda0
    paths = _event_paths(cfg, model=IntensityModel.poisson(lam0))
    report = poisson_check([p.n_events for p in paths], lam0, mc.horizon)
    run.report(report, "poisson_report.txt")
    for r in report.records:
        run.results[f"N_T_{r['statistic']}"] = {"estimate": r["estimate"], "stderr": r["stderr"],
                                                "z": r["z"]}


def cmd_verify_martingale(run: Run):
    cfg = run.cfg
    v = cfg.verify
    paths = _event_paths(cfg)
    atjump = cfg.kernel.mode == ATJUMP
    cps = default_checkpoints(cfg.mc.horizon, int(v["checkpoints"]))
    for kind, label in ((LINEAR, "U"), (SQUARED, "QV")):
        pairs = [build_compensated(p, cfg.model, kind, allow_atjump=atjump) for p in paths]
        run.report(martingale_test(pairs, cps, name=f"martingale_{label}"), f"martingale_{label}.txt")
    bad = [build_compensated(p, cfg.model, LINEAR, allow_atjump=atjump,
                             scale=float(v["corrupt_scale"])) for p in paths]
    corrupt = martingale_test(bad, cps, name="martingale_U_corrupted")
    run.report(corrupt, "martingale_U_corrupted.txt", expect_pass=False)
    control = TestReport("corruption_control", meta={"corrupt_scale": v["corrupt_scale"]})
    control.add(test_id="corrupted_compensator_detected", **{"pass": not corrupt.passed})
    run.report(control, "corruption_control.txt")


def cmd_verify_covariation(run: Run):
    cfg, mc = run.cfg, run.cfg.mc
    report = covariation_experiment(cfg.model, cfg.kernel, mc.horizon, mc.paths, mc.master_seed)
    run.report(report, "covariation_report.txt")
    run.results["rms_error"] = report.meta["rms_error"]


def cmd_logutil_solve(run: Run):
    cfg, lu = run.cfg, run.cfg.logutility
    t = base_grid(0.0, lu.horizon, cfg.mc.base_steps)
    run.csv("pi_hat.csv", ("t", "pi_hat"), zip(t.tolist(), optimal_control(lu, t).tolist()))
    report = first_order_condition_check(lu, cfg.model, cfg.kernel, cfg.mc)
    run.report(report, "adjoint_report.txt")


def cmd_logutil_compare(run: Run):
    cfg = run.cfg
    report = dominance_experiment(cfg.logutility, cfg.model, cfg.kernel, cfg.mc)
    run.report(report, "dominance_report.txt")


def hamiltonian_trace(cfg: ExperimentConfig, policy: ControlPolicy, n_paths: int, checkpoints):
    """Rows ``(path_id, time, H, dH_dx, dH_dpi, p, used_inner_paths)``.

    ``p`` is the nested Monte Carlo solution of the log-utility adjoint equation
    along a path simulated under ``policy``.  The ``q`` and ``w`` components are
    not estimated and enter the Hamiltonian as zero.
    """
    lu, mc, model, kernel = cfg.logutility, cfg.mc, cfg.model, cfg.kernel
    coeffs, reward = lu.coefficients(), lu.reward()
    alpha = time_function(lu.alpha)
    gamma_coeffs = (lambda t: alpha(t) - policy(t), lu.vol, lu.kappa)
    theta = lu.theta
    rows = []
    for pid in range(n_paths):
        noise = draw_noise(model, kernel, mc.horizon, mc.base_steps, mc.master_seed, pid, mc.max_events)
        state = simulate_state(coeffs, policy, noise.events, noise.grid, x0=lu.x0, brownian=noise.dB)
        streams = PathStreams(mc.master_seed, pid)
        for j, t in enumerate(checkpoints):
            pre = PathPrefix.at(state, t)
            p = linear_bsde_solve(lambda s, x: 1.0 / x, lambda x: theta / x, gamma_coeffs, pre,
                                  model, kernel, mc, streams.inner(j), state=(coeffs, policy)).mean
            pi = float(policy(t))
            ybar = pre.pending_mark
            args = (t, pre.x, pi, p, 0.0, 0.0, ybar, pre.lam, coeffs, reward)
            rows.append((pid, t, float(hamiltonian(*args)), float(hamiltonian_dx(*args)),
                         float(hamiltonian_dpi(*args)), p, mc.inner_paths))
    return rows


def cmd_gradient(run: Run):
    cfg, lu, v = run.cfg, run.cfg.logutility, run.cfg.verify
    T = lu.horizon
    scale = float(v["policy_scale"])
    policy = lu.optimal_policy() if scale == 1.0 else lu.optimal_policy().scaled(scale, f"optimal*{scale!r}")
    starts = v["starts"] if v["starts"] is not None else [0.0, T / 4, T / 2]
    report = gradient_check(lu, cfg.model, cfg.kernel, cfg.mc, starts, float(v["y_step"]), policy)
    run.report(report, "gradient_report.txt", expect_pass=(scale == 1.0))
    cps = [c for c in default_checkpoints(T) if c < T]
    rows = hamiltonian_trace(cfg, policy, min(int(v["trace_paths"]), cfg.mc.paths), cps)
    run.csv("hamiltonian_trace.csv", ("path_id", "time", "H", "dH_dx", "dH_dpi", "p", "used_inner_paths"),
            rows)
    J = performance(policy, cfg.model, cfg.kernel, lu.coefficients(), lu.reward(), cfg.mc, lu.x0)
    run.results["J"] = J.as_dict()


COMMANDS = {
    ("simulate", None): cmd_simulate,
    ("verify", "poisson"): cmd_verify_poisson,
    ("verify", "martingale"): cmd_verify_martingale,
    ("verify", "covariation"): cmd_verify_covariation,
    ("logutil", "solve"): cmd_logutil_solve,
    ("logutil", "compare"): cmd_logutil_compare,
    ("gradient", None): cmd_gradient,
}


def run_subcommand(argv=None) -> int:
    args = build_parser().parse_args(argv)
    key = (args.command, getattr(args, "action", None))
    name = " ".join(k for k in key if k)
    started = time.perf_counter()
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict()
        cfg = cfg.with_overrides(paths=args.paths, seed=args.seed, out=args.out, mode=args.mode)
        run = Run(name, cfg)
        COMMANDS[key](run)
        code = EXIT_FLAGGED if run.flagged else EXIT_OK
    except (ConfigError, AdmissibilityError) as err:
        print(f"sepmp {name}: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as err:
        print(f"sepmp {name}: simulation error: {err}", file=sys.stderr)
        return EXIT_SIMULATION
    except (OSError, ValueError) as err:
        print(f"sepmp {name}: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    (run.out / "config.json").write_text(json.dumps(cfg.experiment_dict(), sort_keys=True, indent=2) + "\n")
    run.files.append("config.json")
    summary = run.summary(code)
    (run.out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    elapsed = time.perf_counter() - started
    (run.out / "timing.json").write_text(json.dumps({"command": name, "wall_time_s": elapsed}) + "\n")
    print(f"sepmp {name}: exit {code}, outputs in {run.out}")
    for rep, expect in run.reports:
        status = "pass" if rep.passed else ("FLAGGED" if expect else "fail (expected)")
        print(f"  {rep.name}: {status}")
    return code


def main(argv=None):
    sys.exit(run_subcommand(argv))
