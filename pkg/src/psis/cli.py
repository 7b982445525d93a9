"""Command line driver.

Subcommands share one JSON configuration file (see experiment.py):

    psis synthesize --config run.json
    psis simulate   --config run.json [--mode direct|tau] [--no-clobber] [--no-timestamp]
    psis verify     --config run.json [...]
    psis sweep      --config run.json [--scales 0.1,1,10] [...]

Exit codes: 0 success / verification passed, 2 configuration problem,
3 numerical failure (a partial trajectory CSV is kept when possible),
4 verification failed.  All file outputs are deterministic; wall time is
printed to stdout but never written into a report.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace

from . import output as out
from .errors import (
    AuditError,
    ConfigurationError,
    DomainError,
    EvaluationError,
    IntegrationError,
    StructureError,
)
from .experiment import ExperimentSpec, effective_config, load_config
from .simulation import simulate
from .synthesis import describe, synthesize
from .verification import (
    control_vanishing_check,
    lyapunov_audit,
    run_tolerance,
    settling_instant,
    sweep_initial_conditions,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psis",
        description="Prescribed-instant stabilization: synthesis, simulation, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synthesize", "build the controller and print its expressions"),
        ("simulate", "run the closed loop and write CSV, SVG, and report"),
        ("verify", "simulate plus settling, decay, and input audits"),
        ("sweep", "settling audit across scaled initial conditions"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument(
            "--mode", choices=("direct", "tau"), default=None,
            help="override the integration clock from the config",
        )
        sp.add_argument(
            "--scales", default=None,
            help="comma-separated scale factors (sweep only)",
        )
        sp.add_argument(
            "--no-clobber", action="store_true",
            help="refuse to overwrite existing output files",
        )
        sp.add_argument(
            "--no-timestamp", action="store_true",
            help="omit the timestamp comment from SVG output",
        )
    return parser


def _parse_scales(text: str) -> list[float]:
    try:
        scales = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigurationError(f"--scales must be comma-separated numbers, got {text!r}")
    if not scales:
        raise ConfigurationError("--scales parsed to an empty list")
    return scales


def _cmd_synthesize(spec: ExperimentSpec, args: argparse.Namespace) -> int:
    controller = synthesize(spec.synthesis)
    print(describe(controller))
    return 0


def _cmd_simulate(spec: ExperimentSpec, args: argparse.Namespace) -> int:
    paths = spec.output
    out.check_clobber([paths.csv, paths.svg, paths.report], args.no_clobber)
    controller = synthesize(spec.synthesis)
    started = time.perf_counter()
    traj = simulate(spec.plant, controller, spec.sim)
    wall = time.perf_counter() - started

    written = []
    if paths.csv:
        out.write_csv(paths.csv, traj)
        written.append(paths.csv)
    if paths.svg:
        out.write_svg(paths.svg, traj, spec.run_id,
                      include_timestamp=not args.no_timestamp)
        written.append(paths.svg)
    if paths.report:
        out.write_report(paths.report, {
            "command": "simulate",
            "run_id": spec.run_id,
            "config": effective_config(spec),
            "integrator": {
                "steps_accepted": traj.meta["steps_accepted"],
                "steps_rejected": traj.meta["steps_rejected"],
                "rhs_evals": traj.meta["rhs_evals"],
            },
            "n_samples": len(traj.samples),
            "files": {"csv": paths.csv, "svg": paths.svg},
        })
        written.append(paths.report)

    print(f"samples: {len(traj.samples)}")
    print(f"steps: {traj.meta['steps_accepted']} accepted, "
          f"{traj.meta['steps_rejected']} rejected")
    print(f"wall time: {wall:.3f} s")
    for p in written:
        print(f"wrote: {p}")
    return 0


def _cmd_verify(spec: ExperimentSpec, args: argparse.Namespace) -> int:
    paths = spec.output
    out.check_clobber([paths.report], args.no_clobber)
    controller = synthesize(spec.synthesis)
    vp = spec.verify
    started = time.perf_counter()
    traj = simulate(spec.plant, controller, spec.sim)
    wall = time.perf_counter() - started

    tol = run_tolerance(vp.tol_abs, vp.tol_rel, spec.sim.x0)
    diagnostics: list[str] = []
    # A settling tolerance below what the integrator can resolve proves
    # nothing; refuse to certify instead of reporting noise.
    x0_norm = math.hypot(*spec.sim.x0)
    accuracy_floor = 10.0 * (spec.sim.atol + spec.sim.rtol * x0_norm)
    tolerance_ok = tol >= accuracy_floor
    if not tolerance_ok:
        diagnostics.append(
            f"settling tolerance {tol:.3e} is below the integration accuracy "
            f"floor {accuracy_floor:.3e}; tighten rtol/atol or relax tol_abs/tol_rel"
        )

    evidence = settling_instant(traj, tol, vp.window_factor)
    audit = lyapunov_audit(traj, vp.slack_abs, vp.slack_rel)
    vanishing = control_vanishing_check(traj, tol)

    if evidence.degenerate:
        verdict = "degenerate"
    elif (tolerance_ok and evidence.two_sided and audit.passes
          and vanishing.vanishes):
        verdict = "pass"
    else:
        verdict = "fail"

    if paths.report:
        out.write_report(paths.report, {
            "command": "verify",
            "run_id": spec.run_id,
            "config": effective_config(spec),
            "tolerance": tol,
            "settling": {
                "t_settle": evidence.t_settle,
                "pre_window_floor": evidence.pre_window_floor,
                "norm_at_standoff": evidence.norm_at_standoff,
                "window_end": evidence.window_end,
                "two_sided": evidence.two_sided,
                "degenerate": evidence.degenerate,
            },
            "lyapunov": {
                "n_audited": audit.n_audited,
                "n_skipped": audit.n_skipped,
                "violations": len(audit.violations),
                "worst_residual": audit.max_equality_residual,
            },
            "control_vanishing": {
                "last_pre_abs_u": vanishing.last_pre_abs_u,
                "max_abs_u_window": vanishing.max_abs_u_window,
                "max_abs_u_overall": vanishing.max_abs_u_overall,
                "terminal_ratio": vanishing.terminal_ratio,
                "post_all_zero": vanishing.post_all_zero,
            },
            "diagnostics": diagnostics,
            "verdict": verdict,
        })

    print(f"tolerance: {tol:.6e}")
    print(f"settling: two_sided={evidence.two_sided} t_settle={evidence.t_settle} "
          f"floor={evidence.pre_window_floor:.6e} "
          f"standoff_norm={evidence.norm_at_standoff:.6e}")
    print(f"lyapunov: violations={len(audit.violations)} "
          f"max_residual={audit.max_equality_residual:.6e} "
          f"audited={audit.n_audited} skipped={audit.n_skipped}")
    print(f"control: standoff_abs_u={vanishing.last_pre_abs_u:.6e} "
          f"post_zero={vanishing.post_all_zero}")
    for d in diagnostics:
        print(f"diagnostic: {d}")
    print(f"wall time: {wall:.3f} s")
    if paths.report:
        print(f"wrote: {paths.report}")
    print(f"verdict: {verdict}")
    return 0 if verdict in ("pass", "degenerate") else 4


def _sweep_paths(csv_path: str, scales: list[float]) -> tuple[str, list[str]]:
    if "." in csv_path.rsplit("/", 1)[-1]:
        stem, dot, ext = csv_path.rpartition(".")
        ext = dot + ext
    else:
        stem, ext = csv_path, ""
    summary = f"{stem}.sweep{ext}"
    per_run = [f"{stem}.scale_{s:g}{ext}" for s in scales]
    return summary, per_run


def _cmd_sweep(spec: ExperimentSpec, args: argparse.Namespace) -> int:
    if spec.output.csv is None:
        raise ConfigurationError("sweep needs output.csv to derive its file names")
    scales = _parse_scales(args.scales) if args.scales else list(spec.verify.scales)
    controller = synthesize(spec.synthesis)
    vp = spec.verify
    summary_path, per_run_paths = _sweep_paths(spec.output.csv, scales)
    out.check_clobber([summary_path, spec.output.report] + per_run_paths,
                      args.no_clobber)

    started = time.perf_counter()
    report = sweep_initial_conditions(
        spec.plant, controller, spec.sim, scales,
        tol_abs=vp.tol_abs, tol_rel=vp.tol_rel,
        window_factor=vp.window_factor, spread_bound=vp.spread_bound,
        keep_trajectories=True,
    )
    wall = time.perf_counter() - started

    written = []
    for row, path in zip(report.rows, per_run_paths):
        if row.traj is not None:
            out.write_csv(path, row.traj)
            written.append(path)
    out.write_sweep_csv(summary_path, report)
    written.append(summary_path)

    rows_payload = []
    for row in report.rows:
        ev = row.evidence
        rows_payload.append({
            "scale": row.scale,
            "tol": row.tol,
            "t_settle": None if ev is None else ev.t_settle,
            "pre_window_floor": None if ev is None else ev.pre_window_floor,
            "norm_at_standoff": None if ev is None else ev.norm_at_standoff,
            "two_sided": None if ev is None else ev.two_sided,
            "degenerate": None if ev is None else ev.degenerate,
            "error": row.error,
        })
    if spec.output.report:
        out.write_report(spec.output.report, {
            "command": "sweep",
            "run_id": spec.run_id,
            "config": effective_config(spec),
            "scales": scales,
            "rows": rows_payload,
            "spread": report.spread,
            "spread_bound": report.spread_bound,
            "verdict": report.verdict,
        })
        written.append(spec.output.report)

    for row in report.rows:
        ev = row.evidence
        if ev is None:
            print(f"scale {row.scale:g}: error {row.error}")
        else:
            state = "degenerate" if ev.degenerate else (
                "pass" if ev.two_sided else "fail")
            print(f"scale {row.scale:g}: {state} t_settle={ev.t_settle} "
                  f"floor={ev.pre_window_floor:.3e} "
                  f"standoff={ev.norm_at_standoff:.3e}")
    if report.spread is not None:
        print(f"spread: {report.spread:.6e} (bound "
              f"{report.spread_bound * spec.synthesis.T_p:.6e})")
    print(f"wall time: {wall:.3f} s")
    for p in written:
        print(f"wrote: {p}")
    print(f"verdict: {report.verdict}")
    return 0 if report.verdict == "pass" else 4


_HANDLERS = {
    "synthesize": _cmd_synthesize,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    spec: ExperimentSpec | None = None
    try:
        spec = load_config(args.config)
        if args.mode is not None and args.mode != spec.sim.mode:
            spec = replace(spec, sim=replace(spec.sim, mode=args.mode))
        return _HANDLERS[args.command](spec, args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"integration failed at t={exc.t:.9g}: {exc}", file=sys.stderr)
        partial = getattr(exc, "partial", None)
        if partial is not None and partial.samples and spec is not None \
                and spec.output.csv is not None:
            partial_path = spec.output.csv + ".partial"
            out.write_csv(partial_path, partial)
            print(f"partial trajectory written to {partial_path}", file=sys.stderr)
        return 3
    except (EvaluationError, StructureError, AuditError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
