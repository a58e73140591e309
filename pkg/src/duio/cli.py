"""Command-line front end: ``duio {check,decompose,design,simulate,report}``.

Exit status: 0 ok, 1 runtime error, 2 assumption or feasibility failure.
"""

from __future__ import annotations

import argparse
import os
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from duio.decomp import MODES, check_assumptions, decompose, disturbance_decoupler
from duio.errors import DuioError
from duio.io import (
    design_to_dict,
    load_scenario,
    write_states_csv,
    write_summary_csv,
    write_trace_csv,
)
from duio.sim import Scenario, design_scenario, run_scenario

log = logging.getLogger("duio")


def _poles(text: str) -> tuple:
    try:
        return tuple(float(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--poles expects comma-separated numbers, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario_arg", nargs="?", metavar="SCENARIO",
                        help="built-in id or path to a JSON scenario file")
    common.add_argument("--scenario", dest="scenario_opt", metavar="PATH|ID")
    common.add_argument("--decomposition", choices=MODES)
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--seed", type=int)
    run.add_argument("--horizon", type=int)
    run.add_argument("--no-noise", action="store_true")
    run.add_argument("--no-disturbance", action="store_true")
    run.add_argument("--no-estimates", action="store_true",
                     help="omit x_hat columns from the trace CSV")

    synth = argparse.ArgumentParser(add_help=False)
    synth.add_argument("--poles", type=_poles, metavar="LIST",
                       help="use pole placement with these poles instead of the H-infinity LMI")
    synth.add_argument("--out", type=Path, metavar="DIR")

    parser = argparse.ArgumentParser(prog="duio", description="Distributed unknown input observer")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="per-node assumption report")
    sub.add_parser("decompose", parents=[common], help="subspace split and residuals per node")
    sub.add_parser("design", parents=[common, synth], help="synthesize gains, print JSON")
    sub.add_parser("simulate", parents=[common, run, synth], help="simulate, print trace CSV")
    rep = sub.add_parser("report", parents=[common, run, synth],
                         help="simulate and summarize; with --out also write CSV, JSON, figures")
    rep.add_argument("--threshold", type=float, default=1e-3,
                     help="error level for the convergence step")
    return parser


def _scenario(args) -> Scenario:
    source = args.scenario_opt or args.scenario_arg
    if source is None:
        raise SystemExit("duio: a scenario (built-in id or JSON path) is required")
    sc = load_scenario(source)
    changes = {}
    if args.decomposition:
        changes["decomposition_mode"] = args.decomposition
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    if getattr(args, "poles", None) is not None:
        changes["poles"] = args.poles
    if changes:
        sc = replace(sc, **changes)
    if getattr(args, "no_noise", False):
        sc = sc.without_noise()
    if getattr(args, "no_disturbance", False):
        sc = sc.without_disturbance()
    return sc


def cmd_check(args, out) -> int:
    sc = _scenario(args)
    ok = True
    for node in sc.nodes:
        rep = check_assumptions(sc.plant, node)
        status = "ok" if rep.passed else "FAIL"
        print(f"node {node.index + 1}: {status}", file=out)
        for label in rep.failures():
            print(f"  violated: {label}", file=out)
        ok &= rep.passed
    return 0 if ok else 2


def cmd_decompose(args, out) -> int:
    sc = _scenario(args)
    print("node,nu,n_d,upper_block,output_on_U,orthonormality,reconstruction", file=out)
    for node in sc.nodes:
        dcp = disturbance_decoupler(sc.plant, node)
        PA = dcp.P @ sc.plant.A
        dec = decompose(PA, node.C, sc.decomposition_mode)
        res = dec.residuals(PA, node.C)
        cells = [f"{res[k]:.3e}" for k in ("upper_block", "output_on_U", "orthonormality",
                                           "reconstruction")]
        print(",".join([str(node.index + 1), str(dec.nu), str(dec.n_d)] + cells), file=out)
    return 0


def _write_design(design, sc, out_dir: Path | None):
    doc = design_to_dict(design, sc.name)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "design.json").write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def cmd_design(args, out) -> int:
    sc = _scenario(args)
    design = design_scenario(sc)
    doc = _write_design(design, sc, args.out)
    json.dump(doc, out, indent=2)
    out.write("\n")
    return 0


def cmd_simulate(args, out) -> int:
    sc = _scenario(args)
    design = design_scenario(sc)
    trace = run_scenario(sc, design)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "trace.csv", "w", newline="") as fh:
            write_trace_csv(trace, fh, estimates=not args.no_estimates)
        with open(args.out / "states.csv", "w", newline="") as fh:
            write_states_csv(trace, fh)
        print(f"wrote {args.out / 'trace.csv'} and {args.out / 'states.csv'}", file=out)
    else:
        write_trace_csv(trace, out, estimates=not args.no_estimates)
    return 0


def cmd_report(args, out) -> int:
    from duio.plotting import plot_error_norms, plot_states

    sc = _scenario(args)
    design = design_scenario(sc)
    trace = run_scenario(sc, design)
    write_summary_csv(trace, out, args.threshold)
    if args.out is not None:
        d = args.out
        _write_design(design, sc, d)
        with open(d / "summary.csv", "w", newline="") as fh:
            write_summary_csv(trace, fh, args.threshold)
        with open(d / "trace.csv", "w", newline="") as fh:
            write_trace_csv(trace, fh, estimates=not args.no_estimates)
        with open(d / "states.csv", "w", newline="") as fh:
            write_states_csv(trace, fh)
        plot_error_norms(trace, d / "errors.png", f"{sc.name} estimation error")
        plot_states(trace, d / "states.png", f"{sc.name} plant state")
    return 0


COMMANDS = {
    "check": cmd_check,
    "decompose": cmd_decompose,
    "design": cmd_design,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        status = COMMANDS[args.command](args, out)
        out.flush()
        return status
    except DuioError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_status
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early; silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
