"""Command-line entry point: ``mechlin check | linearize | simulate``.

Exit codes
    0  success (check: linearizable)
    1  input or validation error
    2  not linearizable
    3  inconclusive (boundary)
    4  no linearizing output found; supply one with --output
    5  synthesis failed
    6  artifact does not match the system
    7  integration failed
"""

from __future__ import annotations

import argparse
import json
import os
import sys as _sys

import numpy as np

from .checker import MFReport, SamplingPlan, check_all, default_seed
from .expr import to_string
from .io import (
    BUILTIN,
    ArtifactError,
    ArtifactMismatch,
    SystemFileError,
    load_system,
    read_artifact,
    write_artifact,
)

EXIT_OK, EXIT_INPUT, EXIT_NOT_LIN, EXIT_INCONCLUSIVE = 0, 1, 2, 3
EXIT_NOT_FOUND, EXIT_SYNTHESIS, EXIT_ARTIFACT, EXIT_INTEGRATION = 4, 5, 6, 7

_OVERALL_EXIT = {"linearizable": EXIT_OK, "not_linearizable": EXIT_NOT_LIN, "inconclusive": EXIT_INCONCLUSIVE}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is taken by "not linearizable"
    def error(self, message):
        self.print_usage(_sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not (v > 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _vector(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _plan(args) -> SamplingPlan:
    seed = args.seed if args.seed is not None else default_seed()
    return SamplingPlan(sample_count=args.samples, seed=seed, rank_tol=args.rank_tol, membership_tol=args.tol)


def _add_sampling(p):
    p.add_argument("--samples", type=_positive_int, default=128, help="number of sample points (default 128)")
    p.add_argument("--tol", type=_positive_float, default=1e-8, help="membership tolerance (default 1e-8)")
    p.add_argument("--rank-tol", type=_positive_float, default=1e-8, help="relative rank tolerance (default 1e-8)")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (default: MECHLIN_SEED or built-in)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mechlin", description="Linearization of mechanical control systems by mechanical feedback.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    system_help = f"system JSON file or a shipped system ({', '.join(BUILTIN)})"

    p = sub.add_parser("check", help="test the linearizability conditions")
    p.add_argument("system", help=system_help)
    _add_sampling(p)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("linearize", help="construct the linearizing transformation")
    p.add_argument("system", help=system_help)
    p.add_argument("--output", dest="h", default=None, help="linearizing output h to use instead of searching")
    p.add_argument("--emit", default=None, help="write the transformation artifact to this path")
    p.add_argument("--skip-check", action="store_true", help="do not run the conditions first")
    _add_sampling(p)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("simulate", help="simulate the closed loop next to the linear model")
    p.add_argument("system", help=system_help)
    p.add_argument("artifact", help="artifact written by 'mechlin linearize --emit'")
    p.add_argument("--z0", type=_vector, required=True, help="initial state x1..xn,y1..yn")
    p.add_argument("--utilde", default="zero", help='new input: "zero", "sin:a,w" or a CSV table t,u')
    p.add_argument("--T", dest="T", type=float, required=True, help="final time")
    p.add_argument("--dt", type=float, required=True, help="step size")
    p.add_argument("--out", default=None, help="CSV for the original trajectory")
    p.add_argument("--out-linear", default=None, help="CSV for the linear-model trajectory (default: <out>_linear.csv)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return parser


# report rendering

def _fmt_witness(w):
    return "-" if w is None else "(" + ", ".join(f"{c:.6g}" for c in w) + ")"


def report_text(report: MFReport) -> str:
    lines = [", ".join(f"{v.condition} {v.status}" for v in report.verdicts)]
    width = max(len(v.condition) for v in report.verdicts)
    for v in report.verdicts:
        line = f"  {v.condition:<{width}}  {v.status:<8}  residual={v.residual:.3e}  failed={v.samples_failed}"
        if v.status != "pass":
            line += f"  witness={_fmt_witness(v.witness)}"
        if v.note:
            line += f"  [{v.note}]"
        lines.append(line)
    lines.append(f"overall: {report.overall}")
    for ex in report.excluded:
        lines.append(f"excluded region near {_fmt_witness(ex)}")
    lines.extend(f"note: {n}" for n in report.notes)
    return "\n".join(lines)


def _model_summary(tr) -> str:
    m = tr.model
    with np.printoptions(precision=6, suppress=True):
        return "\n".join([
            f"h = {to_string(tr.output.h)}",
            f"E =\n{np.asarray(m.E)}",
            f"b = {np.asarray(m.b)}",
            f"controllability indices: {m.controllability_indices()}",
            f"fit residual: {m.residual:.3e}",
        ] + [f"note: {n}" for n in tr.notes])


# commands

def cmd_check(args, out) -> int:
    sys = load_system(args.system)
    report = check_all(sys, _plan(args))
    if args.format == "json":
        out.write(json.dumps(report.to_dict(), indent=2) + "\n")
    else:
        out.write(report_text(report) + "\n")
    return _OVERALL_EXIT[report.overall]


def cmd_linearize(args, out) -> int:
    from .synthesis import OutputNotFound, SynthesisError, linearize

    sys = load_system(args.system)
    plan = _plan(args)
    if not args.skip_check:
        report = check_all(sys, plan)
        if report.overall != "linearizable":
            _sys.stderr.write(report_text(report) + "\n")
            return _OVERALL_EXIT[report.overall]
    try:
        tr = linearize(sys, args.h, plan)
    except OutputNotFound as exc:
        _sys.stderr.write(f"mechlin: {exc} (use --output \"<expression>\")\n")
        return EXIT_NOT_FOUND
    except SynthesisError as exc:
        msg = f"mechlin: synthesis failed: {exc}"
        if exc.witness is not None:
            msg += f" at {_fmt_witness(np.ravel(exc.witness))}"
        _sys.stderr.write(msg + "\n")
        return EXIT_SYNTHESIS
    if args.emit:
        write_artifact(args.emit, sys, tr)
    if args.format == "json":
        from .io import artifact_to_dict

        out.write(json.dumps(artifact_to_dict(sys, tr), indent=2) + "\n")
    else:
        out.write(_model_summary(tr) + "\n")
        if args.emit:
            out.write(f"artifact written to {args.emit}\n")
    return EXIT_OK


def _linear_path(out_path):
    root, ext = os.path.splitext(out_path)
    return f"{root}_linear{ext or '.csv'}"


def cmd_simulate(args, out) -> int:
    from .simulator import IntegrationError, correspondence, parse_signal, write_csv

    sys = load_system(args.system)
    if not (args.dt > 0 and np.isfinite(args.dt)):
        raise ValueError("--dt must be positive")
    if not (args.T > 0 and np.isfinite(args.T)):
        raise ValueError("--T must be positive")
    if len(args.z0) != 2 * sys.n:
        raise ValueError(f"--z0 needs {2 * sys.n} numbers (x1..x{sys.n}, y1..y{sys.n})")
    tr = read_artifact(args.artifact, sys)
    try:
        signal = parse_signal(args.utilde)
    except OSError as exc:
        raise ValueError(f"--utilde: {exc.strerror}: {args.utilde}") from None
    try:
        res = correspondence(sys, tr.model, tr.diffeo, tr.feedback, args.z0, signal, args.T, args.dt)
    except IntegrationError as exc:
        _sys.stderr.write(f"mechlin: integration failed: {exc}\n")
        return EXIT_INTEGRATION
    if args.out:
        write_csv(args.out, res.original)
        write_csv(args.out_linear or _linear_path(args.out), res.linear)
    elif args.out_linear:
        write_csv(args.out_linear, res.linear)
    summary = {
        "correspondence_error": res.error,
        "configuration_error": res.config_error,
        "steps": int(len(res.original.times) - 1),
        "dt": args.dt,
        "T": args.T,
    }
    if args.format == "json":
        out.write(json.dumps(summary, indent=2) + "\n")
    else:
        out.write(f"correspondence_error = {res.error:.6e}\n")
        out.write(f"configuration_error  = {res.config_error:.6e}\n")
    return EXIT_OK


_COMMANDS = {"check": cmd_check, "linearize": cmd_linearize, "simulate": cmd_simulate}


def main(argv=None, out=None) -> int:
    out = out or _sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, out)
    except ArtifactMismatch as exc:
        _sys.stderr.write(f"mechlin: {exc}\n")
        return EXIT_ARTIFACT
    except (SystemFileError, ArtifactError, ValueError, OSError) as exc:
        _sys.stderr.write(f"mechlin: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    _sys.exit(main())
