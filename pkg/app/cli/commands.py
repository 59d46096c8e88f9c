import argparse
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import DomainError, InvalidDimensionError, KMLabError, UsageError
from app.core.serialization import csv_lines, dumps, format_float
from app.core.state import PhasePoint, dims, sample_points
from app.models.schemas import (
    Command, HierarchyDump, OutputFormat, RunConfig, SampleSpec, Space, SpectrumReport, SuiteName,
)
from app.services.dynamics import Monitor, flow_integrator
from app.services.hierarchy import hierarchy_builder
from app.services.lax import lax_analyzer
from app.services.verification import suite_runner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main() owns the exit code"""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=2, help="lattice parameter (u-space dimension 2n-1)")
    common.add_argument("--seed", type=int, default=settings.default_seed)
    common.add_argument("--points", type=int, default=settings.default_points)
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a tolerance (repeatable)")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=None)

    parser = ArgumentParser(prog="kmlab", description=settings.app_title)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    verify = sub.add_parser(Command.VERIFY.value, parents=[common], help="run verification suites")
    verify.add_argument("--suite", action="append", default=[],
                        choices=[s.value for s in SuiteName] + ["all"], help="suite to run (repeatable)")

    integrate = sub.add_parser(Command.INTEGRATE.value, parents=[common], help="integrate a flow with monitoring")
    integrate.add_argument("--t1", type=float, default=10.0)
    integrate.add_argument("--dt", type=float, default=1e-3)
    integrate.add_argument("--kmax", type=int, default=4)
    integrate.add_argument("--space", choices=[s.value for s in Space], default=Space.U.value)
    integrate.add_argument("--init", default="random", help="JSON file with u or q/p, or 'random'")

    hierarchy = sub.add_parser(Command.HIERARCHY.value, parents=[common], help="dump the hierarchy at a point")
    hierarchy.add_argument("--kmax", type=int, default=4)
    hierarchy.add_argument("--origin", action="store_true", help="evaluate at the phase-space origin")

    spectrum = sub.add_parser(Command.SPECTRUM.value, parents=[common], help="eigenvalues of L")
    spectrum.add_argument("--u", default=None, help="comma-separated u-point (seeded point when omitted)")
    return parser


def parse_tolerances(items: Sequence[str]) -> Dict[str, float]:
    overrides = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects NAME=VALUE, got '{item}'")
        if name not in settings.tolerances:
            raise UsageError(f"unknown tolerance '{name}'")
        try:
            overrides[name] = float(value)
        except ValueError:
            raise UsageError(f"tolerance '{name}' is not a number: '{value}'")
    return overrides


def build_config(args: argparse.Namespace) -> RunConfig:
    command = Command(args.command)
    suites: List[SuiteName] = []
    if command == Command.VERIFY:
        chosen = args.suite or ["all"]
        suites = list(SuiteName) if "all" in chosen else [SuiteName(s) for s in chosen]
    u = None
    if getattr(args, "u", None):
        try:
            u = [float(v) for v in args.u.split(",")]
        except ValueError:
            raise UsageError(f"--u expects comma-separated numbers, got '{args.u}'")
    default_format = OutputFormat.CSV if command == Command.INTEGRATE else OutputFormat.JSON
    try:
        return RunConfig(
            command=command,
            n=args.n,
            seed=args.seed,
            points=args.points,
            suites=suites,
            tol_overrides=parse_tolerances(args.tol),
            t1=getattr(args, "t1", 10.0),
            dt=getattr(args, "dt", 1e-3),
            kmax=getattr(args, "kmax", 4),
            space=Space(getattr(args, "space", Space.U.value)),
            init=getattr(args, "init", None),
            u=u,
            origin=getattr(args, "origin", False),
            output_path=args.out,
            format=OutputFormat(args.format) if args.format else default_format,
        )
    except ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc.errors()[0]['msg']}")


def emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# commands

def cmd_verify(cfg: RunConfig) -> int:
    report = suite_runner.run(cfg.n, cfg.seed, cfg.points, cfg.suites, cfg.tol_overrides)
    emit(dumps(report), cfg.output_path)
    return EXIT_OK if report.passed else EXIT_FAILURE


def load_initial_state(cfg: RunConfig) -> np.ndarray:
    dim = dims(cfg.n)
    if cfg.init in (None, "random"):
        return sample_points(SampleSpec(seed=cfg.seed, count=1), dim, cfg.space)[0]
    try:
        with open(cfg.init, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read initial state '{cfg.init}': {exc}")
    if cfg.space == Space.U:
        if "u" not in data:
            raise UsageError("u-space initial state needs a 'u' array")
        state = np.array(data["u"], dtype=float)
        if len(state) != dim.N:
            raise InvalidDimensionError(f"initial u has length {len(state)}, expected {dim.N}")
        if np.any(state <= 0):
            raise DomainError("initial u must be strictly positive")
        return state
    if "q" not in data or "p" not in data:
        raise UsageError("phase-space initial state needs 'q' and 'p' arrays")
    point = PhasePoint(q=np.array(data["q"], dtype=float), p=np.array(data["p"], dtype=float))
    if len(point.q) != dim.N:
        raise InvalidDimensionError(f"initial q, p have length {len(point.q)}, expected {dim.N}")
    return point.flat


def trajectory_header(cfg: RunConfig) -> List[str]:
    dim = dims(cfg.n)
    if cfg.space == Space.U:
        state = [f"u_{i}" for i in range(1, dim.N + 1)]
    else:
        state = ([f"q_{i}" for i in range(1, dim.N + 1)] + [f"p_{i}" for i in range(1, dim.N + 1)]
                 + [f"psi_u_{i}" for i in range(1, dim.N + 1)])
    invariants = [f"H_{k}" for k in range(1, cfg.kmax + 1)]
    eigenvalues = [f"lambda_{k}" for k in range(1, dim.lax_size + 1)]
    return ["t"] + state + invariants + eigenvalues


def cmd_integrate(cfg: RunConfig) -> int:
    x0 = load_initial_state(cfg)
    dim = dims(cfg.n)
    field = flow_integrator.km_field(dim.N) if cfg.space == Space.U else flow_integrator.phase_field(cfg.n)
    traj = flow_integrator.integrate(field, x0, cfg.t1, cfg.dt, Monitor(space=cfg.space, kmax=cfg.kmax))
    drift = flow_integrator.drift_report(traj)

    rows = []
    for idx in range(len(traj.invariant_series)):
        row = [traj.times[idx]] + list(traj.states[idx])
        if cfg.space == Space.PHASE:
            row += list(traj.u_states[idx])
        row += list(traj.invariant_series[idx]) + list(traj.spectrum_series[idx])
        rows.append(row)
    header = trajectory_header(cfg)

    if cfg.format == OutputFormat.JSON:
        emit(dumps({"header": header, "rows": rows, "drift": drift}), cfg.output_path)
    else:
        text = "\n".join(csv_lines(header, rows)) + "\n"
        summary = dumps(drift, indent=0).replace("\n", "") + "\n"
        if cfg.output_path:
            emit(text, cfg.output_path)
            sys.stdout.write(summary)
        else:
            sys.stdout.write(text + summary)
    logger.info(f"Integrated {traj.steps} steps; max eigenvalue drift {format_float(drift.max_eigenvalue_drift)}")
    return EXIT_FAILURE if traj.failed else EXIT_OK


def cmd_hierarchy(cfg: RunConfig) -> int:
    dim = dims(cfg.n)
    if cfg.origin:
        x = PhasePoint.origin(cfg.n).flat
    else:
        x = sample_points(SampleSpec(seed=cfg.seed, count=1), dim, Space.PHASE)[0]
    q, p = x[:dim.N], x[dim.N:]
    dump = HierarchyDump(
        tool=settings.app_title,
        version=settings.app_version,
        n=cfg.n,
        seed=cfg.seed,
        point={"q": q.tolist(), "p": p.tolist()},
        recursion=hierarchy_builder.recursion(x).tolist(),
        tensors={f"J{k}": hierarchy_builder.tensor_j(k, x).tolist() for k in range(2, cfg.kmax + 1)},
        flows={f"flow{k}": hierarchy_builder.flow(k, x).tolist() for k in range(1, cfg.kmax + 1)},
        master_fields={f"X{k}": hierarchy_builder.master_x(k, x).tolist() for k in range(0, cfg.kmax - 1)},
        hamiltonians={f"h{k}": hierarchy_builder.h_k(k, x) for k in range(1, cfg.kmax + 1)},
    )
    emit(dumps(dump), cfg.output_path)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    dim = dims(cfg.n)
    if cfg.u is not None:
        u = np.array(cfg.u, dtype=float)
        if len(u) != dim.N:
            raise InvalidDimensionError(f"--u has length {len(u)}, expected {dim.N}")
    else:
        u = sample_points(SampleSpec(seed=cfg.seed, count=1), dim, Space.U)[0]
    report = SpectrumReport(
        tool=settings.app_title,
        version=settings.app_version,
        n=cfg.n,
        u=u.tolist(),
        eigenvalues=lax_analyzer.spectrum(u).tolist(),
        invariants=lax_analyzer.invariants(u, 4).tolist(),
        newton_residuals=lax_analyzer.newton_residuals(u, 4),
        eigensolver=settings.eigensolver,
    )
    emit(dumps(report), cfg.output_path)
    return EXIT_OK


COMMANDS = {
    Command.VERIFY: cmd_verify,
    Command.INTEGRATE: cmd_integrate,
    Command.HIERARCHY: cmd_hierarchy,
    Command.SPECTRUM: cmd_spectrum,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch, and map errors to exit codes"""
    try:
        args = build_parser().parse_args(argv)
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    except (UsageError, InvalidDimensionError, DomainError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except KMLabError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE
