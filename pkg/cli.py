#!/usr/bin/env python3
"""
fieldtriple - verify the Tulczyjew triple of a first-order field theory.

Problem files are JSON documents (schema 1) naming the dimensions, a Lagrangian
and/or Hamiltonian, an optional connection, test sections and a sampling box.

Usage:
    # Run every check and print a table
    python cli.py check problems/dirichlet_2d.json

    # Bare names are looked up in FIELDTRIPLE_PROBLEMS_DIR
    python cli.py check oscillator_1d

    # Write the report list as JSON too, with overridden sampling
    python cli.py check problems/dirichlet_2d.json --json report.json --samples 50 --seed 7

    # Euler-Lagrange / HDW residuals of one section at one point
    python cli.py residual problems/dirichlet_2d.json --section harmonic --at 0.3,0.7

    # Legendre transform and regularity at a jet point (x, u, ujet)
    python cli.py legendre problems/dirichlet_2d.json --at 0.3,0.7,1.0,3,4

Exit codes: 0 all checks pass, 1 some check fails, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from config.logging import get_logger, init_logging, set_console_level
from fieldtriple_core.config import get_config
from fieldtriple_core.dynamics import (
    el_residual,
    hdw_residual,
    hdw_residual_from_jet,
    hessian_regularity,
    legendre_ext,
    legendre_red,
    legendre_section_jet,
)
from fieldtriple_core.errors import ProblemError, TripleError
from fieldtriple_core.geometry import BundleDims, Connection, PointJ1
from verify import Box, CheckContext, CheckReport, ProblemSpec, exit_code, full_suite

logger = get_logger("cli")

TolKey = Literal["eq", "pde", "rank"]
Interval = tuple[float, float]


class ConnectionModel(BaseModel):
    """Christoffel symbols keyed "k,i,j" (1-based); missing entries are zero."""

    model_config = ConfigDict(extra="forbid")

    symmetric: bool = True
    gamma: dict[str, str] = Field(default_factory=dict)

    @field_validator("gamma")
    @classmethod
    def _keys_are_triples(cls, value: dict[str, str]) -> dict[str, str]:
        for key in value:
            parts = key.split(",")
            if len(parts) != 3 or not all(p.strip().isdigit() for p in parts):
                raise ValueError(f"connection key {key!r} must look like 'k,i,j'")
        return value

    def indices(self) -> dict[tuple[int, int, int], str]:
        out = {}
        for key, expr in self.gamma.items():
            k, i, j = (int(p) - 1 for p in key.split(","))
            out[(k, i, j)] = expr
        return out


class ProblemFile(BaseModel):
    """A problem file, schema 1."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal[1] = Field(1, alias="schema")
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    lagrangian: str | None = None
    hamiltonian: str | None = None
    connection: ConnectionModel | None = None
    sections: dict[str, list[str]] = Field(default_factory=dict)
    box: Interval | dict[str, Interval] | None = None
    samples: int | None = Field(default=None, ge=1)
    seed: int | None = None
    tolerances: dict[TolKey, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _needs_dynamics(self) -> ProblemFile:
        if self.lagrangian is None and self.hamiltonian is None:
            raise ValueError("a problem needs a lagrangian or a hamiltonian")
        return self

    @field_validator("tolerances")
    @classmethod
    def _positive(cls, value: dict[str, float]) -> dict[str, float]:
        for key, tol in value.items():
            if not tol > 0:
                raise ValueError(f"tolerance {key} must be positive")
        return value

    def make_box(self) -> Box:
        if self.box is None:
            return Box()
        if isinstance(self.box, dict):
            per_variable = dict(self.box)
            default = per_variable.pop("default", (-1.0, 1.0))
            return Box(tuple(default), per_variable)
        return Box(tuple(self.box))


def resolve_problem_path(path: str | Path) -> Path:
    """A path as given, or a bundled problem name looked up in the problems directory."""
    path = Path(path)
    if path.exists() or path.parent != Path("."):
        return path
    candidate = get_config().problems_dir / path
    if not candidate.suffix:
        candidate = candidate.with_suffix(".json")
    return candidate if candidate.exists() else path


def load_problem(
    path: str | Path,
    samples: int | None = None,
    seed: int | None = None,
    tolerances: dict[str, float] | None = None,
) -> ProblemSpec:
    """Read a problem file into a ProblemSpec, CLI overrides first.

    Raises:
        ProblemError: when the file is missing, malformed or fails validation
    """
    path = resolve_problem_path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ProblemError(f"{path}: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        problem = ProblemFile.model_validate(data)
    except ValidationError as e:
        raise ProblemError(f"{path}: {e}") from e

    dims = BundleDims(problem.m, problem.n)
    connection = None
    if problem.connection is not None:
        try:
            connection = Connection.from_components(
                dims.m, problem.connection.indices(), problem.connection.symmetric
            )
        except TripleError as e:
            raise ProblemError(f"{path}: connection: {e}") from e

    cfg = get_config()
    merged = cfg.tolerances() | problem.tolerances | (tolerances or {})
    return ProblemSpec(
        name=path.stem,
        dims=dims,
        lagrangian=problem.lagrangian,
        hamiltonian=problem.hamiltonian,
        connection=connection,
        sections=dict(problem.sections),
        box=problem.make_box(),
        samples=samples or problem.samples or cfg.default_samples,
        seed=seed if seed is not None else (
            problem.seed if problem.seed is not None else cfg.default_seed
        ),
        tolerances=merged,
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def fmt(value: float) -> str:
    return f"{value:.17g}"


def fmt_vector(values) -> str:
    return "[" + ", ".join(fmt(float(v)) for v in np.ravel(values)) + "]"


def print_table(reports: list[CheckReport]) -> None:
    header = ("check", "status", "violation", "tolerance", "seconds")
    print(f"{header[0]:<28} {header[1]:<8} {header[2]:>12} {header[3]:>10} {header[4]:>8}")
    print("-" * 70)
    for r in reports:
        tol = f"{r.tolerance:.1e}" if r.tolerance is not None else "-"
        print(
            f"{r.name:<28} {r.status:<8} {r.violation:>12.3e} {tol:>10} {r.seconds:>8.3f}"
        )
        if r.status in ("fail", "error", "skipped") and r.detail:
            print(f"    {r.detail}")


def parse_point(text: str, expected: int, what: str) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",")])
    except ValueError as e:
        raise ProblemError(f"--at: {e}") from e
    if values.size != expected:
        raise ProblemError(f"--at needs {expected} numbers for {what}, got {values.size}")
    return values


def parse_tolerance(text: str) -> tuple[str, float]:
    key, _, value = text.partition("=")
    if key not in ("eq", "pde", "rank") or not value:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE with KEY in eq, pde, rank: {text!r}")
    try:
        return key, float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    spec = load_problem(args.path, args.samples, args.seed, dict(args.tol or []))
    names = args.checks.split(",") if args.checks else None
    reports = full_suite(spec, workers=args.workers, names=names)
    print_table(reports)
    if args.json:
        payload = json.dumps([r.to_dict() for r in reports], indent=2)
        if args.json == "-":
            print(payload)
        else:
            Path(args.json).write_text(payload + "\n")
    return exit_code(reports)


def cmd_residual(args: argparse.Namespace) -> int:
    spec = load_problem(args.path)
    spec.validate()
    x = parse_point(args.at, spec.dims.m, "x")
    ctx = CheckContext(spec)
    if args.section in spec.e_sections:
        phi = spec.e_sections[args.section]
        if ctx.L is not None:
            print(f"el_residual = {fmt_vector(el_residual(ctx.L, phi, x))}")
            if ctx.hamiltonian is not None:
                jet = legendre_section_jet(ctx.L, phi, x)
                transported = hdw_residual_from_jet(ctx.hamiltonian, jet)
                print(f"hdw_residual = {fmt_vector(transported)}")
        else:
            print("el_residual = n/a (no lagrangian)")
    elif args.section in spec.m0_sections:
        tau = spec.m0_sections[args.section]
        print(f"hdw_residual = {fmt_vector(hdw_residual(ctx.hamiltonian, tau, x))}")
    else:
        known = ", ".join(sorted(spec.sections)) or "none"
        raise ProblemError(f"unknown section {args.section!r} (known: {known})")
    return 0


def cmd_legendre(args: argparse.Namespace) -> int:
    spec = load_problem(args.path)
    spec.validate()
    L = spec.lagrangian_density
    if L is None:
        raise ProblemError("legendre needs a lagrangian")
    vec = parse_point(args.at, spec.dims.j1_dim, "(x, u, ujet)")
    z = PointJ1.from_vector(spec.dims, vec)
    ext = legendre_ext(L, z)
    red = legendre_red(L, z)
    reg = hessian_regularity(L, z)
    print(f"p = {fmt(ext.p)}")
    print(f"pmom = {fmt_vector(ext.pmom)}")
    print(f"reduced = {fmt_vector(red.to_vector())}")
    print(f"regular = {str(reg.regular).lower()}")
    print(f"min_singular_value = {fmt(reg.min_singular_value)}")
    print(f"max_singular_value = {fmt(reg.max_singular_value)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldtriple",
        description="Sampled verification of the Tulczyjew triple for field theories",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Debug logging on stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="Run the verification suite on a problem file")
    check.add_argument("path", help="Problem file (JSON, schema 1) or bundled problem name")
    check.add_argument(
        "--json", metavar="PATH", help="Also write the reports as JSON ('-' for stdout)"
    )
    check.add_argument("--seed", type=int, help="Override the sampling seed")
    check.add_argument("--samples", type=int, help="Override the number of samples per check")
    check.add_argument(
        "--tol",
        type=parse_tolerance,
        action="append",
        metavar="KEY=VALUE",
        help="Override a tolerance (eq, pde or rank); repeatable",
    )
    check.add_argument(
        "--workers",
        type=int,
        default=None,
        help=f"Checks run in parallel (default: {get_config().workers})",
    )
    check.add_argument("--checks", help="Comma-separated subset of checks to run")
    check.set_defaults(handler=cmd_check)

    residual = sub.add_parser("residual", help="Field-equation residuals of one section")
    residual.add_argument("path", help="Problem file")
    residual.add_argument("--section", required=True, help="Section name from the file")
    residual.add_argument("--at", required=True, help="Base point x1,...,xm")
    residual.set_defaults(handler=cmd_residual)

    legendre = sub.add_parser("legendre", help="Legendre transform at a jet point")
    legendre.add_argument("path", help="Problem file")
    legendre.add_argument(
        "--at", required=True, help="Jet point x..., u..., ujet... (row-major)"
    )
    legendre.set_defaults(handler=cmd_legendre)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    init_logging()
    if args.verbose:
        set_console_level(logging.DEBUG)
    if getattr(args, "samples", None) is not None and args.samples < 1:
        print("error: --samples must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.handler(args)
    except TripleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
