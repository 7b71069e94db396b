"""Base classes for sampled verification checks.

A check draws its own points from a per-sample generator, measures how far an
identity is from holding there, and reports the worst case over all samples.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Literal

import numpy as np

from fieldtriple_core.config import get_config
from fieldtriple_core.dynamics import (
    Hamiltonian,
    HamiltonianDensity,
    InducedHamiltonian,
    LagrangianDensity,
    LegendreContext,
)
from fieldtriple_core.errors import ProblemError
from fieldtriple_core.geometry import (
    BundleDims,
    Connection,
    FiberedChartChange,
    PointJ1,
    PointJ1pi1,
    PointJ1pinu,
    PointM0pi,
    SectionE,
    SectionM0,
)

Status = Literal["pass", "fail", "skipped", "error"]
ToleranceKey = Literal["eq", "pde", "rank"]


class SkipSample(Exception):
    """Raised by a check when a sample does not meet its preconditions."""


@dataclass(frozen=True)
class Box:
    """Per-coordinate sampling intervals; names not listed fall back to default."""

    default: tuple[float, float] = (-1.0, 1.0)
    per_variable: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (lo, hi) in [("default", self.default), *self.per_variable.items()]:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise ProblemError(f"box interval for {name} must be finite with lo < hi")

    def bounds(self, name: str) -> tuple[float, float]:
        return self.per_variable.get(name, self.default)

    def draw(self, rng: np.random.Generator, names: Sequence[str]) -> np.ndarray:
        return np.array([rng.uniform(*self.bounds(name)) for name in names])


@dataclass(frozen=True)
class SamplePoint:
    """One sample: an index, a base point and the generator for further draws."""

    index: int
    x: np.ndarray
    rng: np.random.Generator = field(repr=False, compare=False)


def default_chart(dims: BundleDims) -> FiberedChartChange:
    """y1 = x1 + 0.1 xm^2 (x1^2 when m = 1), other y equal x; v = u (1 + 0.1 x1)."""
    m, n = dims.m, dims.n
    last = f"x{m}"
    base = [f"x1 + 0.1*{last}^2"] + [f"x{i + 1}" for i in range(1, m)]
    fiber = [f"u{a + 1}*(1 + 0.1*x1)" for a in range(n)]
    return FiberedChartChange.from_sources(base, fiber)


@dataclass
class ProblemSpec:
    """A verification problem: dimensions, dynamics, geometry and sampling.

    sections maps a name to n strings (a section of E) or n + nm strings (a section
    of the reduced multimomentum bundle, u first, then p^i_a row-major).
    """

    name: str
    dims: BundleDims
    lagrangian: str | None = None
    hamiltonian: str | None = None
    connection: Connection | None = None
    sections: dict[str, list[str]] = field(default_factory=dict)
    box: Box = field(default_factory=Box)
    samples: int = field(default_factory=lambda: get_config().default_samples)
    seed: int = field(default_factory=lambda: get_config().default_seed)
    tolerances: dict[str, float] = field(default_factory=lambda: get_config().tolerances())
    fault: str | None = None
    chart: FiberedChartChange | None = None

    def validate(self) -> None:
        """Parse everything once so that configuration errors surface early.

        Raises:
            ProblemError: on any inconsistency
        """
        if self.samples < 1:
            raise ProblemError(f"samples must be >= 1, got {self.samples}")
        if self.lagrangian is None and self.hamiltonian is None:
            raise ProblemError("a problem needs a lagrangian or a hamiltonian")
        unknown = set(self.tolerances) - {"eq", "pde", "rank"}
        if unknown:
            raise ProblemError(f"unknown tolerance keys {sorted(unknown)}")
        if self.connection is not None and self.connection.m != self.dims.m:
            raise ProblemError("connection dimension differs from m")
        _ = self.lagrangian_density, self.hamiltonian_density
        _ = self.e_sections, self.m0_sections, self.nabla

    def tolerance(self, key: ToleranceKey) -> float:
        return self.tolerances.get(key, get_config().tolerances()[key])

    @cached_property
    def lagrangian_density(self) -> LagrangianDensity | None:
        if self.lagrangian is None:
            return None
        return LagrangianDensity.from_source(self.lagrangian, self.dims)

    @cached_property
    def hamiltonian_density(self) -> HamiltonianDensity | None:
        if self.hamiltonian is None:
            return None
        return HamiltonianDensity.from_source(self.hamiltonian, self.dims)

    @cached_property
    def nabla(self) -> Connection:
        return self.connection or Connection.flat(self.dims.m)

    @cached_property
    def e_sections(self) -> dict[str, SectionE]:
        n, m = self.dims.n, self.dims.m
        out = {}
        for name, sources in self.sections.items():
            if len(sources) == n:
                out[name] = SectionE.from_sources(sources, m)
            elif len(sources) != n + n * m:
                raise ProblemError(
                    f"section {name!r} has {len(sources)} components; expected {n} or {n + n * m}"
                )
        return out

    @cached_property
    def m0_sections(self) -> dict[str, SectionM0]:
        n, m = self.dims.n, self.dims.m
        return {
            name: SectionM0.from_sources(sources, n, m)
            for name, sources in self.sections.items()
            if len(sources) == n + n * m
        }

    @property
    def fiber_chart(self) -> FiberedChartChange:
        return self.chart or default_chart(self.dims)


class CheckContext:
    """Per-run state of one check: parsed densities and the Legendre memo.

    One context per worker; never shared between threads. With fault set, the
    check corrupts one side of its comparison so a working check must fail.
    """

    def __init__(self, spec: ProblemSpec, fault: bool = False):
        self.spec = spec
        self.fault = fault
        self.legendre = LegendreContext()
        self._induced: InducedHamiltonian | None = None

    @property
    def L(self) -> LagrangianDensity | None:
        return self.spec.lagrangian_density

    def shifted_lagrangian(self, extra: str) -> LagrangianDensity:
        """The problem's Lagrangian plus extra, parsed over the same jet variables."""
        source = f"({self.spec.lagrangian}) + {extra}"
        return LagrangianDensity.from_source(source, self.spec.dims)

    def field_sum(self) -> str:
        """Sum of the field variables; adds 1 to every Euler-Lagrange component."""
        return " + ".join(self.spec.dims.e_variables[self.spec.dims.m :])

    @property
    def H(self) -> HamiltonianDensity | None:
        return self.spec.hamiltonian_density

    @property
    def induced(self) -> InducedHamiltonian | None:
        if self.L is None:
            return None
        if self._induced is None:
            self._induced = InducedHamiltonian(self.L, self.legendre)
        return self._induced

    @property
    def hamiltonian(self) -> Hamiltonian | None:
        """The explicit Hamiltonian, else the one induced by the Lagrangian."""
        return self.H if self.H is not None else self.induced

    def draw(self, sample: SamplePoint, names: Sequence[str]) -> np.ndarray:
        return self.spec.box.draw(sample.rng, names)

    def _over(self, sample: SamplePoint, names: Sequence[str]) -> np.ndarray:
        vec = self.draw(sample, names[self.spec.dims.m :])
        return np.concatenate([sample.x, vec])

    def j1(self, sample: SamplePoint) -> PointJ1:
        d = self.spec.dims
        return PointJ1.from_vector(d, self._over(sample, d.j1_variables))

    def m0(self, sample: SamplePoint) -> PointM0pi:
        d = self.spec.dims
        vec = self._over(sample, d.m0_variables)
        pmom = vec[d.m + d.n :].reshape(d.n, d.m)
        return PointM0pi(vec[: d.m], vec[d.m : d.m + d.n], pmom)

    def j1pi1(self, sample: SamplePoint) -> PointJ1pi1:
        d = self.spec.dims
        return PointJ1pi1.from_vector(d, self._over(sample, d.j1pi1_names))

    def j1pinu(self, sample: SamplePoint) -> PointJ1pinu:
        d = self.spec.dims
        return PointJ1pinu.from_vector(d, self._over(sample, d.j1pinu_names))


@dataclass(frozen=True)
class SampleOutcome:
    """Violation measured at one sample."""

    violation: float
    location: list[float] | None = None
    detail: str = ""


@dataclass
class CheckReport:
    """Worst-case result of one check."""

    name: str
    status: Status
    violation: float = 0.0
    location: list[float] | None = None
    seconds: float = 0.0
    tolerance: float | None = None
    detail: str = ""

    def __repr__(self) -> str:
        return (
            f"CheckReport(name={self.name!r}, status={self.status}, "
            f"violation={self.violation:.3e})"
        )

    def to_dict(self) -> dict[str, Any]:
        violation = self.violation
        return {
            "name": self.name,
            "status": self.status,
            "violation": violation if math.isfinite(violation) else str(violation),
            "location": self.location,
            "seconds": self.seconds,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


class BaseCheck(ABC):
    """Base class for verification checks.

    Subclasses must implement:
    - name: check identifier, also the report name
    - tolerance_key: which of eq/pde/rank bounds the violation
    - evaluate(): the violation at one sample
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Check name used in reports and fault injection."""
        ...

    @property
    @abstractmethod
    def tolerance_key(self) -> ToleranceKey:
        """Tolerance family for this check."""
        ...

    def skip_reason(self, ctx: CheckContext) -> str | None:
        """Return why the check cannot run on this problem, or None."""
        return None

    def sample_count(self, spec: ProblemSpec) -> int:
        return spec.samples

    @abstractmethod
    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        """Measure the violation at one sample.

        Raises:
            SkipSample: when this sample does not meet the check's preconditions
        """
        ...
