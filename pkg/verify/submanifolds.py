"""Checks on the dynamics as submanifolds of J1(pi o nu).

S_L and S_H are tested at points built from free coordinates: their tangent
generators must contain ker Omega-tilde and push down to an (m+1)-Lagrangian
subspace of the quotient.
"""

from __future__ import annotations

import time

import numpy as np

from config.logging import get_logger
from fieldtriple_core.dynamics import (
    sh_defining,
    sh_point,
    sh_tangent_basis,
    sl_defining,
    sl_point,
    sl_tangent_basis,
)
from fieldtriple_core.errors import NonConvergence, SingularHessian
from fieldtriple_core.exterior import Classification, Subspace, classify
from fieldtriple_core.geometry import BundleDims, PointJ1pinu
from fieldtriple_core.triple import omega_tilde, omega_tilde_kernel
from verify.base import (
    BaseCheck,
    CheckContext,
    CheckReport,
    SampleOutcome,
    SamplePoint,
    SkipSample,
    ToleranceKey,
)

logger = get_logger("verify")


def classify_tangent_space(
    generators: np.ndarray, dims: BundleDims, tau: float | None = None
) -> tuple[Classification, bool]:
    """Classify span(generators) against Omega-tilde with l = m + 1.

    Returns:
        The classification in the quotient by the kernel, and whether the span
        contains the kernel

    Raises:
        RankDeficiency: if the generators are linearly dependent
    """
    W = Subspace.from_generators(generators, dims.j1pinu_dim, tau)
    contains = W.contains(omega_tilde_kernel(dims), tau)
    classification = classify(
        W, omega_tilde(dims), l=dims.m + 1, premultisymplectic=True, tau=tau
    )
    return classification, contains


def check_lagrangian_submanifold(
    generators: np.ndarray,
    point: PointJ1pinu,
    dims: BundleDims | None = None,
    name: str = "lagrangian_submanifold",
    tau: float | None = None,
) -> CheckReport:
    """Report whether the generators span an (m+1)-Lagrangian tangent space at point.

    The violation is 0 when the span contains the kernel and is Lagrangian in
    the quotient, 1 otherwise.
    """
    started = time.perf_counter()
    dims = dims or point.dims
    classification, contains = classify_tangent_space(generators, dims, tau)
    lagrangian = contains and classification.l_lagrangian
    detail = (
        f"contains_kernel={contains}, isotropic={classification.l_isotropic}, "
        f"coisotropic={classification.l_coisotropic}"
    )
    logger.debug(f"{name}: {detail}")
    return CheckReport(
        name,
        status="pass" if lagrangian else "fail",
        violation=0.0 if lagrangian else 1.0,
        location=point.x.tolist(),
        seconds=time.perf_counter() - started,
        detail=detail,
    )


def _outcome(report: CheckReport) -> SampleOutcome:
    return SampleOutcome(report.violation, report.location, report.detail)


class SLLagrangianCheck(BaseCheck):
    """S_L is an (m+1)-Lagrangian submanifold."""

    @property
    def name(self) -> str:
        return "lagrangian_submanifold_sl"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "rank"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        return "no lagrangian" if ctx.L is None else None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        zbar = sl_point(ctx.L, ctx.j1pinu(sample))
        generators = sl_tangent_basis(ctx.L, zbar)
        if ctx.fault:
            generators = generators[1:]
        return _outcome(check_lagrangian_submanifold(generators, zbar, name=self.name))


class SHLagrangianCheck(BaseCheck):
    """S_H is an (m+1)-Lagrangian submanifold."""

    @property
    def name(self) -> str:
        return "lagrangian_submanifold_sh"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "rank"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        H = ctx.hamiltonian
        try:
            zbar = sh_point(H, ctx.j1pinu(sample))
            generators = sh_tangent_basis(H, zbar)
            if ctx.fault:
                generators = generators[1:]
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"no Hamiltonian at this point: {e}") from e
        return _outcome(check_lagrangian_submanifold(generators, zbar, name=self.name))


class SLEqualsSHCheck(BaseCheck):
    """Points of S_L satisfy the S_H equations and conversely."""

    @property
    def name(self) -> str:
        return "sl_equals_sh"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        return "needs a lagrangian" if ctx.L is None else None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        L, H = ctx.L, ctx.hamiltonian
        seed = ctx.j1pinu(sample)
        try:
            lagrangian = ctx.shifted_lagrangian(ctx.field_sum()) if ctx.fault else L
            on_sl = sl_point(lagrangian, seed)
            on_sh = sh_point(H, seed)
            forward = float(np.max(np.abs(sh_defining(H, on_sl))))
            backward = float(np.max(np.abs(sl_defining(L, on_sh))))
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"Legendre map not invertible: {e}") from e
        worst = max(forward, backward)
        which = "S_L in S_H" if forward >= backward else "S_H in S_L"
        return SampleOutcome(worst, seed.x.tolist(), which)


SUBMANIFOLD_CHECKS = (SLLagrangianCheck, SHLagrangianCheck, SLEqualsSHCheck)
