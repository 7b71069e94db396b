"""Checks on the field equations and their Lagrangian/Hamiltonian correspondence."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from fieldtriple_core.dynamics import (
    Hamiltonian,
    InducedHamiltonian,
    LagrangianDensity,
    LegendreContext,
    el_residual,
    hdw_jet_residual,
    hdw_residual_from_jet,
    jet_equivalence_residual,
    legendre_pullback_theta,
    legendre_section_jet,
    pc_omega,
    pc_omega_via_pullback,
    pc_theta,
    theta_from_vertical_endomorphism,
)
from fieldtriple_core.errors import NonConvergence, SingularHessian
from fieldtriple_core.exterior import distance
from fieldtriple_core.geometry import PointJ1pinu, prolong_m0_section
from verify.base import (
    BaseCheck,
    CheckContext,
    SampleOutcome,
    SamplePoint,
    SkipSample,
    ToleranceKey,
)


def _max(values) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


class _Worst:
    """Running maximum over named contributions."""

    def __init__(self):
        self.value = 0.0
        self.label = ""

    def add(self, value: float, label: str) -> None:
        if value > self.value or np.isnan(value):
            self.value, self.label = value, label

    def outcome(self, x: np.ndarray) -> SampleOutcome:
        return SampleOutcome(self.value, x.tolist(), self.label)


def _divergence_bumped(jet: PointJ1pinu) -> PointJ1pinu:
    """jet with every momentum divergence p^i_{a i} raised by 1."""
    pmomjet = jet.pmomjet.copy()
    pmomjet[:, 0, 0] += 1.0
    return replace(jet, pmomjet=pmomjet)


def _reduced_jet(ctx: CheckContext, tau, x: np.ndarray) -> PointJ1pinu:
    jet = prolong_m0_section(tau, x)
    return _divergence_bumped(jet) if ctx.fault else jet


def _el_lagrangian(ctx: CheckContext) -> LagrangianDensity:
    """The problem's Lagrangian, or under fault one whose EL residuals are off by 1."""
    return ctx.shifted_lagrangian(ctx.field_sum()) if ctx.fault else ctx.L


def _transported_hdw(ctx: CheckContext, H: Hamiltonian, x: np.ndarray, worst: _Worst):
    """HDW residuals of leg o j1 phi for every section of E."""
    for name, phi in ctx.spec.e_sections.items():
        jet = legendre_section_jet(ctx.L, phi, x)
        if ctx.fault:
            jet = _divergence_bumped(jet)
        try:
            residual = hdw_residual_from_jet(H, jet)
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"no Hamiltonian for transported sections: {e}") from e
        worst.add(_max(residual), f"transported {name}")


class ELResidualCheck(BaseCheck):
    """Supplied sections of E solve the Euler-Lagrange equations."""

    @property
    def name(self) -> str:
        return "el_residual"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        if ctx.L is None:
            return "no lagrangian"
        if not ctx.spec.e_sections:
            return "no sections of E supplied"
        return None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        L = _el_lagrangian(ctx)
        worst = _Worst()
        for name, phi in ctx.spec.e_sections.items():
            worst.add(_max(el_residual(L, phi, sample.x)), name)
        return worst.outcome(sample.x)


class HDWResidualCheck(BaseCheck):
    """Reduced sections, and Legendre images of sections of E, solve the HDW equations."""

    @property
    def name(self) -> str:
        return "hdw_residual"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        spec = ctx.spec
        if not spec.m0_sections and not (ctx.L is not None and spec.e_sections):
            return "no sections to test"
        return None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        H = ctx.hamiltonian
        worst = _Worst()
        try:
            for name, tau in ctx.spec.m0_sections.items():
                jet = _reduced_jet(ctx, tau, sample.x)
                worst.add(_max(hdw_residual_from_jet(H, jet)), name)
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"Legendre map not invertible: {e}") from e
        if ctx.L is not None:
            _transported_hdw(ctx, H, sample.x, worst)
        return worst.outcome(sample.x)


class JetEquivalenceCheck(BaseCheck):
    """dL(j1 phi) - A_pi(j1(Leg o j1 phi)) is the Euler-Lagrange residual in the u slot."""

    @property
    def name(self) -> str:
        return "jet_equivalence"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        if ctx.L is None:
            return "no lagrangian"
        if not ctx.spec.e_sections:
            return "no sections of E supplied"
        return None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        worst = _Worst()
        for name, phi in ctx.spec.e_sections.items():
            form = jet_equivalence_residual(ctx.L, phi, sample.x)
            el = el_residual(_el_lagrangian(ctx), phi, sample.x)
            worst.add(max(_max(form.coef_ujet), _max(form.coef_u - el)), name)
        return worst.outcome(sample.x)


class HDWJetEquivalenceCheck(BaseCheck):
    """flat_Omega(j1(h o tau)) + d(p + H) carries exactly the HDW residual."""

    @property
    def name(self) -> str:
        return "hdw_jet_equivalence"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        if not ctx.spec.m0_sections:
            return "no reduced sections supplied"
        return None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        H = ctx.hamiltonian
        nm = ctx.spec.dims.nm
        worst = _Worst()
        try:
            for name, tau in ctx.spec.m0_sections.items():
                form = hdw_jet_residual(H, tau, sample.x)
                residual = hdw_residual_from_jet(H, _reduced_jet(ctx, tau, sample.x))
                defect = max(
                    _max(form.coef_u - residual[nm:]),
                    _max(form.coef_pmom.ravel() + residual[:nm]),
                    abs(form.coef_p),
                )
                worst.add(defect, name)
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"Legendre map not invertible: {e}") from e
        return worst.outcome(sample.x)


class LegendrePullbackCheck(BaseCheck):
    """Leg^* Theta and Leg^* Omega are the Poincare-Cartan forms."""

    @property
    def name(self) -> str:
        return "legendre_pullback"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        return "no lagrangian" if ctx.L is None else None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        L = ctx.L
        z = ctx.j1(sample)
        theta = pc_theta(ctx.shifted_lagrangian("1") if ctx.fault else L, z)
        worst = _Worst()
        worst.add(distance(legendre_pullback_theta(L, z), theta), "theta")
        worst.add(distance(theta_from_vertical_endomorphism(L, z), theta), "vertical")
        worst.add(distance(pc_omega_via_pullback(L, z), pc_omega(L, z)), "omega")
        return worst.outcome(z.x)


class MechanicsDegenerationCheck(BaseCheck):
    """With one independent variable the equations reduce to Lagrange and Hamilton."""

    @property
    def name(self) -> str:
        return "mechanics_degeneration"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def skip_reason(self, ctx: CheckContext) -> str | None:
        if ctx.spec.dims.m != 1:
            return "needs m = 1"
        if ctx.L is None:
            return "no lagrangian"
        if ctx.H is None and not ctx.spec.e_sections:
            return "nothing to compare"
        return None

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        L = _el_lagrangian(ctx)
        worst = _Worst()
        for name, phi in ctx.spec.e_sections.items():
            worst.add(_max(el_residual(L, phi, sample.x)), f"lagrange {name}")
        try:
            _transported_hdw(ctx, ctx.induced, sample.x, worst)
            if ctx.H is not None:
                point = ctx.m0(sample)
                induced_h = ctx.induced
                if ctx.fault:
                    shifted = ctx.shifted_lagrangian("1")
                    induced_h = InducedHamiltonian(shifted, LegendreContext())
                induced = induced_h.partials(point)
                explicit = ctx.H.partials(point)
                worst.add(abs(induced.value - explicit.value), "hamiltonian value")
                worst.add(_max(induced.grad - explicit.grad), "hamiltonian gradient")
        except (SingularHessian, NonConvergence) as e:
            raise SkipSample(f"Legendre map not invertible: {e}") from e
        return worst.outcome(sample.x)


EQUATION_CHECKS = (
    ELResidualCheck,
    HDWResidualCheck,
    JetEquivalenceCheck,
    HDWJetEquivalenceCheck,
    LegendrePullbackCheck,
    MechanicsDegenerationCheck,
)
