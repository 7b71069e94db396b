"""Checks on the geometric structure: exchange maps, connections and morphisms."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from fieldtriple_core.exterior import Subspace, distance, numerical_rank
from fieldtriple_core.geometry import (
    BundleDims,
    Connection,
    PointJ1pi1,
    add_torsion,
    change_chart_j1pi1,
    random_polynomial_connection,
    torsion,
)
from fieldtriple_core.triple import (
    a_tilde,
    apply_affine,
    canonical_pullback_via_A,
    canonical_pullback_via_flat,
    core_map,
    exchange,
    exchange_with_christoffel,
    fiber_block_A,
    fiber_block_flat,
    flat_omega,
    flat_omega_intrinsic,
    omega_tilde,
    omega_tilde_kernel,
    omega_tilde_kernel_generators,
    tulczyjew_A,
    tulczyjew_A_pipeline,
)
from verify.base import (
    BaseCheck,
    CheckContext,
    ProblemSpec,
    SampleOutcome,
    SamplePoint,
    ToleranceKey,
)

_SYMMETRY_TOL = 1e-12


def _gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _is_symmetric(connection: Connection, x: np.ndarray) -> bool:
    return connection.symmetric and connection.symmetry_defect(x) <= _SYMMETRY_TOL


def _sigma_over(ctx: CheckContext, sample: SamplePoint, base) -> PointJ1pi1:
    """A random point of J1pi1 over the J1pi point base."""
    z = ctx.j1pi1(sample)
    return PointJ1pi1(base.x, base.u, base.ujet, z.ubar, z.usec)


class ExchangeInvolutionCheck(BaseCheck):
    """ex o ex = id for the problem's connection and a random symmetric one.

    Fails on torsionful connections.
    """

    @property
    def name(self) -> str:
        return "exchange_involution"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        spec = ctx.spec
        z = ctx.j1pi1(sample)
        random = random_polynomial_connection(spec.dims.m, sample.rng, symmetric=True)
        worst = 0.0
        for connection in (spec.nabla, random):
            once = exchange(connection, z)
            if ctx.fault:
                twice = exchange_with_christoffel(-connection.christoffel(once.x), once)
            else:
                twice = exchange(connection, once)
            worst = max(worst, _gap(twice.to_vector(), z.to_vector()))
        return SampleOutcome(worst, z.x.tolist())


class TorsionInverseCheck(BaseCheck):
    """ex with torsion added undoes ex, and adding torsion negates it."""

    @property
    def name(self) -> str:
        return "torsion_inverse"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        spec = ctx.spec
        z = ctx.j1pi1(sample)
        random = random_polynomial_connection(spec.dims.m, sample.rng, symmetric=False)
        worst = 0.0
        for connection in (spec.nabla, random):
            conjugate = add_torsion(connection)
            undo = connection if ctx.fault else conjugate
            back = exchange(undo, exchange(connection, z))
            worst = max(worst, _gap(back.to_vector(), z.to_vector()))
            t = torsion(connection).values(z.x)
            worst = max(worst, _gap(torsion(conjugate).values(z.x), -t))
        return SampleOutcome(worst, z.x.tolist())


class ChartEquivarianceCheck(BaseCheck):
    """Changing charts commutes with the exchange map."""

    @property
    def name(self) -> str:
        return "chart_equivariance"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "pde"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        spec = ctx.spec
        chart, connection = spec.fiber_chart, spec.nabla
        z = ctx.j1pi1(sample)
        exchanged_b, _ = change_chart_j1pi1(chart, connection, exchange(connection, z))
        z_b, gamma_b = change_chart_j1pi1(chart, connection, z)
        direct_b = z_b if ctx.fault else exchange_with_christoffel(gamma_b, z_b)
        return SampleOutcome(_gap(exchanged_b.to_vector(), direct_b.to_vector()), z.x.tolist())


class ConnectionIndependenceCheck(BaseCheck):
    """The A_pi pipeline gives the closed formula for every symmetric connection."""

    @property
    def name(self) -> str:
        return "connection_independence"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        spec = ctx.spec
        zbar = ctx.j1pinu(sample)
        connections = [
            random_polynomial_connection(spec.dims.m, sample.rng, symmetric=True)
            for _ in range(2)
        ]
        if _is_symmetric(spec.nabla, zbar.x):
            connections.append(spec.nabla)
        images = [tulczyjew_A_pipeline(c, zbar).to_vector() for c in connections]
        closed_at = replace(zbar, pmom=-zbar.pmom) if ctx.fault else zbar
        closed = tulczyjew_A(closed_at).to_vector()
        worst = max(_gap(image, closed) for image in images)
        worst = max(worst, _gap(images[0], images[1]))
        return SampleOutcome(worst, zbar.x.tolist())


class PipelineVsDirectCheck(BaseCheck):
    """Affine representative against the core map, and the pipeline against A_pi."""

    @property
    def name(self) -> str:
        return "pipeline_vs_direct"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        connection = ctx.spec.nabla
        zbar = ctx.j1pinu(sample)
        sigma = _sigma_over(ctx, sample, zbar.j1())
        other = _sigma_over(ctx, sample, zbar.j1()) if ctx.fault else sigma
        worst = _gap(
            apply_affine(a_tilde(connection, zbar), sigma),
            core_map(connection, zbar, other),
        )
        if _is_symmetric(connection, zbar.x):
            piped = tulczyjew_A_pipeline(connection, zbar)
            worst = max(worst, piped.distance(tulczyjew_A(zbar)))
        return SampleOutcome(worst, zbar.x.tolist())


def _rank_deficit(block: np.ndarray, expected: int) -> float:
    return float(abs(expected - numerical_rank(block)))


class FlatOmegaDualPathCheck(BaseCheck):
    """The coordinate and derivation constructions of flat_Omega agree.

    Also checks the fiber block has full rank and that pbar stays at -1.
    """

    @property
    def name(self) -> str:
        return "flat_omega_dual_path"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        d = ctx.spec.dims
        zbar = ctx.j1pinu(sample)
        coordinate = flat_omega(zbar)
        intrinsic_at = replace(zbar, ujet=-zbar.ujet) if ctx.fault else zbar
        worst = coordinate.distance(flat_omega_intrinsic(intrinsic_at))
        worst = max(worst, abs(coordinate.coef_p + 1.0))
        worst = max(worst, _rank_deficit(fiber_block_flat(zbar), d.n + d.nm))
        return SampleOutcome(worst, zbar.x.tolist())


class OmegaTildePullbackCheck(BaseCheck):
    """Both canonical forms pull back to Omega-tilde; A_pi is onto its fibers."""

    @property
    def name(self) -> str:
        return "omega_tilde_pullback"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "eq"

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        d = ctx.spec.dims
        zbar = ctx.j1pinu(sample)
        target = -omega_tilde(d) if ctx.fault else omega_tilde(d)
        worst = max(
            distance(canonical_pullback_via_A(zbar), target),
            distance(canonical_pullback_via_flat(zbar), target),
        )
        worst = max(worst, _rank_deficit(fiber_block_A(zbar), d.n + d.nm))
        return SampleOutcome(worst, zbar.x.tolist())


KERNEL_DIMS = tuple((m, n) for m in (1, 2, 3) for n in (1, 2))


def kernel_dimension_formula(dims: BundleDims) -> int:
    return 1 + dims.m + dims.n * (dims.m**2 - 1)


def kernel_defect(dims: BundleDims, drop_generator: bool = False) -> float:
    """Dimension error plus 1 if the listed generators do not span the kernel."""
    kernel = omega_tilde_kernel(dims)
    listed = omega_tilde_kernel_generators(dims)
    if drop_generator:
        listed = listed[:-1]
    generators = Subspace.from_generators(listed, dims.j1pinu_dim)
    defect = abs(kernel.dim - kernel_dimension_formula(dims))
    return float(defect + (0 if generators.same_as(kernel) else 1))


class KernelDimensionCheck(BaseCheck):
    """dim ker Omega-tilde = 1 + m + n(m^2 - 1), spanned by the listed generators."""

    @property
    def name(self) -> str:
        return "kernel_dimension"

    @property
    def tolerance_key(self) -> ToleranceKey:
        return "rank"

    def sample_count(self, spec: ProblemSpec) -> int:
        return 1

    def evaluate(self, ctx: CheckContext, sample: SamplePoint) -> SampleOutcome:
        spec_dims = (ctx.spec.dims.m, ctx.spec.dims.n)
        worst, where = 0.0, list(spec_dims)
        for m, n in dict.fromkeys((*KERNEL_DIMS, spec_dims)):
            defect = kernel_defect(BundleDims(m, n), drop_generator=ctx.fault)
            if defect > worst:
                worst, where = defect, [m, n]
        return SampleOutcome(worst, [float(v) for v in where], detail=f"(m, n) = {where}")


STRUCTURAL_CHECKS = (
    ExchangeInvolutionCheck,
    TorsionInverseCheck,
    ChartEquivarianceCheck,
    ConnectionIndependenceCheck,
    PipelineVsDirectCheck,
    FlatOmegaDualPathCheck,
    OmegaTildePullbackCheck,
    KernelDimensionCheck,
)
