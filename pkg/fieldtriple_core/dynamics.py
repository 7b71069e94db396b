"""Lagrangian and Hamiltonian dynamics on the triple.

Densities are ScalarFields in eta-compatible charts: L over (x, u, ujet) and H over
(x, u, pmom), with the Hamiltonian section p = -H. Every derivative comes from
eval2, so residuals of polynomial data are exact up to rounding.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from config.logging import get_logger
from fieldtriple_core.config import get_config
from fieldtriple_core.errors import (
    BaseMismatch,
    NonConvergence,
    NotOnSubmanifold,
    SingularHessian,
)
from fieldtriple_core.exterior import KForm, pullback, wedge
from fieldtriple_core.fields import (
    Expr,
    Num,
    ScalarField,
    add,
    constant,
    eval2,
    mul,
    scale,
    variable,
)
from fieldtriple_core.fields import evaluate as eval_field
from fieldtriple_core.geometry import (
    BundleDims,
    PointJ1,
    PointJ1pinu,
    PointM0pi,
    PointMpi,
    SectionE,
    SectionM0,
    canonical_omega,
    canonical_theta,
    contract_vertical_endomorphism,
    hodge_basis,
    prolong_holonomic_j1pi1,
    prolong_m0_section,
    same_base,
    vertical_endomorphism,
    volume_form,
)
from fieldtriple_core.triple import (
    FormLambdaJ1,
    FormLambdaMpi,
    flat_omega,
    omega_tilde_kernel_generators,
    tulczyjew_A,
)

logger = get_logger("dynamics")


# ---------------------------------------------------------------------------
# Partial derivatives of a density
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partials:
    """Value, gradient and Hessian of a density over (x, u, w).

    w is ujet for a Lagrangian and pmom for a Hamiltonian, both n x m row-major.
    """

    value: float
    grad: np.ndarray
    hess: np.ndarray
    m: int
    n: int

    @property
    def _w0(self) -> int:
        return self.m + self.n

    @property
    def x(self) -> np.ndarray:
        return self.grad[: self.m]

    @property
    def u(self) -> np.ndarray:
        return self.grad[self.m : self._w0]

    @property
    def w(self) -> np.ndarray:
        return self.grad[self._w0 :].reshape(self.n, self.m)

    @property
    def ww(self) -> np.ndarray:
        """(nm, nm) block of second derivatives in w."""
        return self.hess[self._w0 :, self._w0 :]

    @property
    def w_rows(self) -> np.ndarray:
        """Gradients of the n*m first derivatives in w, one per row."""
        return self.hess[self._w0 :, :]

    @property
    def u_rows(self) -> np.ndarray:
        return self.hess[self.m : self._w0, :]


def _partials(f: ScalarField, dims: BundleDims, vec: np.ndarray) -> Partials:
    jet = eval2(f, vec)
    return Partials(jet.value, jet.grad, jet.hess, dims.m, dims.n)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LagrangianDensity:
    """L(x, u, ujet) with the Lagrangian L * d^m x."""

    field: ScalarField
    dims: BundleDims

    @classmethod
    def from_source(cls, source: str, dims: BundleDims) -> LagrangianDensity:
        return cls(ScalarField.from_source(source, dims.j1_variables), dims)

    @classmethod
    def from_expr(cls, expr: Expr, dims: BundleDims) -> LagrangianDensity:
        return cls(ScalarField(expr, dims.j1_variables), dims)

    def partials(self, z: PointJ1) -> Partials:
        return _partials(self.field, self.dims, z.to_vector())

    def value(self, z: PointJ1) -> float:
        return self.partials(z).value


class Hamiltonian(ABC):
    """Anything that yields the partials of H over (x, u, pmom)."""

    @property
    @abstractmethod
    def dims(self) -> BundleDims:
        """Bundle dimensions."""
        pass

    @abstractmethod
    def partials(self, point: PointM0pi) -> Partials:
        """Value, gradient and Hessian of H at a point of M0pi."""
        pass

    def value(self, point: PointM0pi) -> float:
        return self.partials(point).value

    def section(self, point: PointM0pi) -> PointMpi:
        """The Hamiltonian section h: p = -H."""
        return PointMpi(point.x, point.u, -self.value(point), point.pmom)


@dataclass(frozen=True, eq=False)
class HamiltonianDensity(Hamiltonian):
    """H(x, u, pmom); the Hamiltonian density is (p + H) d^m x."""

    field: ScalarField
    bundle: BundleDims

    @classmethod
    def from_source(cls, source: str, dims: BundleDims) -> HamiltonianDensity:
        return cls(ScalarField.from_source(source, dims.m0_variables), dims)

    @classmethod
    def from_expr(cls, expr: Expr, dims: BundleDims) -> HamiltonianDensity:
        return cls(ScalarField(expr, dims.m0_variables), dims)

    @property
    def dims(self) -> BundleDims:
        return self.bundle

    def partials(self, point: PointM0pi) -> Partials:
        return _partials(self.field, self.bundle, point.to_vector())


def _m0(point: PointMpi | PointJ1pinu) -> PointM0pi:
    return PointM0pi(point.x, point.u, point.pmom)


# ---------------------------------------------------------------------------
# Example families
# ---------------------------------------------------------------------------


def _grid(values, shape: tuple[int, ...], names: Sequence[str]) -> np.ndarray:
    """Nested lists of sources/numbers/ScalarFields -> object array of ScalarFields."""
    out = np.empty(shape, dtype=object)
    src = np.zeros(shape) if values is None else np.array(values, dtype=object)
    if src.shape != shape:
        raise BaseMismatch(f"coefficient block has shape {src.shape}, expected {shape}")
    for idx in np.ndindex(*shape):
        item = src[idx]
        if isinstance(item, ScalarField):
            out[idx] = item
        elif isinstance(item, str):
            out[idx] = ScalarField.from_source(item, names)
        else:
            out[idx] = ScalarField.constant(float(item), names)
    return out


def _is_zero(f: ScalarField) -> bool:
    return isinstance(f.expr, Num) and f.expr.value == 0.0


def _jet_var(a: int, i: int) -> Expr:
    return variable(f"u{a + 1}_{i + 1}")


def _mom_var(a: int, i: int) -> Expr:
    return variable(f"p{a + 1}_{i + 1}")


@dataclass(frozen=True, eq=False)
class AffineLagrangianSpec:
    """L = gamma0(x, u) + gamma^i_a(x, u) u^a_i."""

    dims: BundleDims
    gamma0: ScalarField
    gamma: np.ndarray  # (n, m) of ScalarField

    @classmethod
    def from_sources(cls, dims: BundleDims, gamma0="0", gamma=None) -> AffineLagrangianSpec:
        names = dims.e_variables
        g0 = _grid([gamma0], (1,), names)[0]
        return cls(dims, g0, _grid(gamma, (dims.n, dims.m), names))


@dataclass(frozen=True, eq=False)
class QuadraticLagrangianSpec:
    """L = 1/2 (flat0 + (flat^i_a + flat~^i_a) u^a_i + flat^{ij}_{ab} u^a_i u^b_j).

    flat_quad is indexed [a][b][i][j].
    """

    dims: BundleDims
    flat0: ScalarField
    flat_lin: np.ndarray
    flat_lin2: np.ndarray
    flat_quad: np.ndarray

    @classmethod
    def from_sources(
        cls, dims: BundleDims, flat0="0", flat_lin=None, flat_lin2=None, flat_quad=None
    ) -> QuadraticLagrangianSpec:
        names = dims.e_variables
        n, m = dims.n, dims.m
        return cls(
            dims,
            _grid([flat0], (1,), names)[0],
            _grid(flat_lin, (n, m), names),
            _grid(flat_lin2, (n, m), names),
            _grid(flat_quad, (n, n, m, m), names),
        )

    @property
    def symmetric(self) -> bool:
        """flat^{ij}_{ab} = flat^{ji}_{ba} as expressions."""
        q = self.flat_quad
        return all(
            q[a, b, i, j].expr == q[b, a, j, i].expr for a, b, i, j in np.ndindex(*q.shape)
        )

    def quad_matrix(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """(nm, nm) matrix with entry [(a, i), (b, j)] = flat^{ij}_{ab}(x, u)."""
        point = np.concatenate([x, u])
        n, m = self.dims.n, self.dims.m
        mat = np.empty((n * m, n * m))
        for a, b, i, j in np.ndindex(n, n, m, m):
            mat[a * m + i, b * m + j] = eval_field(self.flat_quad[a, b, i, j], point)
        return mat


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonianSpec:
    """H = sharp^a_i p^i_a + sharp^{ab}_{ij} p^i_a p^j_b, sharp_quad indexed [a][b][i][j]."""

    dims: BundleDims
    sharp_lin: np.ndarray
    sharp_quad: np.ndarray

    @classmethod
    def from_sources(
        cls, dims: BundleDims, sharp_lin=None, sharp_quad=None
    ) -> QuadraticHamiltonianSpec:
        names = dims.e_variables
        n, m = dims.n, dims.m
        return cls(dims, _grid(sharp_lin, (n, m), names), _grid(sharp_quad, (n, n, m, m), names))


def _terms(coeffs_and_factors) -> Expr:
    terms = [mul(c.expr, *factors) for c, factors in coeffs_and_factors if not _is_zero(c)]
    return add(*terms) if terms else constant(0.0)


def make_affine_L(spec: AffineLagrangianSpec) -> LagrangianDensity:
    n, m = spec.dims.n, spec.dims.m
    pieces = [(spec.gamma0, ())]
    pieces += [(spec.gamma[a, i], (_jet_var(a, i),)) for a in range(n) for i in range(m)]
    return LagrangianDensity.from_expr(_terms(pieces), spec.dims)


def make_quadratic_L(spec: QuadraticLagrangianSpec) -> LagrangianDensity:
    n, m = spec.dims.n, spec.dims.m
    pieces = [(spec.flat0, ())]
    for a in range(n):
        for i in range(m):
            pieces.append((spec.flat_lin[a, i], (_jet_var(a, i),)))
            pieces.append((spec.flat_lin2[a, i], (_jet_var(a, i),)))
    for a, b, i, j in np.ndindex(n, n, m, m):
        pieces.append((spec.flat_quad[a, b, i, j], (_jet_var(a, i), _jet_var(b, j))))
    return LagrangianDensity.from_expr(scale(0.5, _terms(pieces)), spec.dims)


def make_quadratic_H(spec: QuadraticHamiltonianSpec) -> HamiltonianDensity:
    n, m = spec.dims.n, spec.dims.m
    pieces = [(spec.sharp_lin[a, i], (_mom_var(a, i),)) for a in range(n) for i in range(m)]
    for a, b, i, j in np.ndindex(n, n, m, m):
        pieces.append((spec.sharp_quad[a, b, i, j], (_mom_var(a, i), _mom_var(b, j))))
    return HamiltonianDensity.from_expr(_terms(pieces), spec.dims)


# ---------------------------------------------------------------------------
# Poincare-Cartan forms and the Legendre transform
# ---------------------------------------------------------------------------


def _energy_gradient(part: Partials, z: PointJ1) -> np.ndarray:
    """Gradient of L - u^a_i dL/du^a_i over (x, u, ujet)."""
    pad = np.concatenate([np.zeros(part.m + part.n), part.w.ravel()])
    return part.grad - z.ujet.ravel() @ part.w_rows - pad


def pc_theta(L: LagrangianDensity, z: PointJ1) -> KForm:
    """(L - u^a_i dL/du^a_i) d^m x + dL/du^a_i du^a ^ d^{m-1}x_i."""
    d = L.dims
    N = d.j1_dim
    part = L.partials(z)
    theta = (part.value - float(np.sum(z.ujet * part.w))) * volume_form(N, d.m)
    for a in range(d.n):
        du = KForm.basis(N, d.u_index(a))
        for i in range(d.m):
            theta = theta + part.w[a, i] * wedge(du, hodge_basis(N, d.m, i))
    return theta


def pc_omega(L: LagrangianDensity, z: PointJ1) -> KForm:
    """-d of pc_theta, from exact second partials."""
    d = L.dims
    N = d.j1_dim
    part = L.partials(z)
    vol = volume_form(N, d.m)
    omega = -wedge(KForm.covector(N, _energy_gradient(part, z)), vol)
    for a in range(d.n):
        du = KForm.basis(N, d.u_index(a))
        for i in range(d.m):
            d_mom = KForm.covector(N, part.w_rows[a * d.m + i])
            omega = omega - wedge(wedge(d_mom, du), hodge_basis(N, d.m, i))
    return omega


def theta_from_vertical_endomorphism(L: LagrangianDensity, z: PointJ1) -> KForm:
    """L eta + <S_eta, dL>."""
    part = L.partials(z)
    vol = volume_form(L.dims.j1_dim, L.dims.m)
    return part.value * vol + contract_vertical_endomorphism(
        vertical_endomorphism(z), part.grad
    )


def legendre_ext(L: LagrangianDensity, z: PointJ1) -> PointMpi:
    """(x, u, L - dL/du^a_i u^a_i, dL/du^a_i)."""
    part = L.partials(z)
    return PointMpi(z.x, z.u, part.value - float(np.sum(z.ujet * part.w)), part.w)


def legendre_red(L: LagrangianDensity, z: PointJ1) -> PointM0pi:
    return PointM0pi(z.x, z.u, L.partials(z).w)


def legendre_jacobian(L: LagrangianDensity, z: PointJ1) -> np.ndarray:
    """(dim Mpi, dim J1pi) Jacobian of legendre_ext at z."""
    d = L.dims
    part = L.partials(z)
    jac = np.zeros((d.mpi_dim, d.j1_dim))
    jac[: d.m + d.n, : d.m + d.n] = np.eye(d.m + d.n)
    jac[d.p_index()] = _energy_gradient(part, z)
    jac[d.p_index() + 1 :] = part.w_rows
    return jac


def legendre_pullback_theta(L: LagrangianDensity, z: PointJ1) -> KForm:
    """Leg^* Theta at z."""
    return pullback(legendre_jacobian(L, z), canonical_theta(legendre_ext(L, z)))


def pc_omega_via_pullback(L: LagrangianDensity, z: PointJ1) -> KForm:
    """Leg^* Omega at z."""
    return pullback(legendre_jacobian(L, z), canonical_omega(legendre_ext(L, z)))


@dataclass(frozen=True)
class Regularity:
    regular: bool
    min_singular_value: float
    max_singular_value: float


def _regularity(hessian: np.ndarray, tau: float) -> Regularity:
    sv = linalg.svdvals(hessian)
    smax, smin = float(sv[0]), float(sv[-1])
    return Regularity(smax > 0.0 and smin > tau * smax, smin, smax)


def hessian_regularity(L: LagrangianDensity, z: PointJ1) -> Regularity:
    """Regularity of the (nm x nm) velocity Hessian at z."""
    return _regularity(L.partials(z).ww, get_config().tau_rank)


# ---------------------------------------------------------------------------
# Inverse Legendre map
# ---------------------------------------------------------------------------


@dataclass
class LegendreContext:
    """Per-run memo of inverse Legendre solutions keyed by rounded coordinates.

    Not shared across threads; each worker builds its own.
    """

    digits: int = field(default_factory=lambda: get_config().memo_digits)
    solutions: dict[tuple[float, ...], np.ndarray] = field(default_factory=dict)
    hits: int = 0

    def key(self, target: PointM0pi) -> tuple[float, ...]:
        return tuple(round(float(v), self.digits) for v in target.to_vector())


def invert_leg(
    L: LagrangianDensity,
    target: PointM0pi,
    guess: PointJ1 | None = None,
    context: LegendreContext | None = None,
) -> PointJ1:
    """Solve dL/du^a_i(x, u, ujet) = target.pmom for ujet by Newton's method.

    Args:
        L: the Lagrangian
        target: point of M0pi to invert
        guess: starting point over the same (x, u); defaults to ujet = pmom
        context: optional memo for repeated targets

    Returns:
        The point of J1pi whose reduced Legendre image is target

    Raises:
        SingularHessian: if the velocity Hessian degenerates along the path
        NonConvergence: if the residual does not reach tolerance in budget
    """
    cfg = get_config()
    if guess is not None and not (
        same_base(guess.x, target.x) and same_base(guess.u, target.u)
    ):
        raise BaseMismatch("Newton guess and target lie over different points of E")
    key = context.key(target) if context is not None else None
    if context is not None and key in context.solutions:
        context.hits += 1
        return PointJ1(target.x, target.u, context.solutions[key])

    n, m = target.pmom.shape
    tol = cfg.tau_newton * max(1.0, float(np.max(np.abs(target.pmom))))

    def residual(v: np.ndarray) -> tuple[np.ndarray, Partials, float]:
        part = L.partials(PointJ1(target.x, target.u, v))
        res = part.w - target.pmom
        return res, part, float(np.max(np.abs(res)))

    v = np.array(guess.ujet if guess is not None else target.pmom, dtype=float)
    res, part, norm = residual(v)
    iterations = 0
    while True:
        # a solution on a degenerate Hessian is not a local inverse
        reg = _regularity(part.ww, cfg.tau_rank)
        if not reg.regular:
            raise SingularHessian(
                f"velocity Hessian singular (min sigma {reg.min_singular_value:.3e})"
            )
        if norm <= tol:
            break
        if iterations >= cfg.newton_max_iter:
            raise NonConvergence(
                f"Legendre inversion stalled at residual {norm:.3e} after {iterations} steps"
            )
        step = linalg.solve(part.ww, -res.ravel()).reshape(n, m)
        trial = v + step
        t_res, t_part, t_norm = residual(trial)
        t = 1.0
        damped = 0
        while t_norm > norm and damped < cfg.newton_damped_steps:
            t *= 0.5
            damped += 1
            trial = v + t * step
            t_res, t_part, t_norm = residual(trial)
        if t_norm > norm:
            raise NonConvergence(f"no damped Newton step reduces the residual {norm:.3e}")
        v, res, part, norm = trial, t_res, t_part, t_norm
        iterations += 1

    logger.debug(f"Legendre inverse in {iterations} Newton steps (residual {norm:.2e})")
    if context is not None:
        context.solutions[key] = v.copy()
    return PointJ1(target.x, target.u, v)


@dataclass(eq=False)
class InducedHamiltonian(Hamiltonian):
    """H = p^i_a u^a_i - L at the inverse Legendre point.

    Second derivatives follow from implicit differentiation of dL/dv = P with
    A = d2L/dv2 and b = (x, u):
        H_P = v, H_b = -L_b, H_PP = A^-1, H_Pb = -A^-1 L_vb,
        H_bb = -L_bb + L_bv A^-1 L_vb
    """

    lagrangian: LagrangianDensity
    context: LegendreContext = field(default_factory=LegendreContext)

    @property
    def dims(self) -> BundleDims:
        return self.lagrangian.dims

    def partials(self, point: PointM0pi) -> Partials:
        d = self.dims
        z = invert_leg(self.lagrangian, point, context=self.context)
        part = self.lagrangian.partials(z)
        b = d.m + d.n
        A = part.ww
        A_inv = linalg.inv(A)
        L_vb = part.hess[b:, :b]
        L_bb = part.hess[:b, :b]
        value = float(np.sum(point.pmom * z.ujet)) - part.value
        grad = np.concatenate([-part.grad[:b], z.ujet.ravel()])
        hess = np.empty_like(part.hess)
        hess[b:, b:] = A_inv
        hess[b:, :b] = -A_inv @ L_vb
        hess[:b, b:] = hess[b:, :b].T
        hess[:b, :b] = -L_bb + L_vb.T @ A_inv @ L_vb
        return Partials(value, grad, hess, d.m, d.n)


def induced_hamiltonian(
    L: LagrangianDensity, context: LegendreContext | None = None
) -> InducedHamiltonian:
    return InducedHamiltonian(L, context or LegendreContext())


# ---------------------------------------------------------------------------
# Vertical differentials and residual operators
# ---------------------------------------------------------------------------


def dL_map(L: LagrangianDensity, z: PointJ1) -> FormLambdaJ1:
    """dL at z modulo horizontal forms: (dL/du^a, dL/du^a_i)."""
    part = L.partials(z)
    return FormLambdaJ1(z, part.u, part.w)


def dH_map(H: Hamiltonian, omega: PointMpi) -> FormLambdaMpi:
    """-d(p + H) modulo horizontal forms: (-dH/du, -1, -dH/dp)."""
    part = H.partials(_m0(omega))
    return FormLambdaMpi(omega, -part.u, -1.0, -part.w)


def _total_tangents(d: BundleDims, ujet: np.ndarray, usec: np.ndarray) -> np.ndarray:
    """Columns D_k = d/dx^k + u^a_k d/du^a + u^a_{ik} d/du^a_i over (x, u, ujet)."""
    t = np.zeros((d.j1_dim, d.m))
    t[: d.m, :] = np.eye(d.m)
    t[d.m : d.m + d.n, :] = ujet
    t[d.m + d.n :, :] = usec.reshape(d.nm, d.m)
    return t


def el_residual(L: LagrangianDensity, phi: SectionE, x) -> np.ndarray:
    """dL/du^a - d/dx^i (dL/du^a_i) along j1 phi."""
    z = prolong_holonomic_j1pi1(phi, x)
    d = z.dims
    part = L.partials(z.base_j1())
    tangents = _total_tangents(d, z.ujet, z.usec)
    divergence = np.einsum("aii->a", (part.w_rows @ tangents).reshape(d.n, d.m, d.m))
    return part.u - divergence


def legendre_section_jet(L: LagrangianDensity, phi: SectionE, x) -> PointJ1pinu:
    """Exact 1-jet of x -> Leg(j1 phi(x))."""
    z = prolong_holonomic_j1pi1(phi, x)
    d = z.dims
    j1 = z.base_j1()
    part = L.partials(j1)
    tangents = _total_tangents(d, z.ujet, z.usec)
    return PointJ1pinu(
        z.x,
        z.u,
        part.value - float(np.sum(z.ujet * part.w)),
        part.w,
        z.ujet,
        _energy_gradient(part, j1) @ tangents,
        (part.w_rows @ tangents).reshape(d.n, d.m, d.m),
    )


def hamiltonian_section_jet(H: Hamiltonian, tau: SectionM0, x) -> PointJ1pinu:
    """Exact 1-jet of h o tau, with p = -H(tau(x))."""
    jet = prolong_m0_section(tau, x)
    part = H.partials(_m0(jet))
    dH = part.x + jet.ujet.T @ part.u + np.einsum("aij,ai->j", jet.pmomjet, part.w)
    return PointJ1pinu(
        jet.x, jet.u, -part.value, jet.pmom, jet.ujet, -dH, jet.pmomjet
    )


def hdw_residual_from_jet(H: Hamiltonian, jet: PointJ1pinu) -> np.ndarray:
    """(du^a/dx^i - dH/dp^i_a ; dp^i_a/dx^i + dH/du^a) for a reduced-section jet."""
    part = H.partials(_m0(jet))
    return np.concatenate([(jet.ujet - part.w).ravel(), jet.trace() + part.u])


def hdw_residual(H: Hamiltonian, tau: SectionM0, x) -> np.ndarray:
    return hdw_residual_from_jet(H, prolong_m0_section(tau, x))


def jet_equivalence_residual(L: LagrangianDensity, phi: SectionE, x) -> FormLambdaJ1:
    """dL(j1 phi) - A_pi(j1(Leg o j1 phi)); coef_u is the EL residual, coef_ujet is 0."""
    jet = legendre_section_jet(L, phi, x)
    image = tulczyjew_A(jet)
    target = dL_map(L, jet.j1())
    return FormLambdaJ1(
        target.base, target.coef_u - image.coef_u, target.coef_ujet - image.coef_ujet
    )


def hdw_jet_residual(H: Hamiltonian, tau: SectionM0, x) -> FormLambdaMpi:
    """flat_Omega(j1(h o tau)) + d(p + H)(h o tau); coef_p vanishes identically."""
    jet = hamiltonian_section_jet(H, tau, x)
    image = flat_omega(jet)
    target = dH_map(H, jet.mpi())
    return FormLambdaMpi(
        image.base,
        image.coef_u - target.coef_u,
        image.coef_p - target.coef_p,
        image.coef_pmom - target.coef_pmom,
    )


# ---------------------------------------------------------------------------
# S_L and S_H
# ---------------------------------------------------------------------------


def sl_defining(L: LagrangianDensity, zbar: PointJ1pinu) -> np.ndarray:
    """(p^i_a - dL/du^a_i ; p^i_{a i} - dL/du^a)."""
    part = L.partials(zbar.j1())
    return np.concatenate([(zbar.pmom - part.w).ravel(), zbar.trace() - part.u])


def sh_defining(H: Hamiltonian, zbar: PointJ1pinu) -> np.ndarray:
    """(u^a_j - dH/dp^j_a ; p^j_{a j} + dH/du^a)."""
    return hdw_residual_from_jet(H, zbar)


def _anchored(zbar: PointJ1pinu, pmom: np.ndarray, ujet: np.ndarray,
              trace_target: np.ndarray) -> PointJ1pinu:
    pmomjet = np.array(zbar.pmomjet)
    for a in range(pmomjet.shape[0]):
        pmomjet[a, 0, 0] = trace_target[a] - (np.trace(pmomjet[a]) - pmomjet[a, 0, 0])
    return PointJ1pinu(zbar.x, zbar.u, zbar.p, pmom, ujet, zbar.pjet, pmomjet)


def sl_point(L: LagrangianDensity, seed: PointJ1pinu) -> PointJ1pinu:
    """The point of S_L sharing x, u, ujet, p, pjet and the off-anchor p^i_{a j} with seed.

    pmom is set to dL/dujet and p^1_{a 1} absorbs the trace equation.
    """
    part = L.partials(seed.j1())
    return _anchored(seed, part.w, seed.ujet, part.u)


def sh_point(H: Hamiltonian, seed: PointJ1pinu) -> PointJ1pinu:
    """The point of S_H sharing x, u, pmom, p, pjet and the off-anchor p^i_{a j} with seed."""
    part = H.partials(_m0(seed))
    return _anchored(seed, seed.pmom, part.w, -part.u)


def _require_on(residual: np.ndarray, zbar: PointJ1pinu, tol: float | None, what: str):
    limit = tol if tol is not None else get_config().tau_pde * max(
        1.0, float(np.max(np.abs(zbar.to_vector())))
    )
    worst = float(np.max(np.abs(residual)))
    if worst > limit:
        raise NotOnSubmanifold(f"point is not on {what}: residual {worst:.3e} > {limit:.1e}")


def _lift(dims: BundleDims, t: int, momentum_block: bool) -> int:
    """J1(pi o nu) index of variable t of a density over (x, u, w)."""
    if t < dims.m + dims.n:
        return t
    a, i = divmod(t - dims.m - dims.n, dims.m)
    return dims.pmom_index(a, i) if momentum_block else dims.ujet_index(a, i)


def sl_tangent_basis(
    L: LagrangianDensity, zbar: PointJ1pinu, tol: float | None = None
) -> np.ndarray:
    """Generators of T S_L at zbar, one per row: X_i, U_a, U^i_a and the kernel of Omega-tilde.

    Raises:
        NotOnSubmanifold: if sl_defining(zbar) exceeds tolerance
    """
    _require_on(sl_defining(L, zbar), zbar, tol, "S_L")
    d = L.dims
    part = L.partials(zbar.j1())
    rows = []
    for t in range(d.j1_dim):
        vec = np.zeros(d.j1pinu_dim)
        vec[_lift(d, t, momentum_block=False)] += 1.0
        for b in range(d.n):
            for j in range(d.m):
                vec[d.pmom_index(b, j)] += part.w_rows[b * d.m + j, t]
            vec[d.pmomjet_index(b, 0, 0)] += part.u_rows[b, t]
        rows.append(vec)
    return np.vstack([np.array(rows), omega_tilde_kernel_generators(d)])


def sh_tangent_basis(H: Hamiltonian, zbar: PointJ1pinu, tol: float | None = None) -> np.ndarray:
    """Generators of T S_H at zbar: X_i, U_a, P^i_a and the kernel of Omega-tilde.

    Raises:
        NotOnSubmanifold: if sh_defining(zbar) exceeds tolerance
    """
    _require_on(sh_defining(H, zbar), zbar, tol, "S_H")
    d = H.dims
    part = H.partials(_m0(zbar))
    rows = []
    for t in range(d.m + d.n + d.nm):
        vec = np.zeros(d.j1pinu_dim)
        vec[_lift(d, t, momentum_block=True)] += 1.0
        for b in range(d.n):
            for j in range(d.m):
                vec[d.ujet_index(b, j)] += part.w_rows[b * d.m + j, t]
            vec[d.pmomjet_index(b, 0, 0)] -= part.u_rows[b, t]
        rows.append(vec)
    return np.vstack([np.array(rows), omega_tilde_kernel_generators(d)])
