"""Structural maps of the Tulczyjew triple for first-order field theories.

The exchange map ex_nabla on J1pi1, the pairing between Mpi and J1pi and its
lift, the affine representative A-tilde, the morphism A_pi (closed formula and
the connection-based pipeline), flat_Omega, and the premultisymplectic form
Omega-tilde on J1(pi o nu) with its kernel.

Index pin for the exchange map:
    new usec[a][i][j] = usec[a][j][i] + (ubar[a][k] - ujet[a][k]) * Gamma^k_ji
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from config.logging import get_logger
from fieldtriple_core.errors import BaseMismatch, ProblemError
from fieldtriple_core.exterior import (
    KForm,
    Subspace,
    evaluate,
    flat_kernel,
    pullback,
    wedge,
)
from fieldtriple_core.exterior import derivation as slot_derivation
from fieldtriple_core.geometry import (
    BundleDims,
    Connection,
    PointJ1,
    PointJ1pi1,
    PointJ1pinu,
    PointMpi,
    canonical_omega,
    canonical_omega_on,
    hodge_basis,
    phi_nabla,
    same_base,
    volume_form,
)

logger = get_logger("triple")

_BASE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AffineMapValue:
    """Coefficients of an affine map J1pi1 -> T*M over a point of J1pi.

    The map sends (ubar, usec) to the covector
        a_k = pbar[k] + pbar_mom[a][i][k] ubar[a][i] + pbar_jet[a][i][j][k] usec[a][i][j]
    """

    base: PointJ1
    pbar: np.ndarray
    pbar_mom: np.ndarray
    pbar_jet: np.ndarray

    def __post_init__(self):
        d = self.base.dims
        m, n = d.m, d.n
        shapes = {
            "pbar": (m,), "pbar_mom": (n, m, m), "pbar_jet": (n, m, m, m),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise BaseMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class FormLambdaJ1:
    """(pbar_a du^a + pbar^i_a du^a_i) ^ d^m x at a point of J1pi."""

    base: PointJ1
    coef_u: np.ndarray
    coef_ujet: np.ndarray

    def __post_init__(self):
        d = self.base.dims
        object.__setattr__(self, "coef_u", np.asarray(self.coef_u, dtype=float).reshape(d.n))
        object.__setattr__(
            self, "coef_ujet", np.asarray(self.coef_ujet, dtype=float).reshape(d.n, d.m)
        )

    def to_vector(self) -> np.ndarray:
        """Coordinates on Lambda^{m+1}_2 J1pi."""
        return np.concatenate([self.base.to_vector(), self.coef_u, self.coef_ujet.ravel()])

    def distance(self, other: FormLambdaJ1) -> float:
        return float(np.max(np.abs(self.to_vector() - other.to_vector())))


@dataclass(frozen=True, eq=False)
class FormLambdaMpi:
    """(pbar_a du^a + pbar dp + pbar^a_i dp^i_a) ^ d^m x at a point of Mpi."""

    base: PointMpi
    coef_u: np.ndarray
    coef_p: float
    coef_pmom: np.ndarray

    def __post_init__(self):
        d = self.base.dims
        object.__setattr__(self, "coef_u", np.asarray(self.coef_u, dtype=float).reshape(d.n))
        object.__setattr__(self, "coef_p", float(self.coef_p))
        object.__setattr__(
            self, "coef_pmom", np.asarray(self.coef_pmom, dtype=float).reshape(d.n, d.m)
        )

    def to_vector(self) -> np.ndarray:
        """Coordinates on Lambda^{m+1}_2 Mpi."""
        return np.concatenate(
            [self.base.to_vector(), self.coef_u, [self.coef_p], self.coef_pmom.ravel()]
        )

    def distance(self, other: FormLambdaMpi) -> float:
        return float(np.max(np.abs(self.to_vector() - other.to_vector())))


# ---------------------------------------------------------------------------
# Exchange map and pairings
# ---------------------------------------------------------------------------


def exchange(connection: Connection, z: PointJ1pi1) -> PointJ1pi1:
    """ex_nabla(z): swap the two first-order blocks and correct the second block."""
    return exchange_with_christoffel(connection.christoffel(z.x), z)


def exchange_with_christoffel(gamma: np.ndarray, z: PointJ1pi1) -> PointJ1pi1:
    """The exchange map for Christoffel values already evaluated at z.x."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (z.dims.m,) * 3:
        raise BaseMismatch(f"Christoffel array has shape {gamma.shape}")
    delta = z.ubar - z.ujet
    usec = z.usec.transpose(0, 2, 1) + np.einsum("ak,kji->aij", delta, gamma)
    return PointJ1pi1(z.x, z.u, z.ubar, z.ujet, usec)


def _check_same_point(x_a, u_a, x_b, u_b, what: str) -> None:
    if not (same_base(x_a, x_b, _BASE_TOL) and same_base(u_a, u_b, _BASE_TOL)):
        raise BaseMismatch(f"{what}: points lie over different points of E")


def pairing(omega: PointMpi, z: PointJ1) -> float:
    """<omega, z> = p + p^i_a u^a_i."""
    _check_same_point(omega.x, omega.u, z.x, z.u, "pairing")
    return float(omega.p + np.sum(omega.pmom * z.ujet))


def lifted_pairing(j1omega: PointJ1pinu, sigma: PointJ1pi1) -> tuple[float, np.ndarray]:
    """The 1-jet (a, a_k) of x -> <omega(x), s(x)>.

    sigma is read as the jet of a section s of J1pi -> M whose field values are
    sigma.ujet and whose first derivatives are sigma.usec; its u-derivatives are
    sigma.ubar and must agree with those of omega.
    """
    _check_same_point(j1omega.x, j1omega.u, sigma.x, sigma.u, "lifted pairing")
    if not same_base(j1omega.ujet, sigma.ubar, _BASE_TOL):
        raise BaseMismatch("lifted pairing: u-derivatives of omega and sigma differ")
    a = j1omega.p + np.sum(j1omega.pmom * sigma.ujet)
    a_k = (
        j1omega.pjet
        + np.einsum("aik,ai->k", j1omega.pmomjet, sigma.ujet)
        + np.einsum("ai,aik->k", j1omega.pmom, sigma.usec)
    )
    return float(a), a_k


def core_map(connection: Connection, j1omega: PointJ1pinu, j1sigma: PointJ1pi1) -> np.ndarray:
    """Components a_k of Phi^nabla(j1 <omega, ex_nabla(j1sigma)>) on T*M."""
    _check_same_point(j1omega.x, j1omega.u, j1sigma.x, j1sigma.u, "core map")
    if not same_base(j1omega.ujet, j1sigma.ujet, _BASE_TOL):
        raise BaseMismatch("core map: omega and sigma lie over different points of J1pi")
    a, a_k = lifted_pairing(j1omega, exchange(connection, j1sigma))
    return phi_nabla(connection, j1omega.x, a, a_k)[1]


def a_tilde(connection: Connection, j1omega: PointJ1pinu) -> AffineMapValue:
    """Closed-form affine representative of the core map at j1omega."""
    d = j1omega.dims
    gamma = connection.christoffel(j1omega.x)
    trace_gamma = np.einsum("jkj->k", gamma)
    pmom = j1omega.pmom
    pbar = (
        j1omega.pjet
        - np.einsum("ai,al,lki->k", pmom, j1omega.ujet, gamma)
        - j1omega.p * trace_gamma
    )
    pbar_mom = (
        j1omega.pmomjet
        + np.einsum("al,ikl->aik", pmom, gamma)
        - np.einsum("ai,k->aik", pmom, trace_gamma)
    )
    pbar_jet = np.einsum("aj,ik->aijk", pmom, np.eye(d.m))
    return AffineMapValue(j1omega.j1(), pbar, pbar_mom, pbar_jet)


def apply_affine(value: AffineMapValue, j1sigma: PointJ1pi1) -> np.ndarray:
    """Evaluate an AffineMapValue on a point of J1pi1 over its base."""
    base = value.base
    _check_same_point(base.x, base.u, j1sigma.x, j1sigma.u, "apply_affine")
    if not same_base(base.ujet, j1sigma.ujet, _BASE_TOL):
        raise BaseMismatch("apply_affine: sigma lies over a different point of J1pi")
    return (
        value.pbar
        + np.einsum("aik,ai->k", value.pbar_mom, j1sigma.ubar)
        + np.einsum("aijk,aij->k", value.pbar_jet, j1sigma.usec)
    )


# ---------------------------------------------------------------------------
# A_pi
# ---------------------------------------------------------------------------


def tulczyjew_A(j1omega: PointJ1pinu) -> FormLambdaJ1:
    """(p^i_{a i} du^a + p^i_a du^a_i) ^ d^m x."""
    return FormLambdaJ1(j1omega.j1(), j1omega.trace(), j1omega.pmom)


def _unit_sigma(base: PointJ1, block: str | None = None, index: tuple = ()) -> PointJ1pi1:
    d = base.dims
    ubar = np.zeros((d.n, d.m))
    usec = np.zeros((d.n, d.m, d.m))
    if block == "ubar":
        ubar[index] = 1.0
    elif block == "usec":
        usec[index] = 1.0
    return PointJ1pi1(base.x, base.u, base.ujet, ubar, usec)


def _read_off_j1(form: KForm, base: PointJ1) -> FormLambdaJ1:
    d = base.dims
    N = d.j1_dim
    frame = [np.eye(N)[i] for i in range(d.m)]
    coef_u = np.array([evaluate(form, [np.eye(N)[d.u_index(a)], *frame]) for a in range(d.n)])
    coef_ujet = np.array(
        [
            [evaluate(form, [np.eye(N)[d.j1_ujet_index(a, i)], *frame]) for i in range(d.m)]
            for a in range(d.n)
        ]
    )
    return FormLambdaJ1(base, coef_u, coef_ujet)


def tulczyjew_A_pipeline(connection: Connection, j1omega: PointJ1pinu) -> FormLambdaJ1:
    """A_pi computed through the exchange map, Phi^nabla and the wedge inclusion.

    The affine map j1sigma -> core_map(j1omega, j1sigma) is sampled at the origin
    of the fiber and at unit perturbations; each coefficient becomes an m-form on
    J1pi and omega (x) dx^k is included as -dx^k ^ omega.

    Raises:
        ProblemError: if the connection is not symmetric
    """
    if not connection.symmetric or connection.symmetry_defect(j1omega.x) > _BASE_TOL:
        raise ProblemError("the A_pi pipeline needs a symmetric connection")
    base = j1omega.j1()
    d = base.dims
    m, n, N = d.m, d.n, d.j1_dim
    origin = core_map(connection, j1omega, _unit_sigma(base))

    vol = volume_form(N, m)
    forms = [origin[k] * vol for k in range(m)]
    for a in range(n):
        du = KForm.basis(N, d.u_index(a))
        for i in range(m):
            coef = core_map(connection, j1omega, _unit_sigma(base, "ubar", (a, i))) - origin
            factor = wedge(du, hodge_basis(N, m, i))
            forms = [forms[k] + coef[k] * factor for k in range(m)]
    for a in range(n):
        for i in range(m):
            du_i = KForm.basis(N, d.j1_ujet_index(a, i))
            for j in range(m):
                coef = (
                    core_map(connection, j1omega, _unit_sigma(base, "usec", (a, i, j)))
                    - origin
                )
                factor = wedge(du_i, hodge_basis(N, m, j))
                forms = [forms[k] + coef[k] * factor for k in range(m)]

    total = KForm.zero(N, m + 1)
    for k in range(m):
        total = total - wedge(KForm.basis(N, k), forms[k])
    return _read_off_j1(total, base)


# ---------------------------------------------------------------------------
# flat_Omega
# ---------------------------------------------------------------------------


def horizontal_projector(zbar: PointJ1pinu) -> np.ndarray:
    """h = dx^j (x) (d/dx^j + u^a_j d/du^a + p_j d/dp + p^i_{a j} d/dp^i_a) on Mpi.

    Column j holds the image of d/dx^j; the other columns are zero.
    """
    d = zbar.dims
    h = np.zeros((d.mpi_dim, d.mpi_dim))
    for j in range(d.m):
        h[j, j] = 1.0
        for a in range(d.n):
            h[d.u_index(a), j] = zbar.ujet[a, j]
            for i in range(d.m):
                h[d.pmom_index(a, i), j] = zbar.pmomjet[a, i, j]
        h[d.p_index(), j] = zbar.pjet[j]
    return h


def flat_omega(zbar: PointJ1pinu) -> FormLambdaMpi:
    """flat_Omega in closed coordinate form: (p^j_{a j}, -1, -u^a_i)."""
    return FormLambdaMpi(zbar.mpi(), zbar.trace(), -1.0, -zbar.ujet)


def flat_omega_intrinsic(zbar: PointJ1pinu) -> FormLambdaMpi:
    """flat_Omega as i_h Omega - (m - 1) Omega, read off on (d/d., d/dx^1, ...)."""
    d = zbar.dims
    N = d.mpi_dim
    omega = canonical_omega(zbar.mpi())
    form = slot_derivation(horizontal_projector(zbar), omega) - (d.m - 1) * omega
    eye = np.eye(N)
    frame = [eye[i] for i in range(d.m)]

    def coef(index: int) -> float:
        return evaluate(form, [eye[index], *frame])

    return FormLambdaMpi(
        zbar.mpi(),
        [coef(d.u_index(a)) for a in range(d.n)],
        coef(d.p_index()),
        [[coef(d.pmom_index(a, i)) for i in range(d.m)] for a in range(d.n)],
    )


# ---------------------------------------------------------------------------
# Coordinate maps, Jacobians and Omega-tilde
# ---------------------------------------------------------------------------


def tulczyjew_A_coords(dims: BundleDims, vec: np.ndarray) -> np.ndarray:
    """A_pi as a map from J1(pi o nu) coordinates to Lambda^{m+1}_2 J1pi coordinates."""
    return tulczyjew_A(PointJ1pinu.from_vector(dims, vec)).to_vector()


def flat_omega_coords(dims: BundleDims, vec: np.ndarray) -> np.ndarray:
    """flat_Omega as a map into Lambda^{m+1}_2 Mpi coordinates."""
    return flat_omega(PointJ1pinu.from_vector(dims, vec)).to_vector()


def affine_jacobian(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray) -> np.ndarray:
    """Jacobian by central differences with unit step (exact for affine maps)."""
    z = np.asarray(z, dtype=float)
    columns = []
    for c in range(z.size):
        e = np.zeros(z.size)
        e[c] = 1.0
        columns.append((np.asarray(fn(z + e)) - np.asarray(fn(z - e))) / 2.0)
    return np.column_stack(columns)


def jacobian_A(zbar: PointJ1pinu) -> np.ndarray:
    d = zbar.dims
    return affine_jacobian(lambda v: tulczyjew_A_coords(d, v), zbar.to_vector())


def jacobian_flat(zbar: PointJ1pinu) -> np.ndarray:
    d = zbar.dims
    return affine_jacobian(lambda v: flat_omega_coords(d, v), zbar.to_vector())


def fiber_block_A(zbar: PointJ1pinu) -> np.ndarray:
    """Rows of the A_pi Jacobian for (pbar_a, pbar^i_a)."""
    return jacobian_A(zbar)[zbar.dims.j1_dim :, :]


def fiber_block_flat(zbar: PointJ1pinu) -> np.ndarray:
    """Rows of the flat_Omega Jacobian for (pbar_a, pbar^a_i); the pbar row is constant."""
    d = zbar.dims
    rows = list(range(d.mpi_dim, d.mpi_dim + d.n))
    rows += list(range(d.mpi_dim + d.n + 1, d.lambda_mpi_dim))
    return jacobian_flat(zbar)[rows, :]


def canonical_pullback_via_A(zbar: PointJ1pinu) -> KForm:
    """A_pi^* of the canonical form on Lambda^{m+1}_2 J1pi."""
    return pullback(jacobian_A(zbar), canonical_omega_on("lambda_j1", zbar.dims))


def canonical_pullback_via_flat(zbar: PointJ1pinu) -> KForm:
    """flat_Omega^* of the canonical form on Lambda^{m+1}_2 Mpi."""
    return pullback(jacobian_flat(zbar), canonical_omega_on("lambda_mpi", zbar.dims))


@lru_cache(maxsize=None)
def _omega_tilde(m: int, n: int) -> KForm:
    d = BundleDims(m, n)
    N = d.j1pinu_dim
    vol = volume_form(N, m)
    omega = KForm.zero(N, m + 2)
    for a in range(n):
        trace = KForm.zero(N, 1)
        for i in range(m):
            trace = trace + KForm.basis(N, d.pmomjet_index(a, i, i))
        omega = omega - wedge(wedge(trace, KForm.basis(N, d.u_index(a))), vol)
        for i in range(m):
            omega = omega - wedge(
                KForm.basis(N, d.pmom_index(a, i), d.ujet_index(a, i)), vol
            )
    logger.debug(f"cached Omega-tilde for m={m}, n={n} ({len(omega.coeffs)} terms)")
    return omega


def omega_tilde(where: BundleDims | PointJ1pinu) -> KForm:
    """-d(p^i_{a i}) ^ du^a ^ d^m x - dp^i_a ^ du^a_i ^ d^m x on J1(pi o nu).

    The coefficients do not depend on the point, so a BundleDims is enough.
    """
    dims = where if isinstance(where, BundleDims) else where.dims
    return _omega_tilde(dims.m, dims.n)


def omega_tilde_kernel(dims: BundleDims) -> Subspace:
    """ker flat(Omega-tilde), of dimension 1 + m + n(m^2 - 1)."""
    return flat_kernel(omega_tilde(dims))


def omega_tilde_kernel_generators(dims: BundleDims) -> np.ndarray:
    """d/dp, d/dp_j and d/dp^i_{a j} - delta^i_j d/dp^1_{a 1}, one per row."""
    N = dims.j1pinu_dim
    eye = np.eye(N)
    rows = [eye[dims.p_index()]]
    rows += [eye[dims.pjet_index(j)] for j in range(dims.m)]
    for a in range(dims.n):
        anchor = eye[dims.pmomjet_index(a, 0, 0)]
        for i in range(dims.m):
            for j in range(dims.m):
                if i == j == 0:
                    continue
                vec = eye[dims.pmomjet_index(a, i, j)]
                rows.append(vec - anchor if i == j else vec)
    return np.array(rows)
