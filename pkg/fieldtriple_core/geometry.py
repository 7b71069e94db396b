"""Coordinate models of the bundles around a fibration E -> M.

Covers fibered points of E, J1pi, the multimomentum bundles Mpi and M0pi, the
iterated jet bundle J1pi1 and J1(pi o nu); connections and their torsion;
prolongation of sections; fibered chart changes; the canonical forms; the
vertical endomorphism; and the volume-aware operators d^{nabla,eta} and Phi^nabla.

Coordinate ordering shared by every KForm built over these spaces:
    x | u | p | pmom (row-major in alpha, i) | ujet | pjet | pmomjet
with absent blocks skipped. d^{m-1}x_i is i_{d/dx^i}(dx^1 ^ ... ^ dx^m), which
carries the sign (-1)^(i-1).
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from config.logging import get_logger
from fieldtriple_core.errors import DimensionMismatch, ProblemError, SingularJacobian
from fieldtriple_core.exterior import KForm, interior, wedge
from fieldtriple_core.fields import (
    BinOp,
    Expr,
    ScalarField,
    add,
    base_names,
    constant,
    eval2,
    evaluate,
    fiber_names,
    jet_names,
    momentum_names,
    mul,
    substitute,
    variable,
)

logger = get_logger("geometry")

Vector = Sequence[float] | np.ndarray


# ---------------------------------------------------------------------------
# Dimensions and coordinate layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BundleDims:
    """Base dimension m, fiber dimension n.

    volume_convention records that working charts satisfy eta = dx^1 ^ ... ^ dx^m.
    """

    m: int
    n: int
    volume_convention: bool = True

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DimensionMismatch(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")

    # sizes
    @property
    def nm(self) -> int:
        return self.n * self.m

    @property
    def j1_dim(self) -> int:
        return self.m + self.n + self.nm

    @property
    def mpi_dim(self) -> int:
        return self.m + self.n + 1 + self.nm

    @property
    def j1pinu_dim(self) -> int:
        return self.mpi_dim + self.nm + self.m + self.nm * self.m

    @property
    def lambda_j1_dim(self) -> int:
        return self.j1_dim + self.n + self.nm

    @property
    def lambda_mpi_dim(self) -> int:
        return self.mpi_dim + self.n + 1 + self.nm

    # indices (0-based) into the shared ordering
    def u_index(self, a: int) -> int:
        return self.m + a

    def p_index(self) -> int:
        return self.m + self.n

    def pmom_index(self, a: int, i: int) -> int:
        return self.m + self.n + 1 + a * self.m + i

    def j1_ujet_index(self, a: int, i: int) -> int:
        return self.m + self.n + a * self.m + i

    def ujet_index(self, a: int, j: int) -> int:
        """u^a_j inside J1(pi o nu)."""
        return self.mpi_dim + a * self.m + j

    def pjet_index(self, j: int) -> int:
        return self.mpi_dim + self.nm + j

    def pmomjet_index(self, a: int, i: int, j: int) -> int:
        return self.mpi_dim + self.nm + self.m + (a * self.m + i) * self.m + j

    # names
    @cached_property
    def j1_variables(self) -> tuple[str, ...]:
        """Variable order of a Lagrangian: x, u, ujet."""
        return tuple(
            base_names(self.m) + fiber_names(self.n) + jet_names(self.n, self.m)
        )

    @cached_property
    def m0_variables(self) -> tuple[str, ...]:
        """Variable order of a Hamiltonian: x, u, pmom."""
        return tuple(
            base_names(self.m) + fiber_names(self.n) + momentum_names(self.n, self.m)
        )

    @cached_property
    def base_variables(self) -> tuple[str, ...]:
        return tuple(base_names(self.m))

    @cached_property
    def e_variables(self) -> tuple[str, ...]:
        return tuple(base_names(self.m) + fiber_names(self.n))

    @cached_property
    def j1pinu_names(self) -> tuple[str, ...]:
        m, n = self.m, self.n
        names = base_names(m) + fiber_names(n) + ["p"] + momentum_names(n, m)
        names += jet_names(n, m)
        names += [f"p_{j + 1}" for j in range(m)]
        names += [
            f"p{a + 1}_{i + 1}_{j + 1}" for a in range(n) for i in range(m) for j in range(m)
        ]
        return tuple(names)

    @cached_property
    def j1pi1_names(self) -> tuple[str, ...]:
        m, n = self.m, self.n
        names = base_names(m) + fiber_names(n) + jet_names(n, m)
        names += [f"ub{a + 1}_{j + 1}" for a in range(n) for j in range(m)]
        names += [
            f"u{a + 1}_{i + 1}_{j + 1}" for a in range(n) for i in range(m) for j in range(m)
        ]
        return tuple(names)


def _block(values, shape: tuple[int, ...], label: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise DimensionMismatch(f"{label} has shape {arr.shape}, expected {shape}")
    arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


def _as_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointE:
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_array(self.x).reshape(-1))
        object.__setattr__(self, "u", _as_array(self.u).reshape(-1))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])


@dataclass(frozen=True, eq=False)
class PointJ1:
    x: np.ndarray
    u: np.ndarray
    ujet: np.ndarray

    def __post_init__(self):
        x = _as_array(self.x).reshape(-1)
        u = _as_array(self.u).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ujet", _block(self.ujet, (u.size, x.size), "ujet"))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, self.ujet.ravel()])

    @classmethod
    def from_vector(cls, dims: BundleDims, vec: Vector) -> PointJ1:
        v = np.asarray(vec, dtype=float)
        if v.shape != (dims.j1_dim,):
            raise DimensionMismatch(f"J1 vector of length {v.size}, expected {dims.j1_dim}")
        m, n = dims.m, dims.n
        return cls(v[:m], v[m : m + n], v[m + n :].reshape(n, m))


@dataclass(frozen=True, eq=False)
class PointMpi:
    x: np.ndarray
    u: np.ndarray
    p: float
    pmom: np.ndarray

    def __post_init__(self):
        x = _as_array(self.x).reshape(-1)
        u = _as_array(self.u).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "pmom", _block(self.pmom, (u.size, x.size), "pmom"))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, [self.p], self.pmom.ravel()])

    @classmethod
    def from_vector(cls, dims: BundleDims, vec: Vector) -> PointMpi:
        v = np.asarray(vec, dtype=float)
        if v.shape != (dims.mpi_dim,):
            raise DimensionMismatch(f"Mpi vector of length {v.size}, expected {dims.mpi_dim}")
        m, n = dims.m, dims.n
        return cls(v[:m], v[m : m + n], v[m + n], v[m + n + 1 :].reshape(n, m))


@dataclass(frozen=True, eq=False)
class PointM0pi:
    x: np.ndarray
    u: np.ndarray
    pmom: np.ndarray

    def __post_init__(self):
        x = _as_array(self.x).reshape(-1)
        u = _as_array(self.u).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "pmom", _block(self.pmom, (u.size, x.size), "pmom"))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, self.pmom.ravel()])


@dataclass(frozen=True, eq=False)
class PointJ1pi1:
    """Point of J1pi1: (x, u, u^a_i, ubar^a_j, u^a_ij) with usec[a][i][j] = d u^a_i / dx^j."""

    x: np.ndarray
    u: np.ndarray
    ujet: np.ndarray
    ubar: np.ndarray
    usec: np.ndarray

    def __post_init__(self):
        x = _as_array(self.x).reshape(-1)
        u = _as_array(self.u).reshape(-1)
        m, n = x.size, u.size
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ujet", _block(self.ujet, (n, m), "ujet"))
        object.__setattr__(self, "ubar", _block(self.ubar, (n, m), "ubar"))
        object.__setattr__(self, "usec", _block(self.usec, (n, m, m), "usec"))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.x, self.u, self.ujet.ravel(), self.ubar.ravel(), self.usec.ravel()]
        )

    @classmethod
    def from_vector(cls, dims: BundleDims, vec: Vector) -> PointJ1pi1:
        v = np.asarray(vec, dtype=float)
        m, n, nm = dims.m, dims.n, dims.nm
        if v.shape != (m + n + 2 * nm + nm * m,):
            raise DimensionMismatch(f"J1pi1 vector of length {v.size}")
        o = m + n
        return cls(
            v[:m], v[m:o],
            v[o : o + nm].reshape(n, m),
            v[o + nm : o + 2 * nm].reshape(n, m),
            v[o + 2 * nm :].reshape(n, m, m),
        )

    def base_j1(self) -> PointJ1:
        return PointJ1(self.x, self.u, self.ujet)


@dataclass(frozen=True, eq=False)
class PointJ1pinu:
    """Point of J1(pi o nu): an Mpi point plus the first derivatives of all its fields.

    pmomjet[a][i][j] = d p^i_a / dx^j.
    """

    x: np.ndarray
    u: np.ndarray
    p: float
    pmom: np.ndarray
    ujet: np.ndarray
    pjet: np.ndarray
    pmomjet: np.ndarray

    def __post_init__(self):
        x = _as_array(self.x).reshape(-1)
        u = _as_array(self.u).reshape(-1)
        m, n = x.size, u.size
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "pmom", _block(self.pmom, (n, m), "pmom"))
        object.__setattr__(self, "ujet", _block(self.ujet, (n, m), "ujet"))
        object.__setattr__(self, "pjet", _block(self.pjet, (m,), "pjet"))
        object.__setattr__(self, "pmomjet", _block(self.pmomjet, (n, m, m), "pmomjet"))

    @property
    def dims(self) -> BundleDims:
        return BundleDims(self.x.shape[0], self.u.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.x, self.u, [self.p], self.pmom.ravel(),
                self.ujet.ravel(), self.pjet, self.pmomjet.ravel(),
            ]
        )

    @classmethod
    def from_vector(cls, dims: BundleDims, vec: Vector) -> PointJ1pinu:
        v = np.asarray(vec, dtype=float)
        if v.shape != (dims.j1pinu_dim,):
            raise DimensionMismatch(
                f"J1(pi o nu) vector of length {v.size}, expected {dims.j1pinu_dim}"
            )
        m, n, nm = dims.m, dims.n, dims.nm
        o = m + n + 1
        return cls(
            v[:m], v[m : m + n], v[m + n],
            v[o : o + nm].reshape(n, m),
            v[o + nm : o + 2 * nm].reshape(n, m),
            v[o + 2 * nm : o + 2 * nm + m],
            v[o + 2 * nm + m :].reshape(n, m, m),
        )

    def mpi(self) -> PointMpi:
        return PointMpi(self.x, self.u, self.p, self.pmom)

    def j1(self) -> PointJ1:
        """Projection to J1pi: (x, u, ujet)."""
        return PointJ1(self.x, self.u, self.ujet)

    def trace(self) -> np.ndarray:
        """sum_i p^i_{a i} for each a."""
        return np.einsum("aii->a", self.pmomjet)


def same_base(a_x: np.ndarray, b_x: np.ndarray, tol: float = 1e-12) -> bool:
    return a_x.shape == b_x.shape and bool(np.all(np.abs(a_x - b_x) <= tol))


# ---------------------------------------------------------------------------
# Connections
# ---------------------------------------------------------------------------


def _nested(fields: Sequence, m: int) -> tuple[tuple[tuple[ScalarField, ...], ...], ...]:
    out = tuple(tuple(tuple(fields[k][i][j] for j in range(m)) for i in range(m)) for k in range(m))
    return out


@dataclass(frozen=True, eq=False)
class TensorField:
    """A (1,2) tensor field T^k_ij(x) given by expressions, index order [k][i][j]."""

    components: tuple[tuple[tuple[ScalarField, ...], ...], ...]

    @property
    def m(self) -> int:
        return len(self.components)

    def values(self, x: Vector) -> np.ndarray:
        m = self.m
        out = np.empty((m, m, m))
        for k in range(m):
            for i in range(m):
                for j in range(m):
                    out[k, i, j] = evaluate(self.components[k][i][j], x)
        return out


@dataclass(frozen=True, eq=False)
class Connection(TensorField):
    """Christoffel symbols Gamma^k_ij(x) of a linear connection on M.

    Attributes:
        components: gamma[k][i][j] as ScalarFields over x1..xm
        symmetric: declared symmetry Gamma^k_ij = Gamma^k_ji
    """

    symmetric: bool = True

    @property
    def gamma(self) -> tuple[tuple[tuple[ScalarField, ...], ...], ...]:
        return self.components

    @classmethod
    def flat(cls, m: int) -> Connection:
        zero = ScalarField.constant(0.0, base_names(m))
        return cls(_nested([[[zero] * m] * m] * m, m), symmetric=True)

    @classmethod
    def from_components(
        cls, m: int, entries: Mapping[tuple[int, int, int], str | Expr], symmetric: bool
    ) -> Connection:
        """Build from a sparse map (k, i, j) -> expression, indices 0-based."""
        names = base_names(m)
        grid = [[[ScalarField.constant(0.0, names) for _ in range(m)] for _ in range(m)]
                for _ in range(m)]
        for (k, i, j), expr in entries.items():
            if not all(0 <= t < m for t in (k, i, j)):
                raise ProblemError(f"Christoffel index {(k, i, j)} out of range for m={m}")
            field = (
                ScalarField.from_source(expr, names) if isinstance(expr, str)
                else ScalarField(expr, tuple(names))
            )
            grid[k][i][j] = field
        return cls(_nested(grid, m), symmetric=symmetric)

    def christoffel(self, x: Vector) -> np.ndarray:
        return self.values(x)

    def symmetry_defect(self, x: Vector) -> float:
        g = self.values(x)
        return float(np.max(np.abs(g - g.transpose(0, 2, 1))))


def torsion(connection: Connection) -> TensorField:
    """T^k_ij = Gamma^k_ij - Gamma^k_ji."""
    m, g = connection.m, connection.gamma
    names = tuple(base_names(m))
    comps = [
        [
            [ScalarField(BinOp("-", g[k][i][j].expr, g[k][j][i].expr), names) for j in range(m)]
            for i in range(m)
        ]
        for k in range(m)
    ]
    return TensorField(_nested(comps, m))


def add_torsion(connection: Connection) -> Connection:
    """The connection Gamma^k_ij + T^k_ji.

    Numerically this is the conjugate connection Gamma^k_ji; exchange maps built
    from it invert those of the original connection.
    """
    m, g = connection.m, connection.gamma
    t = torsion(connection).components
    names = tuple(base_names(m))
    comps = [
        [
            [ScalarField(BinOp("+", g[k][i][j].expr, t[k][j][i].expr), names) for j in range(m)]
            for i in range(m)
        ]
        for k in range(m)
    ]
    return Connection(_nested(comps, m), symmetric=connection.symmetric)


def random_polynomial_connection(
    m: int, rng: np.random.Generator, symmetric: bool = True, degree: int = 2,
    scale: float = 0.3,
) -> Connection:
    """Christoffel symbols with random polynomial coefficients of degree <= 2."""
    names = base_names(m)

    def poly() -> Expr:
        terms: list[Expr] = [constant(rng.uniform(-scale, scale))]
        if degree >= 1:
            terms += [mul(constant(rng.uniform(-scale, scale)), variable(v)) for v in names]
        if degree >= 2:
            for a in range(m):
                for b in range(a, m):
                    terms.append(
                        mul(constant(rng.uniform(-scale, scale)), variable(names[a]),
                            variable(names[b]))
                    )
        return add(*terms)

    entries: dict[tuple[int, int, int], Expr] = {}
    for k in range(m):
        for i in range(m):
            for j in range(m):
                if symmetric and j < i:
                    entries[(k, i, j)] = entries[(k, j, i)]
                else:
                    entries[(k, i, j)] = poly()
    return Connection.from_components(m, entries, symmetric=symmetric)


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


def _base_fields(sources: Sequence[str | ScalarField], m: int) -> tuple[ScalarField, ...]:
    names = base_names(m)
    return tuple(
        s if isinstance(s, ScalarField) else ScalarField.from_source(s, names) for s in sources
    )


@dataclass(frozen=True, eq=False)
class SectionE:
    """Local section x -> (x, phi^a(x)) of pi."""

    components: tuple[ScalarField, ...]
    m: int

    @classmethod
    def from_sources(cls, sources: Sequence[str | ScalarField], m: int) -> SectionE:
        return cls(_base_fields(sources, m), m)

    @property
    def n(self) -> int:
        return len(self.components)


@dataclass(frozen=True, eq=False)
class SectionM0:
    """Local section x -> (x, u^a(x), p^i_a(x)) of the reduced multimomentum bundle."""

    u: tuple[ScalarField, ...]
    pmom: tuple[tuple[ScalarField, ...], ...]
    m: int

    @classmethod
    def from_sources(cls, sources: Sequence[str], n: int, m: int) -> SectionM0:
        """u components first, then p^i_a row-major."""
        if len(sources) != n + n * m:
            raise DimensionMismatch(f"expected {n + n * m} components, got {len(sources)}")
        fields = _base_fields(sources, m)
        pmom = tuple(tuple(fields[n + a * m + i] for i in range(m)) for a in range(n))
        return cls(fields[:n], pmom, m)

    @property
    def n(self) -> int:
        return len(self.u)


@dataclass(frozen=True, eq=False)
class SectionMpi:
    """Local section x -> (x, u^a(x), p(x), p^i_a(x)) of Mpi."""

    u: tuple[ScalarField, ...]
    p: ScalarField
    pmom: tuple[tuple[ScalarField, ...], ...]
    m: int

    @property
    def n(self) -> int:
        return len(self.u)


def _jets(fields: Sequence[ScalarField], x: np.ndarray):
    return [eval2(f, x) for f in fields]


def prolong1(phi: SectionE, x: Vector) -> PointJ1:
    """j^1_x phi."""
    xs = np.asarray(x, dtype=float)
    jets = _jets(phi.components, xs)
    return PointJ1(xs, [j.value for j in jets], [j.grad for j in jets])


def prolong_holonomic_j1pi1(phi: SectionE, x: Vector) -> PointJ1pi1:
    """j^1(j^1 phi) at x: both first blocks equal, symmetric second block."""
    xs = np.asarray(x, dtype=float)
    jets = _jets(phi.components, xs)
    grads = [j.grad for j in jets]
    return PointJ1pi1(xs, [j.value for j in jets], grads, grads, [j.hess for j in jets])


def prolong_mpi_section(tau: SectionMpi, x: Vector) -> PointJ1pinu:
    """j^1_x of a section of Mpi."""
    xs = np.asarray(x, dtype=float)
    u_jets = _jets(tau.u, xs)
    p_jet = eval2(tau.p, xs)
    pm_jets = [_jets(row, xs) for row in tau.pmom]
    return PointJ1pinu(
        xs,
        [j.value for j in u_jets],
        p_jet.value,
        [[j.value for j in row] for row in pm_jets],
        [j.grad for j in u_jets],
        p_jet.grad,
        [[j.grad for j in row] for row in pm_jets],
    )


def prolong_m0_section(tau: SectionM0, x: Vector) -> PointJ1pinu:
    """j^1_x of a reduced section, with the p and pjet blocks left at zero."""
    xs = np.asarray(x, dtype=float)
    u_jets = _jets(tau.u, xs)
    pm_jets = [_jets(row, xs) for row in tau.pmom]
    m = xs.size
    return PointJ1pinu(
        xs,
        [j.value for j in u_jets],
        0.0,
        [[j.value for j in row] for row in pm_jets],
        [j.grad for j in u_jets],
        np.zeros(m),
        [[j.grad for j in row] for row in pm_jets],
    )


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------


def volume_form(ambient_dim: int, m: int) -> KForm:
    """d^m x on a coordinate space whose first m coordinates are x."""
    return KForm.basis(ambient_dim, *range(m))


def hodge_basis(ambient_dim: int, m: int, i: int) -> KForm:
    """d^{m-1}x_i = i_{d/dx^i} d^m x."""
    e = np.zeros(ambient_dim)
    e[i] = 1.0
    return interior(e, volume_form(ambient_dim, m))


def canonical_theta(z: PointMpi) -> KForm:
    """Theta = p d^m x + p^i_a du^a ^ d^{m-1}x_i on Mpi."""
    d = z.dims
    N = d.mpi_dim
    theta = z.p * volume_form(N, d.m)
    for a in range(d.n):
        du = KForm.basis(N, d.u_index(a))
        for i in range(d.m):
            theta = theta + z.pmom[a, i] * wedge(du, hodge_basis(N, d.m, i))
    return theta


def canonical_omega(z: PointMpi) -> KForm:
    """Omega = -dp ^ d^m x - dp^i_a ^ du^a ^ d^{m-1}x_i on Mpi (constant coefficients)."""
    d = z.dims
    N = d.mpi_dim
    omega = -wedge(KForm.basis(N, d.p_index()), volume_form(N, d.m))
    for a in range(d.n):
        du = KForm.basis(N, d.u_index(a))
        for i in range(d.m):
            dp = KForm.basis(N, d.pmom_index(a, i))
            omega = omega - wedge(wedge(dp, du), hodge_basis(N, d.m, i))
    return omega


CanonicalSpace = Literal["lambda_j1", "lambda_mpi"]


def canonical_omega_on(space: CanonicalSpace, dims: BundleDims) -> KForm:
    """Canonical multisymplectic (m+2)-form on Lambda^{m+1}_2 J1pi or Lambda^{m+1}_2 Mpi.

    lambda_j1 coordinates:  x | u | ujet | pbar_a | pbar^i_a
        -dpbar_a ^ du^a ^ d^m x - dpbar^i_a ^ du^a_i ^ d^m x
    lambda_mpi coordinates: x | u | p | pmom | pbar_a | pbar | pbar^a_i
        -dpbar_a ^ du^a ^ d^m x - dpbar ^ dp ^ d^m x - dpbar^a_i ^ dp^i_a ^ d^m x
    """
    m, n = dims.m, dims.n
    if space == "lambda_j1":
        N = dims.lambda_j1_dim
        vol = volume_form(N, m)
        offset = dims.j1_dim
        omega = KForm.zero(N, m + 2)
        for a in range(n):
            omega = omega - wedge(
                KForm.basis(N, offset + a, dims.u_index(a)), vol
            )
            for i in range(m):
                omega = omega - wedge(
                    KForm.basis(N, offset + n + a * m + i, dims.j1_ujet_index(a, i)), vol
                )
        return omega
    if space == "lambda_mpi":
        N = dims.lambda_mpi_dim
        vol = volume_form(N, m)
        offset = dims.mpi_dim
        omega = -wedge(KForm.basis(N, offset + n, dims.p_index()), vol)
        for a in range(n):
            omega = omega - wedge(KForm.basis(N, offset + a, dims.u_index(a)), vol)
            for i in range(m):
                omega = omega - wedge(
                    KForm.basis(N, offset + n + 1 + a * m + i, dims.pmom_index(a, i)), vol
                )
        return omega
    raise ProblemError(f"unknown canonical space {space!r}")


# ---------------------------------------------------------------------------
# Vertical endomorphism
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VerticalTerm:
    """(du^a - u^a_j dx^j) ^ d^{m-1}x_i  (x)  d/du^a_i."""

    alpha: int
    i: int
    factor: KForm
    output: int  # coordinate index of d/du^a_i in J1pi


def vertical_endomorphism(z: PointJ1) -> list[VerticalTerm]:
    """S_eta at z, one term per (alpha, i)."""
    d = z.dims
    N = d.j1_dim
    terms = []
    for a in range(d.n):
        contact = KForm.basis(N, d.u_index(a)) - KForm.covector(
            N, np.concatenate([z.ujet[a], np.zeros(N - d.m)])
        )
        for i in range(d.m):
            terms.append(
                VerticalTerm(a, i, wedge(contact, hodge_basis(N, d.m, i)), d.j1_ujet_index(a, i))
            )
    return terms


def contract_vertical_endomorphism(terms: Sequence[VerticalTerm], covector: Vector) -> KForm:
    """<S_eta, alpha> for a 1-form alpha given by its components."""
    if not terms:
        raise DimensionMismatch("empty vertical endomorphism")
    result = KForm.zero(terms[0].factor.ambient_dim, terms[0].factor.degree)
    for term in terms:
        result = result + covector[term.output] * term.factor
    return result


# ---------------------------------------------------------------------------
# Volume-aware operators
# ---------------------------------------------------------------------------


def d_nabla_eta(f: ScalarField, connection: Connection, x: Vector) -> np.ndarray:
    """Components df/dx^i - f * Gamma^j_ij."""
    xs = np.asarray(x, dtype=float)
    jet = eval2(f, xs)
    gamma = connection.christoffel(xs)
    return jet.grad - jet.value * np.einsum("jij->i", gamma)


def phi_nabla(
    connection: Connection, x: Vector, a: float, a_i: Vector
) -> tuple[float, np.ndarray]:
    """(a, a_i - a * Gamma^j_ij): the jet of a * d^m x mapped to T*M (x) Lambda^m M."""
    gamma = connection.christoffel(x)
    return float(a), np.asarray(a_i, dtype=float) - a * np.einsum("jij->i", gamma)


# ---------------------------------------------------------------------------
# Fibered chart changes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiberedChartChange:
    """(x, u) -> (y(x), v(x, u))."""

    base: tuple[ScalarField, ...]
    fiber: tuple[ScalarField, ...]

    def __post_init__(self):
        m = len(self.base)
        names = tuple(base_names(m))
        for f in self.base:
            if f.variable_order != names:
                raise ProblemError("base map of a fibered chart change must depend on x only")

    @classmethod
    def from_sources(cls, base: Sequence[str], fiber: Sequence[str]) -> FiberedChartChange:
        m, n = len(base), len(fiber)
        xs = base_names(m)
        return cls(
            tuple(ScalarField.from_source(s, xs) for s in base),
            tuple(ScalarField.from_source(s, xs + fiber_names(n)) for s in fiber),
        )

    @property
    def m(self) -> int:
        return len(self.base)

    @property
    def n(self) -> int:
        return len(self.fiber)

    def base_jacobian(self, x: Vector) -> tuple[np.ndarray, np.ndarray]:
        """dy/dx (m x m) and d2y/dx2 (m x m x m) at x."""
        jets = _jets(self.base, np.asarray(x, dtype=float))
        return np.array([j.grad for j in jets]), np.array([j.hess for j in jets])


def _inverse_base(c: FiberedChartChange, x: np.ndarray):
    jac, hess = c.base_jacobian(x)
    if np.linalg.cond(jac) > 1e12:
        raise SingularJacobian(f"chart change not invertible at x={x.tolist()}")
    inv = np.linalg.inv(jac)
    # d2x^i/dy^j dy^j' = -(dx^i/dy^a) d2y^a/dx^b dx^c (dx^b/dy^j)(dx^c/dy^j')
    second = -np.einsum("ia,abc,bj,cd->ijd", inv, hess, inv, inv)
    return jac, inv, second


def _transform_gamma(jac, inv, second, gamma_a) -> np.ndarray:
    inner = second + np.einsum("ij,kl,hik->hjl", inv, inv, gamma_a)
    return np.einsum("hjl,gh->gjl", inner, jac)


def transform_connection(c: FiberedChartChange, connection: Connection, x: Vector) -> np.ndarray:
    """Christoffel symbols in chart B at the image of x."""
    xs = np.asarray(x, dtype=float)
    jac, inv, second = _inverse_base(c, xs)
    return _transform_gamma(jac, inv, second, connection.christoffel(xs))


def change_chart_j1pi1(
    c: FiberedChartChange, connection: Connection, z: PointJ1pi1
) -> tuple[PointJ1pi1, np.ndarray]:
    """Express z and the Christoffel symbols at z in chart B."""
    d = z.dims
    m, n = d.m, d.n
    if c.m != m or c.n != n:
        raise DimensionMismatch("chart change and point have different dimensions")
    jac, inv, second = _inverse_base(c, z.x)

    e_point = np.concatenate([z.x, z.u])
    fjets = _jets(c.fiber, e_point)
    v = np.array([j.value for j in fjets])
    vx = np.array([j.grad[:m] for j in fjets])  # (n, m)
    vu = np.array([j.grad[m:] for j in fjets])  # (n, n)
    vxx = np.array([j.hess[:m, :m] for j in fjets])  # (n, m, m)
    vxu = np.array([j.hess[:m, m:] for j in fjets])  # (n, m, n)
    vuu = np.array([j.hess[m:, m:] for j in fjets])  # (n, n, n)

    w = vx + np.einsum("ba,ai->bi", vu, z.ujet)
    wbar = vx + np.einsum("ba,ai->bi", vu, z.ubar)

    # D_{i'} W_i along the second jet direction, with ubar as d u / dx^{i'}
    total = (
        vxx
        + np.einsum("ai,bca->bic", z.ujet, vxu)
        + np.einsum("ac,bia->bic", z.ubar, vxu)
        + np.einsum("ai,dc,bad->bic", z.ujet, z.ubar, vuu)
        + np.einsum("aic,ba->bic", z.usec, vu)
    )
    usec_b = np.einsum("bic,ij,cl->bjl", total, inv, inv) + np.einsum("bi,ijl->bjl", w, second)

    y = np.array([evaluate(f, z.x) for f in c.base])
    point_b = PointJ1pi1(y, v, w @ inv, wbar @ inv, usec_b)
    gamma_b = _transform_gamma(jac, inv, second, connection.christoffel(z.x))
    return point_b, gamma_b


def pushforward_section(
    c: FiberedChartChange, phi: SectionE, inverse_base: Sequence[str | ScalarField]
) -> SectionE:
    """The section phi written in chart B.

    Args:
        c: the chart change
        phi: section in chart A
        inverse_base: x^i as expressions of the chart-B base coordinates, written
            with the names x1..xm
    """
    m = c.m
    names = base_names(m)
    inverse = _base_fields(inverse_base, m)
    x_map = {names[i]: inverse[i].expr for i in range(m)}
    phi_b = [substitute(f.expr, x_map) for f in phi.components]
    fiber_map = dict(x_map)
    fiber_map.update({fiber_names(c.n)[a]: phi_b[a] for a in range(c.n)})
    return SectionE(
        tuple(ScalarField(substitute(f.expr, fiber_map), tuple(names)) for f in c.fiber), m
    )
