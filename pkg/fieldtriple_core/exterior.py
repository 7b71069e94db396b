"""Exterior algebra on a single coordinate tangent space.

Forms are stored sparsely: a degree-k form on R^N is a map from strictly
increasing k-tuples of 0-based indices to real coefficients. Everything here is
pointwise linear algebra; no form fields and no exterior derivative.

Used for the canonical forms of the multimomentum bundles, the flat map v -> i_v w,
l-orthogonal complements and the (pre)multisymplectic isotropy classification.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from types import MappingProxyType

import numpy as np
from scipy import linalg

from config.logging import get_logger
from fieldtriple_core.config import get_config
from fieldtriple_core.errors import DimensionMismatch, RankDeficiency

logger = get_logger("exterior")

Index = tuple[int, ...]


def _sort_with_sign(indices: Sequence[int]) -> tuple[Index | None, int]:
    """Sort an index tuple, returning the permutation sign (None if repeated)."""
    items = list(indices)
    if len(set(items)) != len(items):
        return None, 0
    sign = 1
    # insertion sort, counting transpositions
    for i in range(1, len(items)):
        j = i
        while j > 0 and items[j - 1] > items[j]:
            items[j - 1], items[j] = items[j], items[j - 1]
            sign = -sign
            j -= 1
    return tuple(items), sign


@dataclass(frozen=True, eq=False)
class KForm:
    """Antisymmetric k-linear form on R^N with sparse coefficients.

    Attributes:
        ambient_dim: N
        degree: k
        coeffs: strictly increasing k-tuples (0-based) -> coefficient
    """

    ambient_dim: int
    degree: int
    coeffs: Mapping[Index, float] = field(default_factory=dict)

    # keep numpy scalars from broadcasting over forms
    __array_ufunc__ = None

    def __post_init__(self):
        if self.ambient_dim < 0 or self.degree < 0:
            raise DimensionMismatch("negative dimension or degree")
        clean: dict[Index, float] = {}
        for key, value in self.coeffs.items():
            key = tuple(int(i) for i in key)
            if len(key) != self.degree:
                raise DimensionMismatch(
                    f"key {key} has length {len(key)}, expected {self.degree}"
                )
            if any(b <= a for a, b in zip(key, key[1:])):
                raise DimensionMismatch(f"key {key} is not strictly increasing")
            if key and (key[0] < 0 or key[-1] >= self.ambient_dim):
                raise DimensionMismatch(f"key {key} out of range for N={self.ambient_dim}")
            if value != 0.0:
                clean[key] = float(value)
        object.__setattr__(self, "coeffs", MappingProxyType(clean))

    @classmethod
    def zero(cls, ambient_dim: int, degree: int) -> KForm:
        return cls(ambient_dim, degree, {})

    @classmethod
    def scalar(cls, ambient_dim: int, value: float) -> KForm:
        return cls(ambient_dim, 0, {(): value})

    @classmethod
    def covector(cls, ambient_dim: int, components: Iterable[float]) -> KForm:
        """The 1-form sum_i c_i dx^i."""
        comps = list(components)
        if len(comps) != ambient_dim:
            raise DimensionMismatch(f"expected {ambient_dim} components, got {len(comps)}")
        return cls(ambient_dim, 1, {(i,): c for i, c in enumerate(comps)})

    @classmethod
    def basis(cls, ambient_dim: int, *indices: int) -> KForm:
        """dx^{i1} ^ ... ^ dx^{ik} for arbitrary (possibly unsorted) indices."""
        key, sign = _sort_with_sign(indices)
        if key is None:
            return cls.zero(ambient_dim, len(indices))
        return cls(ambient_dim, len(indices), {key: float(sign)})

    def _check_compatible(self, other: KForm) -> None:
        if self.ambient_dim != other.ambient_dim:
            raise DimensionMismatch(
                f"ambient dimensions differ: {self.ambient_dim} vs {other.ambient_dim}"
            )

    def __add__(self, other: KForm) -> KForm:
        self._check_compatible(other)
        if self.degree != other.degree:
            raise DimensionMismatch(f"degrees differ: {self.degree} vs {other.degree}")
        out = dict(self.coeffs)
        for key, value in other.coeffs.items():
            out[key] = out.get(key, 0.0) + value
        return KForm(self.ambient_dim, self.degree, out)

    def __neg__(self) -> KForm:
        return KForm(self.ambient_dim, self.degree, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other: KForm) -> KForm:
        return self + (-other)

    def __mul__(self, scalar: float) -> KForm:
        s = float(scalar)
        return KForm(self.ambient_dim, self.degree, {k: s * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"KForm(N={self.ambient_dim}, k={self.degree}, nnz={len(self.coeffs)})"

    def coefficient(self, *indices: int) -> float:
        """Coefficient of dx^{i1} ^ ... in the sorted basis, sign included."""
        key, sign = _sort_with_sign(indices)
        if key is None:
            return 0.0
        return sign * self.coeffs.get(key, 0.0)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)


def distance(a: KForm, b: KForm) -> float:
    """Largest coefficient difference between two forms of equal shape."""
    return (a - b).max_abs()


def wedge(a: KForm, b: KForm) -> KForm:
    """Exterior product a ^ b."""
    a._check_compatible(b)
    degree = a.degree + b.degree
    if degree > a.ambient_dim:
        return KForm.zero(a.ambient_dim, degree)
    out: dict[Index, float] = {}
    for ka, va in a.coeffs.items():
        for kb, vb in b.coeffs.items():
            key, sign = _sort_with_sign(ka + kb)
            if key is None:
                continue
            out[key] = out.get(key, 0.0) + sign * va * vb
    return KForm(a.ambient_dim, degree, out)


def wedge_all(forms: Sequence[KForm]) -> KForm:
    """a_1 ^ a_2 ^ ... (left to right)."""
    result = forms[0]
    for form in forms[1:]:
        result = wedge(result, form)
    return result


def interior(v: Sequence[float] | np.ndarray, omega: KForm) -> KForm:
    """Contraction i_v omega into the first slot."""
    vec = np.asarray(v, dtype=float)
    if vec.shape != (omega.ambient_dim,):
        raise DimensionMismatch(
            f"vector of shape {vec.shape} against N={omega.ambient_dim}"
        )
    if omega.degree == 0:
        raise DimensionMismatch("cannot contract a 0-form")
    out: dict[Index, float] = {}
    for key, value in omega.coeffs.items():
        for slot, idx in enumerate(key):
            if vec[idx] == 0.0:
                continue
            rest = key[:slot] + key[slot + 1 :]
            sign = -1.0 if slot % 2 else 1.0
            out[rest] = out.get(rest, 0.0) + sign * vec[idx] * value
    return KForm(omega.ambient_dim, omega.degree - 1, out)


def evaluate(omega: KForm, vectors: Sequence[Sequence[float]]) -> float:
    """omega(v_1, ..., v_k)."""
    if len(vectors) != omega.degree:
        raise DimensionMismatch(f"expected {omega.degree} vectors, got {len(vectors)}")
    if omega.degree == 0:
        return omega.coeffs.get((), 0.0)
    mat = np.array(vectors, dtype=float).T  # N x k
    if mat.shape[0] != omega.ambient_dim:
        raise DimensionMismatch(f"vectors live in R^{mat.shape[0]}, form in R^{omega.ambient_dim}")
    total = 0.0
    for key, value in omega.coeffs.items():
        total += value * float(np.linalg.det(mat[list(key), :]))
    return total


def pullback(jacobian: np.ndarray, omega: KForm) -> KForm:
    """Pull omega back through a linear map with the given Jacobian.

    Args:
        jacobian: (N, M) matrix, N = omega.ambient_dim (target), M = source dim
        omega: form on the target R^N

    Returns:
        The form v_1..v_k -> omega(J v_1, ..., J v_k) on R^M
    """
    jac = np.asarray(jacobian, dtype=float)
    if jac.ndim != 2 or jac.shape[0] != omega.ambient_dim:
        raise DimensionMismatch(
            f"Jacobian of shape {jac.shape} cannot pull back a form on R^{omega.ambient_dim}"
        )
    source_dim = jac.shape[1]
    if omega.degree == 0:
        return KForm(source_dim, 0, dict(omega.coeffs))
    rows = {}
    result = KForm.zero(source_dim, omega.degree)
    for key, value in omega.coeffs.items():
        factors = []
        for idx in key:
            if idx not in rows:
                rows[idx] = KForm.covector(source_dim, jac[idx])
            factors.append(rows[idx])
        result = result + value * wedge_all(factors)
    return result


def derivation(h: np.ndarray, omega: KForm) -> KForm:
    """Slot-sum derivation (i_h omega)(X_1..X_k) = sum_s omega(.., h X_s, ..).

    Args:
        h: (N, N) matrix of a linear endomorphism
        omega: form on R^N
    """
    mat = np.asarray(h, dtype=float)
    n = omega.ambient_dim
    if mat.shape != (n, n):
        raise DimensionMismatch(f"endomorphism of shape {mat.shape} on R^{n}")
    out: dict[Index, float] = {}
    for key, value in omega.coeffs.items():
        for slot, j in enumerate(key):
            for i in np.flatnonzero(mat[j]):
                moved = key[:slot] + (int(i),) + key[slot + 1 :]
                sorted_key, sign = _sort_with_sign(moved)
                if sorted_key is None:
                    continue
                out[sorted_key] = out.get(sorted_key, 0.0) + sign * value * mat[j, i]
    return KForm(n, omega.degree, out)


def flat_matrix(omega: KForm) -> np.ndarray:
    """Matrix of v -> i_v omega, one row per non-zero (k-1)-tuple."""
    if omega.degree == 0:
        raise DimensionMismatch("flat map needs degree >= 1")
    row_of: dict[Index, int] = {}
    entries: list[tuple[int, int, float]] = []
    for key, value in omega.coeffs.items():
        for slot, idx in enumerate(key):
            rest = key[:slot] + key[slot + 1 :]
            row = row_of.setdefault(rest, len(row_of))
            entries.append((row, idx, -value if slot % 2 else value))
    mat = np.zeros((len(row_of), omega.ambient_dim))
    for row, col, value in entries:
        mat[row, col] += value
    return mat


def _tau(tau: float | None) -> float:
    return get_config().tau_rank if tau is None else tau


def numerical_rank(matrix: np.ndarray, tau: float | None = None) -> int:
    """Rank with singular values below tau * sigma_max treated as zero."""
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    if mat.size == 0:
        return 0
    sv = linalg.svdvals(mat)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > _tau(tau) * sv[0]))


def _nullspace(matrix: np.ndarray, ambient_dim: int, tau: float | None) -> np.ndarray:
    if matrix.shape[0] == 0 or not np.any(matrix):
        return np.eye(ambient_dim)
    return linalg.null_space(matrix, rcond=_tau(tau)).T


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of R^N given by independent basis vectors (rows)."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        if self.ambient_dim == 0:
            arr = np.zeros((0, 0))
        else:
            arr = np.asarray(self.basis, dtype=float).reshape(-1, self.ambient_dim)
        arr.setflags(write=False)
        object.__setattr__(self, "basis", arr)

    @classmethod
    def span(
        cls, vectors: Sequence[Sequence[float]] | np.ndarray, ambient_dim: int,
        tau: float | None = None,
    ) -> Subspace:
        """Orthonormal basis of the span of arbitrary (possibly dependent) vectors."""
        mat = np.asarray(vectors, dtype=float).reshape(-1, ambient_dim)
        if mat.shape[0] == 0 or not np.any(mat):
            return cls(ambient_dim, np.zeros((0, ambient_dim)))
        _, sv, vt = linalg.svd(mat, full_matrices=False)
        rank = int(np.sum(sv > _tau(tau) * sv[0]))
        return cls(ambient_dim, vt[:rank])

    @classmethod
    def from_generators(
        cls, vectors: Sequence[Sequence[float]] | np.ndarray, ambient_dim: int,
        tau: float | None = None,
    ) -> Subspace:
        """Subspace from generators that must be linearly independent."""
        mat = np.asarray(vectors, dtype=float).reshape(-1, ambient_dim)
        rank = numerical_rank(mat, tau) if mat.shape[0] else 0
        if rank != mat.shape[0]:
            raise RankDeficiency(f"{mat.shape[0]} generators span only {rank} dimensions")
        return cls(ambient_dim, mat)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def __repr__(self) -> str:
        return f"Subspace(N={self.ambient_dim}, dim={self.dim})"

    def contains(self, other: Subspace, tau: float | None = None) -> bool:
        """other is a subspace of self."""
        if other.dim == 0:
            return True
        stacked = np.vstack([self.basis, other.basis])
        return numerical_rank(stacked, tau) == self.dim

    def same_as(self, other: Subspace, tau: float | None = None) -> bool:
        return self.contains(other, tau) and other.contains(self, tau)

    def intersection_dim(self, other: Subspace, tau: float | None = None) -> int:
        if self.dim == 0 or other.dim == 0:
            return 0
        stacked = np.vstack([self.basis, other.basis])
        return self.dim + other.dim - numerical_rank(stacked, tau)


def flat_kernel(omega: KForm, tau: float | None = None) -> Subspace:
    """ker of v -> i_v omega."""
    if omega.degree == 0:
        raise DimensionMismatch("flat map needs degree >= 1")
    null = _nullspace(flat_matrix(omega), omega.ambient_dim, tau)
    return Subspace(omega.ambient_dim, null)


def l_orthogonal(W: Subspace, omega: KForm, l: int, tau: float | None = None) -> Subspace:
    """W^{perp,l} = {v : i_{v ^ w_1 ^ ... ^ w_l} omega = 0 for all w_i in W}.

    Enumerates every l-combination of W's basis; the cost grows like
    C(dim W, l) * C(N, k - l).
    """
    if W.ambient_dim != omega.ambient_dim:
        raise DimensionMismatch("subspace and form live in different spaces")
    k = omega.degree - 1
    if not 1 <= l <= k:
        raise DimensionMismatch(f"l={l} out of range 1..{k}")
    blocks = []
    for combo in combinations(range(W.dim), l):
        beta = omega
        for idx in combo:
            beta = interior(W.basis[idx], beta)
        if beta.coeffs:
            blocks.append(flat_matrix(beta))
    stacked = np.vstack(blocks) if blocks else np.zeros((0, omega.ambient_dim))
    return Subspace(omega.ambient_dim, _nullspace(stacked, omega.ambient_dim, tau))


@dataclass(frozen=True)
class Classification:
    """Isotropy flags of a subspace with respect to a form."""

    l_isotropic: bool
    l_coisotropic: bool
    l_lagrangian: bool
    multisymplectic: bool


@dataclass(frozen=True, eq=False)
class Quotient:
    """V/K realized on a coordinate complement of K.

    Attributes:
        complement: standard-basis indices chosen to complete K
        projection: (q, N) matrix of the quotient map
        form: the pushed-forward form on R^q
    """

    complement: tuple[int, ...]
    projection: np.ndarray
    form: KForm

    def push(self, W: Subspace, tau: float | None = None) -> Subspace:
        image = W.basis @ self.projection.T if W.dim else np.zeros((0, len(self.complement)))
        return Subspace.span(image, len(self.complement), tau)


def quotient(omega: KForm, kernel: Subspace, tau: float | None = None) -> Quotient:
    """Complete kernel to a basis (lowest standard index first) and push omega down."""
    n = omega.ambient_dim
    chosen: list[int] = []
    current = kernel.basis
    rank = kernel.dim
    for j in range(n):
        if rank == n:
            break
        candidate = np.vstack([current, np.eye(n)[j]])
        if numerical_rank(candidate, tau) > rank:
            current = candidate
            chosen.append(j)
            rank += 1
    change = current.T  # columns: kernel basis then chosen unit vectors
    coords = linalg.solve(change, np.eye(n))
    projection = coords[kernel.dim :, :]
    inclusion = np.eye(n)[:, chosen]
    logger.debug(f"Quotient by {kernel.dim}-dim kernel keeps coordinates {chosen}")
    return Quotient(tuple(chosen), projection, pullback(inclusion, omega))


def classify(
    W: Subspace,
    omega: KForm,
    l: int,
    premultisymplectic: bool = False,
    tau: float | None = None,
) -> Classification:
    """l-isotropy flags of W, optionally after quotienting by ker(flat omega)."""
    if premultisymplectic:
        kernel = flat_kernel(omega, tau)
        if kernel.dim:
            q = quotient(omega, kernel, tau)
            return classify(q.push(W, tau), q.form, l, premultisymplectic=False, tau=tau)
    if omega.ambient_dim == 0:
        return Classification(True, True, True, True)
    perp = l_orthogonal(W, omega, l, tau)
    isotropic = perp.contains(W, tau)
    coisotropic = W.contains(perp, tau)
    k = omega.degree - 1
    perp_k = perp if l == k else l_orthogonal(W, omega, k, tau)
    return Classification(
        l_isotropic=isotropic,
        l_coisotropic=coisotropic,
        l_lagrangian=isotropic and coisotropic,
        multisymplectic=W.intersection_dim(perp_k, tau) == 0,
    )
