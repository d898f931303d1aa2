"""Index algebra for reduced Kronecker powers.

A state vector ``x`` of dimension ``n`` has, for every degree ``k``, a
reduced power: the vector of all distinct degree-``k`` monomials in the
components of ``x``.  The full k-fold Kronecker power contains ``n**k``
entries with duplicates (``x1*x2`` and ``x2*x1`` occupy separate slots);
the reduced power keeps one slot per distinct monomial, so its length is
``C(n+k-1, k)``.

The single global ordering convention is descending lexicographic order
of exponent vectors.  For ``n=2`` this yields ``(x1^2, x1*x2, x2^2)`` at
degree 2 and ``(x1^3, x1^2*x2, x1*x2^2, x2^3)`` at degree 3.  Every
weight block, parser and serialization in this package relies on it.

No multiplicity factors are folded into the reduced power: the entry for
``x1*x2`` is the value ``x1*x2``, not ``2*x1*x2``.  Coefficients that
absorb duplicate Kronecker slots live in whatever matrix multiplies the
reduced power.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector of a single monomial.

    ``MultiIndex((2, 1))`` represents ``x1^2 * x2``.
    """

    exponents: tuple[int, ...]

    def __post_init__(self):
        if len(self.exponents) == 0:
            raise ValueError("MultiIndex needs at least one exponent")
        if any(e < 0 for e in self.exponents):
            raise ValueError(f"negative exponent in {self.exponents}")
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))

    @property
    def n(self) -> int:
        return len(self.exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents)


def monomial_product(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    """Exponent-wise sum: the index of the monomial ``x^alpha * x^beta``."""
    if alpha.n != beta.n:
        raise ValueError(f"dimension mismatch: {alpha.n} vs {beta.n}")
    return MultiIndex(tuple(a + b for a, b in zip(alpha.exponents, beta.exponents)))


def monomial_count(n: int, k: int) -> int:
    """Number of distinct degree-``k`` monomials in ``n`` variables."""
    if n < 1:
        raise ValueError(f"state dimension must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    return math.comb(n + k - 1, k)


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered list of all degree-``k`` multi-indices in ``n`` variables.

    Entries are in descending lexicographic order of exponent vectors.
    Use :func:`basis` to obtain (cached) instances.
    """

    n: int
    k: int
    entries: tuple[MultiIndex, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.entries[i]

    @property
    def exponent_matrix(self) -> np.ndarray:
        """(len, n) int array of exponent vectors, one row per entry."""
        return _exponent_matrix(self.n, self.k)

    def index_of(self, alpha: MultiIndex) -> int:
        return index_of(self, alpha)


@lru_cache(maxsize=None)
def basis(n: int, k: int) -> MonomialBasis:
    """The degree-``k`` monomial basis in ``n`` variables (cached)."""
    if n < 1:
        raise ValueError(f"state dimension must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    entries = []
    # combinations_with_replacement over variable indices enumerates
    # exponent vectors exactly in descending lexicographic order
    for combo in itertools.combinations_with_replacement(range(n), k):
        exponents = [0] * n
        for var in combo:
            exponents[var] += 1
        entries.append(MultiIndex(tuple(exponents)))
    return MonomialBasis(n=n, k=k, entries=tuple(entries))


@lru_cache(maxsize=None)
def _exponent_matrix(n: int, k: int) -> np.ndarray:
    mat = np.array([b.exponents for b in basis(n, k).entries], dtype=np.int64)
    mat = mat.reshape(monomial_count(n, k), n)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _index_lookup(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {b.exponents: i for i, b in enumerate(basis(n, k).entries)}


def index_of(b: MonomialBasis, alpha: MultiIndex) -> int:
    """Position of ``alpha`` in basis ``b`` under the global ordering."""
    if alpha.n != b.n:
        raise ValueError(f"dimension mismatch: index has {alpha.n}, basis has {b.n}")
    if alpha.degree != b.k:
        raise ValueError(f"degree mismatch: index has {alpha.degree}, basis has {b.k}")
    return _index_lookup(b.n, b.k)[alpha.exponents]


def reduced_power(x, k: int) -> np.ndarray:
    """Evaluate all degree-``k`` monomials of ``x`` in basis order.

    ``k=0`` returns the one-vector ``[1.0]``; ``k=1`` returns ``x``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if k == 0:
        return np.ones(1)
    if k == 1:
        return x.copy()
    return np.prod(x[..., None, :] ** _exponent_matrix(n, k), axis=-1)


def reduced_power_jacobian(x, k: int) -> np.ndarray:
    """Jacobian of :func:`reduced_power` w.r.t. the state.

    Entry ``(i, m)`` is ``alpha_i[m] * x**(alpha_i - e_m)``.  Requires
    ``k >= 1`` (the degree-0 power is constant).
    """
    if k < 1:
        raise ValueError(f"jacobian defined for degree >= 1, got {k}")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if k == 1:
        return np.eye(n)
    exps = _exponent_matrix(n, k)
    jac = np.zeros((exps.shape[0], n))
    for m in range(n):
        rows = exps[:, m] > 0
        lowered = exps[rows].copy()
        lowered[:, m] -= 1
        jac[rows, m] = exps[rows, m] * np.prod(x ** lowered, axis=1)
    return jac


def stacked_sizes(n: int, order: int) -> list[int]:
    """Basis sizes for degrees 0..order."""
    return [monomial_count(n, k) for k in range(order + 1)]


@lru_cache(maxsize=None)
def stacked_exponents(n: int, order: int) -> np.ndarray:
    """Exponent rows for all degrees 0..order concatenated.

    Row 0 is the all-zero vector (the constant monomial), rows 1..n the
    unit vectors, and so on; feeding ``x`` through this single matrix
    evaluates every reduced power up to ``order`` in one shot.
    """
    mats = [_exponent_matrix(n, k) for k in range(order + 1)]
    out = np.vstack(mats)
    out.setflags(write=False)
    return out


def stacked_power(x, order: int) -> np.ndarray:
    """Concatenation of ``reduced_power(x, k)`` for k = 0..order."""
    x = np.asarray(x, dtype=float)
    return np.prod(x[None, :] ** stacked_exponents(x.shape[0], order), axis=1)


# ---------------------------------------------------------------------------
# Dict-based polynomial arithmetic over exponent tuples.  Used by the ODE
# parser and by map composition; coefficients are plain floats keyed by
# exponent vectors, so truncation is a degree filter on the keys.

Poly = dict[tuple[int, ...], float]


def poly_scale(p: Poly, c: float) -> Poly:
    return {e: c * v for e, v in p.items()}


def poly_add(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for e, v in q.items():
        out[e] = out.get(e, 0.0) + v
    return out


def poly_mul(p: Poly, q: Poly, max_degree: int | None = None) -> Poly:
    out: Poly = {}
    for ea, va in p.items():
        for eb, vb in q.items():
            e = tuple(a + b for a, b in zip(ea, eb))
            if max_degree is not None and sum(e) > max_degree:
                continue
            out[e] = out.get(e, 0.0) + va * vb
    return out


def poly_pow(p: Poly, e: int, n: int, max_degree: int | None = None) -> Poly:
    if e < 0:
        raise ValueError("negative power")
    out: Poly = {(0,) * n: 1.0}
    for _ in range(e):
        out = poly_mul(out, p, max_degree=max_degree)
    return out
