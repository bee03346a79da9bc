"""Nonnegative tensors, polynomial maps and their raw evaluation.

Indices are 0-based everywhere in the library. A point of the product space
``R^{m_1} x ... x R^{m_d}`` is passed either as a sequence of ``d`` blocks or
as one flat vector of length ``n = m_1 + ... + m_d`` (blocks concatenated in
slot order). Internal evaluators also accept a leading batch axis on flat
vectors, which the solvers use to iterate many starting points at once.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NegativeCoefficientError

__all__ = [
    "NonnegTensor",
    "PolynomialMap",
    "NormWeights",
    "split_blocks",
    "concat_blocks",
    "evaluate_form",
    "evaluate_slot",
    "evaluate_slots",
    "tensor_system",
    "evaluate_poly",
]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_coefficient(value, where):
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"non-finite coefficient {value!r} at {where}")
    if value < 0:
        raise NegativeCoefficientError(f"negative coefficient {value!r} at {where}")
    return value


class NonnegTensor:
    """Sparse d-way array with strictly positive stored coefficients.

    Parameters
    ----------
    dims : sequence of int
        Sizes ``m_1, ..., m_d``; ``d >= 2`` and every ``m_j >= 2``.
    entries : iterable of (multi-index, value)
        Zero values are dropped, negative values raise
        :class:`NegativeCoefficientError` and repeated multi-indices raise
        ``ValueError`` (they are never summed).

    Notes
    -----
    Entries are kept in lexicographic order of their multi-indices, so two
    tensors built from the same support compare equal regardless of input
    order.
    """

    __slots__ = ("_dims", "_idx", "_coef", "_offsets", "_flat_idx")

    def __init__(self, dims: Sequence[int], entries: Iterable):
        dims = tuple(int(m) for m in dims)
        if len(dims) < 2:
            raise ValueError(f"a multilinear form needs d >= 2 slots, got d={len(dims)}")
        if any(m < 2 for m in dims):
            raise ValueError(f"every slot dimension must be >= 2, got {dims}")
        seen = {}
        for raw_index, raw_value in entries:
            index = tuple(int(i) for i in raw_index)
            if len(index) != len(dims):
                raise DimensionError(
                    f"multi-index {index} has {len(index)} components, expected {len(dims)}"
                )
            for j, (i, m) in enumerate(zip(index, dims)):
                if not 0 <= i < m:
                    raise DimensionError(f"index {i} out of range [0, {m}) in slot {j} of {index}")
            value = _check_coefficient(raw_value, f"entry {index}")
            if index in seen:
                raise ValueError(f"duplicate multi-index {index}")
            seen[index] = value
        keys = sorted(k for k, v in seen.items() if v > 0)
        d = len(dims)
        self._dims = dims
        self._idx = _readonly(np.array(keys, dtype=np.int64).reshape(len(keys), d))
        self._coef = _readonly(np.array([seen[k] for k in keys], dtype=float))
        self._offsets = _readonly(np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(np.int64))
        self._flat_idx = _readonly(self._idx + self._offsets)

    @classmethod
    def from_dense(cls, array) -> "NonnegTensor":
        """Build from a dense nonnegative array (zeros are not stored)."""
        array = np.asarray(array, dtype=float)
        nz = np.argwhere(array != 0)
        return cls(array.shape, ((tuple(ix), array[tuple(ix)]) for ix in nz))

    @property
    def dims(self) -> tuple:
        return self._dims

    @property
    def d(self) -> int:
        return len(self._dims)

    @property
    def n(self) -> int:
        """Total number of coordinates ``sum(m_j)``."""
        return int(sum(self._dims))

    @property
    def nnz(self) -> int:
        return len(self._coef)

    @property
    def indices(self) -> np.ndarray:
        """``(nnz, d)`` read-only array of multi-indices."""
        return self._idx

    @property
    def coefficients(self) -> np.ndarray:
        return self._coef

    @property
    def offsets(self) -> np.ndarray:
        """Position of the first coordinate of each block in the flat vector."""
        return self._offsets

    @property
    def vertex_indices(self) -> np.ndarray:
        """Multi-indices shifted into flat (global vertex) numbering."""
        return self._flat_idx

    def entries(self):
        """Yield ``(multi-index, value)`` pairs in canonical order."""
        for ix, v in zip(self._idx, self._coef):
            yield tuple(int(i) for i in ix), float(v)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self._dims)
        if self.nnz:
            out[tuple(self._idx.T)] = self._coef
        return out

    def scaled(self, factor: float) -> "NonnegTensor":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return NonnegTensor(self._dims, ((ix, v * factor) for ix, v in self.entries()))

    def vertex_label(self, v: int) -> tuple:
        """Map a flat vertex number to ``(slot, index)``."""
        j = int(np.searchsorted(self._offsets, v, side="right")) - 1
        return j, int(v - self._offsets[j])

    def __eq__(self, other):
        if not isinstance(other, NonnegTensor):
            return NotImplemented
        return (
            self._dims == other._dims
            and np.array_equal(self._idx, other._idx)
            and np.array_equal(self._coef, other._coef)
        )

    def __hash__(self):
        return hash((self._dims, self._idx.tobytes(), self._coef.tobytes()))

    def __repr__(self):
        return f"NonnegTensor(dims={self._dims}, nnz={self.nnz})"


class PolynomialMap:
    """Polynomial map ``P: R^n -> R^n`` with nonnegative coefficients.

    Parameters
    ----------
    n : int
        Number of variables and of components.
    components : sequence of n sequences of (exponents, coefficient)
        Monomials of each ``P_i``. Zero coefficients are dropped; the
        degree ``d_i`` of each component is derived and must be >= 1. A
        component with no monomials is the zero polynomial and gets
        ``d_i = 0``; such maps are accepted here but rejected by
        :func:`tensorpf.dynamics.build_poly_map`.
    """

    __slots__ = ("_n", "_comp", "_exps", "_coef", "_mdeg", "_degrees")

    def __init__(self, n: int, components: Sequence):
        n = int(n)
        if n < 1:
            raise ValueError("n must be positive")
        if len(components) != n:
            raise DimensionError(f"expected {n} components, got {len(components)}")
        comp, exps, coef = [], [], []
        for i, monomials in enumerate(components):
            seen = {}
            for raw_exps, raw_coef in monomials:
                e = tuple(int(k) for k in raw_exps)
                if len(e) != n:
                    raise DimensionError(
                        f"exponent vector {e} of component {i} has length {len(e)}, expected {n}"
                    )
                if any(k < 0 for k in e):
                    raise ValueError(f"negative exponent in {e} of component {i}")
                value = _check_coefficient(raw_coef, f"component {i}, monomial {e}")
                if e in seen:
                    raise ValueError(f"duplicate monomial {e} in component {i}")
                seen[e] = value
            kept = sorted(e for e, v in seen.items() if v > 0)
            if kept and max(sum(e) for e in kept) < 1:
                raise ValueError(f"component {i} must have degree >= 1")
            for e in kept:
                comp.append(i)
                exps.append(e)
                coef.append(seen[e])
        self._n = n
        self._comp = _readonly(np.array(comp, dtype=np.int64))
        self._exps = _readonly(np.array(exps, dtype=np.int64).reshape(len(exps), n))
        self._coef = _readonly(np.array(coef, dtype=float))
        self._mdeg = _readonly(self._exps.sum(axis=1))
        degrees = np.zeros(n, dtype=np.int64)
        np.maximum.at(degrees, self._comp, self._mdeg)
        self._degrees = _readonly(degrees)

    @property
    def n(self) -> int:
        return self._n

    @property
    def degrees(self) -> np.ndarray:
        """Degrees ``d_i`` of the components (derived, never supplied)."""
        return self._degrees

    @property
    def component_of(self) -> np.ndarray:
        """Component owning each stored monomial."""
        return self._comp

    @property
    def exponents(self) -> np.ndarray:
        """``(M, n)`` exponent vectors of all stored monomials."""
        return self._exps

    @property
    def coefficients(self) -> np.ndarray:
        return self._coef

    @property
    def monomial_degrees(self) -> np.ndarray:
        return self._mdeg

    @property
    def is_homogeneous(self) -> bool:
        """True when every monomial of every component has the same degree."""
        return len(self._mdeg) == 0 or bool(np.all(self._mdeg == self._mdeg[0]))

    def components(self):
        """Return the monomial lists in the constructor's format."""
        out = [[] for _ in range(self._n)]
        for i, e, c in zip(self._comp, self._exps, self._coef):
            out[int(i)].append((tuple(int(k) for k in e), float(c)))
        return out

    def __eq__(self, other):
        if not isinstance(other, PolynomialMap):
            return NotImplemented
        return (
            self._n == other._n
            and np.array_equal(self._comp, other._comp)
            and np.array_equal(self._exps, other._exps)
            and np.array_equal(self._coef, other._coef)
        )

    def __hash__(self):
        return hash((self._n, self._exps.tobytes(), self._coef.tobytes()))

    def __repr__(self):
        return f"PolynomialMap(n={self._n}, monomials={len(self._coef)}, degrees={self._degrees.tolist()})"


@dataclass(frozen=True)
class NormWeights:
    """Norm exponents ``p_1, ..., p_d``, each strictly greater than one."""

    p: tuple

    def __init__(self, p):
        p = tuple(float(v) for v in np.atleast_1d(p))
        if not p:
            raise ValueError("at least one norm exponent is required")
        for v in p:
            if not np.isfinite(v) or v <= 1:
                raise ValueError(f"norm exponents must lie in (1, inf), got {v}")
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, p: float, d: int) -> "NormWeights":
        return cls([p] * d)

    @property
    def pmax(self) -> float:
        return max(self.p)

    def __len__(self):
        return len(self.p)


def split_blocks(x, dims):
    """Split a flat vector (last axis) into blocks of sizes ``dims``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sum(dims):
        raise DimensionError(f"vector of length {x.shape[-1]} does not match dims {tuple(dims)}")
    return np.split(x, np.cumsum(dims)[:-1], axis=-1)


def concat_blocks(blocks):
    return np.concatenate([np.asarray(b, dtype=float) for b in blocks], axis=-1)


def _as_flat(T: NonnegTensor, x) -> np.ndarray:
    """Accept a sequence of blocks or a flat (possibly batched) vector."""
    if isinstance(x, (list, tuple)) and len(x) == T.d and all(np.ndim(b) == 1 for b in x):
        lengths = tuple(len(b) for b in x)
        if lengths == T.dims:
            return concat_blocks(x)
        if any(k != T.n for k in lengths):
            raise DimensionError(f"block lengths {lengths} do not match tensor dims {T.dims}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != T.n:
        raise DimensionError(f"expected a vector of length {T.n} or {T.d} blocks of sizes {T.dims}")
    return x


def _gather(T: NonnegTensor, X: np.ndarray) -> np.ndarray:
    """Values ``x_{i_k,k}`` for every stored entry: shape ``(B, nnz, d)``."""
    return X[:, T.vertex_indices]


def _scatter(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Row-wise ``out[b, index[e]] += values[b, e]`` via a single bincount."""
    B = values.shape[0]
    ids = (np.arange(B)[:, None] * size + index[None, :]).ravel()
    return np.bincount(ids, weights=values.ravel(), minlength=B * size).reshape(B, size)


def _slot_values_flat(T: NonnegTensor, X: np.ndarray) -> np.ndarray:
    """Stacked slot contractions for a batch ``X`` of shape ``(B, n)``."""
    B = X.shape[0]
    out = np.empty((B, T.n))
    if T.nnz == 0:
        out[:] = 0.0
        return out
    G = _gather(T, X)
    d = T.d
    # prefix/suffix products give prod_{k != j} without dividing by zeros
    prefix = np.ones((B, T.nnz, d + 1))
    suffix = np.ones((B, T.nnz, d + 1))
    for k in range(d):
        prefix[:, :, k + 1] = prefix[:, :, k] * G[:, :, k]
        suffix[:, :, d - k - 1] = suffix[:, :, d - k] * G[:, :, d - k - 1]
    for j in range(d):
        vals = prefix[:, :, j] * suffix[:, :, j + 1] * T.coefficients
        lo = T.offsets[j]
        out[:, lo:lo + T.dims[j]] = _scatter(vals, T.indices[:, j], T.dims[j])
    return out


def evaluate_slots(T: NonnegTensor, x) -> np.ndarray:
    """All slot contractions stacked into one flat vector (batch-aware)."""
    X = _as_flat(T, x)
    lead = X.shape[:-1]
    return _slot_values_flat(T, X.reshape(-1, T.n)).reshape(lead + (T.n,))


def evaluate_form(T: NonnegTensor, x) -> float:
    """Value of the multilinear form ``sum f_{i_1..i_d} x_{i_1,1} ... x_{i_d,d}``."""
    X = _as_flat(T, x)
    if X.ndim != 1:
        raise DimensionError("evaluate_form expects a single point")
    if T.nnz == 0:
        return 0.0
    G = X[T.vertex_indices]
    return float(np.prod(G, axis=1) @ T.coefficients)


def evaluate_slot(T: NonnegTensor, j: int, x) -> np.ndarray:
    """Contraction of the form against every block except slot ``j``.

    Component ``i`` equals ``sum f_{i_1..i_d} prod_{k != j} x_{i_k,k}`` over
    multi-indices with ``i_j = i``; this is the left-hand side of the
    critical-point equations.
    """
    if not 0 <= j < T.d:
        raise IndexError(f"slot {j} out of range for a {T.d}-way tensor")
    X = _as_flat(T, x)
    if X.ndim != 1:
        raise DimensionError("evaluate_slot expects a single point")
    lo = T.offsets[j]
    return _slot_values_flat(T, X[None, :])[0, lo:lo + T.dims[j]]


def tensor_system(T: NonnegTensor) -> PolynomialMap:
    """Polynomial map over the concatenated variables whose components are the slot contractions.

    Every component is homogeneous of degree ``d - 1``.
    """
    comps = [[] for _ in range(T.n)]
    for flat, coef in zip(T.vertex_indices, T.coefficients):
        for j in range(T.d):
            e = np.zeros(T.n, dtype=np.int64)
            e[np.delete(flat, j)] = 1
            comps[int(flat[j])].append((e, coef))
    return PolynomialMap(T.n, comps)


def _poly_monomials(P: PolynomialMap, X: np.ndarray) -> np.ndarray:
    """Monomial values ``x^j`` for a batch, shape ``(B, M)``."""
    return np.prod(X[:, None, :] ** P.exponents[None, :, :], axis=2)


def _poly_flat(P: PolynomialMap, X: np.ndarray) -> np.ndarray:
    vals = _poly_monomials(P, X) * P.coefficients
    return _scatter(vals, P.component_of, P.n)


def evaluate_poly(P: PolynomialMap, x) -> np.ndarray:
    """Evaluate ``P`` componentwise (batch-aware on the leading axes)."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 0 or X.shape[-1] != P.n:
        raise DimensionError(f"expected a vector of length {P.n}")
    lead = X.shape[:-1]
    return _poly_flat(P, X.reshape(-1, P.n)).reshape(lead + (P.n,))
