"""Degree-one homogeneous maps built from tensors and polynomial maps.

Both constructions raise their data to fractional powers, which is done in
log space on strictly positive arguments. Evaluation is therefore restricted
to the interior of the orthant; boundary points are handled by
:func:`tensorpf.solver.verify_solution` on the raw polynomial system.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .core import (
    NonnegTensor,
    NormWeights,
    PolynomialMap,
    _scatter,
    _slot_values_flat,
)
from .exceptions import DegreeError, DimensionError
from .structure import DiGraph, check_nonvanishing, poly_F_digraph, tensor_F_digraph

__all__ = [
    "MonotoneMap",
    "TensorMap",
    "PolyMap",
    "build_tensor_map",
    "build_poly_map",
    "apply",
    "hilbert_distance",
    "normalize",
    "p_norm",
]


def p_norm(X: np.ndarray, p: float) -> np.ndarray:
    """``l^p`` (quasi-)norm along the last axis, rescaled by the max to avoid overflow."""
    X = np.asarray(X, dtype=float)
    m = X.max(axis=-1, keepdims=True)
    m = np.where(m > 0, m, 1.0)
    return m[..., 0] * np.sum((X / m) ** p, axis=-1) ** (1.0 / p)


def _check_positive(X: np.ndarray, what: str = "x") -> None:
    if not np.all(np.isfinite(X)) or not np.all(X > 0):
        raise ValueError(f"{what} must be finite and strictly positive")


class MonotoneMap:
    """Common interface of the degree-one maps.

    Subclasses implement ``_apply`` on a batch of shape ``(B, n)`` without
    input checks. ``lam_exponent`` converts the eigenvalue ``mu`` of the map
    to the eigenvalue of the underlying system, ``lam = mu ** lam_exponent``.
    """

    kind: str = ""

    @property
    def n(self) -> int:
        raise NotImplementedError

    @property
    def monotone(self) -> bool:
        raise NotImplementedError

    @property
    def lam_exponent(self) -> float:
        raise NotImplementedError

    def _apply(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def digraph(self) -> DiGraph:
        raise NotImplementedError

    def apply(self, x) -> np.ndarray:
        """Evaluate the map at a strictly positive point (or a batch of them)."""
        X = np.asarray(x, dtype=float)
        if X.ndim == 0 or X.shape[-1] != self.n:
            raise DimensionError(f"expected vectors of length {self.n}, got shape {X.shape}")
        _check_positive(X)
        lead = X.shape[:-1]
        return self._apply(X.reshape(-1, self.n)).reshape(lead + (self.n,))

    __call__ = apply


class TensorMap(MonotoneMap):
    """``F_{i,j}(x) = (x_{ij}^{P-p_j} ||x_j||^{p_j-d} S_{ij}(x))^{1/(P-1)}`` with ``P = max p_j``.

    ``S_j`` is the contraction of the form against every block but ``j``.
    """

    kind = "tensor"

    def __init__(self, T: NonnegTensor, w: NormWeights):
        self.T = T
        self.w = w
        self._p = np.asarray(w.p, dtype=float)
        self._pmax = float(w.pmax)

    @property
    def n(self) -> int:
        return self.T.n

    @property
    def monotone(self) -> bool:
        return bool(self._p.min() >= self.T.d)

    @property
    def lam_exponent(self) -> float:
        return self._pmax - 1.0

    @property
    def dims(self) -> tuple:
        return self.T.dims

    def block_norms(self, X: np.ndarray) -> np.ndarray:
        """``||x_j||_{p_j}`` for every block, shape ``(B, d)``."""
        T = self.T
        out = np.empty((X.shape[0], T.d))
        for j, (lo, m) in enumerate(zip(T.offsets, T.dims)):
            out[:, j] = p_norm(X[:, lo:lo + m], self._p[j])
        return out

    def _apply(self, X: np.ndarray) -> np.ndarray:
        T = self.T
        S = _slot_values_flat(T, X)
        logn = np.log(self.block_norms(X))
        L = np.log(S)
        for j, (lo, m) in enumerate(zip(T.offsets, T.dims)):
            sl = slice(lo, lo + m)
            L[:, sl] += (self._pmax - self._p[j]) * np.log(X[:, sl])
            L[:, sl] += (self._p[j] - T.d) * logn[:, j:j + 1]
        return np.exp(L / (self._pmax - 1.0))

    def digraph(self) -> DiGraph:
        return tensor_F_digraph(self.T, self.w)

    def __repr__(self):
        return f"TensorMap(dims={self.T.dims}, p={self.w.p})"


class PolyMap(MonotoneMap):
    """``F_i(x) = (sum_m a_m x_i^{D-delta_i} (||x||_p/a)^{delta_i-|m|} x^m)^{1/D}`` with ``D = max delta_i``."""

    kind = "polymap"

    def __init__(self, P: PolynomialMap, deltas: np.ndarray, p: float, a: float):
        self.P = P
        self.deltas = deltas
        self.p = float(p)
        self.a = float(a)
        self._dmax = float(deltas.max())
        comp = P.component_of
        # per-monomial constant exponents
        self._own = self._dmax - deltas[comp]
        self._norm_exp = deltas[comp] - P.monomial_degrees
        self._logc = np.log(P.coefficients)

    @property
    def n(self) -> int:
        return self.P.n

    @property
    def monotone(self) -> bool:
        return True

    @property
    def lam_exponent(self) -> float:
        return self._dmax

    def log_terms(self, X: np.ndarray) -> np.ndarray:
        """Log of every summand ``T_m`` inside the outer power, shape ``(B, M)``."""
        P = self.P
        logx = np.log(X)
        lognorm = np.log(p_norm(X, self.p)) - np.log(self.a)
        return (
            self._logc[None, :]
            + self._own[None, :] * logx[:, P.component_of]
            + self._norm_exp[None, :] * lognorm[:, None]
            + logx @ P.exponents.T
        )

    def _apply(self, X: np.ndarray) -> np.ndarray:
        P = self.P
        L = self.log_terms(X)
        top = np.full((X.shape[0], P.n), -np.inf)
        rows = np.repeat(np.arange(X.shape[0]), L.shape[1])
        np.maximum.at(top, (rows, np.tile(P.component_of, X.shape[0])), L.ravel())
        shifted = np.exp(L - top[:, P.component_of])
        H = _scatter(shifted, P.component_of, P.n)
        return np.exp((np.log(H) + top) / self._dmax)

    def digraph(self) -> DiGraph:
        return poly_F_digraph(self.P, self.deltas)

    def __repr__(self):
        return f"PolyMap(n={self.P.n}, deltas={self.deltas.tolist()}, p={self.p}, a={self.a})"


def build_tensor_map(T: NonnegTensor, w) -> TensorMap:
    """Degree-one map of a nonnegative tensor with norm exponents ``w``.

    Raises :class:`~tensorpf.exceptions.VanishingSliceError` when some slice
    of ``T`` is identically zero. The map is monotone iff every ``p_j >= d``;
    otherwise it is still built, with ``monotone`` false.
    """
    if not isinstance(w, NormWeights):
        w = NormWeights(w)
    if len(w) == 1 and T.d > 1:
        w = NormWeights.uniform(w.p[0], T.d)
    if len(w) != T.d:
        raise DimensionError(f"{len(w)} norm exponents for a {T.d}-way tensor")
    check_nonvanishing(T)
    return TensorMap(T, w)


def build_poly_map(
    P: PolynomialMap,
    deltas: Optional[Sequence[float]] = None,
    p: float = 2.0,
    a: float = 1.0,
) -> PolyMap:
    """Degree-one map of a polynomial map.

    Parameters
    ----------
    P : PolynomialMap
    deltas : sequence of float, optional
        Exponents ``delta_i >= d_i``; default is the degrees of ``P``.
    p : float
        Exponent of the norm used to homogenize lower-degree monomials.
    a : float
        Norm scale; it only rescales the eigenvector.

    Raises
    ------
    DegreeError
        If some ``delta_i < d_i``.
    ValueError
        If ``p`` or ``a`` is not positive, or some ``P_i`` is identically zero.
    """
    if deltas is None:
        deltas = P.degrees.astype(float)
    deltas = np.array(deltas, dtype=float).reshape(-1)
    if deltas.shape == (1,) and P.n > 1:
        deltas = np.full(P.n, deltas[0])
    if deltas.shape != (P.n,):
        raise DimensionError(f"expected {P.n} exponents delta_i, got {deltas.size}")
    if not np.all(np.isfinite(deltas)):
        raise ValueError("delta_i must be finite")
    low = np.flatnonzero(deltas < P.degrees)
    if low.size:
        i = int(low[0])
        raise DegreeError(f"delta_{i} = {deltas[i]} is below the degree {int(P.degrees[i])} of component {i}")
    if not (np.isfinite(p) and p > 0):
        raise ValueError(f"norm exponent p must be positive, got {p}")
    if not (np.isfinite(a) and a > 0):
        raise ValueError(f"norm scale a must be positive, got {a}")
    empty = np.setdiff1d(np.arange(P.n), P.component_of)
    if empty.size:
        raise ValueError(f"component {int(empty[0])} is identically zero")
    if deltas.max() <= 0:
        raise DegreeError("at least one delta_i must be positive")
    deltas.flags.writeable = False
    return PolyMap(P, deltas, p, a)


def apply(Fmap: MonotoneMap, x) -> np.ndarray:
    """Evaluate ``Fmap`` at a strictly positive point."""
    return Fmap.apply(x)


def hilbert_distance(x, y) -> float:
    """Hilbert projective distance ``max log(y/x) - min log(y/x)``.

    Zero exactly when ``x`` and ``y`` are positive multiples of each other.
    Batched inputs return one distance per row.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    _check_positive(x)
    _check_positive(y)
    r = np.log(y) - np.log(x)
    out = r.max(axis=-1) - r.min(axis=-1)
    return float(out) if out.ndim == 0 else out


def normalize(Fmap: MonotoneMap, psi, x) -> np.ndarray:
    """``G(x) = F(x) / psi^T F(x)``, which lies on the slice ``psi^T y = 1``."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (Fmap.n,):
        raise DimensionError(f"psi must have length {Fmap.n}")
    if np.any(psi < 0) or not np.any(psi > 0):
        raise ValueError("psi must be nonnegative and nonzero")
    Fx = Fmap.apply(x)
    s = Fx @ psi
    if np.any(s <= 0):
        raise ZeroDivisionError("psi^T F(x) vanished")
    return Fx / np.expand_dims(s, -1)
