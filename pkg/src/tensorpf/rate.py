"""Linearization at the eigenvector and the spectral-gap convergence rate.

For the undamped power algorithm the error contracts asymptotically by the
factor ``r / lam_M``, where ``lam_M`` is the Perron root of ``M = DF(u)`` and
``r`` is the spectral radius of ``M - u psi^T M`` (the largest modulus among
the other eigenvalues of ``M``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import _slot_values_flat
from .dynamics import MonotoneMap, PolyMap, TensorMap, p_norm
from .exceptions import DimensionError
from .solver import EigenSolution

__all__ = [
    "RateReport",
    "jacobian",
    "spectral_radius",
    "second_modulus",
    "convergence_rate",
    "GELFAND_TOL",
    "GELFAND_MAX_SQUARINGS",
]

GELFAND_TOL = 1e-9
GELFAND_MAX_SQUARINGS = 60


@dataclass(frozen=True)
class RateReport:
    """Theoretical and measured convergence factors of the power algorithm.

    Attributes
    ----------
    M : ndarray
        Jacobian of the map at the eigenvector.
    lam_M : float
        Perron root of ``M``.
    r : float
        Spectral radius of ``M - u psi^T M``.
    rate : float
        ``r / lam_M``.
    empirical_rate : float
        Geometric mean of the last error ratios of a fresh undamped run.
    bound_ok : bool
        ``empirical_rate <= rate + 0.05``.
    euler_residual : float
        ``||M u - F(u)||_inf / ||F(u)||_inf``.
    """

    M: np.ndarray
    lam_M: float
    r: float
    rate: float
    empirical_rate: float
    bound_ok: bool
    euler_residual: float
    ratios_used: int


def _tensor_jacobian(fmap: TensorMap, x: np.ndarray) -> np.ndarray:
    T = fmap.T
    d, n = T.d, T.n
    p = np.asarray(fmap.w.p)
    P = fmap.w.pmax
    Fx = fmap._apply(x[None, :])[0]
    S = _slot_values_flat(T, x[None, :])[0]
    # dS[a, b] = d S_a / d x_b, only cross-part entries are nonzero
    dS = np.zeros((n, n))
    G = x[T.vertex_indices]
    V = T.vertex_indices
    for j in range(d):
        for k in range(d):
            if j == k:
                continue
            vals = T.coefficients.copy()
            for l in range(d):
                if l != j and l != k:
                    vals = vals * G[:, l]
            np.add.at(dS, (V[:, j], V[:, k]), vals)
    D = dS / S[:, None]
    part = np.repeat(np.arange(d), T.dims)
    pj = p[part]
    D[np.arange(n), np.arange(n)] += (P - pj) / x
    norms = np.array([p_norm(x[lo:lo + m], p[j]) for j, (lo, m) in enumerate(zip(T.offsets, T.dims))])
    same = part[:, None] == part[None, :]
    grad = x[None, :] ** (pj[:, None] - 1.0) / norms[part][:, None] ** pj[:, None]
    D += same * (pj - d)[:, None] * grad
    return Fx[:, None] / (P - 1.0) * D


def _poly_jacobian(fmap: PolyMap, x: np.ndarray) -> np.ndarray:
    Pm = fmap.P
    n = Pm.n
    comp = Pm.component_of
    Fx = fmap._apply(x[None, :])[0]
    L = fmap.log_terms(x[None, :])[0]
    logH = fmap._dmax * np.log(Fx)
    w = np.exp(L - logH[comp])  # T_m / H_i
    nrm = p_norm(x, fmap.p)
    dlognorm = x ** (fmap.p - 1.0) / nrm ** fmap.p
    # bracket[m, k] = d log T_m / d x_k
    bracket = Pm.exponents / x[None, :] + fmap._norm_exp[:, None] * dlognorm[None, :]
    bracket[np.arange(len(comp)), comp] += fmap._own / x[comp]
    J = np.zeros((n, n))
    np.add.at(J, comp, w[:, None] * bracket)
    return Fx[:, None] / fmap._dmax * J


def jacobian(fmap: MonotoneMap, u) -> np.ndarray:
    """Analytic Jacobian ``DF(u)`` at a strictly positive point.

    Entrywise nonnegative for monotone maps; satisfies ``DF(u) u = F(u)``
    by degree-one homogeneity.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (fmap.n,):
        raise DimensionError(f"expected a point of length {fmap.n}")
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise ValueError("the Jacobian is only evaluated at strictly positive points")
    if isinstance(fmap, TensorMap):
        return _tensor_jacobian(fmap, u)
    if isinstance(fmap, PolyMap):
        return _poly_jacobian(fmap, u)
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def _gelfand(A: np.ndarray, tol: float = GELFAND_TOL, max_squarings: int = GELFAND_MAX_SQUARINGS) -> float:
    """Spectral radius of any real square matrix as ``lim ||A^N||_1^{1/N}``, ``N = 2^k``.

    Each squaring works on the 1-norm-rescaled matrix and the scale is kept
    in log form. The log estimates behave like ``log rho + c / N``, so the
    returned value uses the extrapolation ``2 e_{k+1} - e_k``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("spectral radius needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    logc = 0.0
    prev = None
    N = 1.0
    for _ in range(max_squarings + 1):
        nrm = np.abs(A).sum(axis=0).max()
        if nrm == 0.0:
            return 0.0
        est = (logc + np.log(nrm)) / N
        if prev is not None and abs(est - prev) <= tol:
            return float(np.exp(2.0 * est - prev))
        prev = est
        A = A / nrm
        logc = 2.0 * (logc + np.log(nrm))
        A = A @ A
        N *= 2.0
        if not np.any(A):
            return 0.0
    return float(np.exp(prev))


def spectral_radius(M) -> float:
    """Spectral radius of a nonnegative matrix by Gelfand's formula with repeated squaring.

    Works for reducible, imprimitive and defective matrices alike; the
    relative tolerance is ``GELFAND_TOL`` with at most
    ``GELFAND_MAX_SQUARINGS`` squarings.
    """
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise ValueError("spectral_radius expects a nonnegative matrix")
    return _gelfand(M)


def second_modulus(M, u, psi) -> float:
    """Spectral radius of ``Q = M - u psi^T M``.

    When ``u`` is the Perron vector of ``M`` with ``psi^T u = 1`` this is the
    largest modulus among the remaining eigenvalues of ``M``.
    """
    M = np.asarray(M, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    psi = np.asarray(psi, dtype=float).reshape(-1)
    if M.shape != (u.size, u.size) or psi.shape != u.shape:
        raise DimensionError("shapes of M, u and psi do not match")
    if abs(psi @ u - 1.0) > 1e-10:
        raise ValueError(f"u must satisfy psi^T u = 1 (got {psi @ u!r})")
    return _gelfand(M - np.outer(u, psi @ M))


def _polish(fmap: MonotoneMap, u: np.ndarray, psi: np.ndarray, max_iter: int = 10000) -> np.ndarray:
    """Undamped iterations from ``u`` until the step stops shrinking."""
    best = np.inf
    stall = 0
    for _ in range(max_iter):
        Fx = fmap._apply(u[None, :])[0]
        un = Fx / (psi @ Fx)
        step = np.max(np.abs(un - u))
        u = un
        if step < best * 0.999:
            best = step
            stall = 0
        else:
            stall += 1
        if step == 0.0 or stall >= 5:
            break
    return u


def convergence_rate(
    fmap: MonotoneMap,
    sol: EigenSolution,
    psi=None,
    seed: int = 0,
    window: int = 20,
    max_iter: int = 10000,
    floor: float = 1e-11,
) -> RateReport:
    """Spectral-gap rate at ``sol`` and the measured rate of a fresh power run.

    The fresh run starts from a seeded standard-exponential point and
    iterates ``x <- G(x)`` without damping. Errors ``||x_k - u||_inf`` are
    recorded while above ``floor * max(u)``; the empirical rate is the
    geometric mean of the last ``window`` successive ratios (0 when the run
    lands on ``u`` at once).
    """
    psi = np.asarray(sol.psi if psi is None else psi, dtype=float)
    if psi.shape != (fmap.n,) or np.any(psi <= 0):
        raise ValueError("psi must be strictly positive with one entry per variable")
    u = np.asarray(sol.u, dtype=float)
    u = _polish(fmap, u / (psi @ u), psi)
    M = jacobian(fmap, u)
    Fu = fmap._apply(u[None, :])[0]
    euler = float(np.max(np.abs(M @ u - Fu)) / np.max(np.abs(Fu)))
    lam_M = spectral_radius(M) if np.all(M >= 0) else _gelfand(M)
    r = second_modulus(M, u, psi)
    rate = r / lam_M

    x = np.random.default_rng(seed).standard_exponential(fmap.n)
    x = x / (psi @ x)
    cutoff = floor * np.max(u)
    errors = [np.max(np.abs(x - u))]
    for _ in range(max_iter):
        if errors[-1] <= cutoff:
            break
        Fx = fmap._apply(x[None, :])[0]
        x = Fx / (psi @ Fx)
        errors.append(np.max(np.abs(x - u)))
    e = np.asarray(errors)
    ratios = e[1:] / e[:-1]
    tail = ratios[-window:]
    if tail.size == 0 or np.any(tail == 0):
        empirical = 0.0
    else:
        empirical = float(np.exp(np.mean(np.log(tail))))
    return RateReport(
        M=M,
        lam_M=float(lam_M),
        r=float(r),
        rate=float(rate),
        empirical_rate=empirical,
        bound_ok=bool(empirical <= rate + 0.05),
        euler_residual=euler,
        ratios_used=int(tail.size),
    )
