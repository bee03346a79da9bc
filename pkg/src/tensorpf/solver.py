"""Power algorithm, Collatz-Wielandt certificates and multi-start search.

The power algorithm iterates ``x <- (1 - theta) x + theta G(x)`` on the slice
``psi^T x = 1`` with ``G(x) = F(x) / psi^T F(x)``. Every iterate comes with
the bracket ``[min F_i/x_i, max F_i/x_i]``, which contains the eigenvalue of
a monotone map, so a converged run carries an a posteriori certificate.

Multi-start search is meant for the non-monotone regime, where several
positive solutions can coexist. For tensor maps it runs on the product of
unit spheres (each block rescaled to unit ``p_j``-norm after every step),
which removes the neutral and expanding directions that block rescalings
introduce when some ``p_j < d``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import NonnegTensor, NormWeights, PolynomialMap, _poly_flat, _slot_values_flat
from .dynamics import MonotoneMap, PolyMap, TensorMap, build_poly_map, p_norm
from .exceptions import (
    DegreeError,
    DimensionError,
    MaxIterExceeded,
    NonMonotoneMap,
    NotPrimitive,
)
from .structure import is_primitive_digraph

__all__ = [
    "SolverConfig",
    "EigenSolution",
    "SearchResult",
    "VerifyReport",
    "ComplexCheck",
    "power_solve",
    "collatz_wielandt_bounds",
    "block_normalize",
    "multi_start_solve",
    "verify_solution",
    "verify_complex_eigenpair",
    "DEDUP_DISTANCE",
]

DEDUP_DISTANCE = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by :func:`power_solve` and :func:`multi_start_solve`.

    Parameters
    ----------
    psi : array_like, optional
        Strictly positive normalization functional; all-ones by default.
    tol : float
        Threshold on the Hilbert step, the relative Collatz-Wielandt gap and
        the relative eigen-residual.
    max_iter : int
    damping : float, optional
        ``theta`` in ``(0, 1]``. ``None`` picks 1 for monotone maps and 0.5
        otherwise.
    seed, starts : int
        Random starts for the multi-start search; start ``i`` draws from
        ``numpy.random.default_rng([seed, i])``.
    allow_nonprimitive : bool
        Run the power algorithm on strongly connected but imprimitive
        di-graphs (with a warning) instead of raising.
    uniform_start : bool
        Add the all-equal point to the random starts of the search. It lies
        on every symmetric subspace and so reaches symmetric solutions that
        are unstable for the iteration.
    """

    psi: Optional[np.ndarray] = None
    tol: float = 1e-10
    max_iter: int = 10000
    damping: Optional[float] = None
    seed: int = 0
    starts: int = 100
    allow_nonprimitive: bool = False
    uniform_start: bool = True

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.damping is not None and not (0 < self.damping <= 1):
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if int(self.starts) < 0:
            raise ValueError("starts must be nonnegative")
        if self.psi is not None:
            psi = np.array(self.psi, dtype=float).reshape(-1)
            if not np.all(np.isfinite(psi)) or np.any(psi <= 0):
                raise ValueError("psi must be strictly positive")
            psi.flags.writeable = False
            object.__setattr__(self, "psi", psi)

    def psi_for(self, n: int) -> np.ndarray:
        if self.psi is None:
            return np.ones(n)
        if self.psi.shape != (n,):
            raise DimensionError(f"psi has length {self.psi.size}, the map has {n} variables")
        return np.asarray(self.psi)

    def theta_for(self, fmap: MonotoneMap) -> float:
        if self.damping is not None:
            return float(self.damping)
        return 1.0 if fmap.monotone else 0.5


@dataclass
class EigenSolution:
    """Positive eigenvector of a degree-one map together with its certificates.

    Attributes
    ----------
    u : ndarray
        Eigenvector on the slice ``psi^T u = 1``.
    mu : float
        Eigenvalue of the map, ``mu = psi^T F(u)``.
    lam : float
        Eigenvalue of the underlying system, ``mu ** (max p - 1)`` for
        tensors and ``mu ** max(delta)`` for polynomial maps.
    x : ndarray
        ``u`` rescaled to the system normalization: unit ``p_j``-norm blocks
        for tensors, ``||x||_p = a`` for polynomial maps.
    blocks : tuple of ndarray or None
        ``x`` split per slot (tensors only).
    iterations : int
    residual : float
        ``max |F(u) - mu u| / max F(u)``.
    system_residual : float
        ``max |LHS_i(x) - lam x_i^{e_i}|`` on the raw system.
    cw_trace : ndarray, shape (k, 2)
        Collatz-Wielandt bracket at every iterate, last row at ``u``.
    converged : bool
    notes : list of str
    """

    u: np.ndarray
    mu: float
    lam: float
    x: np.ndarray
    blocks: Optional[tuple]
    iterations: int
    residual: float
    system_residual: float
    cw_trace: np.ndarray
    converged: bool
    psi: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def bracket(self) -> tuple:
        lo, hi = self.cw_trace[-1]
        return float(lo), float(hi)


class SearchResult(list):
    """Distinct solutions of a multi-start search, plus a summary of the rest.

    ``failures`` lists ``(start, reason)`` pairs for starts that did not
    converge; ``start`` is the random start index or ``"uniform"``.
    """

    def __init__(self, solutions, attempted: int, failures):
        super().__init__(solutions)
        self.attempted = attempted
        self.failures = list(failures)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def summary(self) -> dict:
        reasons = {}
        for _, why in self.failures:
            reasons[why] = reasons.get(why, 0) + 1
        return {
            "starts": self.attempted,
            "converged": self.attempted - len(self.failures),
            "distinct": len(self),
            "failed": dict(sorted(reasons.items())),
        }


@dataclass(frozen=True)
class VerifyReport:
    """Residual of a candidate solution on the raw system."""

    residual: float
    norm_deviations: tuple
    lam: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol and all(dv <= self.tol for dv in self.norm_deviations)

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class ComplexCheck:
    residual: float
    modulus: float
    lam: float
    bound_ok: bool


def _require_positive(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("x must be finite and strictly positive")


def _require_nonnegative(x: np.ndarray) -> None:
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("candidate must be finite and nonnegative")


def collatz_wielandt_bounds(fmap: MonotoneMap, x) -> tuple:
    """Return ``(min_i F_i(x)/x_i, max_i F_i(x)/x_i)``.

    For a monotone map the eigenvalue of every positive eigenvector lies in
    this interval, whatever positive ``x`` is used.
    """
    x = np.asarray(x, dtype=float)
    _require_positive(x)
    r = fmap.apply(x) / x
    return float(r.min()), float(r.max())


def _system_vector(fmap: MonotoneMap, u: np.ndarray) -> np.ndarray:
    """Rescale an eigenvector to the system normalization."""
    if isinstance(fmap, TensorMap):
        return _unit_blocks(fmap, u[None, :])[0]
    return fmap.a * u / p_norm(u, fmap.p)


def _unit_blocks(fmap: TensorMap, X: np.ndarray) -> np.ndarray:
    out = np.empty_like(X)
    norms = fmap.block_norms(X)
    for j, (lo, m) in enumerate(zip(fmap.T.offsets, fmap.T.dims)):
        out[:, lo:lo + m] = X[:, lo:lo + m] / norms[:, j:j + 1]
    return out


def _split(fmap: MonotoneMap, x: np.ndarray):
    if isinstance(fmap, TensorMap):
        return tuple(np.split(x, np.cumsum(fmap.T.dims)[:-1]))
    return None


def _system_of(fmap: MonotoneMap):
    if isinstance(fmap, TensorMap):
        return fmap.T, fmap.w
    return fmap


def _make_solution(fmap, u, psi, iterations, trace, converged, notes=()):
    Fu = fmap.apply(u)
    mu = float(psi @ Fu)
    resid = float(np.max(np.abs(Fu - mu * u)) / np.max(Fu))
    lam = mu ** fmap.lam_exponent
    x = _system_vector(fmap, u)
    rep = verify_solution(_system_of(fmap), x, lam=lam, tol=np.inf)
    return EigenSolution(
        u=u,
        mu=mu,
        lam=lam,
        x=x,
        blocks=_split(fmap, x),
        iterations=int(iterations),
        residual=resid,
        system_residual=rep.residual,
        cw_trace=np.asarray(trace, dtype=float).reshape(-1, 2),
        converged=bool(converged),
        psi=psi,
        notes=list(notes),
    )


def _check_primitive(fmap: MonotoneMap, allow: bool) -> list:
    verdict = is_primitive_digraph(fmap.digraph())
    if verdict.holds:
        return []
    strongly = verdict.cyclicity is not None
    if strongly and allow:
        msg = f"di-graph is strongly connected but has cyclicity {verdict.cyclicity}; convergence is not guaranteed"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return [msg]
    if strongly:
        raise NotPrimitive(
            f"di-graph of the map has cyclicity {verdict.cyclicity}",
            cyclicity=verdict.cyclicity,
            strongly_connected=True,
        )
    raise NotPrimitive("di-graph of the map is not strongly connected", cyclicity=None)


def power_solve(fmap: MonotoneMap, cfg: Optional[SolverConfig] = None, x0=None) -> EigenSolution:
    """Power algorithm for a monotone map with a weakly primitive di-graph.

    Stops once the Hilbert distance between successive iterates, the
    relative Collatz-Wielandt gap ``(upper - lower) / upper`` and the relative
    eigen-residual are all below ``cfg.tol``.

    Raises
    ------
    NonMonotoneMap
        For maps with some ``p_j < d``; use :func:`multi_start_solve`.
    NotPrimitive
        When the di-graph of the map is not weakly primitive (unless
        ``cfg.allow_nonprimitive`` and it is at least strongly connected).
    MaxIterExceeded
        With the last iterate attached as ``exc.solution``.
    """
    cfg = cfg or SolverConfig()
    if not fmap.monotone:
        raise NonMonotoneMap(f"{fmap!r} is not monotone; the power algorithm does not apply")
    notes = _check_primitive(fmap, cfg.allow_nonprimitive)
    psi = cfg.psi_for(fmap.n)
    theta = cfg.theta_for(fmap)
    x = np.ones(fmap.n) if x0 is None else np.array(x0, dtype=float).reshape(-1)
    if x.shape != (fmap.n,):
        raise DimensionError(f"x0 must have length {fmap.n}")
    _require_positive(x)
    x = x / (psi @ x)
    trace = []
    for k in range(int(cfg.max_iter) + 1):
        Fx = fmap._apply(x[None, :])[0]
        r = Fx / x
        lo, hi = r.min(), r.max()
        trace.append((lo, hi))
        mu = psi @ Fx
        g = Fx / mu
        xn = (1.0 - theta) * x + theta * g
        step = np.max(np.log(xn / x)) - np.min(np.log(xn / x))
        resid = np.max(np.abs(Fx - mu * x)) / np.max(Fx)
        if step <= cfg.tol and (hi - lo) <= cfg.tol * hi and resid <= cfg.tol:
            return _make_solution(fmap, x, psi, k, trace, True, notes)
        if k == cfg.max_iter:
            break
        x = xn / (psi @ xn)
    sol = _make_solution(fmap, x, psi, cfg.max_iter, trace, False, notes)
    raise MaxIterExceeded(
        f"no convergence after {cfg.max_iter} iterations (bracket [{lo:.6g}, {hi:.6g}])", solution=sol
    )


def block_normalize(sol: EigenSolution, T: NonnegTensor, w) -> EigenSolution:
    """Rescale each block of ``sol.u`` to unit ``p_j``-norm.

    The result satisfies the critical-point equations with ``lam = mu **
    (max p - 1)``; at unit norms this also equals the value of the form.
    Applying it twice gives the same result as applying it once.
    """
    if not isinstance(w, NormWeights):
        w = NormWeights(w)
    if len(w) != T.d or sol.u.shape != (T.n,):
        raise DimensionError("solution does not match the tensor")
    blocks = np.split(np.asarray(sol.u, dtype=float), np.cumsum(T.dims)[:-1])
    out = []
    for b, p in zip(blocks, w.p):
        nrm = p_norm(b, p)
        if not nrm > 0:
            raise ValueError("cannot normalize a zero block")
        out.append(b / nrm)
    x = np.concatenate(out)
    lam = sol.mu ** (w.pmax - 1.0)
    rep = verify_solution((T, w), x, lam=lam, tol=np.inf)
    return replace(sol, x=x, blocks=tuple(out), lam=lam, system_residual=rep.residual)


def _start_points(n: int, cfg: SolverConfig) -> tuple:
    labels, rows = [], []
    if cfg.uniform_start:
        labels.append("uniform")
        rows.append(np.ones(n))
    for i in range(int(cfg.starts)):
        labels.append(i)
        rows.append(np.random.default_rng([int(cfg.seed), i]).standard_exponential(n))
    return labels, np.array(rows).reshape(len(rows), n)


def multi_start_solve(fmap: MonotoneMap, cfg: Optional[SolverConfig] = None) -> SearchResult:
    """Run the damped fixed-point iteration from many starts and keep the distinct limits.

    No monotonicity is required. Starts run as one batch. A start is
    converged once its Hilbert step ``s_k`` satisfies ``s_k <= tol (1 - q)``
    with ``q = s_k / s_{k-1}`` clipped to ``[0, 0.999]``, which bounds the
    remaining distance to the limit for linearly convergent runs. Limits
    closer than ``DEDUP_DISTANCE`` in Hilbert distance are merged (the first
    start wins) and the survivors are sorted lexicographically by their
    system-normalized vectors.
    """
    cfg = cfg or SolverConfig()
    psi = cfg.psi_for(fmap.n)
    theta = cfg.theta_for(fmap)
    on_spheres = isinstance(fmap, TensorMap)
    labels, X = _start_points(fmap.n, cfg)

    def project(Y):
        if on_spheres:
            return _unit_blocks(fmap, Y)
        return Y / (Y @ psi)[:, None]

    X = project(X)
    B = X.shape[0]
    active = np.arange(B)
    prev_step = np.full(B, np.inf)
    done = {}
    failures = {}
    with np.errstate(all="ignore"):
        for k in range(1, int(cfg.max_iter) + 1):
            if active.size == 0:
                break
            Xa = X[active]
            Y = project(fmap._apply(Xa))
            Xn = project((1.0 - theta) * Xa + theta * Y)
            ok = np.all(np.isfinite(Xn) & (Xn > 0), axis=1)
            for r in active[~ok]:
                failures[r] = "left the interior"
            L = np.log(Xn[ok]) - np.log(Xa[ok])
            step = L.max(axis=1) - L.min(axis=1)
            idx = active[ok]
            q = np.clip(step / prev_step[idx], 0.0, 0.999)
            conv = step <= cfg.tol * (1.0 - q)
            X[idx] = Xn[ok]
            prev_step[idx] = step
            for r in idx[conv]:
                done[r] = k
            active = idx[~conv]
    for r in active:
        failures[r] = "max_iter reached"

    reps = []
    for r in sorted(done):
        if any(_hilbert(X[r], X[s]) < DEDUP_DISTANCE for s in reps):
            continue
        reps.append(r)
    sols = []
    for r in reps:
        u = X[r] / (psi @ X[r])
        lo_hi = np.array([collatz_wielandt_bounds(fmap, u)])
        sols.append(_make_solution(fmap, u, psi, done[r], lo_hi, True))
    sols.sort(key=lambda s: tuple(np.round(s.x, 9)))
    fails = [(labels[r], failures[r]) for r in sorted(failures)]
    return SearchResult(sols, attempted=B, failures=fails)


def _hilbert(x, y) -> float:
    L = np.log(y) - np.log(x)
    return float(L.max() - L.min())


def _unpack_system(system):
    """Return ``(kind, obj, exponents-info)`` for the accepted system spellings."""
    if isinstance(system, TensorMap):
        return "tensor", system.T, system.w
    if isinstance(system, PolyMap):
        return "poly", system.P, (system.deltas, system.p, system.a)
    if isinstance(system, tuple) and system and isinstance(system[0], NonnegTensor):
        T, w = system
        if not isinstance(w, NormWeights):
            w = NormWeights(w)
            if len(w) == 1:
                w = NormWeights.uniform(w.p[0], T.d)
        if len(w) != T.d:
            raise DimensionError(f"{len(w)} norm exponents for a {T.d}-way tensor")
        return "tensor", T, w
    if isinstance(system, tuple) and system and isinstance(system[0], PolynomialMap):
        P = system[0]
        deltas = system[1] if len(system) > 1 and system[1] is not None else P.degrees
        p = system[2] if len(system) > 2 else 2.0
        a = system[3] if len(system) > 3 else 1.0
        deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (P.n,))
        return "poly", P, (deltas, float(p), float(a))
    if isinstance(system, PolynomialMap):
        return "poly", system, (system.degrees.astype(float), 2.0, 1.0)
    raise TypeError("system must be a map, (NonnegTensor, p) or (PolynomialMap, deltas[, p, a])")


def verify_solution(system, x, lam: Optional[float] = None, tol: float = 1e-8) -> VerifyReport:
    """Residual of a candidate on the raw system; boundary points are allowed.

    For a tensor with weights ``p`` the equations are
    ``S_j(x)_i = lam x_{ij}^{p_j - 1}`` with ``||x_j||_{p_j} = 1``; for a
    polynomial map they are ``P_i(x) = lam x_i^{delta_i}`` with
    ``||x||_p = a``.

    Parameters
    ----------
    system : TensorMap, PolyMap, (NonnegTensor, p) or (PolynomialMap, deltas, p, a)
    x : array_like or sequence of blocks
    lam : float, optional
        Fitted by least squares over all equations when omitted.
    tol : float
        Pass threshold for the residual and every norm deviation.
    """
    kind, obj, extra = _unpack_system(system)
    if kind == "tensor":
        T, w = obj, extra
        if isinstance(x, (list, tuple)) and len(x) == T.d:
            x = np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in x])
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (T.n,):
            raise DimensionError(f"candidate has length {x.size}, expected {T.n}")
        _require_nonnegative(x)
        lhs = _slot_values_flat(T, x[None, :])[0]
        expo = np.concatenate([np.full(m, p - 1.0) for m, p in zip(T.dims, w.p)])
        norms = [p_norm(b, p) for b, p in zip(np.split(x, np.cumsum(T.dims)[:-1]), w.p)]
        devs = tuple(float(abs(nv - 1.0)) for nv in norms)
    else:
        P = obj
        deltas, p, a = extra
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (P.n,):
            raise DimensionError(f"candidate has length {x.size}, expected {P.n}")
        _require_nonnegative(x)
        lhs = _poly_flat(P, x[None, :])[0]
        expo = np.asarray(deltas, dtype=float)
        devs = (float(abs(p_norm(x, p) - a)),)
    rhs = x ** expo
    if lam is None:
        denom = float(rhs @ rhs)
        lam = float(lhs @ rhs) / denom if denom > 0 else 0.0
    residual = float(np.max(np.abs(lhs - lam * rhs)))
    return VerifyReport(residual=residual, norm_deviations=devs, lam=float(lam), tol=float(tol))


def verify_complex_eigenpair(P: PolynomialMap, v, nu, tol: float = 1e-12, lam: Optional[float] = None) -> ComplexCheck:
    """Check ``P_i(v) = nu v_i^d`` for a complex pair and compare ``|nu|`` with the Perron root.

    ``P`` must be homogeneous of a common degree ``d``. When ``lam`` is not
    given it is computed with the power algorithm on ``P^{1/d}`` (damped and
    allowing imprimitive but strongly connected di-graphs).
    """
    if not P.is_homogeneous:
        raise DegreeError("complex eigenpairs are only defined here for homogeneous maps")
    d = int(P.degrees.max())
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.shape != (P.n,):
        raise DimensionError(f"v must have length {P.n}")
    if not np.any(v != 0):
        raise ValueError("v must be nonzero")
    mono = np.prod(v[None, :] ** P.exponents, axis=1) * P.coefficients
    Pv = np.zeros(P.n, dtype=complex)
    np.add.at(Pv, P.component_of, mono)
    residual = float(np.max(np.abs(Pv - nu * v ** d)))
    if lam is None:
        cfg = SolverConfig(damping=0.5, allow_nonprimitive=True, tol=1e-13, max_iter=100000)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lam = power_solve(build_poly_map(P), cfg).lam
    modulus = float(abs(nu))
    return ComplexCheck(residual=residual, modulus=modulus, lam=float(lam), bound_ok=modulus <= lam + tol)
