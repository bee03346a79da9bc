"""Combinatorial structure: support graphs, irreducibility and primitivity.

Every test depends only on the support of the tensor or map, so verdicts are
invariant under positive rescaling of the coefficients. Negative verdicts
carry a witness: a connected component, an invariant part, a sink strongly
connected component, or a cyclicity ``g > 1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import Optional

import numpy as np

from .core import NonnegTensor, NormWeights, PolynomialMap, tensor_system
from .exceptions import DimensionError, VanishingSliceError

__all__ = [
    "MAX_SUBSET_VERTICES",
    "Verdict",
    "PartiteGraph",
    "DiGraph",
    "StructureReport",
    "partite_graph",
    "is_weakly_irreducible",
    "is_irreducible_tensor",
    "map_digraph",
    "tensor_F_digraph",
    "poly_F_digraph",
    "is_strongly_connected",
    "strongly_connected_components",
    "cyclicity",
    "is_weakly_primitive",
    "is_primitive_digraph",
    "is_irreducible_map",
    "check_nonvanishing",
    "structure_report",
]

MAX_SUBSET_VERTICES = 24
_CHUNK = 1 << 14


@dataclass(frozen=True)
class Verdict:
    """Outcome of a structural test.

    ``holds`` is ``None`` when the test was skipped because of the size
    guard; converting such a verdict to ``bool`` raises instead of passing
    silently.
    """

    holds: Optional[bool]
    witness: Optional[frozenset] = None
    cyclicity: Optional[int] = None
    note: str = ""

    @property
    def skipped(self) -> bool:
        return self.holds is None

    def __bool__(self):
        if self.holds is None:
            raise ValueError(f"verdict was skipped ({self.note}); inspect .skipped explicitly")
        return self.holds


@dataclass(frozen=True)
class PartiteGraph:
    """Undirected d-partite support graph of a tensor.

    Vertices are numbered globally (block offsets added); ``label`` turns a
    vertex number into ``(slot, index)``.
    """

    dims: tuple
    edges: frozenset

    @property
    def n(self) -> int:
        return int(sum(self.dims))

    def part_of(self, v: int) -> int:
        return int(np.searchsorted(np.cumsum(self.dims), v, side="right"))

    def label(self, v: int) -> tuple:
        j = self.part_of(v)
        return j, v - int(sum(self.dims[:j]))


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on ``range(n)``; loops are allowed."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for u, v in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge {(u, v)} has an endpoint outside [0, {self.n})")

    @classmethod
    def from_edges(cls, n, edges):
        return cls(int(n), frozenset((int(u), int(v)) for u, v in edges))

    def successors(self):
        adj = [[] for _ in range(self.n)]
        for u, v in sorted(self.edges):
            adj[u].append(v)
        return adj

    def to_matrix(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.edges:
            A[u, v] = True
        return A


@dataclass(frozen=True)
class StructureReport:
    weakly_irreducible: Verdict
    irreducible: Verdict
    weakly_primitive: Verdict
    strongly_connected: Optional[Verdict] = None
    kind: str = "tensor"


def _label_set(T: NonnegTensor, vertices) -> frozenset:
    return frozenset(T.vertex_label(int(v)) for v in vertices)


def partite_graph(T: NonnegTensor) -> PartiteGraph:
    """Edge between vertices of two different parts iff some entry uses both."""
    edges = set()
    d = T.d
    for row in T.vertex_indices:
        for k in range(d):
            for l in range(k + 1, d):
                edges.add((int(row[k]), int(row[l])))
    return PartiteGraph(T.dims, frozenset(edges))


def _components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


def is_weakly_irreducible(T: NonnegTensor) -> Verdict:
    """Connectivity of the partite graph; the witness is the component of vertex ``(0, 0)``."""
    comps = _components(T.n, partite_graph(T).edges)
    if len(comps) == 1:
        return Verdict(True)
    return Verdict(False, witness=_label_set(T, comps[0]), note=f"{len(comps)} connected components")


def _subset_masks(n):
    """Yield chunks of all proper nonempty subsets of ``range(n)`` as bitmasks."""
    total = (1 << n) - 1
    start = 1
    while start < total:
        stop = min(start + _CHUNK, total)
        yield np.arange(start, stop, dtype=np.uint64)
        start = stop


def _mask_to_set(mask, n):
    mask = int(mask)
    return [v for v in range(n) if mask >> v & 1]


def is_irreducible_tensor(T: NonnegTensor, max_vertices: int = MAX_SUBSET_VERTICES) -> Verdict:
    """Exhaustive irreducibility test over vertex subsets.

    The subsets ``I`` examined are the nonempty ones containing no complete
    part ``V_k`` (otherwise ``J = V \\ I`` misses a part and, for ``d >= 3``,
    no entry could ever qualify). ``I`` is violating when no stored entry has
    exactly one of its ``d`` vertices inside ``I``. Tensors with more than
    ``max_vertices`` vertices get a skipped verdict.
    """
    n = T.n
    if n > max_vertices:
        return Verdict(None, note=f"skipped (n={n} > {max_vertices})")
    if T.nnz == 0:
        return Verdict(False, witness=_label_set(T, [0]), note="empty tensor")
    verts = np.unique(T.vertex_indices, axis=0).astype(np.uint64)
    parts = [np.uint64(((1 << m) - 1) << int(lo)) for lo, m in zip(T.offsets, T.dims)]
    one = np.uint64(1)
    for S in _subset_masks(n):
        count = np.zeros((len(S), len(verts)), dtype=np.int8)
        for k in range(T.d):
            count += ((S[:, None] >> verts[None, :, k]) & one).astype(np.int8)
        eligible = np.ones(len(S), dtype=bool)
        for pm in parts:
            eligible &= (S & pm) != pm
        bad = eligible & ~np.any(count == 1, axis=1)
        if bad.any():
            I = _mask_to_set(S[np.argmax(bad)], n)
            return Verdict(False, witness=_label_set(T, I), note="no entry with exactly one index in I")
    return Verdict(True)


def _monomial_support_masks(P: PolynomialMap) -> np.ndarray:
    weights = np.left_shift(np.uint64(1), np.arange(P.n, dtype=np.uint64))
    return ((P.exponents > 0).astype(np.uint64) * weights).sum(axis=1).astype(np.uint64)


def map_digraph(P: PolynomialMap) -> DiGraph:
    """Di-graph of a polynomial map.

    Edge ``i -> j`` when ``x_j`` occurs with positive exponent in ``P_i``;
    a component holding a monomial of degree below ``d_i`` points to every
    vertex.
    """
    edges = set()
    deg = P.degrees
    for i, e, md in zip(P.component_of, P.exponents, P.monomial_degrees):
        i = int(i)
        if md < deg[i]:
            edges.update((i, k) for k in range(P.n))
        else:
            edges.update((i, int(k)) for k in np.flatnonzero(e))
    return DiGraph(P.n, frozenset(edges))


def poly_F_digraph(P: PolynomialMap, deltas) -> DiGraph:
    """Di-graph of the degree-one map built from ``P`` and exponents ``deltas``.

    Beyond the syntactic edges of ``P``: a monomial of degree below
    ``delta_i`` brings in the norm factor (edges ``i -> k`` for all ``k``),
    and ``delta_i < max(delta)`` adds the loop ``i -> i``.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (P.n,):
        raise DimensionError(f"expected {P.n} exponents")
    edges = set()
    top = deltas.max()
    for i, e, md in zip(P.component_of, P.exponents, P.monomial_degrees):
        i = int(i)
        edges.update((i, int(k)) for k in np.flatnonzero(e))
        if md < deltas[i]:
            edges.update((i, k) for k in range(P.n))
    edges.update((i, i) for i in range(P.n) if deltas[i] < top)
    return DiGraph(P.n, frozenset(edges))


def check_nonvanishing(T: NonnegTensor) -> None:
    """Raise :class:`VanishingSliceError` if some slice ``f[..., i_j, ...]`` is all zero."""
    for j, m in enumerate(T.dims):
        present = np.zeros(m, dtype=bool)
        present[T.indices[:, j]] = True
        if not present.all():
            raise VanishingSliceError(j, int(np.flatnonzero(~present)[0]))


def tensor_F_digraph(T: NonnegTensor, w: NormWeights) -> DiGraph:
    """Di-graph of the degree-one map of a tensor, by its combinatorial characterization.

    An edge ``r -> s`` is present when (1) ``r`` and ``s`` lie in different
    parts and share a positive entry, (2) both lie in part ``k`` with
    ``p_k > d``, or (3) ``r == s`` in part ``k`` with ``max(p) > p_k``.
    """
    if len(w) != T.d:
        raise DimensionError(f"{len(w)} norm exponents for a {T.d}-way tensor")
    check_nonvanishing(T)
    d = T.d
    if min(w.p) < d:
        raise ValueError(f"the characterization needs every p_j >= d={d}, got {w.p}")
    edges = set()
    for row in T.vertex_indices:
        for k in range(d):
            for l in range(d):
                if k != l:
                    edges.add((int(row[k]), int(row[l])))
    for k, (lo, m) in enumerate(zip(T.offsets, T.dims)):
        block = range(int(lo), int(lo) + m)
        if w.p[k] > d:
            edges.update((r, s) for r in block for s in block)
        if w.pmax > w.p[k]:
            edges.update((r, r) for r in block)
    return DiGraph(T.n, frozenset(edges))


def strongly_connected_components(G: DiGraph) -> list:
    """Tarjan's algorithm, iterative; components sorted by smallest vertex."""
    adj = G.successors()
    index = {}
    low = {}
    on_stack = set()
    stack = []
    comps = []
    counter = 0
    for root in range(G.n):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            for k in range(pos, len(adj[v])):
                w = adj[v][k]
                if w not in index:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return sorted(comps)


def is_strongly_connected(G: DiGraph) -> Verdict:
    """Strong connectivity; on failure the witness is a sink component of the condensation."""
    if G.n == 0:
        return Verdict(False, note="empty graph")
    comps = strongly_connected_components(G)
    if len(comps) == 1:
        return Verdict(True)
    where = {v: c for c, comp in enumerate(comps) for v in comp}
    leaves = set()
    for u, v in G.edges:
        if where[u] != where[v]:
            leaves.add(where[u])
    sinks = [c for c in range(len(comps)) if c not in leaves]
    return Verdict(
        False,
        witness=frozenset(comps[sinks[0]]),
        note=f"{len(comps)} strongly connected components; the rest is unreachable from the witness",
    )


def cyclicity(G: DiGraph, vertices=None) -> int:
    """Gcd of circuit lengths within the strongly connected set ``vertices``.

    Computed from a BFS layering as the gcd of ``level(u) + 1 - level(v)``
    over edges inside the set. Returns 0 when the set carries no circuit.
    """
    if vertices is None:
        vertices = range(G.n)
    inside = set(vertices)
    if not inside:
        return 0
    adj = G.successors()
    root = min(inside)
    level = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in inside and v not in level:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u, v in G.edges:
        if u in level and v in level:
            g = gcd(g, abs(level[u] + 1 - level[v]))
    return g


def is_primitive_digraph(G: DiGraph) -> Verdict:
    """Strongly connected with circuit-length gcd equal to one.

    ``cyclicity`` is set on the verdict only for strongly connected graphs.
    """
    sc = is_strongly_connected(G)
    if not sc.holds:
        return Verdict(False, witness=sc.witness, note="not strongly connected")
    g = cyclicity(G)
    if g == 0:
        return Verdict(False, note="no circuit")
    if g != 1:
        return Verdict(False, cyclicity=g, note=f"cyclicity {g}")
    return Verdict(True, cyclicity=1)


def is_weakly_primitive(P: PolynomialMap) -> Verdict:
    """Weak primitivity of ``P``: its di-graph is strongly connected and aperiodic."""
    return is_primitive_digraph(map_digraph(P))


def is_irreducible_map(P: PolynomialMap, max_vertices: int = MAX_SUBSET_VERTICES) -> Verdict:
    """True iff no proper nonempty part ``Q_I`` of the orthant is invariant under ``P``.

    ``Q_I`` is invariant exactly when every ``P_i`` with ``i`` in ``I`` has a
    monomial supported inside ``I`` and no ``P_i`` with ``i`` outside ``I``
    does.
    """
    n = P.n
    if n > max_vertices:
        return Verdict(None, note=f"skipped (n={n} > {max_vertices})")
    masks = _monomial_support_masks(P)
    starts = np.flatnonzero(np.r_[True, np.diff(P.component_of) != 0])
    present = P.component_of[starts]  # zero components never have an inside monomial
    one = np.uint64(1)
    bits = np.arange(n, dtype=np.uint64)
    for S in _subset_masks(n):
        inside = (masks[None, :] & ~S[:, None]) == 0
        has_inside = np.zeros((len(S), n), dtype=bool)
        if len(starts):
            has_inside[:, present] = np.logical_or.reduceat(inside, starts, axis=1)
        member = ((S[:, None] >> bits[None, :]) & one).astype(bool)
        invariant = np.all(has_inside == member, axis=1)
        if invariant.any():
            I = _mask_to_set(S[np.argmax(invariant)], n)
            return Verdict(False, witness=frozenset(I), note="invariant part")
    return Verdict(True)


def structure_report(obj, weights: Optional[NormWeights] = None) -> StructureReport:
    """Collect all structural verdicts for a tensor or a polynomial map.

    For a tensor, primitivity refers to the polynomial system formed by its
    slot contractions; ``strongly_connected`` reports the di-graph of the
    degree-one map when ``weights`` satisfy ``p_j >= d``.
    """
    if isinstance(obj, NonnegTensor):
        P = tensor_system(obj)
        sc = None
        if weights is not None and min(weights.p) >= obj.d:
            try:
                sc = is_strongly_connected(tensor_F_digraph(obj, weights))
            except VanishingSliceError as exc:
                sc = Verdict(False, witness=frozenset({(exc.slot, exc.index)}), note=str(exc))
        return StructureReport(
            weakly_irreducible=is_weakly_irreducible(obj),
            irreducible=is_irreducible_tensor(obj),
            weakly_primitive=is_weakly_primitive(P),
            strongly_connected=sc,
            kind="tensor",
        )
    if isinstance(obj, PolynomialMap):
        G = map_digraph(obj)
        return StructureReport(
            weakly_irreducible=is_strongly_connected(G),
            irreducible=is_irreducible_map(obj),
            weakly_primitive=is_weakly_primitive(obj),
            strongly_connected=is_strongly_connected(G),
            kind="polymap",
        )
    raise TypeError(f"expected NonnegTensor or PolynomialMap, got {type(obj).__name__}")
