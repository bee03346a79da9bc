"""Problem files: YAML documents describing a tensor or a polynomial map.

A tensor problem::

    format: 1
    kind: tensor
    dims: [2, 2, 2]
    entries:
      - [[0, 0, 0], 1.2]
      - [[0, 0, 1], 0.2]
    p: [3, 3, 3]

A polynomial-map problem::

    format: 1
    kind: polymap
    n: 2
    components:
      - [[[0, 1], 1.0]]
      - [[[1, 0], 1.0]]
    deltas: [2, 2]
    p: 2
    a: 1

Indices are 0-based. Optional keys: ``name``, ``description``, ``psi`` and a
``solver`` mapping with ``tol``, ``max_iter``, ``seed``, ``starts`` and
``damping``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .core import NonnegTensor, NormWeights, PolynomialMap
from .dynamics import MonotoneMap, build_poly_map, build_tensor_map
from .exceptions import ProblemFileError

__all__ = [
    "FORMAT_VERSION",
    "SOLVER_KEYS",
    "ProblemFile",
    "parse_problem",
    "parse_problem_text",
    "load_problem",
    "serialize_problem",
    "fixture_names",
]

FORMAT_VERSION = 1
SOLVER_KEYS = ("tol", "max_iter", "seed", "starts", "damping")
_TOP_KEYS = {
    "tensor": {"format", "kind", "name", "description", "dims", "entries", "p", "psi", "solver"},
    "polymap": {"format", "kind", "name", "description", "n", "components", "deltas", "p", "a", "psi", "solver"},
}


@dataclass
class ProblemFile:
    """A validated problem.

    ``p`` is a tuple of per-slot exponents for tensors and a single float for
    polynomial maps; ``deltas`` and ``a`` only apply to polynomial maps.
    """

    kind: str
    tensor: Optional[NonnegTensor] = None
    poly: Optional[PolynomialMap] = None
    p: object = None
    deltas: Optional[tuple] = None
    a: float = 1.0
    psi: Optional[tuple] = None
    solver: dict = field(default_factory=dict)
    name: str = ""
    description: str = ""

    @property
    def n(self) -> int:
        return self.tensor.n if self.kind == "tensor" else self.poly.n

    def build_map(self, p=None) -> MonotoneMap:
        """Degree-one map of the problem, optionally with other norm exponents."""
        if self.kind == "tensor":
            return build_tensor_map(self.tensor, NormWeights(self.p if p is None else p))
        return build_poly_map(self.poly, self.deltas, self.p if p is None else p, self.a)

    def system(self):
        """The raw system in the form accepted by :func:`tensorpf.solver.verify_solution`."""
        if self.kind == "tensor":
            return self.tensor, NormWeights(self.p)
        return self.poly, self.deltas, self.p, self.a


class _Locator:
    """Maps data paths to 1-based line numbers of the composed YAML tree."""

    def __init__(self, node):
        self.node = node

    def line(self, *path) -> Optional[int]:
        node = self.node
        for key in path:
            if isinstance(node, yaml.MappingNode):
                nxt = None
                for k, v in node.value:
                    if k.value == key:
                        nxt = v
                        break
                node = nxt
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                node = None
            if node is None:
                return None
        return node.start_mark.line + 1


def _fail(loc: _Locator, source: str, msg: str, *path):
    line = loc.line(*path) if path else None
    where = f"{source}:{line}" if line else source
    field_name = ".".join(str(k) for k in path)
    prefix = f"{where}: {field_name}: " if field_name else f"{where}: "
    raise ProblemFileError(prefix + msg)


def _number(value, loc, source, *path) -> float:
    if isinstance(value, str):
        # YAML 1.1 reads forms such as 1e-12 as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(loc, source, f"expected a number, got {value!r}", *path)
    v = float(value)
    if not np.isfinite(v):
        _fail(loc, source, f"expected a finite number, got {value!r}", *path)
    return v


def _int(value, loc, source, *path) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(loc, source, f"expected an integer, got {value!r}", *path)
    return int(value)


def _list(value, loc, source, *path) -> list:
    if not isinstance(value, list):
        _fail(loc, source, f"expected a list, got {value!r}", *path)
    return value


def parse_problem_text(text: str, source: str = "<string>") -> ProblemFile:
    """Parse and validate a problem document given as text."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ProblemFileError(f"{where}: malformed YAML ({getattr(exc, 'problem', exc)})") from None
    loc = _Locator(node)
    if not isinstance(data, dict):
        _fail(loc, source, "a problem file must be a mapping")
    if data.get("format") != FORMAT_VERSION:
        _fail(loc, source, f"unsupported or missing format (expected {FORMAT_VERSION})", "format")
    kind = data.get("kind")
    if kind not in _TOP_KEYS:
        _fail(loc, source, f"kind must be 'tensor' or 'polymap', got {kind!r}", "kind")
    unknown = sorted(set(data) - _TOP_KEYS[kind])
    if unknown:
        _fail(loc, source, f"unknown key for a {kind} problem", unknown[0])

    prob = ProblemFile(kind=kind, name=str(data.get("name", "")), description=str(data.get("description", "")))
    if kind == "tensor":
        _parse_tensor(data, prob, loc, source)
    else:
        _parse_polymap(data, prob, loc, source)

    if "psi" in data:
        psi = [_number(v, loc, source, "psi", i) for i, v in enumerate(_list(data["psi"], loc, source, "psi"))]
        if len(psi) != prob.n:
            _fail(loc, source, f"psi has {len(psi)} entries, expected {prob.n}", "psi")
        if any(v <= 0 for v in psi):
            _fail(loc, source, "psi must be strictly positive", "psi")
        prob.psi = tuple(psi)
    solver = data.get("solver", {}) or {}
    if not isinstance(solver, dict):
        _fail(loc, source, "expected a mapping", "solver")
    for key, value in solver.items():
        if key not in SOLVER_KEYS:
            _fail(loc, source, f"unknown solver setting (allowed: {', '.join(SOLVER_KEYS)})", "solver", key)
        if key in ("max_iter", "seed", "starts"):
            prob.solver[key] = _int(value, loc, source, "solver", key)
        else:
            prob.solver[key] = _number(value, loc, source, "solver", key)
    if prob.solver.get("tol", 1.0) <= 0:
        _fail(loc, source, "tol must be positive", "solver", "tol")
    if not 0 < prob.solver.get("damping", 1.0) <= 1:
        _fail(loc, source, "damping must lie in (0, 1]", "solver", "damping")
    return prob


def _parse_tensor(data, prob, loc, source):
    for key in ("dims", "entries", "p"):
        if key not in data:
            _fail(loc, source, f"missing required key '{key}'")
    dims = [_int(v, loc, source, "dims", i) for i, v in enumerate(_list(data["dims"], loc, source, "dims"))]
    if len(dims) < 2 or any(m < 2 for m in dims):
        _fail(loc, source, "need at least two slots, each of size >= 2", "dims")
    entries = []
    seen = set()
    for e, item in enumerate(_list(data["entries"], loc, source, "entries")):
        if not (isinstance(item, list) and len(item) == 2):
            _fail(loc, source, "each entry must be [index list, value]", "entries", e)
        idx = [_int(v, loc, source, "entries", e, 0, k) for k, v in enumerate(_list(item[0], loc, source, "entries", e, 0))]
        value = _number(item[1], loc, source, "entries", e, 1)
        if len(idx) != len(dims) or any(not 0 <= i < m for i, m in zip(idx, dims)):
            _fail(loc, source, f"index {idx} is out of range for dims {dims}", "entries", e)
        if value < 0:
            _fail(loc, source, f"entry {e + 1} at index {idx} has negative value {value}", "entries", e)
        if tuple(idx) in seen:
            _fail(loc, source, f"duplicate index {idx}", "entries", e)
        seen.add(tuple(idx))
        entries.append((tuple(idx), value))
    p_raw = data["p"]
    if isinstance(p_raw, list):
        p = [_number(v, loc, source, "p", i) for i, v in enumerate(p_raw)]
    else:
        p = [_number(p_raw, loc, source, "p")] * len(dims)
    if len(p) != len(dims):
        _fail(loc, source, f"{len(p)} norm exponents for {len(dims)} slots", "p")
    if any(v <= 1 for v in p):
        _fail(loc, source, "every p_j must exceed 1", "p")
    prob.tensor = NonnegTensor(dims, entries)
    prob.p = tuple(p)


def _parse_polymap(data, prob, loc, source):
    for key in ("n", "components"):
        if key not in data:
            _fail(loc, source, f"missing required key '{key}'")
    n = _int(data["n"], loc, source, "n")
    if n < 1:
        _fail(loc, source, "n must be positive", "n")
    comps_raw = _list(data["components"], loc, source, "components")
    if len(comps_raw) != n:
        _fail(loc, source, f"{len(comps_raw)} components for n = {n}", "components")
    comps = []
    for i, comp in enumerate(comps_raw):
        monos = []
        seen = set()
        for m, item in enumerate(_list(comp, loc, source, "components", i)):
            if not (isinstance(item, list) and len(item) == 2):
                _fail(loc, source, "each monomial must be [exponent list, coefficient]", "components", i, m)
            exps = [
                _int(v, loc, source, "components", i, m, 0, k)
                for k, v in enumerate(_list(item[0], loc, source, "components", i, m, 0))
            ]
            coef = _number(item[1], loc, source, "components", i, m, 1)
            if len(exps) != n or any(v < 0 for v in exps):
                _fail(loc, source, f"exponents {exps} must be {n} nonnegative integers", "components", i, m)
            if coef < 0:
                _fail(loc, source, f"monomial {exps} of component {i + 1} has negative coefficient {coef}", "components", i, m)
            if tuple(exps) in seen:
                _fail(loc, source, f"duplicate monomial {exps}", "components", i, m)
            seen.add(tuple(exps))
            monos.append((tuple(exps), coef))
        if not any(c > 0 for _, c in monos):
            _fail(loc, source, f"component {i + 1} is identically zero", "components", i)
        if max(sum(e) for e, c in monos if c > 0) < 1:
            _fail(loc, source, f"component {i + 1} must have degree >= 1", "components", i)
        comps.append(monos)
    P = PolynomialMap(n, comps)
    if "deltas" in data:
        raw = data["deltas"]
        if isinstance(raw, list):
            deltas = [_number(v, loc, source, "deltas", i) for i, v in enumerate(raw)]
        else:
            deltas = [_number(raw, loc, source, "deltas")] * n
        if len(deltas) != n:
            _fail(loc, source, f"{len(deltas)} exponents for n = {n}", "deltas")
        for i, (dl, dg) in enumerate(zip(deltas, P.degrees)):
            if dl < dg:
                _fail(loc, source, f"delta = {dl} is below the degree {int(dg)} of component {i + 1}", "deltas", i)
    else:
        deltas = [float(v) for v in P.degrees]
    p = _number(data.get("p", 2.0), loc, source, "p")
    a = _number(data.get("a", 1.0), loc, source, "a")
    if p <= 0:
        _fail(loc, source, "p must be positive", "p")
    if a <= 0:
        _fail(loc, source, "a must be positive", "a")
    prob.poly = P
    prob.deltas = tuple(deltas)
    prob.p = p
    prob.a = a


def parse_problem(path) -> ProblemFile:
    """Read and validate a problem file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"{path}: cannot read ({exc.strerror})") from None
    prob = parse_problem_text(text, source=str(path))
    if not prob.name:
        prob.name = path.stem
    return prob


def fixture_names() -> list:
    """Names of the bundled problems."""
    root = resources.files("tensorpf") / "fixtures"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_problem(name_or_path) -> ProblemFile:
    """Load a problem from a path or by the name of a bundled fixture."""
    path = Path(str(name_or_path))
    if path.exists():
        return parse_problem(path)
    fixture = resources.files("tensorpf") / "fixtures" / f"{name_or_path}.yaml"
    if fixture.is_file():
        prob = parse_problem_text(fixture.read_text(), source=f"fixture:{name_or_path}")
        prob.name = prob.name or str(name_or_path)
        return prob
    raise ProblemFileError(
        f"{name_or_path}: no such file or bundled fixture (fixtures: {', '.join(fixture_names())})"
    )


def _plain(v: float):
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2**53 else v


def problem_to_dict(prob: ProblemFile) -> dict:
    """Canonical mapping: fixed key order, sorted entries, zeros dropped."""
    out = {"format": FORMAT_VERSION, "kind": prob.kind}
    if prob.name:
        out["name"] = prob.name
    if prob.description:
        out["description"] = prob.description
    if prob.kind == "tensor":
        T = prob.tensor
        out["dims"] = list(T.dims)
        out["entries"] = [[list(map(int, idx)), _plain(v)] for idx, v in T.entries()]
        out["p"] = [_plain(v) for v in prob.p]
    else:
        out["n"] = prob.poly.n
        out["components"] = [
            [[list(map(int, e)), _plain(c)] for e, c in comp] for comp in prob.poly.components()
        ]
        out["deltas"] = [_plain(v) for v in prob.deltas]
        out["p"] = _plain(prob.p)
        out["a"] = _plain(prob.a)
    if prob.psi is not None:
        out["psi"] = [_plain(v) for v in prob.psi]
    if prob.solver:
        out["solver"] = {k: (prob.solver[k] if k in ("max_iter", "seed", "starts") else _plain(prob.solver[k]))
                         for k in SOLVER_KEYS if k in prob.solver}
    return out


class _FlowListDumper(yaml.SafeDumper):
    """Inner lists in flow style, top-level structure in block style."""


def _depth(v) -> int:
    if isinstance(v, dict):
        return 99
    if isinstance(v, list):
        return 1 + max((_depth(w) for w in v), default=0)
    return 0


def _represent_list(dumper, data):
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=_depth(data) <= 2)


_FlowListDumper.add_representer(list, _represent_list)


def dump_yaml(data) -> str:
    return yaml.dump(data, Dumper=_FlowListDumper, sort_keys=False, default_flow_style=False, width=100)


def serialize_problem(prob: ProblemFile) -> str:
    """Canonical YAML text of a problem; ``parse_problem_text`` inverts it."""
    return dump_yaml(problem_to_dict(prob))
