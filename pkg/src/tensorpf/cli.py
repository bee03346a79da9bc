"""Command line interface: ``tensorpf {check,solve,search,rate,verify} PROBLEM``."""

from __future__ import annotations

import argparse
import sys
import warnings
from decimal import ROUND_CEILING, Decimal

import numpy as np
import yaml

from .core import NormWeights
from .dynamics import TensorMap
from .exceptions import (
    DegreeError,
    MaxIterExceeded,
    NegativeCoefficientError,
    NonMonotoneMap,
    NotPrimitive,
    ProblemFileError,
    VanishingSliceError,
)
from .problem import FORMAT_VERSION, dump_yaml, load_problem
from .rate import convergence_rate
from .solver import SolverConfig, block_normalize, multi_start_solve, power_solve, verify_solution
from .structure import check_nonvanishing, structure_report

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROBLEM = 3
EXIT_NOT_PRIMITIVE = 4
EXIT_NON_MONOTONE = 5
EXIT_MAX_ITER = 6
EXIT_VERIFY_FAILED = 7
EXIT_STRUCTURE = 8

EXIT_CODES = {
    EXIT_OK: "success",
    EXIT_USAGE: "invalid command line",
    EXIT_PROBLEM: "problem or candidate file could not be read or validated",
    EXIT_NOT_PRIMITIVE: "di-graph of the map is not weakly primitive (see --allow-nonprimitive)",
    EXIT_NON_MONOTONE: "power algorithm asked to run on a non-monotone map (use search)",
    EXIT_MAX_ITER: "iteration limit reached before the tolerance",
    EXIT_VERIFY_FAILED: "a candidate failed verification",
    EXIT_STRUCTURE: "structural precondition violated (an identically zero slice)",
}

SIG_DIGITS = 12


class _Abort(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _num(v) -> float:
    """Round to the printed precision."""
    return float(f"{float(v):.{SIG_DIGITS}g}")


def _vec(v) -> list:
    return [_num(t) for t in np.asarray(v, dtype=float).ravel()]


def _ceil3(v: float) -> float:
    """Round a nonnegative number up to three significant digits."""
    if v <= 0:
        return 0.0
    d = Decimal(float(v))
    q = Decimal(1).scaleb(d.adjusted() - 2)
    out = float(d.quantize(q, rounding=ROUND_CEILING))
    return out if out >= v else float(np.nextafter(out, np.inf))


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _damping(text: str) -> float:
    v = _positive_float(text)
    if v > 1:
        raise argparse.ArgumentTypeError("damping must lie in (0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    codes = "\n".join(f"  {k}  {v}" for k, v in EXIT_CODES.items())
    parser = argparse.ArgumentParser(
        prog="tensorpf",
        description=(
            "Positive eigenvectors of nonnegative multilinear forms and polynomial maps. "
            "PROBLEM is a YAML problem file or the name of a bundled fixture "
            "(f1_p3, f1_p2, f2_p299, matrixA_p15, matrixA_p12_25)."
        ),
        epilog=(
            "Indices are 0-based in problem, candidate and report files. Error messages count "
            "entries, components and slots from 1; field paths such as entries.3 keep the "
            "0-based file index.\n\nexit codes:\n" + codes
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", metavar="PROBLEM")
    common.add_argument("--p", type=_floats, help="norm exponents, one per slot or a single value")
    common.add_argument("--psi", type=_floats, help="strictly positive normalization functional")
    common.add_argument("--tol", type=_positive_float, help="convergence / verification tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--seed", type=int)
    common.add_argument("--starts", type=int, help="random starts for search")
    common.add_argument("--damping", type=_damping, help="theta in (0, 1]")
    common.add_argument("--allow-nonprimitive", action="store_true",
                        help="run the power algorithm on imprimitive strongly connected di-graphs")
    common.add_argument("--output", metavar="PATH", help="write the report here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="structural verdicts")
    sub.add_parser("solve", parents=[common], help="power algorithm")
    sub.add_parser("search", parents=[common], help="multi-start search for all positive solutions")
    sub.add_parser("rate", parents=[common], help="spectral-gap rate and measured convergence")
    ver = sub.add_parser("verify", parents=[common], help="residual of candidate solutions")
    ver.add_argument("--candidate", required=True, metavar="PATH",
                     help="YAML file with x (or blocks) and optional lam, or a report with solutions")
    ver.add_argument("--lam", type=float, help="eigenvalue to test (fitted by least squares if omitted)")
    return parser


def _config(prob, args) -> SolverConfig:
    settings = dict(prob.solver)
    for key in ("tol", "max_iter", "seed", "starts", "damping"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    psi = args.psi if args.psi is not None else prob.psi
    try:
        return SolverConfig(psi=psi, allow_nonprimitive=args.allow_nonprimitive, **settings)
    except ValueError as exc:
        raise _Abort(EXIT_USAGE, str(exc)) from None


def _effective_p(prob, args):
    if args.p is None:
        return prob.p
    if prob.kind == "polymap":
        if len(args.p) != 1:
            raise _Abort(EXIT_USAGE, "--p takes a single value for a polynomial map")
        return args.p[0]
    p = args.p * prob.tensor.d if len(args.p) == 1 else args.p
    if len(p) != prob.tensor.d:
        raise _Abort(EXIT_USAGE, f"--p needs 1 or {prob.tensor.d} values")
    return tuple(p)


def _build(prob, args):
    p = _effective_p(prob, args)
    try:
        fmap = prob.build_map(p)
    except VanishingSliceError as exc:
        raise _Abort(EXIT_STRUCTURE, f"slice {exc.index + 1} of slot {exc.slot + 1} is identically zero") from None
    except ValueError as exc:
        raise _Abort(EXIT_USAGE, str(exc)) from None
    if isinstance(fmap, TensorMap):
        system = (prob.tensor, fmap.w)
    else:
        system = (prob.poly, prob.deltas, fmap.p, fmap.a)
    return fmap, system


def _verdict(v) -> dict:
    if v is None:
        return None
    out = {"holds": None if v.skipped else bool(v.holds)}
    if v.witness is not None:
        # tensor verdicts name (slot, index) vertices, map verdicts flat indices
        out["witness"] = [list(map(int, t)) if isinstance(t, tuple) else int(t) for t in sorted(v.witness)]
    if v.cyclicity is not None:
        out["cyclicity"] = int(v.cyclicity)
    if v.note:
        out["note"] = v.note
    return out


def _header(prob, args, command) -> dict:
    head = {"format": FORMAT_VERSION, "command": command, "problem": prob.name, "kind": prob.kind}
    p = _effective_p(prob, args)
    head["p"] = _vec(p) if prob.kind == "tensor" else _num(p)
    return head


def _solution_entry(sol, system, prob, extra=None) -> dict:
    x = _vec(sol.x)
    lam = _num(sol.lam)
    rep = verify_solution(system, np.array(x), lam=lam, tol=np.inf)
    resid = max([rep.residual, *rep.norm_deviations])
    entry = {"lam": lam, "mu": _num(sol.mu), "x": x}
    if sol.blocks is not None:
        entry["blocks"] = [_vec(b) for b in sol.blocks]
    entry["u"] = _vec(sol.u)
    entry["residual"] = _ceil3(resid)
    entry["iterations"] = int(sol.iterations)
    lo, hi = sol.bracket
    entry["cw_bracket"] = [_num(lo), _num(hi)]
    if extra:
        entry.update(extra)
    return entry


def _cmd_check(prob, args):
    out = _header(prob, args, "check")
    obj = prob.tensor if prob.kind == "tensor" else prob.poly
    weights = NormWeights(_effective_p(prob, args)) if prob.kind == "tensor" else None
    rep = structure_report(obj, weights)
    body = {}
    if prob.kind == "tensor":
        try:
            check_nonvanishing(prob.tensor)
            body["nonvanishing"] = {"holds": True}
        except VanishingSliceError as exc:
            body["nonvanishing"] = {"holds": False, "witness": [exc.slot, exc.index]}
    body["weakly_irreducible"] = _verdict(rep.weakly_irreducible)
    body["irreducible"] = _verdict(rep.irreducible)
    body["weakly_primitive"] = _verdict(rep.weakly_primitive)
    if rep.strongly_connected is not None:
        body["map_strongly_connected"] = _verdict(rep.strongly_connected)
    out["structure"] = body
    return out, EXIT_OK


def _power(fmap, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return power_solve(fmap, cfg)


def _cmd_solve(prob, args):
    fmap, system = _build(prob, args)
    cfg = _config(prob, args)
    sol = _power(fmap, cfg)
    if isinstance(fmap, TensorMap):
        sol = block_normalize(sol, prob.tensor, fmap.w)
    out = _header(prob, args, "solve")
    out["settings"] = {"tol": cfg.tol, "max_iter": cfg.max_iter, "damping": cfg.theta_for(fmap)}
    out["solutions"] = [_solution_entry(sol, system, prob, {"cw_trace_length": len(sol.cw_trace)})]
    if sol.notes:
        out["notes"] = list(sol.notes)
    return out, EXIT_OK


def _cmd_search(prob, args):
    fmap, system = _build(prob, args)
    cfg = _config(prob, args)
    res = multi_start_solve(fmap, cfg)
    out = _header(prob, args, "search")
    out["settings"] = {
        "tol": cfg.tol, "max_iter": cfg.max_iter, "damping": cfg.theta_for(fmap),
        "seed": cfg.seed, "starts": cfg.starts, "uniform_start": cfg.uniform_start,
    }
    out["summary"] = res.summary()
    out["solutions"] = [_solution_entry(s, system, prob) for s in res]
    return out, EXIT_OK


def _cmd_rate(prob, args):
    fmap, system = _build(prob, args)
    cfg = _config(prob, args)
    sol = _power(fmap, cfg)
    rep = convergence_rate(fmap, sol, seed=cfg.seed)
    if isinstance(fmap, TensorMap):
        sol = block_normalize(sol, prob.tensor, fmap.w)
    out = _header(prob, args, "rate")
    out["rate"] = {
        "lam_M": _num(rep.lam_M),
        "r": _num(rep.r),
        "rate": _num(rep.rate),
        "empirical_rate": _num(rep.empirical_rate),
        "bound_ok": rep.bound_ok,
        "euler_residual": _ceil3(rep.euler_residual),
    }
    out["solutions"] = [_solution_entry(sol, system, prob)]
    return out, EXIT_OK


def _read_candidates(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise _Abort(EXIT_PROBLEM, f"{path}: cannot read ({exc.strerror})") from None
    except yaml.YAMLError as exc:
        raise _Abort(EXIT_PROBLEM, f"{path}: malformed YAML ({exc})") from None
    if not isinstance(data, dict):
        raise _Abort(EXIT_PROBLEM, f"{path}: a candidate file must be a mapping")
    items = data["solutions"] if "solutions" in data else [data]
    if not isinstance(items, list):
        raise _Abort(EXIT_PROBLEM, f"{path}: solutions must be a list")
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or not ("x" in item or "blocks" in item):
            raise _Abort(EXIT_PROBLEM, f"{path}: candidate {i + 1} needs x or blocks")
        try:
            if "x" in item:
                x = np.asarray(item["x"], dtype=float).ravel()
            else:
                x = np.concatenate([np.asarray(b, dtype=float).ravel() for b in item["blocks"]])
            lam = None if item.get("lam") is None else float(item["lam"])
            tol = None if item.get("residual") is None else float(item["residual"])
        except (TypeError, ValueError):
            raise _Abort(EXIT_PROBLEM, f"{path}: candidate {i + 1} has non-numeric data") from None
        out.append((x, lam, tol))
    return out


def _cmd_verify(prob, args):
    p = _effective_p(prob, args)
    if prob.kind == "tensor":
        system = (prob.tensor, NormWeights(p))
    else:
        system = (prob.poly, prob.deltas, p, prob.a)
    out = _header(prob, args, "verify")
    results = []
    ok = True
    for x, lam, own_tol in _read_candidates(args.candidate):
        tol = args.tol if args.tol is not None else (own_tol if own_tol is not None else 1e-8)
        lam = args.lam if args.lam is not None else lam
        try:
            rep = verify_solution(system, x, lam=lam, tol=tol)
        except ValueError as exc:
            raise _Abort(EXIT_PROBLEM, f"{args.candidate}: {exc}") from None
        ok &= rep.passed
        results.append({
            "lam": _num(rep.lam),
            "residual": _ceil3(rep.residual),
            "norm_deviations": [_ceil3(v) for v in rep.norm_deviations],
            "tol": tol,
            "passed": rep.passed,
        })
    out["candidates"] = results
    out["passed"] = bool(ok)
    return out, (EXIT_OK if ok else EXIT_VERIFY_FAILED)


_COMMANDS = {
    "check": _cmd_check,
    "solve": _cmd_solve,
    "search": _cmd_search,
    "rate": _cmd_rate,
    "verify": _cmd_verify,
}


def run_command(command, prob, args):
    """Dispatch one command; returns ``(report mapping, exit code)``."""
    return _COMMANDS[command](prob, args)


def _error(code, message) -> int:
    print(f"tensorpf: error: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        prob = load_problem(args.problem)
        report, code = run_command(args.command, prob, args)
    except _Abort as exc:
        return _error(exc.code, str(exc))
    except (ProblemFileError, NegativeCoefficientError, DegreeError) as exc:
        return _error(EXIT_PROBLEM, str(exc))
    except NotPrimitive as exc:
        return _error(EXIT_NOT_PRIMITIVE, str(exc))
    except NonMonotoneMap as exc:
        return _error(EXIT_NON_MONOTONE, f"{exc}; use the search command")
    except MaxIterExceeded as exc:
        return _error(EXIT_MAX_ITER, str(exc))
    except VanishingSliceError as exc:
        return _error(EXIT_STRUCTURE, str(exc))
    text = dump_yaml(report)
    if args.output:
        try:
            with open(args.output, "w") as fh:
                fh.write(text)
        except OSError as exc:
            return _error(EXIT_USAGE, f"{args.output}: cannot write ({exc.strerror})")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
