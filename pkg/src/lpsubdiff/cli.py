"""Command-line front end.

Every command reads a JSON document (``--input`` path, or ``-`` / omitted for
stdin), writes a JSON report (or CSV with ``--format csv``) to ``--output``
(stdout by default) and exits with

* 0 on success,
* 1 on errors (bad input, invalid parameters),
* 2 when the computed verdict is negative (not slowly decreasing, falsified,
  not converged, or a recipe missing its expected outcome).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Dict, List, Optional

import numpy as np

from . import falsifier as fz
from . import prox as px
from . import sd
from . import subdiff as sdf
from .errors import LpSubdiffError
from .functionals import SparsityFunctional, q_value
from .grid import Exponents, GridFunction, MeasureSpace, partial_norm
from .profiles import DyadicProfile, PowerProfile, ProfileFamily, profile_from_dict

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

COMMANDS = ("eval", "sdcheck", "subdiff", "subdiff-test", "lipschitz-probe", "prox-solve", "example")

TOLERANCE_NAMES = {
    "zero_tol": 0.0,
    "member": sdf.DEFAULT_MEMBER_TOL,
    "delta": fz.DEFAULT_DELTA,
    "stationarity": px.DEFAULT_STATIONARITY_TOL,
    "solver": 1e-10,
}

RECIPES = ("power-profile", "dyadic-profile", "support-violation", "fractional-verify", "poisson-sweep")
# short names used in the published interface
RECIPE_ALIASES = {
    "ex2.7": "power-profile",
    "ex2.9": "dyadic-profile",
    "lemma3.1-falsify": "support-violation",
    "thm4.4-verify": "fractional-verify",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# serialisation ---------------------------------------------------------------------


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(report: dict) -> str:
    """Deterministic JSON; floats use the shortest repr that round-trips."""
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _csv(header: List[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) if not isinstance(x, str) else x for x in row))
    return "\n".join(lines) + "\n"


# input helpers -----------------------------------------------------------------------


def load_json(path: Optional[str]) -> dict:
    if path is None or path == "-":
        text = sys.stdin.read()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LpSubdiffError(
            f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(data, dict):
        raise LpSubdiffError("the input document must be a JSON object")
    return data


def _grid(data, key: str = "u", space: Optional[MeasureSpace] = None) -> GridFunction:
    """Grid function from ``{"cell_measures": [...], "values": [...]}`` or a bare value list."""
    obj = data.get(key)
    if obj is None:
        raise LpSubdiffError(f"missing field {key!r}")
    if isinstance(obj, list):
        if space is None:
            space = MeasureSpace.uniform(len(obj))
        return GridFunction(space, obj)
    g = GridFunction.from_dict(obj)
    if space is not None and not space.same_as(g.space):
        raise LpSubdiffError(f"{key!r} lives on a different grid")
    return g


def _exps(data, default_s: float = 2.0) -> Exponents:
    return Exponents(float(data.get("s", default_s)), float(data.get("p", 0.0)))


def _parse_tols(items: List[str]) -> Dict[str, float]:
    tols = dict(TOLERANCE_NAMES)
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or name not in tols:
            raise UsageError(f"bad --tol {item!r}; known names: {', '.join(sorted(tols))}")
        try:
            tols[name] = float(value)
        except ValueError:
            raise UsageError(f"bad --tol value in {item!r}") from None
    return tols


# commands ----------------------------------------------------------------------------------


def cmd_eval(data, args, tols):
    u = _grid(data)
    exps = _exps(data)
    zero_tol = float(data.get("zero_tol", tols["zero_tol"]))
    value = q_value(u, exps.p, zero_tol)
    return {"value": value, "exps": exps.to_dict()}, None, EXIT_OK


def _profile_report(profile: ProfileFamily, exps: Exponents, gamma_grid=None):
    out = {"profile": profile.to_dict(), "exps": exps.to_dict()}
    out["bounded_away"] = profile.essential_infimum()
    if exps.s > 1:
        verdict = sd.check_level_decay(profile, exps, gamma_grid)
        h = sd.check_hoelder_criterion(profile, exps)
        out["hoelder"] = {"converges": h.converges, "partial_value": h.value, "ratio": h.ratio}
    else:
        verdict = sd.adversarial_verdict(profile, exps)
        out["hoelder"] = None
    adv = sd.adversarial_verdict(profile, exps)
    out["verdict"] = verdict.to_dict()
    out["adversarial"] = {
        "is_sd": adv.is_sd,
        "decay_slope": adv.decay_slope,
        "slope_estimate": adv.slope_estimate,
    }
    out["is_sd"] = bool(verdict.is_sd or out["bounded_away"] > 0)
    return out, verdict


def cmd_sdcheck(data, args, tols):
    profile = profile_from_dict(data)
    exps = Exponents(float(data.get("s", 2.0)), float(data.get("p", 0.0)))
    report, verdict = _profile_report(profile, exps, data.get("gamma_grid"))
    csv = _csv(["gamma", "phi"], verdict.trace)
    return report, csv, EXIT_OK if report["is_sd"] else EXIT_NEGATIVE


def _sd_for(data, u, exps, zero_tol):
    if "profile" in data:
        profile = profile_from_dict(data["profile"])
        return sd.classify_profile(profile, exps), profile
    return sd.grid_verdict(u, zero_tol), None


def cmd_subdiff(data, args, tols):
    u = _grid(data)
    exps = _exps(data)
    zero_tol = float(data.get("zero_tol", tols["zero_tol"]))
    verdict, profile = _sd_for(data, u, exps, zero_tol)
    out = {"exps": exps.to_dict(), "sd": verdict.to_dict() if exps.s > 1 else None}
    descs = {
        "frechet": sdf.frechet_descriptor(u, exps, verdict, zero_tol, profile),
        "limiting": sdf.limiting_descriptor(u, exps, zero_tol, profile),
    }
    if exps.s > 1:
        descs["singular"] = sdf.singular_descriptor(u, exps, zero_tol)
    out["descriptors"] = {k: d.to_dict() for k, d in descs.items()}
    code = EXIT_OK
    if "eta" in data:
        eta = _grid(data, "eta", u.space)
        member = {k: sdf.contains(d, eta, tols["member"]) for k, d in descs.items()}
        out["contains"] = member
        if not member["frechet"]:
            code = EXIT_NEGATIVE
    return out, None, code


def cmd_subdiff_test(data, args, tols):
    u = _grid(data)
    eta = _grid(data, "eta", u.space)
    exps = _exps(data)
    q = SparsityFunctional(exps, u.space)
    kinds = data.get("families")
    if kinds is None:
        fams = fz.builtin_families(seed=args.seed)
    else:
        fams = [fz.DirectionFamily(k, seed=args.seed) for k in kinds]
    delta = float(data.get("delta", tols["delta"]))
    rep = fz.falsify(q, u, eta, fams, delta)
    out = rep.to_dict()
    out["exps"] = exps.to_dict()
    code = EXIT_NEGATIVE if rep.falsified else EXIT_OK
    return out, rep.samples_csv(), code


def cmd_lipschitz(data, args, tols):
    u = _grid(data)
    exps = _exps(data)
    radius = float(data.get("radius", 1.0))
    stages = int(data.get("stages", 25))
    rows = sdf.lipschitz_probe(u, exps, radius, stages)
    ratios = [r for _, r in rows]
    growing = all(b >= a for a, b in zip(ratios, ratios[1:])) and ratios[-1] > ratios[0]
    out = {"exps": exps.to_dict(), "stages": [list(r) for r in rows], "unbounded": growing}
    code = EXIT_OK if growing or stages == 1 else EXIT_NEGATIVE
    return out, _csv(["scale", "ratio"], rows), code


def _operator(cfg) -> px.LinearOperator:
    kind = cfg.get("kind")
    if kind == "poisson1d":
        return px.Poisson1D(int(cfg["n"]))
    if kind == "dense":
        rows = np.asarray(cfg["rows"], dtype=float)
        if rows.ndim != 2:
            raise LpSubdiffError("dense operator rows must form a matrix")
        meas = cfg.get("cell_measures")
        space = MeasureSpace(meas) if meas else MeasureSpace.uniform(rows.shape[1])
        return px.DenseOperator(rows, space)
    raise LpSubdiffError(f"unknown operator kind {kind!r}")


def _problem(data) -> px.CompositeProblem:
    if "operator" not in data:
        raise LpSubdiffError("missing field 'operator'")
    op = _operator(data["operator"])
    b = _grid(data, "b", op.obs_space)
    return px.CompositeProblem(op, b, float(data.get("beta", 1.0)), Exponents(2.0, float(data.get("p", 0.0))))


def cmd_prox_solve(data, args, tols):
    prob = _problem(data)
    u0 = _grid(data, "u0", prob.space) if "u0" in data else None
    res = px.solve(
        prob,
        u0,
        max_iter=int(data.get("max_iter", 10000)),
        tol=float(data.get("tol", tols["solver"])),
        zero_tol=float(data.get("zero_tol", px.DEFAULT_ZERO_TOL)),
        stationarity_tol=tols["stationarity"],
    )
    out = {
        "solution": res.u.to_dict(),
        "report": res.report.to_dict(),
        "iterations": res.iterations,
        "step": res.step,
    }
    return out, res.trace_csv(), EXIT_OK if res.report.converged else EXIT_NEGATIVE


# recipes ------------------------------------------------------------------------------------


def recipe_power_profile(args, tols):
    alpha, s = args.alpha, args.s
    exps = Exponents(s, 0.0)
    prof = PowerProfile(alpha)
    ts = [10.0**-k for k in range(1, 11)]
    quot = sd.adversarial_quotient(prof, exps, ts)
    expo = 1.0 - alpha - 1.0 / s
    closed = [(alpha * s + 1.0) ** (1.0 / s) * t**expo for t in ts]
    rel = max(abs(q / c - 1.0) for (_, q), c in zip(quot, closed))
    fitted = float(np.polyfit(np.log(ts), np.log([q for _, q in quot]), 1)[0])
    report, _ = _profile_report(prof, exps)
    expected = alpha + 1.0 / s < 1.0
    boundary = abs(alpha + 1.0 / s - 1.0) < 1e-12
    ok = rel <= 1e-10 and (boundary or report["is_sd"] == expected)
    out = {
        "recipe": "power-profile",
        "alpha": alpha,
        "s": s,
        "is_sd": report["is_sd"],
        "expected_is_sd": expected,
        "boundary": boundary,
        "quotient_exponent": expo,
        "fitted_quotient_exponent": fitted,
        "max_relative_error": rel,
        "quotients": [[t, q, c] for (t, q), c in zip(quot, closed)],
        "hoelder": report["hoelder"],
        "level_decay_slope": report["verdict"]["decay_slope"],
    }
    return out, ok


def recipe_dyadic_profile(args, tols):
    s = args.s
    exps = Exponents(s, 0.0)
    prof = DyadicProfile.critical(s)
    verdict = sd.check_level_decay(prof, exps)
    k_max = args.k
    g_lo = float(np.sqrt(prof.gamma(k_max) * prof.gamma(k_max + 1)))
    h = sd.check_hoelder_criterion(prof, exps, g_lo)
    harmonic = float(np.sum(1.0 / (2.0 * np.arange(1, k_max + 1))))
    bounds_ok = True
    rows = []
    for k in range(1, 41):
        t = 2.0**-k
        q = sd.adversarial_quotient(prof, exps, [t])[0][1]
        lo = float(t ** (1.0 - 1.0 / s) / prof.gamma(k))
        hi = 2.0 ** (1.0 / s) * lo
        bounds_ok &= lo * (1 - 1e-12) <= q <= hi * (1 + 1e-12)
        rows.append([k, lo, q, hi])
    rel = abs(h.value / harmonic - 1.0)
    ok = verdict.is_sd and not h.converges and rel <= 1e-6 and bounds_ok
    out = {
        "recipe": "dyadic-profile",
        "s": s,
        "is_sd": verdict.is_sd,
        "hoelder": h.converges,
        "hoelder_partial_sum": h.value,
        "harmonic_partial_sum": harmonic,
        "terms": k_max,
        "quotient_bounds_hold": bool(bounds_ok),
        "quotient_bounds": rows,
        "level_decay_slope": verdict.decay_slope,
    }
    return out, ok


def recipe_support_violation(args, tols):
    s, n = args.s, args.n
    space = MeasureSpace.uniform(n)
    left = space.midpoints() < 0.5
    u = space.function(left.astype(float))
    eta = space.function(left.astype(float))
    q = SparsityFunctional(Exponents(s, 0.0), space)
    rep = fz.falsify(q, u, eta, [fz.DirectionFamily("scaled_support"), fz.DirectionFamily("support_kill")], tols["delta"])
    rho = 1.0
    bound = -rho * partial_norm(u, 1.0, left) / partial_norm(u, s, left)
    ok = rep.falsified and rep.witness_quotient <= bound + 1e-8
    out = {
        "recipe": "support-violation",
        "s": s,
        "verdict": rep.verdict,
        "witness_quotient": rep.witness_quotient,
        "bound": bound,
        "families": rep.family_verdicts,
    }
    return out, ok


def recipe_fractional_verify(args, tols):
    p, s, v = args.p, args.s, args.v
    space = MeasureSpace.uniform(args.n)
    u = space.constant(v)
    exps = Exponents(s, p)
    d = sdf.frechet_descriptor(u, exps)
    eta = d.element()
    q = SparsityFunctional(exps, space)
    good = fz.falsify(q, u, eta, fz.builtin_families(args.seed), tols["delta"])
    shifted = eta.with_values(eta.values + 0.01)
    bad = fz.falsify(q, u, shifted, fz.builtin_families(args.seed), tols["delta"])
    ok = (not good.falsified) and bad.falsified
    out = {
        "recipe": "fractional-verify",
        "p": p,
        "s": s,
        "value": v,
        "eta": float(eta.values[0]),
        "exact_eta_verdict": good.verdict,
        "shifted_eta_verdict": bad.verdict,
        "shifted_witness_quotient": bad.witness_quotient,
    }
    return out, ok


def recipe_poisson_sweep(args, tols):
    op = px.Poisson1D(args.n)
    x = op.nodes()
    b = op.space.function(0.05 * np.sin(np.pi * x) + 0.02 * np.sin(3 * np.pi * x))
    rows = []
    ok = True
    for p in (0.0, 0.5):
        for beta in (5e-4, 7e-4, 1e-3):
            prob = px.CompositeProblem(op, b, beta, Exponents(2.0, p))
            res = px.solve(prob, max_iter=20000, tol=1e-12, stationarity_tol=tols["stationarity"])
            eta = px.multiplier(prob, res.u)
            q = SparsityFunctional(prob.exps, op.space)
            rep = fz.falsify(q, res.u, eta, fz.builtin_families(args.seed), tols["delta"])
            ok &= res.report.converged and not rep.falsified
            rows.append(
                {
                    "p": p,
                    "beta": beta,
                    "iterations": res.iterations,
                    "objective": res.report.objective,
                    "support_measure": res.report.support_measure,
                    "support_residual": res.report.support_residual,
                    "converged": res.report.converged,
                    "falsify": rep.verdict,
                }
            )
    return {"recipe": "poisson-sweep", "n": args.n, "runs": rows}, ok


RECIPE_FUNCS = {
    "power-profile": recipe_power_profile,
    "dyadic-profile": recipe_dyadic_profile,
    "support-violation": recipe_support_violation,
    "fractional-verify": recipe_fractional_verify,
    "poisson-sweep": recipe_poisson_sweep,
}


def cmd_example(args, tols):
    name = RECIPE_ALIASES.get(args.recipe, args.recipe)
    if name not in RECIPE_FUNCS:
        known = sorted(set(RECIPES) | set(RECIPE_ALIASES))
        raise UsageError(f"unknown recipe {args.recipe!r}; known: {', '.join(known)}")
    out, ok = RECIPE_FUNCS[name](args, tols)
    out["expected_outcome"] = bool(ok)
    return out, None, EXIT_OK if ok else EXIT_NEGATIVE


HANDLERS = {
    "eval": cmd_eval,
    "sdcheck": cmd_sdcheck,
    "subdiff": cmd_subdiff,
    "subdiff-test": cmd_subdiff_test,
    "lipschitz-probe": cmd_lipschitz,
    "prox-solve": cmd_prox_solve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpsubdiff", description=__doc__.splitlines()[0])
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("recipe", nargs="?", help="recipe name for the example command")
    parser.add_argument("--input", "-i", default=None, help="input JSON path ('-' for stdin)")
    parser.add_argument("--output", "-o", default=None, help="output path (stdout if omitted)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--alpha", type=float, default=0.25)
    parser.add_argument("--s", type=float, default=2.0)
    parser.add_argument("--p", type=float, default=0.5)
    parser.add_argument("--v", type=float, default=4.0)
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument("--k", type=int, default=1000, help="number of dyadic terms")
    return parser


def run(argv: Optional[List[str]] = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command not in COMMANDS:
            raise UsageError(f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}")
        tols = _parse_tols(args.tol)
        if args.command == "example":
            if not args.recipe:
                raise UsageError("the example command needs a recipe name")
            report, csv, code = cmd_example(args, tols)
        else:
            if args.recipe:
                raise UsageError(f"unexpected argument {args.recipe!r}")
            data = load_json(args.input)
            report, csv, code = HANDLERS[args.command](data, args, tols)
        if args.format == "csv":
            if csv is None:
                raise UsageError(f"{args.command} has no CSV output")
            text = csv
        else:
            text = dumps(report)
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            stdout.write(text)
        return code
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        stderr.write(parser.format_usage())
        return EXIT_ERROR
    except (LpSubdiffError, ValueError, KeyError, TypeError, OSError, ZeroDivisionError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
