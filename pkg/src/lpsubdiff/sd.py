"""Slow-decrease classification of functions and profiles.

A function ``u`` is s-slowly decreasing (s-SD) when
``measure(Omega_k) / ||u||_{s, Omega_k} -> 0`` for every shrinking family of
sets inside its support.  Three sufficient-or-equivalent tests are offered:

* bounded away from zero on the support (sufficient),
* ``|u|^-1`` is ``r``-integrable on the support (sufficient, ``s > 1``),
* ``g(gamma) gamma^-r -> 0`` with ``g`` the level-measure function
  (equivalent, ``s > 1``),

plus the direct adversarial quotient over measure-minimal sublevel sets, and
a bisection solver for the crossing ``gamma^alpha g(gamma) = C``.

Limits cannot be evaluated on a finite grid.  Decay to zero is decided from
the upper envelope ``Phi(gamma) = sup_{gamma' <= gamma} phi(gamma')`` plotted
against ``L = log(X / gamma)``: power-law and logarithmic decay both show up as
a clearly negative slope of ``log Phi`` versus ``log L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import NoCrossingError, NotApplicableError, ParameterError
from .grid import Exponents, GridFunction, support_mask
from .profiles import ProfileFamily

METHODS = ("bounded_away", "hoelder", "level_decay", "adversarial")

DEFAULT_GAMMA_RANGE = (1e-9, 1e-1)
DEFAULT_GAMMA_POINTS = 60
DEFAULT_KAPPA = 0.2
DEFAULT_FIT_DECADES = 2.0
# decision ratio for the Hoelder tail test, see check_hoelder_criterion
HOELDER_RATIO = 0.5


@dataclass
class SdVerdict:
    """Outcome of a slow-decrease test.

    ``trace`` holds ``(gamma, phi)`` pairs with strictly decreasing ``gamma``
    (``(t, quotient)`` pairs for the adversarial method).  ``slope_estimate``
    is the fitted slope of ``log phi`` against ``log gamma`` over the smallest
    decades; ``decay_slope`` is the slope of the log envelope against the log
    of ``log(1/gamma)`` that actually decides the verdict.
    """

    is_sd: bool
    method: str
    trace: List[Tuple[float, float]] = field(default_factory=list)
    slope_estimate: float = math.nan
    decay_slope: float = math.nan

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "is_sd": bool(self.is_sd),
            "method": self.method,
            "trace": [[float(a), float(b)] for a, b in self.trace],
            "slope_estimate": _finite_or_none(self.slope_estimate),
            "decay_slope": _finite_or_none(self.decay_slope),
        }


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


# Bounded away from zero ---------------------------------------------------------


VACUOUS = math.inf


def check_bounded_away(u: GridFunction, zero_tol: float = 0.0) -> float:
    """Smallest ``|u_i|`` over the support.

    Any positive value certifies that ``u`` is s-SD for every ``s``.  The zero
    function is trivially s-SD and returns :data:`VACUOUS` (``inf``).
    """
    m = support_mask(u, zero_tol)
    if not np.any(m):
        return VACUOUS
    return float(np.min(np.abs(u.values[m])))


def grid_verdict(u: GridFunction, zero_tol: float = 0.0) -> SdVerdict:
    """Verdict for a grid function; finitely many values are always bounded away from zero."""
    eps = check_bounded_away(u, zero_tol)
    return SdVerdict(is_sd=eps > 0, method="bounded_away")


def profile_bounded_away(profile: ProfileFamily) -> float:
    """Essential infimum of ``|u|`` on the support; 0 when values accumulate at 0."""
    return profile.essential_infimum()


# Hoelder-type sufficient criterion ---------------------------------------------


class HoelderResult(NamedTuple):
    converges: bool
    value: float
    ratio: float


# profiles are evaluated in log space, so the windows can reach far below double-precision scales
DEEP_GAMMA = 1e-300


def integrability_test(
    profile: ProfileFamily,
    exponent: float,
    gamma_min: float = DEEP_GAMMA,
    ratio_limit: float = HOELDER_RATIO,
) -> HoelderResult:
    """Decide whether ``integral_{u != 0} |u|^-exponent`` is finite.

    ``value`` is the partial integral ``S(gamma_min) = integral_{|u| > gamma_min} |u|^-exponent``.
    With ``L = log(sup|u| / gamma_min)`` the increments of ``S`` over the
    windows ``L/4 .. L/2`` and ``L/2 .. L`` are compared.  A convergent
    integral puts geometrically less mass in the deeper window
    (``ratio <= ratio_limit``); logarithmic or power divergence does not.
    Profiles bounded away from zero converge outright with the full integral.
    """
    if not gamma_min > 0:
        raise ParameterError("gamma_min must be positive")
    if profile.essential_infimum() > 0:
        return HoelderResult(True, profile.inverse_moment(exponent, 0.0), 0.0)
    value = profile.inverse_moment(exponent, gamma_min)
    if math.isinf(value):
        return HoelderResult(False, value, math.inf)
    top = profile.sup_value()
    if gamma_min >= top:
        return HoelderResult(True, value, 0.0)
    big_l = math.log(top / gamma_min)
    s_half = profile.inverse_moment(exponent, top * math.exp(-big_l / 2))
    s_quarter = profile.inverse_moment(exponent, top * math.exp(-big_l / 4))
    near = value - s_half
    far = s_half - s_quarter
    if near <= 0:
        return HoelderResult(True, value, 0.0)
    ratio = near / far if far > 0 else math.inf
    return HoelderResult(bool(ratio <= ratio_limit), value, ratio)


def check_hoelder_criterion(
    profile: ProfileFamily,
    exps: Exponents,
    gamma_min: float = DEEP_GAMMA,
    ratio_limit: float = HOELDER_RATIO,
) -> HoelderResult:
    """Sufficient s-SD test: is ``|u|^-1 chi_{u != 0}`` in ``L^r``?  See :func:`integrability_test`."""
    if exps.s == 1.0:
        raise NotApplicableError("the Hoelder criterion needs s > 1")
    return integrability_test(profile, exps.r, gamma_min, ratio_limit)


# Level-measure criterion ---------------------------------------------------------


def default_gamma_grid(profile: Optional[ProfileFamily] = None) -> np.ndarray:
    lo, hi = DEFAULT_GAMMA_RANGE
    if profile is not None:
        inf = profile.essential_infimum()
        if 0 < inf <= lo * 10:
            lo = inf / 10
    return np.geomspace(hi, lo, DEFAULT_GAMMA_POINTS)


def _decreasing_grid(grid: Sequence[float], name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size < 3 or np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise ParameterError(f"{name} needs at least three finite positive points")
    return np.unique(g)[::-1]


def decays_to_zero(
    x: np.ndarray, y: np.ndarray, fit_decades: float, kappa: float, x_ref: float
) -> Tuple[bool, float]:
    """Decide whether ``y(x) -> 0`` as ``x -> 0`` from samples on a decreasing grid.

    Returns ``(verdict, slope)`` where ``slope`` is the least-squares slope of
    ``log Phi`` against ``log log(x_ref / x)`` over the smallest ``fit_decades``
    decades of ``x`` and ``Phi`` is the running supremum of ``y`` towards 0.
    """
    env = np.maximum.accumulate(y[::-1])[::-1]
    if env[-1] == 0.0:
        return True, -math.inf
    sel = (x <= x[-1] * 10.0**fit_decades) & (env > 0)
    if np.count_nonzero(sel) < 2:
        raise ParameterError("too few grid points in the fit window")
    big_l = np.log(x_ref / x[sel])
    slope = float(np.polyfit(np.log(big_l), np.log(env[sel]), 1)[0])
    return bool(slope <= -kappa), slope


def check_level_decay(
    profile: ProfileFamily,
    exps: Exponents,
    gamma_grid: Optional[Sequence[float]] = None,
    kappa: float = DEFAULT_KAPPA,
    fit_decades: float = DEFAULT_FIT_DECADES,
) -> SdVerdict:
    """Classify via ``phi(gamma) = g(gamma) gamma^-r -> 0`` (characterises s-SD for ``s > 1``).

    ``phi`` is evaluated on the grid merged with every jump of ``g`` inside
    the grid range, so step profiles are sampled at their worst points.
    """
    if exps.s == 1.0:
        raise NotApplicableError("the level-measure criterion needs s > 1")
    grid = default_gamma_grid(profile) if gamma_grid is None else gamma_grid
    gam = _decreasing_grid(grid, "gamma_grid")
    if math.log10(gam[0] / gam[-1]) < 5.0 - 1e-9:
        raise ParameterError("gamma_grid must span at least five decades")
    jumps = profile.atoms(gam[-1], gam[0])
    if jumps.size:
        gam = np.unique(np.concatenate([gam, jumps]))[::-1]
    r = exps.r
    log_g = np.array([profile.log_level_measure(float(x)) for x in gam])
    with np.errstate(over="ignore"):
        phi = np.exp(log_g - r * np.log(gam))
    x_ref = max(1.0, math.e * gam[0])
    verdict, slope = decays_to_zero(gam, phi, fit_decades, kappa, x_ref)
    sel = (gam <= gam[-1] * 10.0**fit_decades) & (phi > 0)
    raw = math.nan
    if np.count_nonzero(sel) >= 2:
        raw = float(np.polyfit(np.log(gam[sel]), np.log(phi[sel]), 1)[0])
    return SdVerdict(
        is_sd=verdict,
        method="level_decay",
        trace=list(zip(gam.tolist(), phi.tolist())),
        slope_estimate=raw,
        decay_slope=slope,
    )


# Adversarial quotient --------------------------------------------------------------


def adversarial_quotient(
    profile: ProfileFamily, exps: Exponents, t_grid: Sequence[float]
) -> List[Tuple[float, float]]:
    """``measure(Omega_t) / ||u||_{s, Omega_t}`` on measure-minimal sublevel sets.

    ``Omega_t`` collects the smallest values of ``|u|`` up to measure ``t``;
    among all subsets of the support with measure ``t`` it maximises the
    quotient.
    """
    out = []
    for t in np.asarray(t_grid, dtype=float).reshape(-1):
        log_m = profile.log_sublevel_moment(float(t), exps.s)
        out.append((float(t), math.exp(math.log(t) - log_m / exps.s)))
    return out


def default_t_grid(profile: ProfileFamily, decades: float = 15.0, points: int = 76) -> np.ndarray:
    top = profile.support_measure()
    return np.geomspace(top, top * 10.0**-decades, points)


def adversarial_verdict(
    profile: ProfileFamily,
    exps: Exponents,
    t_grid: Optional[Sequence[float]] = None,
    kappa: float = DEFAULT_KAPPA,
    fit_decades: float = 3.0,
) -> SdVerdict:
    """Decide s-SD directly from the adversarial quotient tending to 0 as ``t -> 0``."""
    grid = default_t_grid(profile) if t_grid is None else t_grid
    ts = _decreasing_grid(grid, "t_grid")
    qs = np.array([q for _, q in adversarial_quotient(profile, exps, ts)])
    x_ref = max(1.0, math.e * ts[0])
    verdict, slope = decays_to_zero(ts, qs, fit_decades, kappa, x_ref)
    sel = ts <= ts[-1] * 10.0**fit_decades
    raw = float(np.polyfit(np.log(ts[sel]), np.log(qs[sel]), 1)[0])
    return SdVerdict(
        is_sd=verdict,
        method="adversarial",
        trace=list(zip(ts.tolist(), qs.tolist())),
        slope_estimate=raw,
        decay_slope=slope,
    )


def classify_profile(profile: ProfileFamily, exps: Exponents, **kwargs) -> SdVerdict:
    """Strongest applicable verdict: bounded away, then the level-measure criterion.

    For ``s = 1`` only the adversarial quotient is available.
    """
    if profile.essential_infimum() > 0:
        return SdVerdict(is_sd=True, method="bounded_away")
    if exps.s == 1.0:
        return adversarial_verdict(profile, exps)
    return check_level_decay(profile, exps, **kwargs)


# Monotone crossing -----------------------------------------------------------------


def ivt_gamma(
    g: Callable[[float], float],
    alpha: float,
    C: float,
    tol: float = 1e-13,
    gamma0: float = 1.0,
    max_doublings: int = 2000,
) -> float:
    """Locate ``gamma_C`` with ``g(gamma_C-) <= C / gamma_C^alpha <= g(gamma_C+)``.

    ``g`` must be nondecreasing on ``[0, inf)``; then ``h(gamma) = gamma^alpha g(gamma)``
    is nondecreasing and crosses ``C`` exactly once.  The crossing is
    bracketed by repeated doubling or halving, narrowed geometrically while
    the bracket spans more than a factor 2, then by plain bisection until its
    width is at most ``tol``.  The upper end of the bracket is returned.
    """
    if not (alpha > 0 and C > 0 and tol > 0 and gamma0 > 0):
        raise ParameterError("alpha, C, tol and gamma0 must be positive")

    def above(x):
        return x**alpha * g(x) >= C

    lo = hi = float(gamma0)
    if above(hi):
        for _ in range(max_doublings):
            lo = hi / 2.0
            if lo == 0.0 or not above(lo):
                break
            hi = lo
        else:
            lo = 0.0
    else:
        for _ in range(max_doublings):
            lo = hi
            hi = hi * 2.0
            if math.isinf(hi):
                raise NoCrossingError("gamma^alpha g(gamma) never reaches C")
            if above(hi):
                break
        else:
            raise NoCrossingError("gamma^alpha g(gamma) never reaches C")
    while lo > 0 and hi / lo > 2.0:
        mid = math.sqrt(lo * hi)
        if above(mid):
            hi = mid
        else:
            lo = mid
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if above(mid):
            hi = mid
        else:
            lo = mid
    return hi
