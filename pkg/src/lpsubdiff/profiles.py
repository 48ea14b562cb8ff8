"""Analytic profile families on (0, 1) with exact level-measure functions.

A profile describes the distribution of ``|u|`` for a function ``u`` on a
measure space.  Everything the slow-decrease criteria need is a functional of
that distribution:

* ``g(gamma) = measure{0 < |u| <= gamma}`` (the level-measure function),
* ``integral_{|u| > lo} |u|^(-e)`` (inverse moments),
* ``integral_{Omega_t} |u|^nu`` where ``Omega_t`` is the set of measure ``t``
  on which ``|u|`` is smallest (sublevel moments).

Three kinds are provided: the power profile ``x^alpha``, the dyadic staircase
``sum_j gamma_j chi_(2^-(j+1), 2^-j]`` and an explicit table of atoms.  The
dyadic and table kinds are handled as (possibly infinite) sums of atoms and
evaluated in log space, so levels far below the smallest normal double are
still reachable.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError, UnsupportedProfileError
from .grid import GridFunction

LN2 = math.log(2.0)
# relative size below which tails of geometric atom series are dropped
_SERIES_RTOL = 1e-16


def _exp(x) -> float:
    """``exp`` that saturates to ``inf`` instead of warning."""
    x = float(x)
    return math.inf if x > 709.0 else math.exp(x)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


class ProfileFamily:
    """Base class; subclasses implement the exact distribution of ``|u|``."""

    kind = "abstract"
    domain_length = 1.0

    def log_level_measure(self, gamma: float) -> float:
        raise NotImplementedError

    def level_measure(self, gamma: float) -> float:
        return math.exp(self.log_level_measure(gamma))

    def support_measure(self) -> float:
        raise NotImplementedError

    def sup_value(self) -> float:
        raise NotImplementedError

    def essential_infimum(self) -> float:
        """Infimum of ``|u|`` over the support; positive means bounded away from zero."""
        raise NotImplementedError

    def inverse_moment(self, exponent: float, gamma_lo: float) -> float:
        """``integral_{|u| > gamma_lo} |u|^(-exponent)`` (may be ``inf`` for ``gamma_lo = 0``)."""
        raise NotImplementedError

    def log_sublevel_moment(self, t: float, nu: float) -> float:
        """``log integral_{Omega_t} |u|^nu`` for the measure-``t`` set where ``|u|`` is smallest."""
        raise NotImplementedError

    def sublevel_moment(self, t: float, nu: float) -> float:
        return math.exp(self.log_sublevel_moment(t, nu))

    def atoms(self, lo: float, hi: float) -> np.ndarray:
        """Values in ``[lo, hi]`` where ``g`` jumps (empty for continuous profiles)."""
        return np.empty(0)

    def _check_t(self, t: float):
        supp = self.support_measure()
        if not (t > 0 and t <= supp * (1 + 1e-12)):
            raise ParameterError(f"t={t} must lie in (0, {supp}]")

    def to_dict(self) -> dict:
        raise NotImplementedError


class PowerProfile(ProfileFamily):
    """``u(x) = x^alpha`` on (0, 1): ``g(gamma) = min(gamma^(1/alpha), 1)``."""

    kind = "power"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise ParameterError("alpha must be positive")
        self.alpha = float(alpha)

    def __repr__(self):
        return f"PowerProfile(alpha={self.alpha})"

    def log_level_measure(self, gamma):
        if gamma <= 0:
            return -math.inf
        return min(math.log(gamma) / self.alpha, 0.0)

    def support_measure(self):
        return 1.0

    def sup_value(self):
        return 1.0

    def essential_infimum(self):
        return 0.0

    def inverse_moment(self, exponent, gamma_lo):
        # integral over (a, 1) of x^k with a = gamma_lo^(1/alpha), k = -alpha*exponent
        if gamma_lo >= 1.0:
            return 0.0
        k1 = 1.0 - self.alpha * exponent
        log_a = _log(gamma_lo) / self.alpha
        if k1 == 0.0:
            return -log_a
        if math.isinf(log_a):
            return 1.0 / k1 if k1 > 0 else math.inf
        if k1 * log_a > 700.0:
            return math.inf
        return -math.expm1(k1 * log_a) / k1

    def log_sublevel_moment(self, t, nu):
        self._check_t(t)
        e = self.alpha * nu + 1.0
        return e * math.log(t) - math.log(e)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


class _AtomicProfile(ProfileFamily):
    """Profiles whose ``|u|`` takes countably many values with known masses."""

    def _log_atoms(self, need_log_gamma: float, need_log_mass: float):
        """Return ``(log_values, log_masses, log_tail)``.

        The arrays hold enough atoms that every value above ``need_log_gamma``
        is present and the mass of all omitted atoms, ``exp(log_tail)``, is
        below ``exp(need_log_mass)``; omitted atoms all have values below the
        ones kept.
        """
        raise NotImplementedError

    def log_level_measure(self, gamma):
        if gamma <= 0:
            return -math.inf
        lg = math.log(gamma)
        lv, lm, ltail = self._log_atoms(lg, -math.inf)
        keep = lv <= lg
        return float(logsumexp(np.append(lm[keep], ltail)))

    def inverse_moment(self, exponent, gamma_lo):
        lg = _log(gamma_lo)
        if math.isinf(lg):
            if self.essential_infimum() > 0:
                lv, lm, _ = self._log_atoms(-math.inf, -math.inf)
                return _exp(logsumexp(lm - exponent * lv))
            return math.inf
        lv, lm, _ = self._log_atoms(lg, -math.inf)
        keep = lv > lg
        if not np.any(keep):
            return 0.0
        return _exp(logsumexp(lm[keep] - exponent * lv[keep]))

    def log_sublevel_moment(self, t, nu):
        self._check_t(t)
        lt = math.log(t)
        lv, lm, ltail = self._log_atoms(-math.inf, lt + math.log(_SERIES_RTOL) - 4.0)
        order = np.argsort(lv, kind="stable")
        lv, lm = lv[order], lm[order]
        # cumulative measure of the smallest atoms, starting with the dropped tail
        log_cum = np.logaddexp.accumulate(np.append(ltail, lm))[1:]
        idx = int(np.searchsorted(log_cum, lt, side="left"))
        idx = min(idx, lv.size - 1)
        log_full = lm[:idx] + nu * lv[:idx]
        prev = log_cum[idx - 1] if idx > 0 else ltail
        rest = t - math.exp(prev) if prev > -math.inf else t
        parts = [log_full]
        if rest > 0:
            parts.append(np.array([math.log(rest) + nu * lv[idx]]))
        allp = np.concatenate(parts)
        if allp.size == 0:
            return -math.inf
        return float(logsumexp(allp))

    def atoms(self, lo, hi):
        lv, _, _ = self._log_atoms(_log(lo), -math.inf)
        vals = np.exp(lv)
        return np.unique(vals[(vals >= lo) & (vals <= hi)])


class DyadicProfile(_AtomicProfile):
    """Staircase ``u = sum_{j>=1} gamma_j chi_(t_{j+1}, t_j]`` with ``t_j = 2^-j``.

    Levels follow ``gamma_j = (j^k_power * 2^-j)^theta``.  With ``k_power = 1``
    and ``theta = 1/r`` the profile is s-slowly decreasing although
    ``|u|^-1`` is not ``r``-integrable.
    """

    kind = "dyadic"

    def __init__(self, theta: float, k_power: float = 1.0):
        if not theta > 0:
            raise ParameterError("theta must be positive")
        if k_power < 0:
            raise ParameterError("k_power must be nonnegative")
        self.theta = float(theta)
        self.k_power = float(k_power)
        # from this index on the levels decrease strictly
        self._j_mono = max(1, int(math.ceil(self.k_power / LN2)) + 1)
        self._cache_j = 0
        self._lv = np.empty(0)
        self._lm = np.empty(0)

    @classmethod
    def critical(cls, s: float) -> "DyadicProfile":
        """Levels ``(j 2^-j)^(1/r)``: slowly decreasing yet ``|u|^-1`` is not in ``L^r``."""
        if not s > 1:
            raise ParameterError("the critical dyadic profile needs s > 1")
        return cls(theta=1.0 - 1.0 / s, k_power=1.0)

    def __repr__(self):
        return f"DyadicProfile(theta={self.theta}, k_power={self.k_power})"

    def gamma(self, j) -> np.ndarray:
        return np.exp(self.log_gamma(j))

    def log_gamma(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=float)
        return self.theta * (self.k_power * np.log(j) - j * LN2)

    def _grow(self, jmax: int):
        if jmax <= self._cache_j:
            return
        jmax = max(jmax, 2 * self._cache_j, 64)
        j = np.arange(1, jmax + 1, dtype=float)
        self._lv = self.log_gamma(j)
        self._lm = -(j + 1.0) * LN2
        self._cache_j = jmax

    def _log_atoms(self, need_log_gamma, need_log_mass):
        # first index of the monotone tail whose level is <= need_log_gamma
        if math.isinf(need_log_gamma):
            j_gamma = self._j_mono
        else:
            j_gamma = self._j_mono
            self._grow(j_gamma + 64)
            while self._lv[self._cache_j - 1] > need_log_gamma:
                self._grow(2 * self._cache_j)
            tail = self._lv[self._j_mono - 1:]
            j_gamma = self._j_mono + int(np.argmax(tail <= need_log_gamma))
        # atoms beyond index J carry mass sum_{j>J} 2^-(j+1) = 2^-(J+1)
        j_mass = 0 if math.isinf(need_log_mass) else int(math.ceil(-need_log_mass / LN2))
        jmax = max(j_gamma, j_mass, self._j_mono)
        self._grow(jmax)
        return self._lv[:jmax], self._lm[:jmax], -(jmax + 1) * LN2

    def log_level_measure(self, gamma):
        # the monotone tail beyond the kept atoms enters through its closed-form mass
        if gamma <= 0:
            return -math.inf
        lg = math.log(gamma)
        lv, lm, ltail = self._log_atoms(lg, -math.inf)
        jmax = lv.size
        parts = list(lm[:jmax][lv <= lg])
        # every atom with index > jmax is in the monotone tail and below gamma
        parts.append(ltail)
        return float(logsumexp(parts))

    def support_measure(self):
        return 0.5

    def sup_value(self):
        lv, _, _ = self._log_atoms(-math.inf, -math.inf)
        return float(np.exp(np.max(lv)))

    def essential_infimum(self):
        return 0.0

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "k_power": self.k_power}


class TableProfile(_AtomicProfile):
    """Explicit distribution: ``g`` is the right-continuous step function through ``(gamma_i, g_i)``."""

    kind = "table"

    def __init__(self, gammas, g_values, domain_length: Optional[float] = None):
        gam = np.asarray(gammas, dtype=float).reshape(-1)
        g = np.asarray(g_values, dtype=float).reshape(-1)
        if gam.size == 0 or gam.size != g.size:
            raise ParameterError("table needs matching, nonempty gamma and g columns")
        order = np.argsort(gam)
        gam, g = gam[order], g[order]
        if np.any(gam <= 0) or np.any(np.diff(gam) <= 0):
            raise ParameterError("table levels must be positive and distinct")
        if np.any(g < 0) or np.any(np.diff(g) < 0):
            raise UnsupportedProfileError("table level-measure function is not monotone")
        masses = np.diff(np.concatenate([[0.0], g]))
        keep = masses > 0
        if not np.any(keep):
            raise ParameterError("table has zero support")
        self.gammas = gam
        self.g_values = g
        self._lv = np.log(gam[keep])
        self._lm = np.log(masses[keep])
        self.domain_length = float(domain_length) if domain_length else max(1.0, float(g[-1]))
        if g[-1] > self.domain_length * (1 + 1e-12):
            raise ParameterError("g exceeds the domain measure")

    @classmethod
    def from_grid(cls, u: GridFunction, zero_tol: float = 0.0) -> "TableProfile":
        """Distribution of ``|u|`` for a grid function."""
        a = np.abs(u.values)
        m = a > zero_tol
        vals, inv = np.unique(a[m], return_inverse=True)
        masses = np.bincount(inv, weights=u.space.cell_measures[m])
        return cls(vals, np.cumsum(masses), domain_length=u.space.total_measure)

    def __repr__(self):
        return f"TableProfile(n={self.gammas.size})"

    def _log_atoms(self, need_log_gamma, need_log_mass):
        return self._lv, self._lm, -math.inf

    def support_measure(self):
        return float(self.g_values[-1])

    def sup_value(self):
        return float(np.exp(self._lv.max()))

    def essential_infimum(self):
        return float(np.exp(self._lv.min()))

    def to_dict(self):
        return {
            "kind": self.kind,
            "pairs": [[float(a), float(b)] for a, b in zip(self.gammas, self.g_values)],
        }


def profile_from_dict(data: dict) -> ProfileFamily:
    """Build a profile from its JSON description.

    ``{"kind": "power", "alpha": a}``,
    ``{"kind": "dyadic", "s": s}`` (critical levels) or
    ``{"kind": "dyadic", "theta": th, "k_power": k}``,
    ``{"kind": "table", "pairs": [[gamma, g], ...]}``.
    """
    kind = data.get("kind")
    if kind == "power":
        return PowerProfile(float(data["alpha"]))
    if kind == "dyadic":
        k_power = float(data.get("k_power", 1.0))
        if "theta" in data:
            theta = float(data["theta"])
        elif "s" in data:
            s = float(data["s"])
            if not s > 1:
                raise ParameterError("dyadic levels derived from s need s > 1")
            theta = 1.0 - 1.0 / s
        else:
            raise ParameterError("dyadic profile needs 'theta' or 's'")
        return DyadicProfile(theta, k_power)
    if kind == "table":
        pairs = np.asarray(data["pairs"], dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ParameterError("table pairs must be [gamma, g] rows")
        return TableProfile(pairs[:, 0], pairs[:, 1], data.get("domain_length"))
    raise ParameterError(f"unknown profile kind {kind!r}")


LevelFunction = Callable[[float], float]
