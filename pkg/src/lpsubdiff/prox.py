"""Forward-backward splitting for ``F(u) = 1/2 ||Au - b||^2 + beta q_{2,p}(u)``.

The smooth part is handled by a gradient step in the cell-weighted ``L^2``
inner product, the sparsity term by its exact pointwise proximal map:
hard thresholding for ``p = 0`` and the global minimiser of
``1/2 (v - z)^2 + tau |v|^p`` for ``p`` in (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .errors import DimensionError, DivergenceError, ParameterError
from .functionals import q_value
from .grid import Exponents, GridFunction, MeasureSpace, mask_measure, support_mask

DEFAULT_ZERO_TOL = 1e-12
DEFAULT_STATIONARITY_TOL = 1e-6
POWER_ITERATIONS = 50
LIPSCHITZ_PAD = 1.01
# allowed objective increase per step, relative to |F|, before descent counts as violated
DESCENT_SLACK = 1e-12


# scalar proximal maps -------------------------------------------------------------


def _check_tau(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(~(t > 0)):
        raise ParameterError("tau must be positive")
    return t


def _root_fractional(a, tau, p, v_lo):
    """Larger root of ``psi(v) = v - a + tau p v^(p-1)`` on ``(v_lo, a)``.

    ``psi`` is convex and increasing right of its minimiser ``v_lo`` with
    ``psi(a) > 0``, so Newton's method started at ``a`` decreases
    monotonically to the root.  Each Newton step is safeguarded by the bracket
    and replaced by bisection when it leaves it.
    """
    lo = v_lo.copy()
    hi = a.copy()
    v = a.copy()
    for _ in range(200):
        vp = np.exp((p - 1.0) * np.log(v))
        psi = v - a + tau * p * vp
        dpsi = 1.0 + tau * p * (p - 1.0) * vp / v
        pos = psi > 0
        hi = np.where(pos, v, hi)
        lo = np.where(pos, lo, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = psi / dpsi
        nxt = v - step
        bad = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        done = (psi == 0) | (np.abs(nxt - v) <= 4e-16 * v) | (hi - lo <= 4e-16 * hi)
        v = np.where(psi == 0, v, nxt)
        if np.all(done):
            break
    return v


def prox(z, tau, p: float) -> np.ndarray:
    """Elementwise global minimiser of ``v -> 1/2 (v - z)^2 + tau phi_p(v)``.

    ``phi_0`` counts nonzeros (hard thresholding: keep ``z`` iff
    ``z^2 > 2 tau``) and ``phi_p = |v|^p`` otherwise.  Ties between ``0`` and
    a nonzero candidate resolve to ``0``.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"p must lie in [0, 1), got {p}")
    t = _check_tau(tau)
    z = np.asarray(z, dtype=float)
    z, t = np.broadcast_arrays(z, t)
    if p == 0.0:
        return np.where(z * z > 2.0 * t, z, 0.0)
    a = np.abs(z)
    out = np.zeros_like(a)
    # minimiser of psi, from tau p (1-p) v^(p-2) = 1; logs keep tiny tau*p representable
    v_min = np.exp((np.log(t) + math.log(p) + math.log1p(-p)) / (2.0 - p))
    # at v_min the penalty term tau p v^(p-1) equals v_min / (1-p)
    psi_min = v_min * (2.0 - p) / (1.0 - p) - a
    cand = (a > 0) & (v_min < a) & (psi_min <= 0)
    if np.any(cand):
        ac, tc = a[cand], t[cand]
        v = _root_fractional(ac, tc, p, v_min[cand])
        obj_v = 0.5 * (v - ac) ** 2 + tc * v**p
        obj_0 = 0.5 * ac * ac
        out[cand] = np.where(obj_v < obj_0, v, 0.0)
    return np.sign(z) * out


def prox_scalar(z: float, tau: float, p: float) -> float:
    return float(prox(float(z), float(tau), p))


def half_threshold(z, tau) -> np.ndarray:
    """Closed-form prox of ``tau |v|^(1/2)`` (trigonometric root of the cubic)."""
    t = _check_tau(tau)
    z = np.asarray(z, dtype=float)
    z, t = np.broadcast_arrays(z, t)
    a = np.abs(z)
    out = np.zeros_like(a)
    keep = a > 1.5 * t ** (2.0 / 3.0)
    if np.any(keep):
        ak, tk = a[keep], t[keep]
        phi = np.arccos(np.clip((tk / 4.0) * (ak / 3.0) ** -1.5, -1.0, 1.0))
        out[keep] = (2.0 / 3.0) * ak * (1.0 + np.cos(2.0 * np.pi / 3.0 - 2.0 * phi / 3.0))
    return np.sign(z) * out


def prox_objective(v, z, tau, p: float):
    """``1/2 (v - z)^2 + tau phi_p(v)``."""
    v = np.asarray(v, dtype=float)
    if p == 0.0:
        pen = (v != 0).astype(float)
    else:
        pen = np.abs(v) ** p
    return 0.5 * (v - z) ** 2 + tau * pen


# operators --------------------------------------------------------------------------


class LinearOperator:
    """Control-to-observation map with its adjoint in the weighted inner products."""

    kind = "abstract"
    space: MeasureSpace
    obs_space: MeasureSpace

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``A* y = Lambda^-1 A^T M y`` with cell measures ``Lambda`` and ``M``."""
        y = np.asarray(y, dtype=float)
        return self.apply_transpose(self.obs_space.cell_measures * y) / self.space.cell_measures

    def normal(self, u: np.ndarray) -> np.ndarray:
        return self.adjoint(self.apply(u))

    def lipschitz(self, iterations: int = POWER_ITERATIONS, pad: float = LIPSCHITZ_PAD) -> float:
        """Padded power-iteration estimate of the largest eigenvalue of ``A* A``."""
        lam = self.space.cell_measures
        x = np.random.default_rng(0).standard_normal(self.space.n) + 1.0
        x /= math.sqrt(np.sum(lam * x * x))
        est = 0.0
        for _ in range(iterations):
            y = self.normal(x)
            est = float(np.sum(lam * x * y))
            nrm = math.sqrt(np.sum(lam * y * y))
            if nrm == 0.0:
                return pad * est if est > 0 else 1.0
            x = y / nrm
        return pad * est

    def to_dict(self) -> dict:
        raise NotImplementedError


class DenseOperator(LinearOperator):
    kind = "dense"

    def __init__(self, matrix, space: MeasureSpace, obs_space: Optional[MeasureSpace] = None):
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[1] != space.n:
            raise DimensionError("matrix columns must match the control grid")
        if obs_space is None:
            obs_space = space if mat.shape[0] == space.n else MeasureSpace.uniform(mat.shape[0])
        if obs_space.n != mat.shape[0]:
            raise DimensionError("matrix rows must match the observation grid")
        self.matrix = mat
        self.space = space
        self.obs_space = obs_space

    def apply(self, u):
        return self.matrix @ np.asarray(u, dtype=float)

    def apply_transpose(self, y):
        return self.matrix.T @ np.asarray(y, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "rows": self.matrix.tolist()}


class Poisson1D(LinearOperator):
    """Solution map ``u -> y`` of ``-y'' = u`` on (0, 1) with ``y(0) = y(1) = 0``.

    Central differences on ``n`` interior nodes with spacing ``h = 1/(n+1)``;
    each node carries a cell of measure ``h`` and the observation grid is the
    control grid.  The stiffness matrix is symmetric, so ``A^T = A``.
    """

    kind = "poisson1d"

    def __init__(self, n: int):
        if n < 1:
            raise ParameterError("n must be positive")
        self.n = int(n)
        self.h = 1.0 / (n + 1)
        self.space = MeasureSpace(np.full(n, self.h))
        self.obs_space = self.space
        inv_h2 = 1.0 / (self.h * self.h)
        ab = np.zeros((3, n))
        ab[0, 1:] = -inv_h2
        ab[1, :] = 2.0 * inv_h2
        ab[2, :-1] = -inv_h2
        self._banded = ab

    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    def apply(self, u):
        return solve_banded((1, 1), self._banded, np.asarray(u, dtype=float))

    apply_transpose = apply

    def stiffness_apply(self, y):
        """``K y``, the discrete ``-y''`` (inverse of :meth:`apply`)."""
        y = np.asarray(y, dtype=float)
        out = 2.0 * y
        out[1:] -= y[:-1]
        out[:-1] -= y[1:]
        return out / (self.h * self.h)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n}


# problem and solver -------------------------------------------------------------------


@dataclass
class CompositeProblem:
    """``min_u 1/2 ||A u - b||_M^2 + beta q_{2,p}(u)`` on the control grid."""

    operator: LinearOperator
    b: GridFunction
    beta: float
    exps: Exponents

    def __post_init__(self):
        if self.exps.s != 2.0:
            raise ParameterError("the solver works in the Hilbert case s = 2")
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if not self.b.space.same_as(self.operator.obs_space):
            raise DimensionError("b must live on the observation grid")

    @property
    def space(self) -> MeasureSpace:
        return self.operator.space

    @property
    def p(self) -> float:
        return self.exps.p

    def residual(self, u: GridFunction) -> np.ndarray:
        return self.operator.apply(u.values) - self.b.values

    def smooth(self, u: GridFunction) -> float:
        r = self.residual(u)
        return 0.5 * float(np.sum(self.operator.obs_space.cell_measures * r * r))

    def gradient(self, u: GridFunction) -> np.ndarray:
        """Riesz representative of ``f'(u)`` in the weighted ``L^2`` product."""
        return self.operator.adjoint(self.residual(u))

    def objective(self, u: GridFunction) -> float:
        return self.smooth(u) + self.beta * q_value(u, self.p)

    def lipschitz(self) -> float:
        return self.operator.lipschitz()


def _check_space(prob: CompositeProblem, u: GridFunction):
    if not prob.space.same_as(u.space):
        raise DimensionError("u must live on the control grid")


def prox_step(prob: CompositeProblem, u: GridFunction, step: float) -> GridFunction:
    """One forward-backward step ``prox_{step beta q}(u - step f'(u))``."""
    _check_space(prob, u)
    if not step > 0:
        raise ParameterError("step must be positive")
    z = u.values - step * prob.gradient(u)
    return u.with_values(prox(z, step * prob.beta, prob.p))


@dataclass
class StationarityReport:
    """First-order check ``-f'(u) in beta * (Fréchet subdifferential of q)`` on the support.

    ``support_residual`` is ``max |g_i + beta p |u_i|^(p-2) u_i|`` over the
    support (``max |g_i|`` for ``p = 0``), ``regularity_norm`` is
    ``||p |u|^(p-1)||_{2, support}``.
    """

    support_residual: float
    regularity_norm: float
    support_measure: float
    objective: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "support_residual": self.support_residual,
            "regularity_norm": self.regularity_norm,
            "support_measure": self.support_measure,
            "objective": self.objective,
            "converged": bool(self.converged),
        }


def _report_from_gradient(prob, u, g, zero_tol, tol):
    p = prob.p
    supp = support_mask(u, zero_tol)
    if np.any(supp):
        a = np.abs(u.values[supp])
        if p == 0.0:
            res = float(np.max(np.abs(g[supp])))
            reg = 0.0
        else:
            weight = p * np.exp((p - 1.0) * np.log(a))
            res = float(np.max(np.abs(g[supp] + prob.beta * np.sign(u.values[supp]) * weight)))
            reg = float(np.sqrt(np.sum(u.space.cell_measures[supp] * weight**2)))
    else:
        res = reg = 0.0
    return StationarityReport(
        support_residual=res,
        regularity_norm=reg,
        support_measure=mask_measure(u.space, supp),
        objective=prob.objective(u),
        converged=bool(res <= tol),
    )


def stationarity_check(
    prob: CompositeProblem,
    u: GridFunction,
    zero_tol: float = DEFAULT_ZERO_TOL,
    tol: float = DEFAULT_STATIONARITY_TOL,
) -> StationarityReport:
    _check_space(prob, u)
    return _report_from_gradient(prob, u, prob.gradient(u), zero_tol, tol)


def multiplier(prob: CompositeProblem, u: GridFunction) -> GridFunction:
    """``eta = -f'(u) / beta``, the subgradient of ``q`` that stationarity asks for."""
    return u.with_values(-prob.gradient(u) / prob.beta)


@dataclass
class SolveResult:
    u: GridFunction
    report: StationarityReport
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
    iterations: int = 0
    step: float = math.nan

    def trace_csv(self) -> str:
        lines = ["iter,objective,support_measure,residual"]
        lines += [f"{k},{f!r},{m!r},{r!r}" for k, f, m, r in self.trace]
        return "\n".join(lines) + "\n"


def solve(
    prob: CompositeProblem,
    u0: Optional[GridFunction] = None,
    max_iter: int = 10000,
    tol: float = 1e-10,
    zero_tol: float = DEFAULT_ZERO_TOL,
    stationarity_tol: float = DEFAULT_STATIONARITY_TOL,
) -> SolveResult:
    """Forward-backward iteration with the fixed step ``1 / L``.

    Stops once the weighted ``L^2`` norm of the update is at most ``tol`` or
    after ``max_iter`` steps.  The objective must not increase; a rise above
    rounding level or a non-finite value raises :class:`DivergenceError`.
    The trace records ``(iteration, objective, support measure, stationarity
    residual)`` for every iterate.
    """
    u = prob.space.constant(0.0) if u0 is None else u0
    _check_space(prob, u)
    step = 1.0 / prob.lipschitz()
    lam = prob.space.cell_measures
    f_old = prob.objective(u)
    if not math.isfinite(f_old):
        raise DivergenceError("objective is not finite at the starting point")
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        g = prob.gradient(u)
        rep = _report_from_gradient(prob, u, g, zero_tol, stationarity_tol)
        trace.append((it - 1, f_old, rep.support_measure, rep.support_residual))
        z = u.values - step * g
        new = u.with_values(prox(z, step * prob.beta, prob.p))
        f_new = prob.objective(new)
        if not math.isfinite(f_new):
            raise DivergenceError(f"objective became non-finite at iteration {it}")
        if f_new > f_old + DESCENT_SLACK * max(1.0, abs(f_old)):
            raise DivergenceError(f"objective increased at iteration {it}: {f_old!r} -> {f_new!r}")
        change = math.sqrt(float(np.sum(lam * (new.values - u.values) ** 2)))
        u, f_old = new, f_new
        if change <= tol:
            break
    report = stationarity_check(prob, u, zero_tol, stationarity_tol)
    trace.append((it, report.objective, report.support_measure, report.support_residual))
    return SolveResult(u=u, report=report, trace=trace, iterations=it, step=step)
