"""The sparsity functionals ``q_{s,p}(u) = integral |u|^p`` and the support measure (``p = 0``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .grid import Exponents, GridFunction, MeasureSpace


def _check_p(p: float, allow_zero: bool = True):
    lo_ok = p >= 0.0 if allow_zero else p > 0.0
    if not (lo_ok and p < 1.0):
        raise ParameterError(f"p out of range: {p}")


def integrand(values, p: float, zero_tol: float = 0.0) -> np.ndarray:
    """Vectorised ``|y|_0`` (``p = 0``) or ``|y|^p``.

    ``|y|^p`` is evaluated as ``exp(p log|y|)`` with an explicit guard at 0.
    ``zero_tol`` only affects the counting integrand.
    """
    a = np.abs(np.asarray(values, dtype=float))
    if p == 0.0:
        return (a > zero_tol).astype(float)
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = np.exp(p * np.log(a[pos]))
    return out


def pointwise_integrand(y: float, p: float) -> float:
    _check_p(p)
    return float(integrand(y, p))


@dataclass(frozen=True)
class SparsityFunctional:
    """``q_{s,p}`` on a fixed measure space."""

    exps: Exponents
    space: MeasureSpace

    @property
    def p(self) -> float:
        return self.exps.p

    @property
    def s(self) -> float:
        return self.exps.s

    def __call__(self, u: GridFunction, zero_tol: float = 0.0) -> float:
        return evaluate(self, u, zero_tol)

    def increment(self, u_values, h_values) -> np.ndarray:
        """Cellwise ``phi(u + h) - phi(u)`` without cancellation."""
        return integrand_increment(u_values, h_values, self.p)


def evaluate(q: SparsityFunctional, u: GridFunction, zero_tol: float = 0.0) -> float:
    if not q.space.same_as(u.space):
        raise DimensionError("u does not live on the functional's space")
    tol = zero_tol if q.p == 0.0 else 0.0
    return float(np.sum(q.space.cell_measures * integrand(u.values, q.p, tol)))


def q_value(u: GridFunction, p: float, zero_tol: float = 0.0) -> float:
    """``q_{s,p}(u)``; the value does not depend on ``s``."""
    _check_p(p)
    tol = zero_tol if p == 0.0 else 0.0
    return float(np.sum(u.space.cell_measures * integrand(u.values, p, tol)))


def integrand_increment(u_values, h_values, p: float) -> np.ndarray:
    """``phi(u + h) - phi(u)`` cell by cell.

    Where ``0 < |h| <= |u| / 2`` the difference is
    ``|u|^p * expm1(p * log1p(h/u))``, which stays accurate when ``|h| << |u|``.
    """
    u, h = np.broadcast_arrays(np.asarray(u_values, dtype=float), np.asarray(h_values, dtype=float))
    shape = u.shape
    u, h = u.reshape(-1), h.reshape(-1)
    v = u + h
    if p == 0.0:
        return ((v != 0).astype(float) - (u != 0).astype(float)).reshape(shape)
    out = integrand(v, p) - integrand(u, p)
    # only small relative steps need the cancellation-free form
    same = (np.abs(h) <= 0.5 * np.abs(u)) & (u != 0)
    ratio = np.zeros_like(u)
    ratio[same] = h[same] / u[same]
    if np.any(same):
        out[same] = integrand(u[same], p) * np.expm1(p * np.log1p(ratio[same]))
    return out.reshape(shape)


def subadditivity_gap(u: GridFunction, v: GridFunction, p: float) -> float:
    """``q(u - v) - |q(u) - q(v)|``; nonnegative for every ``p`` in (0, 1)."""
    _check_p(p, allow_zero=False)
    return q_value(u - v, p) - abs(q_value(u, p) - q_value(v, p))
