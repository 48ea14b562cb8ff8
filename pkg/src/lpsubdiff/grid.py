"""Finite measure spaces, piecewise-constant functions and weighted (quasi-)norms.

A :class:`MeasureSpace` is a finite partition of a domain into cells of
positive measure.  Only the measures matter; cells carry no geometry.  A
:class:`GridFunction` stores one value per cell, so every integral over the
space is an exact finite sum.

Masks are plain boolean ``numpy`` arrays with one flag per cell.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError

CellMask = np.ndarray


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Finite partition of a domain into cells with positive measures."""

    cell_measures: np.ndarray
    total_measure: float = field(init=False)

    def __post_init__(self):
        meas = _frozen(self.cell_measures)
        if meas.size == 0:
            raise ParameterError("a measure space needs at least one cell")
        if not np.all(np.isfinite(meas)) or np.any(meas <= 0):
            raise ParameterError("cell measures must be finite and positive")
        object.__setattr__(self, "cell_measures", meas)
        object.__setattr__(self, "total_measure", float(np.sum(meas)))

    @classmethod
    def uniform(cls, n: int, length: float = 1.0) -> "MeasureSpace":
        """``n`` equal cells partitioning an interval of the given length."""
        if n < 1:
            raise ParameterError("n must be positive")
        return cls(np.full(n, length / n))

    @property
    def n(self) -> int:
        return self.cell_measures.size

    def midpoints(self) -> np.ndarray:
        """Midpoints of the cells when laid out left to right from 0."""
        right = np.cumsum(self.cell_measures)
        return right - 0.5 * self.cell_measures

    def full_mask(self) -> CellMask:
        return np.ones(self.n, dtype=bool)

    def empty_mask(self) -> CellMask:
        return np.zeros(self.n, dtype=bool)

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.n, float(c)))

    def sample(self, f) -> "GridFunction":
        """Grid function with value ``f(midpoint)`` on each cell."""
        return GridFunction(self, f(self.midpoints()))

    def same_as(self, other: "MeasureSpace") -> bool:
        return self is other or (
            self.n == other.n and np.array_equal(self.cell_measures, other.cell_measures)
        )


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function: one finite real value per cell."""

    space: MeasureSpace
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.size != self.space.n:
            raise DimensionError(
                f"{vals.size} values for a space with {self.space.n} cells"
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.space, values)

    def _check(self, other: "GridFunction"):
        if not self.space.same_as(other.space):
            raise DimensionError("grid functions live on different spaces")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return self.with_values(-self.values)

    def __mul__(self, c: float) -> "GridFunction":
        return self.with_values(float(c) * self.values)

    __rmul__ = __mul__

    def restrict(self, mask: CellMask) -> "GridFunction":
        """Multiply by the characteristic function of ``mask``."""
        return self.with_values(np.where(_as_mask(self.space, mask), self.values, 0.0))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_dict(self) -> dict:
        return {
            "cell_measures": self.space.cell_measures.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridFunction":
        try:
            meas, vals = data["cell_measures"], data["values"]
        except KeyError as exc:
            raise ParameterError(f"missing key {exc.args[0]!r}") from None
        return cls(MeasureSpace(meas), vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["measure", "value"])
        for m, v in zip(self.space.cell_measures, self.values):
            writer.writerow([repr(float(m)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] and rows[0][0].strip() == "measure":
            rows = rows[1:]
        rows = [r for r in rows if r]
        meas = [float(r[0]) for r in rows]
        vals = [float(r[1]) for r in rows]
        return cls(MeasureSpace(meas), vals)


@dataclass(frozen=True)
class Exponents:
    """Lebesgue exponent ``s``, sparsity exponent ``p`` and the dual exponent ``r``.

    ``r`` is derived from ``1/s + 1/r = 1`` and equals ``inf`` for ``s = 1``.
    """

    s: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s >= 1.0):
            raise ParameterError(f"s must lie in [1, inf), got {self.s}")
        if not (0.0 <= self.p < 1.0):
            raise ParameterError(f"p must lie in [0, 1), got {self.p}")

    @property
    def r(self) -> float:
        if self.s == 1.0:
            return math.inf
        return self.s / (self.s - 1.0)

    def to_dict(self) -> dict:
        r = self.r
        return {"s": self.s, "p": self.p, "r": None if math.isinf(r) else r}


def _as_mask(space: MeasureSpace, mask: Optional[CellMask]) -> np.ndarray:
    if mask is None:
        return space.full_mask()
    m = np.asarray(mask, dtype=bool).reshape(-1)
    if m.size != space.n:
        raise DimensionError(f"mask of length {m.size} for {space.n} cells")
    return m


def complement(mask: CellMask) -> CellMask:
    return ~np.asarray(mask, dtype=bool)


def support_mask(u: GridFunction, zero_tol: float = 0.0) -> CellMask:
    """Cells where ``|u| > zero_tol``."""
    if zero_tol < 0:
        raise ParameterError("zero_tol must be nonnegative")
    return np.abs(u.values) > zero_tol


def mask_measure(space: MeasureSpace, mask: CellMask) -> float:
    m = _as_mask(space, mask)
    return float(np.sum(space.cell_measures[m]))


def partial_norm(u: GridFunction, nu: float, mask: Optional[CellMask] = None) -> float:
    """``(sum_{i in mask} lambda_i |u_i|^nu)^(1/nu)``; the max of ``|u_i|`` for ``nu = inf``.

    For ``nu < 1`` this is the quasi-norm value. An empty mask gives 0.
    """
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    m = _as_mask(u.space, mask)
    a = np.abs(u.values[m])
    if a.size == 0:
        return 0.0
    if math.isinf(nu):
        return float(np.max(a))
    lam = u.space.cell_measures[m]
    top = np.max(a)
    if top == 0.0:
        return 0.0
    # scale by the largest entry so huge or tiny values do not overflow
    total = np.sum(lam * (a / top) ** nu)
    return float(top * total ** (1.0 / nu))


def dual_pairing(space: MeasureSpace, eta: GridFunction, h: GridFunction) -> float:
    """``integral eta * h`` as the weighted sum over cells."""
    for f in (eta, h):
        if not space.same_as(f.space):
            raise DimensionError("pairing arguments must live on the given space")
    return float(np.sum(space.cell_measures * eta.values * h.values))

