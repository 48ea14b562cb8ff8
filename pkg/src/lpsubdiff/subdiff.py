"""Closed-form Fréchet, limiting and singular subdifferentials of ``q_{s,p}``.

Every set that occurs is one of four shapes, all described by finitely many
cell flags and values:

``empty``
    no subgradient exists;
``zero_only``
    the set ``{0}``;
``support_constrained``
    all ``eta`` vanishing on the support of ``u`` (free on ``{u = 0}``);
``pointwise_fixed``
    ``eta = p |u|^(p-2) u`` on the support, free on ``{u = 0}``.

Summary of the characterisations (``S = {u != 0}``):

==========  ================  =======================================
regime      Fréchet           limiting / singular
==========  ================  =======================================
s = 1       {0} if u = 0,     limiting = Fréchet; singular undefined
            else empty
s > 1, p=0  eta = 0 on S if   limiting and singular: eta = 0 on S
            u is s-SD, else
            empty
s > 1, p>0  eta fixed on S if limiting = Fréchet;
            |u|^(p-1) in L^r  singular: eta = 0 on S
            on S, else empty
==========  ================  =======================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionError, NotApplicableError, ParameterError
from .functionals import q_value
from .grid import (
    CellMask,
    Exponents,
    GridFunction,
    MeasureSpace,
    _frozen,
    partial_norm,
    support_mask,
)
from .profiles import ProfileFamily
from .sd import SdVerdict, integrability_test

SHAPES = ("empty", "zero_only", "support_constrained", "pointwise_fixed")
KINDS = ("frechet", "limiting", "singular")

DEFAULT_MEMBER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SubdiffDescriptor:
    """Finite description of a subdifferential set.

    ``zero_mask`` marks ``{u = 0}``; it is where ``eta`` is unconstrained for
    the ``support_constrained`` and ``pointwise_fixed`` shapes.
    ``fixed_values`` holds ``p |u|^(p-2) u`` on the support (0 elsewhere) for
    ``pointwise_fixed``.  ``externally_justified`` marks the ``s = 1``
    limiting set, which is taken equal to the Fréchet set on the strength of
    a result outside this package.
    """

    kind: str
    shape: str
    exps: Exponents
    space: MeasureSpace
    regular: bool
    zero_mask: np.ndarray
    fixed_values: Optional[np.ndarray] = None
    externally_justified: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown kind {self.kind!r}")
        if self.shape not in SHAPES:
            raise ParameterError(f"unknown shape {self.shape!r}")
        if self.shape == "empty" and self.regular:
            raise ParameterError("an empty descriptor cannot be regular")
        object.__setattr__(self, "zero_mask", _frozen(self.zero_mask, bool))
        if self.fixed_values is not None:
            object.__setattr__(self, "fixed_values", _frozen(self.fixed_values))

    @property
    def free_mask(self) -> CellMask:
        return self.zero_mask

    @property
    def is_empty(self) -> bool:
        return self.shape == "empty"

    def element(self) -> Optional[GridFunction]:
        """The canonical member (``eta = 0`` off the fixed part), or ``None`` if empty."""
        if self.is_empty:
            return None
        if self.shape == "pointwise_fixed":
            return GridFunction(self.space, self.fixed_values)
        return self.space.constant(0.0)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "shape": self.shape,
            "zero_mask": self.zero_mask.tolist(),
            "fixed_values": None if self.fixed_values is None else self.fixed_values.tolist(),
            "regular": bool(self.regular),
            "exps": self.exps.to_dict(),
        }
        if self.externally_justified:
            out["externally_justified"] = True
        return out


def fixed_gradient(u: GridFunction, p: float, zero_tol: float = 0.0) -> np.ndarray:
    """``p |u|^(p-2) u = p sgn(u) |u|^(p-1)`` on the support, 0 elsewhere."""
    a = np.abs(u.values)
    m = a > zero_tol
    out = np.zeros_like(a)
    out[m] = p * np.sign(u.values[m]) * np.exp((p - 1.0) * np.log(a[m]))
    return out


def _make(kind, shape, exps, u, zero, regular, fixed=None, external=False):
    return SubdiffDescriptor(
        kind=kind,
        shape=shape,
        exps=exps,
        space=u.space,
        regular=regular,
        zero_mask=zero,
        fixed_values=fixed,
        externally_justified=external,
    )


def frechet_descriptor(
    u: GridFunction,
    exps: Exponents,
    sd: Optional[SdVerdict] = None,
    zero_tol: float = 0.0,
    profile: Optional[ProfileFamily] = None,
) -> SubdiffDescriptor:
    """Fréchet subdifferential of ``q_{s,p}`` at ``u``.

    ``sd`` is the slow-decrease verdict for ``u`` and is required when
    ``s > 1`` and ``p = 0``.  For ``p > 0`` and ``s > 1`` the nonemptiness
    condition ``|u|^(p-1) chi_{u != 0} in L^r`` always holds for a grid
    function; when ``profile`` describes the continuum function behind ``u``
    the condition is tested on the profile instead.
    """
    zero = ~support_mask(u, zero_tol)
    if exps.s == 1.0:
        if np.all(zero):
            return _make("frechet", "zero_only", exps, u, zero, True)
        return _make("frechet", "empty", exps, u, zero, False)
    if exps.p == 0.0:
        if sd is None:
            raise ParameterError("a slow-decrease verdict is required for s > 1, p = 0")
        if sd.is_sd:
            return _make("frechet", "support_constrained", exps, u, zero, True)
        return _make("frechet", "empty", exps, u, zero, False)
    regular = True
    if profile is not None:
        regular = integrability_test(profile, (1.0 - exps.p) * exps.r).converges
    if not regular:
        return _make("frechet", "empty", exps, u, zero, False)
    fixed = fixed_gradient(u, exps.p, zero_tol)
    return _make("frechet", "pointwise_fixed", exps, u, zero, True, fixed)


def limiting_descriptor(
    u: GridFunction,
    exps: Exponents,
    zero_tol: float = 0.0,
    profile: Optional[ProfileFamily] = None,
) -> SubdiffDescriptor:
    """Limiting subdifferential; for ``p = 0``, ``s > 1`` it never needs slow decrease."""
    zero = ~support_mask(u, zero_tol)
    if exps.s == 1.0:
        d = frechet_descriptor(u, exps, zero_tol=zero_tol)
        return replace(d, kind="limiting", externally_justified=True)
    if exps.p == 0.0:
        return _make("limiting", "support_constrained", exps, u, zero, True)
    d = frechet_descriptor(u, exps, zero_tol=zero_tol, profile=profile)
    return replace(d, kind="limiting")


def singular_descriptor(u: GridFunction, exps: Exponents, zero_tol: float = 0.0) -> SubdiffDescriptor:
    """Singular subdifferential: ``eta`` vanishing on the support (defined for ``s > 1`` only)."""
    if exps.s == 1.0:
        raise NotApplicableError("the singular subdifferential is defined only for s > 1")
    zero = ~support_mask(u, zero_tol)
    return _make("singular", "support_constrained", exps, u, zero, True)


def membership_violation(d: SubdiffDescriptor, eta: GridFunction) -> float:
    """Largest pointwise deviation of ``eta`` from the set (``inf`` for the empty set)."""
    if not d.space.same_as(eta.space):
        raise DimensionError("eta does not live on the descriptor's space")
    e = eta.values
    if d.shape == "empty":
        return math.inf
    if d.shape == "zero_only":
        return float(np.max(np.abs(e)))
    on_supp = ~d.zero_mask
    if not np.any(on_supp):
        return 0.0
    if d.shape == "support_constrained":
        return float(np.max(np.abs(e[on_supp])))
    return float(np.max(np.abs(e[on_supp] - d.fixed_values[on_supp])))


def contains(d: SubdiffDescriptor, eta: GridFunction, tol: float = DEFAULT_MEMBER_TOL) -> bool:
    return membership_violation(d, eta) <= tol


# Nowhere-Lipschitz probe -----------------------------------------------------------


def _split_cell(u: GridFunction, i: int, b: float) -> Tuple[MeasureSpace, int, np.ndarray]:
    """Refine cell ``i`` into a piece ``B`` of measure ``b`` and its remainder.

    Returns the refined space, the index of ``B`` in it and ``u`` on it.
    """
    lam = u.space.cell_measures
    if b >= lam[i]:
        return u.space, i, u.values.copy()
    meas = np.concatenate([lam[:i], [b, lam[i] - b], lam[i + 1:]])
    vals = np.concatenate([u.values[:i], [u.values[i], u.values[i]], u.values[i + 1:]])
    return MeasureSpace(meas), i, vals


def lipschitz_probe(
    u: GridFunction,
    exps: Exponents,
    radius: float = 1.0,
    stages: int = 25,
    gamma0: float = 0.5,
) -> List[Tuple[float, float]]:
    """Largest ``|q(v) - q(w)| / ||v - w||_s`` per stage over pairs near ``u``.

    All pairs agree with ``u`` except on a piece ``B`` of the largest cell,
    where they take two different constant values; both stay within
    ``radius`` of ``u`` in ``L^s``.  With ``c = 4^-k`` at stage ``k``:

    * small values on a fixed piece: ``v = 0`` and ``w = gamma0 c`` on ``B``;
    * doubled values on a fixed piece: ``w = gamma0 c`` against ``v = 2 gamma0 c``;
    * shrinking pieces (``p = 0``): ``v = 0`` and ``w = lambda(B_k)`` with
      ``lambda(B_k) = lambda(B_0) c``.

    Every family has ratios growing without bound, so ``q`` is Lipschitz on
    no ball around ``u``.
    """
    if not radius > 0:
        raise ParameterError("radius must be positive")
    if stages < 1:
        raise ParameterError("stages must be positive")
    s, p = exps.s, exps.p
    i = int(np.argmax(u.space.cell_measures))
    ui = abs(float(u.values[i]))
    lam_i = float(u.space.cell_measures[i])
    # every value placed on B is at most 2*gamma0 away from 0, so |v - u| <= |u_i| + 2 gamma0 there
    b0 = min(lam_i, (radius / (ui + 2.0 * gamma0)) ** s)
    space, idx, base = _split_cell(u, i, b0)
    out = []
    for k in range(stages):
        c = 4.0**-k
        gam = gamma0 * c
        ratios = [
            _ratio(space, base, idx, 0.0, gam, p, s),
            _ratio(space, base, idx, gam, 2.0 * gam, p, s),
        ]
        if p == 0.0:
            bk = b0 * c
            sp_k, idx_k, base_k = _split_cell(u, i, bk)
            ratios.append(_ratio(sp_k, base_k, idx_k, 0.0, bk, p, s))
        out.append((c, max(ratios)))
    return out


def _ratio(space, base, idx, v_val, w_val, p, s):
    v = base.copy()
    w = base.copy()
    v[idx] = v_val
    w[idx] = w_val
    gv, gw = GridFunction(space, v), GridFunction(space, w)
    return abs(q_value(gv, p) - q_value(gw, p)) / partial_norm(gv - gw, s)
