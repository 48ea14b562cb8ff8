"""Brute-force check of Fréchet subgradients along adversarial directions.

For a candidate ``eta`` the Fréchet quotient is

    D(h) = (q(u + h) - q(u) - integral eta h) / ||h||_s ,

and ``eta`` is a Fréchet subgradient iff ``liminf D(h) >= 0`` as
``||h||_s -> 0``.  A liminf cannot be computed, so :func:`falsify` evaluates
``D`` along shrinking direction families and reports a violation only if it
persists at the smallest scales.

Directions are supported on *pieces*: a piece is a part of one cell with a
given measure on which ``h`` is constant.  Splitting cells this way lets the
families shrink their supports far below the grid resolution while every
integral stays an exact finite sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, ParameterError
from .functionals import SparsityFunctional, integrand_increment
from .grid import Exponents, GridFunction, MeasureSpace, partial_norm
from .profiles import ProfileFamily

FAMILY_KINDS = ("support_kill", "scaled_support", "sign_scaled", "constant_bump", "random_sparse")
_DEFAULT_DEPTH = {
    "support_kill": 200,
    "scaled_support": 60,
    "sign_scaled": 200,
    "constant_bump": 60,
    "random_sparse": 60,
}
DEFAULT_DELTA = 1e-6
PERSIST_SCALES = 3
# a violation counts as persistent if it shrinks by at most this factor over the last scales
PERSIST_RATIO = 0.8
TAIL_FRACTION = 0.2
MAX_BUMP_CELLS = 256
# deepest log-scale reached by the continuum support_kill family: t ~ 1e-300
PROFILE_DEPTH = 690.0


@dataclass(frozen=True)
class DirectionFamily:
    """A shrinking family of perturbations ``h``.

    ``depth`` is the number of scales ``2^0, 2^-1, ...``.  ``target_sets``
    optionally restricts where the family acts (one mask per set; the union
    is used).  ``amplitude`` overrides the fixed amplitude of
    ``sign_scaled``.  ``seed`` and ``draws`` control ``random_sparse``.
    """

    kind: str
    depth: Optional[int] = None
    target_sets: Tuple[np.ndarray, ...] = ()
    amplitude: Optional[float] = None
    seed: int = 42
    draws: int = 8

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ParameterError(f"unknown direction family {self.kind!r}")
        depth = _DEFAULT_DEPTH[self.kind] if self.depth is None else int(self.depth)
        if depth < PERSIST_SCALES:
            raise ParameterError(f"depth must be at least {PERSIST_SCALES}")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(
            self, "target_sets", tuple(np.asarray(m, dtype=bool) for m in self.target_sets)
        )
        if self.amplitude is not None and not self.amplitude > 0:
            raise ParameterError("amplitude must be positive")

    @property
    def scales(self) -> np.ndarray:
        return 2.0 ** -np.arange(self.depth, dtype=float)

    def target(self, n: int) -> Optional[np.ndarray]:
        if not self.target_sets:
            return None
        out = np.zeros(n, dtype=bool)
        for m in self.target_sets:
            if m.size != n:
                raise DimensionError("target set does not match the grid")
            out |= m
        return out


def builtin_families(seed: int = 42) -> List[DirectionFamily]:
    return [
        DirectionFamily("support_kill"),
        DirectionFamily("scaled_support"),
        DirectionFamily("sign_scaled"),
        DirectionFamily("constant_bump"),
        DirectionFamily("random_sparse", seed=seed),
    ]


class _Batch:
    """Many directions at once, flattened into pieces.

    Piece ``k`` lies in cell ``parent[k]``, has measure ``meas[k]`` and value
    ``val[k]`` and belongs to direction ``group[k]``.  Direction ``g`` has
    family-scale index ``scale_idx[g]``.
    """

    def __init__(self):
        self.parent: List[np.ndarray] = []
        self.meas: List[np.ndarray] = []
        self.val: List[np.ndarray] = []
        self.group: List[np.ndarray] = []
        self.scale_idx: List[int] = []

    def add(self, parent, meas, val, scale_idx: int):
        g = len(self.scale_idx)
        parent = np.asarray(parent, dtype=int).reshape(-1)
        self.parent.append(parent)
        self.meas.append(np.broadcast_to(np.asarray(meas, dtype=float), parent.shape).copy())
        self.val.append(np.broadcast_to(np.asarray(val, dtype=float), parent.shape).copy())
        self.group.append(np.full(parent.size, g))
        self.scale_idx.append(scale_idx)

    def add_singletons(self, parent, meas, val, scale_idx):
        """One direction per entry, each made of a single piece."""
        parent = np.asarray(parent, dtype=int).reshape(-1)
        g0 = len(self.scale_idx)
        self.parent.append(parent)
        self.meas.append(np.asarray(meas, dtype=float).reshape(-1))
        self.val.append(np.asarray(val, dtype=float).reshape(-1))
        self.group.append(g0 + np.arange(parent.size))
        self.scale_idx.extend(np.asarray(scale_idx, dtype=int).reshape(-1).tolist())

    def __len__(self):
        return len(self.scale_idx)

    def arrays(self):
        cat = np.concatenate
        return (
            cat(self.parent),
            cat(self.meas),
            cat(self.val),
            cat(self.group),
            np.asarray(self.scale_idx, dtype=int),
        )


def _evaluate(u, eta, p, s, parent, meas, val, group, n_groups):
    """Numerators, norms and quotients of all directions in a batch."""
    dphi = integrand_increment(u[parent], val, p)
    num = np.bincount(group, weights=meas * (dphi - eta[parent] * val), minlength=n_groups)
    a = np.abs(val)
    if math.isinf(s):
        norm = np.zeros(n_groups)
        np.maximum.at(norm, group, a)
    else:
        # scale by the largest amplitude of each direction to avoid underflow
        top = np.zeros(n_groups)
        np.maximum.at(top, group, a)
        rel = np.divide(a, top[group], out=np.zeros_like(a), where=top[group] > 0)
        norm = top * np.bincount(group, weights=meas * rel**s, minlength=n_groups) ** (1.0 / s)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / norm
    return num, norm, d


# direction generators ------------------------------------------------------------


def _support(u_vals, fam, n):
    m = u_vals != 0
    t = fam.target(n)
    return m if t is None else (m & t)


def _gen_support_kill(fam, u_vals, eta_vals, lam, batch):
    supp = _support(u_vals, fam, lam.size)
    idx = np.flatnonzero(supp)
    if idx.size == 0:
        return
    idx = idx[np.argsort(np.abs(u_vals[idx]), kind="stable")]
    cum = np.cumsum(lam[idx])
    total = cum[-1]
    for j, sc in enumerate(fam.scales):
        t = total * sc
        k = int(np.searchsorted(cum, t, side="left"))
        k = min(k, idx.size - 1)
        prev = cum[k - 1] if k > 0 else 0.0
        cells = idx[: k + 1]
        meas = lam[cells].copy()
        meas[-1] = min(t - prev, lam[idx[k]])
        if meas[-1] <= 0:
            cells, meas = cells[:-1], meas[:-1]
        if cells.size == 0:
            continue
        batch.add(cells, meas, -u_vals[cells], j)


def _gen_scaled_support(fam, u_vals, eta_vals, lam, batch):
    supp = _support(u_vals, fam, lam.size)
    if not np.any(supp):
        return
    omega = supp & (eta_vals != 0)
    if not np.any(omega):
        omega = supp
    cells = np.flatnonzero(omega)
    sgn = np.where(eta_vals[cells] < 0, -1.0, 1.0)
    base = np.abs(u_vals[cells]) * sgn
    for j, sc in enumerate(fam.scales):
        # coefficient 1/(2k) with k = 2^j
        batch.add(cells, lam[cells], 0.5 * sc * base, j)


def _gen_sign_scaled(fam, u_vals, eta_vals, lam, p, batch):
    region = fam.target(lam.size)
    cand = np.flatnonzero(region) if region is not None else np.arange(lam.size)
    if cand.size == 0:
        return
    i = int(cand[np.argmax(np.abs(eta_vals[cand]))])
    rho = abs(float(eta_vals[i]))
    if fam.amplitude is not None:
        c = fam.amplitude
    elif rho == 0.0:
        c = 1.0
    elif p == 0.0:
        c = 2.0 / rho
    else:
        # c^(p-1) = rho/2, so the increment term stays below half of rho
        c = (rho / 2.0) ** (1.0 / (p - 1.0))
    sgn = -1.0 if eta_vals[i] < 0 else 1.0
    for j, sc in enumerate(fam.scales):
        batch.add([i], lam[i] * sc, sgn * c, j)


def _gen_constant_bump(fam, u_vals, eta_vals, lam, batch):
    supp = _support(u_vals, fam, lam.size)
    cells = np.flatnonzero(supp)
    if cells.size == 0:
        return
    if cells.size > MAX_BUMP_CELLS:
        cells = cells[np.linspace(0, cells.size - 1, MAX_BUMP_CELLS).round().astype(int)]
    amp = np.abs(u_vals[cells])
    sc = fam.scales
    # layout: scale-major, then sign, then cell
    j = np.repeat(np.arange(sc.size), 2 * cells.size)
    sign = np.tile(np.repeat([1.0, -1.0], cells.size), sc.size)
    par = np.tile(cells, 2 * sc.size)
    val = sign * np.tile(amp, 2 * sc.size) * sc[j]
    batch.add_singletons(par, lam[par], val, j)


def _gen_random_sparse(fam, u_vals, eta_vals, lam, batch):
    rng = np.random.default_rng(fam.seed)
    region = fam.target(lam.size)
    cand = np.flatnonzero(region) if region is not None else np.arange(lam.size)
    if cand.size == 0:
        return
    top = float(np.max(np.abs(u_vals))) or 1.0
    for j, sc in enumerate(fam.scales):
        for _ in range(fam.draws):
            k = int(rng.integers(1, min(cand.size, 8) + 1))
            cells = rng.choice(cand, size=k, replace=False)
            signs = rng.choice([-1.0, 1.0], size=k)
            frac = rng.uniform(0.5, 1.0, size=k)
            batch.add(cells, lam[cells] * frac * sc, signs * top * sc, j)


def _build(fam: DirectionFamily, u: GridFunction, eta: GridFunction, p: float) -> _Batch:
    batch = _Batch()
    u_vals, eta_vals, lam = u.values, eta.values, u.space.cell_measures
    if fam.kind == "support_kill":
        _gen_support_kill(fam, u_vals, eta_vals, lam, batch)
    elif fam.kind == "scaled_support":
        _gen_scaled_support(fam, u_vals, eta_vals, lam, batch)
    elif fam.kind == "sign_scaled":
        _gen_sign_scaled(fam, u_vals, eta_vals, lam, p, batch)
    elif fam.kind == "constant_bump":
        _gen_constant_bump(fam, u_vals, eta_vals, lam, batch)
    else:
        _gen_random_sparse(fam, u_vals, eta_vals, lam, batch)
    return batch


# refinement ----------------------------------------------------------------------------


def refine(u: GridFunction, eta: GridFunction, parent, meas, val):
    """Materialise a piece direction on a refined grid.

    Each touched cell is split into its pieces plus the untouched remainder.
    Returns ``(u, eta, h)`` as grid functions on the refined space, so the
    direction can be fed to :func:`quotient`.
    """
    parent = np.asarray(parent, dtype=int)
    meas = np.asarray(meas, dtype=float)
    val = np.asarray(val, dtype=float)
    lam = u.space.cell_measures
    out_m, out_u, out_e, out_h = [], [], [], []
    for i in range(lam.size):
        sel = parent == i
        used = float(np.sum(meas[sel]))
        for m, v in zip(meas[sel], val[sel]):
            out_m.append(m)
            out_u.append(u.values[i])
            out_e.append(eta.values[i])
            out_h.append(v)
        rest = lam[i] - used
        if rest > 1e-15 * lam[i]:
            out_m.append(rest)
            out_u.append(u.values[i])
            out_e.append(eta.values[i])
            out_h.append(0.0)
    sp = MeasureSpace(out_m)
    return GridFunction(sp, out_u), GridFunction(sp, out_e), GridFunction(sp, out_h)


# public API ------------------------------------------------------------------------------


def quotient(q: SparsityFunctional, u: GridFunction, eta: GridFunction, h: GridFunction) -> float:
    """Fréchet quotient ``D(h)`` evaluated with exact cell sums."""
    for f in (u, eta, h):
        if not q.space.same_as(f.space):
            raise DimensionError("u, eta and h must live on the functional's space")
    norm = partial_norm(h, q.s)
    if norm == 0.0:
        raise ZeroDivisionError("the quotient is undefined for h = 0")
    lam = q.space.cell_measures
    dphi = integrand_increment(u.values, h.values, q.p)
    num = float(np.sum(lam * (dphi - eta.values * h.values)))
    return num / norm


@dataclass
class QuotientReport:
    """Outcome of :func:`falsify`.

    ``samples`` are ``(||h||_s, D(h))`` pairs, ``inf_tail`` the smallest ``D``
    among the 20% of samples with the smallest norms.  A falsified report
    carries the offending direction as ``witness`` (a grid function on a
    refinement of ``u``'s grid, see :func:`refine`) together with
    ``witness_quotient``.
    """

    samples: List[Tuple[float, float]]
    inf_tail: float
    verdict: str
    witness: Optional[GridFunction] = None
    witness_quotient: float = math.nan
    witness_u: Optional[GridFunction] = None
    witness_eta: Optional[GridFunction] = None
    family_verdicts: dict = field(default_factory=dict)

    @property
    def falsified(self) -> bool:
        return self.verdict == "falsified"

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "inf_tail": self.inf_tail,
            "n_samples": len(self.samples),
            "families": dict(sorted(self.family_verdicts.items())),
            "witness_quotient": self.witness_quotient if self.falsified else None,
        }
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        return out

    def samples_csv(self) -> str:
        lines = ["norm,quotient"]
        lines += [f"{n!r},{d!r}" for n, d in self.samples]
        return "\n".join(lines) + "\n"


def persistent_violation(tail_minima: Sequence[float], delta: float) -> bool:
    """Is the violation below ``-delta`` at every one of the smallest scales and not fading?

    ``tail_minima`` lists the per-scale minima of ``D``, from the largest of
    the smallest scales to the very smallest.
    """
    d = np.asarray(tail_minima, dtype=float)
    if d.size < PERSIST_SCALES or not np.all(d < -delta):
        return False
    return bool(d[-1] <= PERSIST_RATIO * d[0])


def falsify(
    q: SparsityFunctional,
    u: GridFunction,
    eta: GridFunction,
    fam: Union[DirectionFamily, Sequence[DirectionFamily], None] = None,
    delta: float = DEFAULT_DELTA,
) -> QuotientReport:
    """Try to refute ``eta`` as a Fréchet subgradient of ``q`` at ``u``.

    Each family is judged separately: it falsifies when its per-scale minima
    of ``D`` stay below ``-delta`` at the three smallest scales without
    shrinking towards 0.  ``fam=None`` runs every built-in family.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    for f in (u, eta):
        if not q.space.same_as(f.space):
            raise DimensionError("u and eta must live on the functional's space")
    if fam is None:
        fams = builtin_families()
    elif isinstance(fam, DirectionFamily):
        fams = [fam]
    else:
        fams = list(fam)
    if not fams:
        raise ParameterError("no direction family given")

    samples: List[Tuple[float, float]] = []
    verdicts = {}
    witness = None
    best = None
    for f in fams:
        batch = _build(f, u, eta, q.p)
        if len(batch) == 0:
            verdicts[f.kind] = "vacuous"
            continue
        parent, meas, val, group, sidx = batch.arrays()
        _, norm, d = _evaluate(u.values, eta.values, q.p, q.s, parent, meas, val, group, len(batch))
        ok = np.isfinite(d) & (norm > 0)
        samples.extend(zip(norm[ok].tolist(), d[ok].tolist()))
        used = np.unique(sidx[ok])
        if used.size == 0:
            verdicts[f.kind] = "vacuous"
            continue
        tail_scales = used[-PERSIST_SCALES:]
        minima = []
        for j in tail_scales:
            sel = ok & (sidx == j)
            minima.append(float(np.min(d[sel])))
        hit = persistent_violation(minima, delta)
        verdicts[f.kind] = "falsified" if hit else "consistent"
        if hit:
            sel = np.flatnonzero(ok & (sidx == tail_scales[-1]))
            g = int(sel[np.argmin(d[sel])])
            if best is None or d[g] < best:
                best = float(d[g])
                pieces = group == g
                witness = (parent[pieces], meas[pieces], val[pieces])
    if not samples:
        raise ParameterError("the direction families produced no perturbation")

    norms = np.array([n for n, _ in samples])
    ds = np.array([d for _, d in samples])
    k = max(1, int(math.ceil(TAIL_FRACTION * norms.size)))
    tail = np.argsort(norms, kind="stable")[:k]
    report = QuotientReport(
        samples=samples,
        inf_tail=float(np.min(ds[tail])),
        verdict="falsified" if witness is not None else "consistent",
        family_verdicts=verdicts,
    )
    if witness is not None:
        u_r, eta_r, h_r = refine(u, eta, *witness)
        report.witness = h_r
        report.witness_u = u_r
        report.witness_eta = eta_r
        report.witness_quotient = best
    return report


def bump_bracket(
    q: SparsityFunctional, u: GridFunction, mask, scales: Optional[Sequence[float]] = None
) -> List[Tuple[float, float, float]]:
    """Bounds on the mean of any Fréchet subgradient over a constant-value region ``B``.

    For ``h = +t chi_B`` and ``h = -t chi_B`` the requirement ``D(h) >= 0``
    reads ``lower(t) <= mean_B eta <= upper(t)`` with
    ``upper(t) = (q(u + t chi_B) - q(u)) / (t lambda(B))`` and
    ``lower(t) = (q(u) - q(u - t chi_B)) / (t lambda(B))``; both quotients are
    obtained from ``D`` at ``eta = 0``.  Returns ``(t, lower, upper)`` per scale.
    For ``p`` in (0, 1) the integrand is concave on each side of 0, so the two
    bounds cross (``upper < lower``) and both tend to ``p |v|^(p-2) v``.
    """
    m = np.asarray(mask, dtype=bool)
    if m.size != u.space.n:
        raise DimensionError("mask does not match the grid")
    if not np.any(m):
        raise ParameterError("the bump region is empty")
    vals = u.values[m]
    if np.any(vals != vals[0]):
        raise ParameterError("u must be constant on the bump region")
    if scales is None:
        scales = 2.0 ** -np.arange(21, dtype=float)
    cells = np.flatnonzero(m)
    lam = u.space.cell_measures
    lam_b = float(np.sum(lam[cells]))
    zero_eta = np.zeros(u.space.n)
    out = []
    for t in scales:
        t = float(t)
        bounds = []
        for sign in (1.0, -1.0):
            parent = cells
            val = np.full(cells.size, sign * t)
            group = np.zeros(cells.size, dtype=int)
            _, norm, d = _evaluate(u.values, zero_eta, q.p, q.s, parent, lam[cells], val, group, 1)
            bounds.append(sign * d[0] * norm[0] / (t * lam_b))
        upper, lower = bounds
        out.append((t, lower, upper))
    return out


class ProfileKillReport(NamedTuple):
    samples: List[Tuple[float, float]]
    verdict: str


def profile_support_kill(
    profile: ProfileFamily,
    exps: Exponents,
    t_grid: Optional[Sequence[float]] = None,
    delta: float = DEFAULT_DELTA,
) -> ProfileKillReport:
    """``support_kill`` directions ``h = -u chi_{Omega_t}`` on a continuum profile.

    ``Omega_t`` is the measure-``t`` set of smallest ``|u|`` and ``eta`` the
    canonical candidate: ``0`` on the support for ``p = 0``, ``p |u|^(p-2) u``
    for ``p > 0``.  Then ``D = -t / ||u||_{s, Omega_t}`` for ``p = 0`` and
    ``D = -(1 - p) integral_{Omega_t} |u|^p / ||u||_{s, Omega_t}`` for ``p > 0``.
    Samples are ``(t, D)`` with ``t`` decreasing.  The default grid puts
    ``t = lambda(supp) e^-L`` with ``L`` doubling up to ``PROFILE_DEPTH``, so
    the persistence rule compares the windows ``L/4``, ``L/2`` and ``L``;
    logarithmically slow decay then still registers.
    """
    if t_grid is None:
        top = profile.support_measure()
        t_grid = top * np.exp(-PROFILE_DEPTH * 2.0 ** -np.arange(15, -1, -1, dtype=float))
    s, p = exps.s, exps.p
    out = []
    for t in t_grid:
        t = float(t)
        log_norm = profile.log_sublevel_moment(t, s) / s
        if p == 0.0:
            log_num = math.log(t)
            scale = 1.0
        else:
            log_num = profile.log_sublevel_moment(t, p)
            scale = 1.0 - p
        out.append((t, -scale * math.exp(log_num - log_norm)))
    tail = [d for _, d in out[-PERSIST_SCALES:]]
    verdict = "falsified" if persistent_violation(tail, delta) else "consistent"
    return ProfileKillReport(out, verdict)
