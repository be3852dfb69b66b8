"""Replica potential, fixed points, replica curves and the single-crossing check.

The potential is

    R(delta, z) = I_X(delta / (1 + z)) + delta/2 * [log(1 + z) - z / (1 + z)]

and its stationary points in ``z`` are the solutions of
``z = mmse_X(delta / (1 + z))``.  The replica MI is the global minimum over
``z >= 0`` and the replica MMSE the minimizer.

Fixed points are found by scanning ``g(z) = z - mmse_X(delta / (1 + z))`` on a
512-point grid uniform in ``log(1 + z)``.  Because ``mmse_X`` is strictly
decreasing, ``sign g(z) = sign(delta - delta_FP(z))`` with
``delta_FP(z) = (1 + z) mmse_X^{-1}(z)``, so the grid values of ``delta_FP`` are
computed once per prior and every scan afterwards is a comparison.  Brackets are
then polished with safeguarded Newton steps on ``g`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .channel import _inverse_many, evaluate, i_x, mmse_x, mmse_x_inv
from .errors import GridTooCoarse, OutOfRange, TieAtMinimum
from .prior import Prior, moments

__all__ = [
    "PotentialPoint",
    "FixedPoint",
    "FixedPointSet",
    "Jump",
    "ReplicaCurve",
    "CrossingReport",
    "SEResult",
    "potential",
    "fixed_points",
    "replica_pair",
    "replica_curve",
    "delta_fp",
    "se_iterate",
    "single_crossing_check",
    "phase_transition",
    "integrate_information",
]

Z_GRID_POINTS = 512
Z_GRID_MIN = 1e-8
ROOT_XTOL = 1e-12
TIE_TOL = 1e-10
JUMP_DELTA_TOL = 1e-6
GAP_TOL = 1e-10


@dataclass(frozen=True)
class PotentialPoint:
    delta: float
    z: float
    R: float
    R_z: float
    R_delta: float


@dataclass(frozen=True)
class FixedPoint:
    z: float
    R: float
    stable: bool
    branch: int

    @property
    def stability(self) -> str:
        return "stable" if self.stable else "unstable"


@dataclass(frozen=True)
class FixedPointSet:
    delta: float
    roots: tuple[FixedPoint, ...]

    @property
    def stable(self) -> tuple[FixedPoint, ...]:
        return tuple(r for r in self.roots if r.stable)

    def __len__(self):
        return len(self.roots)


@dataclass(frozen=True)
class Jump:
    """Discontinuity of the replica MMSE.

    ``z_minus`` is the limit from below ``delta_star`` (upper branch) and
    ``z_plus`` the limit from above (lower branch).
    """

    delta_star: float
    z_minus: float
    z_plus: float


@dataclass(frozen=True)
class ReplicaCurve:
    deltas: np.ndarray
    i_rs: np.ndarray
    m_rs: np.ndarray
    branch_count: np.ndarray
    jumps: tuple[Jump, ...] = ()

    @property
    def jump(self) -> Optional[Jump]:
        return self.jumps[0] if len(self.jumps) == 1 else None


@dataclass(frozen=True)
class CrossingReport:
    crossings: tuple[float, ...]
    is_single_crossing: bool
    plateaus: tuple[tuple[float, float, float], ...]
    touches: tuple[float, ...] = ()
    tail_verified: bool = True


@dataclass(frozen=True)
class SEResult:
    z: float
    iterations: int
    converged: bool
    trace: tuple[float, ...] = field(default=(), repr=False)


def _penalty(delta, z):
    return 0.5 * delta * (np.log1p(z) - z / (1.0 + z))


def potential(p: Prior, delta: float, z: float) -> PotentialPoint:
    """Evaluate ``R``, ``R_z`` and ``R_delta`` at one point."""
    if delta < 0 or z < 0:
        raise OutOfRange("delta and z must be >= 0")
    s = delta / (1.0 + z)
    ix, mm, _ = (float(v) for v in evaluate(p, s))
    R = ix + float(_penalty(delta, z))
    R_z = delta / (2.0 * (1.0 + z) ** 2) * (z - mm)
    R_delta = 0.5 * math.log1p(z) + (mm - z) / (2.0 * (1.0 + z))
    return PotentialPoint(delta, z, R, R_z, R_delta)


@dataclass(frozen=True)
class _FPGrid:
    z: np.ndarray          # z = 0 followed by the log(1+z) grid
    delta_fp: np.ndarray   # +inf at z = 0
    z_extrema: np.ndarray  # approximate z of interior extrema of delta_fp
    d_extrema: np.ndarray  # delta_fp at those extrema


@lru_cache(maxsize=64)
def _fp_grid(p: Prior) -> _FPGrid:
    _, var_x, _ = moments(p)
    z_lo = min(Z_GRID_MIN, 0.5 * var_x)
    z = np.expm1(np.linspace(math.log1p(z_lo), math.log1p(var_x), Z_GRID_POINTS))
    z[-1] = var_x
    s = _inverse_many(p, z)
    s[-1] = 0.0
    dfp = (1.0 + z) * s
    d = np.diff(dfp)
    turn = np.nonzero(np.sign(d[1:]) != np.sign(d[:-1]))[0] + 1
    return _FPGrid(
        z=np.concatenate([[0.0], z]),
        delta_fp=np.concatenate([[np.inf], dfp]),
        z_extrema=z[turn],
        d_extrema=dfp[turn],
    )


def _branch_id(grid: _FPGrid, z: float) -> int:
    return int(np.searchsorted(grid.z_extrema, z))


def _g_and_slope(p: Prior, delta: float, z: np.ndarray):
    s = delta / (1.0 + z)
    ix, mm, mp = evaluate(p, s)
    return z - mm, 1.0 + mp * delta / (1.0 + z) ** 2, ix


def _polish(p, delta, a, b, ga, gb, xtol):
    """Safeguarded Newton on ``g`` inside sign-changing brackets ``[a, b]``."""
    a, b, ga = a.copy(), b.copy(), ga.copy()
    x = np.where(np.abs(gb - ga) > 0, a - ga * (b - a) / (gb - ga), 0.5 * (a + b))
    x = np.clip(x, a, b)
    active = np.arange(a.size)
    for _ in range(200):
        xa = x[active]
        g, dg, _ = _g_and_slope(p, delta, xa)
        left = np.sign(g) == np.sign(ga[active])
        aa = np.where(left, xa, a[active])
        bb = np.where(left, b[active], xa)
        ga[active] = np.where(left, g, ga[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - g / dg
        inside = np.isfinite(newton) & (newton > aa) & (newton < bb)
        nxt = np.where(inside, newton, 0.5 * (aa + bb))
        done = (g == 0) | (bb - aa < xtol) | (np.abs(nxt - xa) < 0.25 * xtol)
        a[active], b[active] = aa, bb
        x[active] = np.where(g == 0, xa, nxt)
        active = active[~done]
        if active.size == 0:
            break
    return x


def _scan_brackets(p: Prior, delta: float, grid: _FPGrid):
    sgn = np.where(delta > grid.delta_fp, 1, -1)
    cells = np.nonzero(sgn[1:] != sgn[:-1])[0]
    brackets = []
    i = 0
    while i < len(cells):
        j = i
        while j + 1 < len(cells) and cells[j + 1] == cells[j] + 1:
            j += 1
        if j == i:
            c = cells[i]
            brackets.append((grid.z[c], grid.z[c + 1]))
        else:
            # adjacent sign changes: resolve on a finer subgrid once
            lo, hi = grid.z[cells[i]], grid.z[cells[j] + 1]
            sub = np.expm1(np.linspace(math.log1p(lo), math.log1p(hi), 32 * (j - i + 2) + 1))
            g = _g_and_slope(p, delta, sub)[0]
            ss = np.where(g > 0, 1, -1)
            sc = np.nonzero(ss[1:] != ss[:-1])[0]
            if np.any(np.diff(sc) == 1):
                raise GridTooCoarse(
                    f"fixed points at delta={delta!r} closer than the refined grid near z={lo:.6g}"
                )
            brackets.extend((sub[c], sub[c + 1]) for c in sc)
        i = j + 1
    return brackets


def fixed_points(p: Prior, delta: float) -> FixedPointSet:
    """All solutions of ``z = mmse_X(delta / (1 + z))`` on ``(0, Var(X)]``."""
    if not delta > 0:
        raise OutOfRange("fixed_points needs delta > 0")
    _, var_x, _ = moments(p)
    grid = _fp_grid(p)
    brackets = _scan_brackets(p, delta, grid)
    if not brackets:
        return FixedPointSet(delta, ())
    a = np.array([b[0] for b in brackets])
    b = np.array([b[1] for b in brackets])
    ga = _g_and_slope(p, delta, a)[0]
    gb = _g_and_slope(p, delta, b)[0]
    # grid delta_fp carries ~1e-10 relative error; widen any bracket it misplaced
    bad = np.sign(ga) == np.sign(gb)
    for k in np.nonzero(bad)[0]:
        ia = max(np.searchsorted(grid.z, a[k]) - 1, 0)
        ib = min(np.searchsorted(grid.z, b[k]) + 1, len(grid.z) - 1)
        a[k], b[k] = grid.z[ia], grid.z[ib]
    if np.any(bad):
        ga = _g_and_slope(p, delta, a)[0]
        gb = _g_and_slope(p, delta, b)[0]
    keep = (np.sign(ga) != np.sign(gb)) | (ga == 0) | (gb == 0)
    a, b, ga, gb = a[keep], b[keep], ga[keep], gb[keep]

    xtol = ROOT_XTOL * (1.0 + var_x)
    z = _polish(p, delta, a, b, ga, gb, xtol)
    _, _, ix = _g_and_slope(p, delta, z)
    R = ix + _penalty(delta, z)
    roots = tuple(
        FixedPoint(float(zk), float(rk), bool(gbk > gak), _branch_id(grid, zk))
        for zk, rk, gak, gbk in zip(z, R, ga, gb)
    )
    return FixedPointSet(delta, roots)


def _select(fps: FixedPointSet):
    """Global minimizer among stable roots; ties go to the lower branch."""
    stable = sorted(fps.stable, key=lambda r: (r.R, r.z))
    best = stable[0]
    tie = None
    if len(stable) > 1 and abs(stable[1].R - best.R) < TIE_TOL:
        lo, hi = sorted(stable[:2], key=lambda r: r.z)
        best = lo
        tie = (lo, hi)
    return best, tie


def replica_pair(p: Prior, delta: float) -> tuple[float, float]:
    """``(I_RS(delta), M_RS(delta))``.

    Raises :class:`TieAtMinimum` when two stable fixed points give the same
    minimum within 1e-10 nats.
    """
    if delta < 0:
        raise OutOfRange("delta must be >= 0")
    if delta == 0:
        return 0.0, moments(p)[1]
    fps = fixed_points(p, delta)
    best, tie = _select(fps)
    if tie is not None:
        lo, hi = tie
        raise TieAtMinimum(delta, lo.z, lo.R, hi.z, hi.R)
    return best.R, best.z


def _selected_branch(p: Prior, delta: float):
    fps = fixed_points(p, delta)
    best, _ = _select(fps)
    return fps, best


def _localize_jumps(p: Prior, d_lo: float, d_hi: float, b_lo: int, b_hi: int, out: list):
    left, right = d_lo, d_hi
    right_branch = b_hi
    while right - left > JUMP_DELTA_TOL:
        mid = 0.5 * (left + right)
        _, best = _selected_branch(p, mid)
        if best.branch == b_lo:
            left = mid
        else:
            right, right_branch = mid, best.branch
    d_star = 0.5 * (left + right)
    fps_l, best_l = _selected_branch(p, left)
    fps_r, best_r = _selected_branch(p, right)
    at = fixed_points(p, d_star)
    z_minus = next((r.z for r in at.stable if r.branch == b_lo), best_l.z)
    z_plus = next((r.z for r in at.stable if r.branch == right_branch), best_r.z)
    out.append(Jump(float(d_star), float(z_minus), float(z_plus)))
    if right_branch != b_hi:
        _localize_jumps(p, right, d_hi, right_branch, b_hi, out)


def replica_curve(p: Prior, deltas: Sequence[float]) -> ReplicaCurve:
    """Replica MI and MMSE on an increasing grid, with jumps located in delta.

    At a jump the arrays follow the global-minimizer convention, taking the lower
    branch from ``delta_star`` on; both branch values live in the jump record.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or np.any(deltas < 0) or np.any(np.diff(deltas) <= 0):
        raise OutOfRange("deltas must be an increasing grid of values >= 0")
    _, var_x, _ = moments(p)
    grid = _fp_grid(p)
    n = deltas.size
    i_rs = np.empty(n)
    m_rs = np.empty(n)
    count = np.empty(n, dtype=int)
    branch = np.empty(n, dtype=int)
    for k, d in enumerate(deltas):
        if d == 0:
            i_rs[k], m_rs[k], count[k] = 0.0, var_x, 1
            branch[k] = _branch_id(grid, var_x)
            continue
        fps, best = _selected_branch(p, d)
        i_rs[k], m_rs[k], count[k], branch[k] = best.R, best.z, len(fps), best.branch

    jumps: list[Jump] = []
    for k in range(n - 1):
        if branch[k] != branch[k + 1]:
            lo = deltas[k] if deltas[k] > 0 else min(1e-12, deltas[k + 1] / 2)
            _localize_jumps(p, lo, deltas[k + 1], branch[k], branch[k + 1], jumps)
    return ReplicaCurve(deltas, i_rs, m_rs, count, tuple(jumps))


def integrate_information(curve: ReplicaCurve) -> np.ndarray:
    """Cumulative trapezoid integral of ``log(1 + M_RS) / 2`` over the curve grid.

    Grid cells containing a recorded jump are split at ``delta_star`` using the
    two branch values, so the discontinuity does not smear into the integral.
    """
    d = curve.deltas
    f = 0.5 * np.log1p(curve.m_rs)
    inc = 0.5 * (f[1:] + f[:-1]) * np.diff(d)
    for j in curve.jumps:
        k = np.searchsorted(d, j.delta_star) - 1
        if 0 <= k < d.size - 1 and d[k] < j.delta_star < d[k + 1]:
            fm = 0.5 * math.log1p(j.z_minus)
            fp = 0.5 * math.log1p(j.z_plus)
            inc[k] = 0.5 * (f[k] + fm) * (j.delta_star - d[k]) + 0.5 * (fp + f[k + 1]) * (
                d[k + 1] - j.delta_star
            )
    return np.concatenate([[0.0], np.cumsum(inc)])


def delta_fp(p: Prior, z: float) -> float:
    """``(1 + z) * mmse_X^{-1}(z)``: the measurement ratio at which ``z`` is a fixed point."""
    return (1.0 + z) * mmse_x_inv(p, z)


def se_iterate(p: Prior, delta: float, z0: Optional[float] = None, tol: Optional[float] = None,
               max_iters: int = 100_000, keep_trace: bool = False) -> SEResult:
    """Iterate ``z <- mmse_X(delta / (1 + z))`` from ``z0`` (default ``Var(X)``).

    Started from ``Var(X)`` the iterates decrease monotonically to the largest
    fixed point.  ``tol`` is an absolute step tolerance, by default
    ``1e-12 * (1 + Var(X))``.  A run that hits ``max_iters`` comes back with
    ``converged=False``.
    """
    _, var_x, _ = moments(p)
    z = var_x if z0 is None else float(z0)
    if not 0 <= z <= var_x:
        raise OutOfRange("z0 must lie in [0, Var(X)]")
    if delta < 0:
        raise OutOfRange("delta must be >= 0")
    tol = 1e-12 * (1.0 + var_x) if tol is None else tol
    trace = [z] if keep_trace else []
    for it in range(1, max_iters + 1):
        z_new = mmse_x(p, delta / (1.0 + z))
        step = abs(z_new - z)
        z = z_new
        if keep_trace:
            trace.append(z)
        if step < tol:
            return SEResult(z, it, True, tuple(trace))
    return SEResult(z, max_iters, False, tuple(trace))


def _fold_range(grid: _FPGrid):
    if grid.d_extrema.size == 0:
        return None
    return float(grid.d_extrema.min()), float(grid.d_extrema.max())


def _outer_gap(p: Prior, delta: float):
    stable = fixed_points(p, delta).stable
    if len(stable) < 2:
        return None
    return stable[0].R - stable[-1].R, stable[0].z, stable[-1].z


def _gap_bisect(p: Prior, lo: float, hi: float, g_lo: float):
    gap = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        res = _outer_gap(p, mid)
        if res is None:
            return None
        gap = res[0]
        if abs(gap) < GAP_TOL or hi - lo < 1e-15 * hi:
            return mid, res
        if np.sign(gap) == np.sign(g_lo):
            lo, g_lo = mid, gap
        else:
            hi = mid
    return None


def _all_transitions(p: Prior, delta_range=None, n_scan: int = 257):
    grid = _fp_grid(p)
    fold = _fold_range(grid)
    if fold is None:
        return []
    lo, hi = delta_range if delta_range is not None else fold
    lo, hi = max(lo, fold[0]), min(hi, fold[1])
    if not hi > lo:
        return []
    ds = np.linspace(lo, hi, n_scan)
    gaps = [_outer_gap(p, d) for d in ds]
    found = []
    for k in range(n_scan - 1):
        ga, gb = gaps[k], gaps[k + 1]
        if ga is None or gb is None:
            continue
        if ga[0] == 0:
            found.append((ds[k], ga))
        elif np.sign(ga[0]) != np.sign(gb[0]):
            res = _gap_bisect(p, ds[k], ds[k + 1], ga[0])
            if res is not None:
                found.append(res)
    return found


def phase_transition(p: Prior, delta_range: Optional[tuple[float, float]] = None) -> Optional[float]:
    """Measurement ratio where the two outermost stable branches give equal potential.

    Returns ``None`` when no ratio in range has more than one stable fixed point.
    The default range is the fold region of the fixed-point curve, outside of
    which the fixed point is unique.
    """
    found = _all_transitions(p, delta_range)
    return float(found[0][0]) if found else None


def _pair_gap(p: Prior, delta: float, b_low: int, b_high: int):
    stable = fixed_points(p, delta).stable
    low = [r for r in stable if r.branch == b_low]
    high = [r for r in stable if r.branch == b_high]
    if not low or not high:
        return None
    return low[0].R - high[-1].R, low[0].z, high[-1].z


def _refine_plateau(p: Prior, jump: Jump, grid: _FPGrid):
    """Sharpen a jump to equal minima between its two branches."""
    b_high, b_low = _branch_id(grid, jump.z_minus), _branch_id(grid, jump.z_plus)
    lo = jump.delta_star - 2 * JUMP_DELTA_TOL
    hi = jump.delta_star + 2 * JUMP_DELTA_TOL
    g_lo = _pair_gap(p, lo, b_low, b_high)
    best = (jump.delta_star, jump.z_plus, jump.z_minus)
    if g_lo is None:
        return best
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        res = _pair_gap(p, mid, b_low, b_high)
        if res is None:
            break
        best = (mid, res[1], res[2])
        if abs(res[0]) < GAP_TOL or hi - lo < 1e-15 * hi:
            break
        if np.sign(res[0]) == np.sign(g_lo[0]):
            lo = mid
        else:
            hi = mid
    return tuple(float(v) for v in best)


def single_crossing_check(p: Prior, z_grid_size: int = 4096, delta_max: float = 20.0) -> CrossingReport:
    """Count zero crossings of ``delta_RS(z) - delta_FP(z)``.

    ``delta_RS`` is the inverse of the replica MMSE.  It agrees with
    ``delta_FP`` away from jump plateaus, so only strict sign changes inside each
    plateau ``[z_plus, z_minus]`` at height ``delta_star`` are counted.  On a
    plateau the sign of the difference equals the sign of
    ``z - mmse_X(delta_star / (1 + z))``.
    """
    _, var_x, _ = moments(p)
    grid = _fp_grid(p)

    tail_ok = False
    if delta_max > 1:
        zt = 1.0 / (delta_max - 1.0)
        sel = (grid.z > 0) & (grid.z <= zt)
        tail_ok = bool(np.all(np.diff(grid.delta_fp[sel]) < 0))

    fold = _fold_range(grid)
    if fold is None or fold[0] > delta_max:
        return CrossingReport((), True, (), (), tail_ok)

    lo = fold[0] * (1 - 1e-3)
    hi = min(fold[1] * (1 + 1e-3), delta_max)
    curve = replica_curve(p, np.linspace(lo, hi, 401))
    plateaus = [_refine_plateau(p, j, grid) for j in curve.jumps]

    z_min = mmse_x(p, delta_max)
    zg = np.expm1(np.linspace(math.log1p(z_min), math.log1p(var_x), z_grid_size))
    crossings: list[float] = []
    touches: list[float] = []
    for d_star, z1, z2 in plateaus:
        margin = 1e-6 * (math.log1p(z2) - math.log1p(z1))
        lz = np.log1p(zg)
        inside = zg[(lz > math.log1p(z1) + margin) & (lz < math.log1p(z2) - margin)]
        if inside.size < 2:
            continue
        g = _g_and_slope(p, d_star, inside)[0]
        sg = np.where(g > 0, 1, -1)
        cells = np.nonzero(sg[1:] != sg[:-1])[0]
        if np.any(np.diff(cells) < 3):
            raise GridTooCoarse(f"sign changes closer than 3 grid cells on plateau at delta={d_star:.6g}")
        f = lambda z: z - mmse_x(p, d_star / (1.0 + z))
        for c in cells:
            crossings.append(brentq(f, inside[c], inside[c + 1], xtol=1e-12 * (1 + var_x)))
        # report tangential touches: interior local minima of |g| that do not change sign
        rel = np.abs(g) / (1.0 + inside)
        for k in range(1, inside.size - 1):
            if rel[k] < 1e-6 and rel[k] <= rel[k - 1] and rel[k] <= rel[k + 1]:
                if sg[k - 1] == sg[k] == sg[k + 1]:
                    touches.append(float(inside[k]))

    return CrossingReport(
        crossings=tuple(float(c) for c in crossings),
        is_single_crossing=len(crossings) <= 1,
        plateaus=tuple(plateaus),
        touches=tuple(touches),
        tail_verified=tail_ok,
    )
