"""Endpoint-conditioned costs: shooting, profiles, and bad-point detection.

The cost of observing final magnetization m' after time t is the static
rate of the starting magnetization plus the least action among flow paths
joining the two endpoints. This module finds all connecting paths for a
fixed endpoint pair, assembles the cost profile over starting points,
extracts its minimizers, and classifies the final magnetizations where
two distinct optimal histories tie, which is where the limiting
conditional kernel jumps.

Two independent routes to the tied points are kept deliberately separate:
the profile route (two global minimizers of the cost profile) and the
transported-curve route (two monotone branches of the pushed-forward
allowed curve carrying equal cost). They must agree and are tested
against each other, so neither may be expressed through the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import bisect, brentq

from ._util import dump_json, parallel_map, write_csv
from .acc import TransportResult, acc_curve, monotone_pieces, \
    pre_bad_intervals, transport
from .flow import BoundaryHit, Trajectory, acceleration, closed_form_path_b0, \
    integrate, potential
from .model import DomainError, ModelParams, static_rate


class NoConnection(RuntimeError):
    """No admissible flow path joins the requested endpoints in time t."""


class ShootRoot(NamedTuple):
    v0: float
    action: float


def _params_meta(params: ModelParams) -> dict:
    return {"beta": params.beta, "beta_prime": params.beta_prime, "t": params.t}


# The batched scan clips the field to this sub-strip; columns that cross it
# are flagged as escaped and replaced by a boundary-sign surrogate. A path
# cannot cross in and come back: past the outermost rest point the potential
# falls off monotonically toward the boundary, so there is no turning point
# left inside the shell (holds while the outermost rest point stays below
# the clip line, i.e. for beta_prime up to about 7).
_SCAN_CLIP = 1.0 - 1e-6


def _scan_endpoints(m_start: float, v0s: np.ndarray, horizon: float,
                    beta_prime: float):
    """Loose batched sweep of the flow over many launch velocities.

    All columns ride in one stacked system. Outside the clip line the
    field is frozen at its clip value, which keeps escaped columns finite
    and gently outbound without polluting step control. Returns the final
    magnetizations, the escape mask, and the escape side per column.
    """
    v0s = np.asarray(v0s, dtype=float)
    k = v0s.size
    y0 = np.concatenate([np.full(k, m_start, dtype=float), v0s])

    def rhs(s, y):
        mc = np.clip(y[:k], -_SCAN_CLIP, _SCAN_CLIP)
        return np.concatenate([y[k:], acceleration(mc, beta_prime)])

    sol = solve_ivp(rhs, (0.0, horizon), y0, method="RK45",
                    rtol=1e-6, atol=1e-9)
    ms = sol.y[:k]
    out = np.abs(ms) >= _SCAN_CLIP
    escaped = out.any(axis=1)
    side = np.zeros(k)
    for i in np.nonzero(escaped)[0]:
        side[i] = math.copysign(1.0, ms[i, np.argmax(out[i])])
    return ms[:, -1].copy(), escaped, side


def _shot_end(m_start: float, v0: float, params: ModelParams, *,
              loose: bool = False) -> float:
    """Endpoint of a single shot; boundary exits map to their side's sign."""
    if loose:
        rtol, atol, energy_tol = 1e-8, 1e-10, math.inf
    else:
        rtol, atol, energy_tol = params.rtol, params.atol, params.energy_tol
    try:
        tr = integrate((m_start, v0), params.t, params.beta_prime,
                       rtol=rtol, atol=atol, energy_tol=energy_tol,
                       strip_margin=params.strip_margin,
                       sensitivities=False, action=False)
    except BoundaryHit as hit:
        return math.copysign(1.0, hit.trajectory.states[-1, 0])
    return float(tr.state_at(params.t).m)


def _full_shot(m_start: float, v0: float, params: ModelParams) -> Trajectory:
    return integrate((m_start, v0), params.t, params.beta_prime,
                     rtol=params.rtol, atol=params.atol,
                     energy_tol=params.energy_tol,
                     strip_margin=params.strip_margin,
                     sensitivities=True, action=True)


def shoot(m_start: float, m_end: float, params: ModelParams, *,
          n_scan: int = 201) -> list[ShootRoot]:
    """All launch velocities whose flow path hits m_end at time params.t.

    The sweep covers every orbit through m_start with energy up to four
    times the separatrix level; endpoint-residual sign changes are then
    bisected at loose tolerance and each root is polished with a Newton
    step on the endpoint sensitivity until the verified residual falls
    below 1e-9. Roots come back sorted by launch velocity, each with its
    path action. Raises NoConnection when the sweep finds none.
    """
    if not (-1 < m_start < 1 and -1 < m_end < 1):
        raise DomainError("endpoints must lie inside (-1, 1)")
    if params.t <= 0:
        raise DomainError("shooting needs a positive horizon t")
    if n_scan < 3:
        raise DomainError("n_scan must be at least 3")

    v_cap = math.sqrt(16.0 - potential(m_start, params.beta_prime))
    v0s = np.linspace(-v_cap, v_cap, int(n_scan))
    end_m, escaped, side = _scan_endpoints(m_start, v0s, params.t,
                                           params.beta_prime)
    resid = np.where(escaped, side, end_m) - m_end

    roots = []
    for i in range(len(v0s) - 1):
        if resid[i] == 0.0:
            roots.append(float(v0s[i]))
        if resid[i] * resid[i + 1] < 0:
            v = brentq(lambda v0: _shot_end(m_start, v0, params, loose=True)
                       - m_end, v0s[i], v0s[i + 1], xtol=1e-11)
            roots.append(float(v))
    if resid[-1] == 0.0:
        roots.append(float(v0s[-1]))

    found = []
    width = float(v0s[1] - v0s[0])
    for v in roots:
        refined = _polish_root(m_start, m_end, v, width, params)
        if refined is not None:
            found.append(refined)

    found.sort(key=lambda r: r.v0)
    deduped: list[ShootRoot] = []
    for r in found:
        if deduped and abs(r.v0 - deduped[-1].v0) < 1e-9:
            continue
        deduped.append(r)
    if not deduped:
        raise NoConnection(
            f"no path from {m_start} to {m_end} in time {params.t}")
    return deduped


def _polish_root(m_start: float, m_end: float, v0: float, step_cap: float,
                 params: ModelParams) -> Optional[ShootRoot]:
    """Newton-polish a candidate launch velocity; None if it fails to verify."""
    v = v0
    for _ in range(6):
        try:
            tr = _full_shot(m_start, v, params)
        except BoundaryHit:
            return None
        r = float(tr.state_at(params.t).m) - m_end
        if abs(r) < 1e-9:
            return ShootRoot(v, float(tr.action_at(params.t)))
        j12 = float(tr.jac_at(params.t)[0, 1])
        if not math.isfinite(j12) or j12 == 0.0:
            return None
        step = r / j12
        if abs(step) > step_cap:
            return None
        v -= step
    return None


def path_cost_b0(m_start: float, m_end: float, t: float, *,
                 printed: bool = False) -> float:
    """Action of the infinite-temperature two-point path, in closed form.

    The default is a rearrangement that stays exact as the path degenerates
    to free relaxation. printed=True instead evaluates the raw grouping
    with R, C1, C2 as usually displayed; it agrees to about 1e-9 but loses
    digits to cancellation, so it is kept only as a cross-check.
    """
    if t < 0 or (t == 0 and m_start != m_end):
        raise DomainError("need t > 0, or t = 0 with equal endpoints")
    if not (-1 < m_start < 1 and -1 < m_end < 1):
        raise DomainError("endpoints must lie inside (-1, 1)")
    if t == 0:
        return 0.0
    path = closed_form_path_b0(m_start, m_end, t)
    c1, c2 = path.c1, path.c2
    r = math.sqrt(max(1.0 - 4.0 * c1 * c2, 0.0))
    e2t = math.exp(2.0 * t)

    if printed:
        m, mp = m_start, m_end
        em2t = math.exp(-2.0 * t)
        top = (r - c1 * em2t + c2 * e2t) / (1.0 - mp)
        bot = (r - c1 + c2) / (1.0 - m)
        ratio = ((1.0 - r - 2.0 * c1 * mp * em2t)
                 / (1.0 + r - 2.0 * c1 * mp * em2t)
                 * (1.0 + r - 2.0 * c1 * m) / (1.0 - r - 2.0 * c1 * m))
        return 0.25 * (4.0 * t + math.log((1.0 - mp * mp) / (1.0 - m * m))
                       + 2.0 * (mp * math.log(top) - m * math.log(bot))
                       + math.log(ratio))

    def half(mm, x):
        return 0.5 * ((1.0 + mm) * math.log(abs(1.0 + r + 2.0 * c2 * x))
                      + (1.0 - mm) * math.log(abs(1.0 + r - 2.0 * c2 * x)))

    return half(m_end, e2t) - half(m_start, 1.0)


def _golden_min(f, lo: float, hi: float, tol: float = 1e-8):
    """Golden-section minimization on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class CostProfile:
    """Normalized endpoint cost over starting magnetizations.

    samples hold (m0, cost) with the global minimum shifted to zero and
    +inf marking unreachable starts. minima are the refined interior local
    minimizers sorted by m0; global_indices point at the entries of minima
    tied with the global minimum (serialized under the key "global").
    """

    m_end: float
    samples: tuple
    minima: tuple
    global_indices: tuple
    params: ModelParams

    def to_csv(self, path):
        meta = _params_meta(self.params)
        meta["m_end"] = self.m_end
        write_csv(path, ["m0", "cost"], self.samples, meta=meta)

    def to_json(self) -> str:
        return dump_json({
            "m_end": self.m_end,
            "params": _params_meta(self.params),
            "minima": [[m0, c] for m0, c in self.minima],
            "global": list(self.global_indices),
        })


def cost_profile(m_end: float, params: ModelParams, m0_grid=None, *,
                 n_scan: int = 201, threads=None) -> CostProfile:
    """Cost of conditioning on the final magnetization m_end, per start.

    Each grid point pays the static rate of its starting magnetization
    plus the least connecting action; the column minimum is subtracted so
    the best start costs zero. Interior local minimizers are refined by
    golden-section search to 1e-8 in m0. Starts that cannot reach m_end
    are kept at +inf. At t = 0 the profile degenerates to the constraint
    m0 = m_end.
    """
    if not (-1 < m_end < 1):
        raise DomainError("m_end must lie inside (-1, 1)")
    if m0_grid is None:
        m0s = np.linspace(-0.99, 0.99, 241)
    else:
        m0s = np.unique(np.asarray(m0_grid, dtype=float))
        if m0s.size < 3:
            raise DomainError("m0_grid needs at least 3 points")
        if np.any(np.abs(m0s) >= 1):
            raise DomainError("m0_grid must lie inside (-1, 1)")

    if params.t == 0:
        if not np.any(m0s == m_end):
            m0s = np.sort(np.append(m0s, m_end))
        samples = tuple((float(m0), 0.0 if m0 == m_end else math.inf)
                        for m0 in m0s)
        return CostProfile(m_end=float(m_end), samples=samples,
                           minima=((float(m_end), 0.0),),
                           global_indices=(0,), params=params)

    def raw_cost(m0: float) -> float:
        try:
            roots = shoot(float(m0), m_end, params, n_scan=n_scan)
        except NoConnection:
            return math.inf
        return static_rate(m0, params.beta) + min(r.action for r in roots)

    costs = np.array(parallel_map(raw_cost, m0s, threads))
    if not np.any(np.isfinite(costs)):
        raise NoConnection(f"no start point reaches {m_end} in time {params.t}")

    minima = []
    for i in range(1, len(m0s) - 1):
        if math.isfinite(costs[i]) and costs[i] < costs[i - 1] \
                and costs[i] < costs[i + 1]:
            x, fx = _golden_min(raw_cost, m0s[i - 1], m0s[i + 1])
            minima.append((float(x), float(fx)))

    base = min((c for _, c in minima), default=math.inf)
    base = min(base, float(np.min(costs[np.isfinite(costs)])))
    samples = tuple((float(m0), float(c - base) if math.isfinite(c) else math.inf)
                    for m0, c in zip(m0s, costs))
    minima = tuple((m0, c - base) for m0, c in minima)
    global_indices = tuple(i for i, (_, c) in enumerate(minima)
                           if c <= params.cost_tie_tol)
    return CostProfile(m_end=float(m_end), samples=samples, minima=minima,
                       global_indices=global_indices, params=params)


@dataclass(frozen=True)
class HistoryCandidate:
    """One conditioned history: launch point, action, total cost, path.

    branch is the index of the monotone piece of the transported curve the
    candidate came from (None for the degenerate zero-horizon case).
    """

    m0: float
    v0: float
    action: float
    cost: float
    trajectory: Trajectory
    branch: Optional[int] = None


def _curve_end(m0: float, params: ModelParams) -> float:
    """Endpoint of the history launched from the allowed curve at m0."""
    try:
        tr = integrate((m0, float(acc_curve(m0, params))), params.t,
                       params.beta_prime, rtol=params.rtol, atol=params.atol,
                       energy_tol=params.energy_tol,
                       strip_margin=params.strip_margin,
                       sensitivities=False, action=False)
    except BoundaryHit as hit:
        return math.copysign(1.0, hit.trajectory.states[-1, 0])
    return float(tr.state_at(params.t).m)


def _invert_piece(piece: list, m_target: float,
                  params: ModelParams) -> Optional[float]:
    """Launch magnetization on one monotone piece whose endpoint is m_target."""
    m0s = np.array([s.m0 for s in piece])
    ends = np.array([s.end.m for s in piece])
    sign = 1.0 if ends[-1] >= ends[0] else -1.0
    e = sign * ends
    x = sign * m_target
    if not (e[0] <= x <= e[-1]):
        return None
    j = int(np.clip(np.searchsorted(e, x), 1, len(e) - 1))

    def f(m0):
        return _curve_end(float(m0), params) - m_target

    lo, hi = float(m0s[j - 1]), float(m0s[j])
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        return None
    return float(brentq(f, lo, hi, xtol=1e-12))


def _history_at(m0: float, params: ModelParams,
                branch: Optional[int] = None) -> HistoryCandidate:
    v0 = float(acc_curve(m0, params))
    tr = _full_shot(m0, v0, params)
    action = float(tr.action_at(params.t))
    return HistoryCandidate(m0=float(m0), v0=v0, action=action,
                            cost=float(static_rate(m0, params.beta)) + action,
                            trajectory=tr, branch=branch)


def optimal_histories(m_end: float, params: ModelParams,
                      transport_result: Optional[TransportResult] = None, *,
                      transport_grid=400, window=(-0.999, 0.999),
                      threads=None) -> list[HistoryCandidate]:
    """Stationary conditioned histories ending at m_end, cheapest first.

    The pushed-forward allowed curve is cut into monotone pieces; every
    piece whose image covers m_end contributes one history by inverting
    the endpoint map on it. The free-end tie makes these launch points
    exactly the stationary points of the endpoint cost, so the cheapest
    candidate is the optimal history and ties signal a bad point.
    """
    if not (-1 < m_end < 1):
        raise DomainError("m_end must lie inside (-1, 1)")
    if params.t == 0:
        return [_history_at(m_end, params)]
    if transport_result is None:
        transport_result = transport(params, transport_grid, window=window,
                                     threads=threads)
    candidates = []
    for idx, piece in enumerate(monotone_pieces(transport_result)):
        m0 = _invert_piece(piece, m_end, params)
        if m0 is not None:
            candidates.append(_history_at(m0, params, branch=idx))
    if not candidates:
        raise NoConnection(
            f"no branch of the transported curve reaches {m_end}; "
            f"widen the transport window {window}")
    candidates.sort(key=lambda c: c.cost)
    return candidates


class BadPoint(NamedTuple):
    m: float
    m0_a: float
    m0_b: float
    cost_gap: float
    kernel_jump: float


@dataclass(frozen=True)
class BadPointReport:
    """Pre-bad intervals and the bad points selected from them."""

    params: ModelParams
    pre_bad: tuple
    bad: tuple

    def to_json(self) -> str:
        return dump_json({
            "params": _params_meta(self.params),
            "pre_bad": [[iv.lo, iv.hi, iv.branches] for iv in self.pre_bad],
            "bad": [{
                "m": b.m, "m0_a": b.m0_a, "m0_b": b.m0_b,
                "cost_gap": b.cost_gap,
                "kernel_jump": None if math.isnan(b.kernel_jump)
                else b.kernel_jump,
            } for b in self.bad],
        })


class _PieceTable:
    """Interpolation table for one monotone piece of the transported curve."""

    def __init__(self, piece: list, beta: float):
        ends = np.array([s.end.m for s in piece])
        costs = np.array([static_rate(s.m0, beta) + s.action for s in piece])
        order = np.argsort(ends)
        self.lo = float(ends[order[0]])
        self.hi = float(ends[order[-1]])
        self._ends = ends[order]
        self._costs = costs[order]
        self.piece = piece

    def covers(self, m: float) -> bool:
        return self.lo <= m <= self.hi

    def cost(self, m: float) -> float:
        return float(np.interp(m, self._ends, self._costs))


def _exact_branch_cost(table: _PieceTable, m: float,
                       params: ModelParams) -> Optional[HistoryCandidate]:
    m0 = _invert_piece(table.piece, m, params)
    return None if m0 is None else _history_at(m0, params)


def _measure_jump(m_bad: float, params: ModelParams,
                  transport_result: TransportResult, eps: float) -> float:
    from . import gamma  # deferred: gamma builds on the machinery above

    try:
        return gamma.kernel_jump(m_bad, params, eps=eps,
                                 transport_result=transport_result)
    except Exception:
        return math.nan


def _symmetric_bad_at_zero(tables: list, params: ModelParams):
    """Tied mirror minimizers at m' = 0, direct by symmetry.

    Bisection would be degenerate there: the two competing costs are equal
    identically, not at an isolated root. The cheapest history either
    launches at m0 = 0 (kernel continuous) or from a mirror pair.
    """
    best = None
    for tb in tables:
        if not tb.covers(0.0):
            continue
        cand = _exact_branch_cost(tb, 0.0, params)
        if cand is not None and (best is None or cand.cost < best.cost):
            best = cand
    if best is None or abs(best.m0) <= 1e-6:
        return None
    gap = math.inf
    for tb in tables:
        mirror = _exact_branch_cost(tb, 0.0, params)
        if mirror is None:
            continue
        if abs(mirror.m0 + best.m0) < 1e-3:
            gap = min(gap, abs(mirror.cost - best.cost))
    if gap > params.cost_tie_tol:
        return None
    a, b = sorted((best.m0, -best.m0))
    return BadPoint(0.0, a, b, gap, math.nan)


def classify_bad(params: ModelParams, scan=None, *,
                 transport_result: Optional[TransportResult] = None,
                 transport_grid=400, window=(-0.999, 0.999),
                 measure_jumps: bool = True, jump_eps: float = 1e-5,
                 threads=None) -> BadPointReport:
    """Final magnetizations where two optimal histories tie in cost.

    Pre-bad intervals come from the overhangs of the transported allowed
    curve. Within each interval the scan tracks which monotone branch is
    the cheapest; wherever the leader changes between neighboring scan
    points, the cost difference of the two competing branches is bisected
    to 1e-8 in m'. The symmetric point m' = 0 is tested directly, since
    there the competing costs tie identically rather than crossing. Each
    bad point reports both launch magnetizations, the residual cost gap,
    and (optionally) the measured jump of the limiting kernel.
    """
    if params.t == 0:
        return BadPointReport(params=params, pre_bad=(), bad=())
    if transport_result is None:
        transport_result = transport(params, transport_grid, window=window,
                                     threads=threads)
    intervals = tuple(pre_bad_intervals(transport_result))
    if not intervals:
        return BadPointReport(params=params, pre_bad=(), bad=())

    tables = [_PieceTable(p, params.beta)
              for p in monotone_pieces(transport_result)]

    if scan is None:
        scan = np.linspace(-0.99, 0.99, 2001)
    scan = np.asarray(scan, dtype=float)

    bad: list[BadPoint] = []
    zero_done = False
    for iv in intervals:
        pts = [m for m in scan if iv.lo < m < iv.hi]
        w = iv.hi - iv.lo
        for frac in (1e-6, 1e-5, 1e-4, 1e-3):
            pts.append(iv.lo + frac * w)
            pts.append(iv.hi - frac * w)
        pts = sorted(m for m in set(pts) if abs(m) > 1e-6)

        if iv.lo < 0 < iv.hi and not zero_done:
            zero_done = True
            hit = _symmetric_bad_at_zero(tables, params)
            if hit is not None:
                bad.append(hit)

        leaders = []
        for m in pts:
            cover = [(tb.cost(m), i) for i, tb in enumerate(tables)
                     if tb.covers(m)]
            leaders.append(min(cover)[1] if cover else None)

        for (m_lo, la), (m_hi, lb) in zip(zip(pts, leaders),
                                          zip(pts[1:], leaders[1:])):
            if la is None or lb is None or la == lb:
                continue
            found = _bisect_tie(tables, la, lb, m_lo, m_hi, params)
            if found is not None:
                bad.append(found)

    bad.sort(key=lambda b: b.m)
    deduped: list[BadPoint] = []
    for b in bad:
        if deduped and abs(b.m - deduped[-1].m) < 1e-6:
            if b.cost_gap < deduped[-1].cost_gap:
                deduped[-1] = b
            continue
        deduped.append(b)

    if measure_jumps:
        deduped = [b._replace(kernel_jump=_measure_jump(
            b.m, params, transport_result, jump_eps)) for b in deduped]
    return BadPointReport(params=params, pre_bad=intervals,
                          bad=tuple(deduped))


def _bisect_tie(tables: list, ia: int, ib: int, m_lo: float, m_hi: float,
                params: ModelParams) -> Optional[BadPoint]:
    """Locate the cost tie of branches ia and ib inside [m_lo, m_hi]."""
    ta, tb = tables[ia], tables[ib]

    def delta(m: float) -> float:
        ca = _exact_branch_cost(ta, m, params)
        cb = _exact_branch_cost(tb, m, params)
        if ca is None or cb is None:
            raise NoConnection(f"branch lost coverage at {m}")
        return ca.cost - cb.cost

    try:
        d_lo, d_hi = delta(m_lo), delta(m_hi)
        # The bracket came from interpolated costs; their error can push the
        # apparent leadership flip one scan cell off the exact crossing, so
        # walk outward until the exact difference straddles zero.
        width = m_hi - m_lo
        lo_lim, hi_lim = max(ta.lo, tb.lo), min(ta.hi, tb.hi)
        for _ in range(3):
            if d_lo * d_hi <= 0:
                break
            if abs(d_lo) < abs(d_hi):
                m_lo = max(m_lo - width, lo_lim)
                d_lo = delta(m_lo)
            else:
                m_hi = min(m_hi + width, hi_lim)
                d_hi = delta(m_hi)
        if d_lo == 0.0:
            m_star = m_lo
        elif d_hi == 0.0:
            m_star = m_hi
        elif d_lo * d_hi > 0:
            return None
        else:
            m_star = float(bisect(delta, m_lo, m_hi, xtol=1e-8))
        ca = _exact_branch_cost(ta, m_star, params)
        cb = _exact_branch_cost(tb, m_star, params)
    except NoConnection:
        return None
    if ca is None or cb is None:
        return None
    gap = abs(ca.cost - cb.cost)
    if gap > params.cost_tie_tol:
        return None
    floor = min(ca.cost, cb.cost)
    for i, other in enumerate(tables):
        if i in (ia, ib) or not other.covers(m_star):
            continue
        if other.cost(m_star) < floor - params.cost_tie_tol:
            return None  # a third branch undercuts the pair: not a global tie
    a, b = sorted((ca.m0, cb.m0))
    return BadPoint(float(m_star), a, b, gap, math.nan)
