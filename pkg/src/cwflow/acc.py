"""Allowed-configurations curve: construction, transport, folds, overhangs.

Conditioning the magnetization only at the final time leaves the initial
point of an optimal history free, and the stationarity of the cost at the
free end ties the initial velocity to the initial magnetization. That tie
is a curve in phase space. Pushing the curve forward with the extremal
flow and projecting onto the magnetization axis shows when two distinct
initial points first reach the same final value: the projection folds,
and overhangs appear.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from ._util import parallel_map, write_csv
from .flow import BoundaryHit, PhasePoint, integrate, potential
from .model import DomainError, ModelParams, mean_field_roots


class NoFold(RuntimeError):
    """The fold indicator stayed positive over the whole scan window."""

    def __init__(self, t_max: float, min_indicator: float):
        self.t_max = t_max
        self.min_indicator = min_indicator
        super().__init__(
            f"no fold up to t = {t_max:g}; indicator minimum {min_indicator:.6g}")


def _g(m, beta: float, bp: float):
    e = np.exp(2 * bp * m)
    d = (1 + m) + e * (1 - m)
    return 2 * (np.exp(2 * (bp - beta) * m) * (1 + m)
                - np.exp(2 * beta * m) * (1 - m)) / d


def _g_printed(m, beta: float, bp: float):
    e = np.exp(2 * bp * m)
    d = (1 + m) + e * (1 - m)
    return 2 * e * ((1 + m) - np.exp(2 * m * (beta - bp)) * (1 - m)) / d


def _gp(m, beta: float, bp: float):
    e = np.exp(2 * bp * m)
    d = (1 + m) + e * (1 - m)
    p = np.exp(2 * (bp - beta) * m) * (1 + m)
    q = np.exp(2 * beta * m) * (1 - m)
    p1 = np.exp(2 * (bp - beta) * m) * (2 * (bp - beta) * (1 + m) + 1)
    q1 = np.exp(2 * beta * m) * (2 * beta * (1 - m) - 1)
    d1 = 1 + e * (2 * bp * (1 - m) - 1)
    g = 2 * (p - q) / d
    return 2 * (p1 - q1) / d - g * d1 / d


def _check_open_strip(m):
    if not np.all(np.abs(m) < 1):
        raise DomainError("allowed-configurations curve needs |m0| < 1")


def acc_curve(m0, params: ModelParams, *, printed: bool = False):
    """Initial velocity g(m0) paired with m0 on the allowed curve.

    Defining property: the optimal momentum at (m0, g(m0)) equals
    -beta*m0 + artanh(m0). With printed=True a variant algebraic form is
    evaluated instead; it violates that property away from m0 = 0 and is
    kept only for cross-checking, never used elsewhere in the package.
    """
    m0 = np.asarray(m0, dtype=float)
    _check_open_strip(m0)
    f = _g_printed if printed else _g
    out = f(m0, params.beta, params.beta_prime)
    return out if out.ndim else float(out)


def acc_slope(m0, params: ModelParams):
    """Analytic g'(m0); feeds the fold indicator F = J11 + J12 g'."""
    m0 = np.asarray(m0, dtype=float)
    _check_open_strip(m0)
    out = _gp(m0, params.beta, params.beta_prime)
    return out if out.ndim else float(out)


def acc_slope_origin(params: ModelParams) -> float:
    """Slope of the allowed curve at m0 = 0: exactly 2 - 4*beta + 2*beta'."""
    return 2 - 4 * params.beta + 2 * params.beta_prime


@dataclass(frozen=True)
class AccSample:
    """One transported point of the allowed curve.

    F is the fold indicator dm(t)/dm0 along the curve; action is the
    accumulated cost of the trajectory from (m0, v0) to end.
    """

    m0: float
    v0: float
    end: PhasePoint
    F: float
    action: float


class TransportResult:
    """Ordered transported samples plus a quarantine list.

    Grid points whose trajectories left the admissible strip before the
    horizon are excluded from `samples` but reported in `quarantined` as
    (m0, exit time) pairs, so nothing is dropped silently. Iterating or
    indexing the result yields the surviving samples.
    """

    def __init__(self, samples, quarantined, params: ModelParams):
        self.samples = tuple(samples)
        self.quarantined = tuple(quarantined)
        self.params = params

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)

    def to_csv(self, path):
        meta = {
            "beta": self.params.beta,
            "beta_prime": self.params.beta_prime,
            "t": self.params.t,
            "quarantined": len(self.quarantined),
        }
        rows = [(s.m0, s.v0, s.end.m, s.end.v, s.F, s.action) for s in self.samples]
        write_csv(path, ["m0", "v0", "m_t", "v_t", "F", "action"], rows, meta=meta)


def _transport_one(m0: float, params: ModelParams):
    v0 = float(_g(m0, params.beta, params.beta_prime))
    gp = float(_gp(m0, params.beta, params.beta_prime))
    try:
        tr = integrate((m0, v0), params.t, params.beta_prime,
                       rtol=params.rtol, atol=params.atol,
                       energy_tol=params.energy_tol,
                       strip_margin=params.strip_margin,
                       sensitivities=True, action=True)
    except BoundaryHit as hit:
        return m0, None, hit.s_exit
    jac = tr.jac_at(params.t)
    end = tr.state_at(params.t)
    sample = AccSample(m0=m0, v0=v0, end=end,
                       F=float(jac[0, 0] + gp * jac[0, 1]),
                       action=tr.action_at(params.t))
    return m0, sample, None


def transport(params: ModelParams, grid=400, *, window=(-0.999, 0.999),
              refine: bool = True, max_points: int = 20000,
              end_gap: float = 0.02, threads=None) -> TransportResult:
    """Push the allowed curve forward by the horizon params.t.

    grid is either a point count over the window or an explicit array of
    m0 values. With refine=True new points are inserted between neighbors
    whose fold indicators change sign or differ by more than 0.5 (relative
    once |F| is large), whose endpoints are further than end_gap apart, or
    that straddle the survive/escape boundary, down to a spacing of 1e-7
    (or until max_points is reached). The endpoint and boundary rules
    matter above the mean-field temperature: launches that skirt the
    separatrix spread their endpoints over most of the strip, and the
    branches they trace carry low costs, so leaving that layer at grid
    resolution silently drops competitors.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (-1 < lo < hi < 1):
        raise DomainError(f"window must satisfy -1 < lo < hi < 1, got {window}")
    if isinstance(grid, (int, np.integer)):
        if grid < 2:
            raise DomainError("grid needs at least 2 points")
        m0s = np.linspace(lo, hi, int(grid))
    else:
        m0s = np.unique(np.asarray(grid, dtype=float))
        if m0s.size < 2:
            raise DomainError("grid needs at least 2 points")
        _check_open_strip(m0s)

    records = parallel_map(lambda m0: _transport_one(float(m0), params),
                           m0s, threads)
    records.sort(key=lambda r: r[0])

    while refine and len(records) < max_points:
        new_pts = []
        for (m_a, s_a, _), (m_b, s_b, _) in zip(records, records[1:]):
            if m_b - m_a <= 1e-7:
                continue
            if (s_a is None) != (s_b is None):
                new_pts.append(0.5 * (m_a + m_b))
                continue
            if s_a is None:
                continue
            jumps = abs(s_a.F - s_b.F) > 0.5 + 0.05 * min(abs(s_a.F), abs(s_b.F))
            flips = (s_a.F > 0) != (s_b.F > 0)
            wide = abs(s_b.end.m - s_a.end.m) > end_gap
            if jumps or flips or wide:
                new_pts.append(0.5 * (m_a + m_b))
        if not new_pts:
            break
        if len(records) + len(new_pts) > max_points:
            new_pts = new_pts[:max_points - len(records)]
        records.extend(parallel_map(lambda m0: _transport_one(m0, params),
                                    new_pts, threads))
        records.sort(key=lambda r: r[0])
        if len(records) >= max_points:
            break

    samples = [s for _, s, _ in records if s is not None]
    quarantined = [(m0, s_exit) for m0, s, s_exit in records if s is None]
    return TransportResult(samples, quarantined, params)


class FoldPoint(NamedTuple):
    t: float
    m0: float


def _fold_column(m0: float, params: ModelParams, t_max: float):
    """Trajectory from (m0, g(m0)) with sensitivities; partial on exit."""
    v0 = float(_g(m0, params.beta, params.beta_prime))
    gp = float(_gp(m0, params.beta, params.beta_prime))
    try:
        tr = integrate((m0, v0), t_max, params.beta_prime,
                       rtol=params.rtol, atol=params.atol,
                       energy_tol=params.energy_tol,
                       strip_margin=params.strip_margin,
                       sensitivities=True, action=False)
        horizon = t_max
    except BoundaryHit as hit:
        tr = hit.trajectory
        horizon = hit.s_exit * (1 - 1e-12)
    return tr, horizon, gp


def _F_on(tr, ts, gp: float):
    jac = tr.jacs_at(ts)
    return jac[:, 0, 0] + gp * jac[:, 0, 1]


def _F_scalar(tr, s: float, gp: float) -> float:
    jac = tr.jac_at(s)
    return float(jac[0, 0] + gp * jac[0, 1])


def _Ft_scalar(tr, s: float, gp: float) -> float:
    jac = tr.jac_at(s)
    return float(jac[1, 0] + gp * jac[1, 1])


def _column_scan(col, t_grid: int):
    """All zero crossings of F along one trajectory, plus the F minimum."""
    tr, horizon, gp = col
    if tr is None or horizon <= 0 or tr._sol is None:
        return [], 1.0
    ts = np.linspace(0.0, horizon, t_grid)
    fv = _F_on(tr, ts, gp)
    roots = []
    for i in range(len(ts) - 1):
        if fv[i] * fv[i + 1] < 0:
            roots.append(brentq(lambda s: _F_scalar(tr, s, gp),
                                ts[i], ts[i + 1], xtol=1e-14, rtol=8.9e-16))
        elif fv[i + 1] == 0.0:
            roots.append(float(ts[i + 1]))
    return roots, float(fv.min())


def _newton_fold(t0: float, m0_seed: float, params: ModelParams,
                 t_max: float, window) -> FoldPoint | None:
    """Refine a fold seed to a simultaneous zero of F and dF/dm0."""
    h = 1e-4
    lo, hi = window
    t, m0 = float(t0), float(m0_seed)
    m_lo, m_hi = lo + 2 * h, hi - 2 * h
    for _ in range(25):
        trio = [_fold_column(m, params, min(t_max, 1.5 * t + 0.25))
                for m in (m0 - h, m0, m0 + h)]
        reach = min(hz for _, hz, _ in trio)
        if t > reach:
            t = reach * (1 - 1e-9)
        f_lo = _F_scalar(trio[0][0], t, trio[0][2])
        f_c = _F_scalar(trio[1][0], t, trio[1][2])
        f_hi = _F_scalar(trio[2][0], t, trio[2][2])
        ft_lo = _Ft_scalar(trio[0][0], t, trio[0][2])
        ft_c = _Ft_scalar(trio[1][0], t, trio[1][2])
        ft_hi = _Ft_scalar(trio[2][0], t, trio[2][2])
        r1 = f_c
        r2 = (f_hi - f_lo) / (2 * h)
        j11 = ft_c
        j12 = r2  # dR1/dm0 is the same central difference as R2
        j21 = (ft_hi - ft_lo) / (2 * h)
        j22 = (f_hi - 2 * f_c + f_lo) / (h * h)
        det = j11 * j22 - j12 * j21
        if not math.isfinite(det) or det == 0:
            return None
        dt = (r1 * j22 - r2 * j12) / det
        dm = (j11 * r2 - j21 * r1) / det
        t = min(max(t - dt, 1e-9), t_max)
        m0 = min(max(m0 - dm, m_lo), m_hi)
        if abs(dt) < 5e-11 and abs(dm) < 5e-9:
            break
    if abs(r1) < 1e-6 and abs(r2) < 1e-3:
        return FoldPoint(t, m0)
    return None


def fold_times(params: ModelParams, t_max: float,
               m0_window=(-0.999, 0.999), *, t_grid: int = 200,
               m0_grid: int = 400, threads=None) -> list[FoldPoint]:
    """All (t*, m0*) up to t_max where the transported curve folds.

    A fold is a simultaneous zero of the indicator F(t, m0) and of its
    m0-derivative. The scan integrates one trajectory per grid column and
    reads F from the dense output; candidate extrema of the crossing
    curves seed a 2-variable Newton refinement. The horizon stored in
    params is ignored here; t_max sets the scan depth. F is even in m0,
    so a symmetric window is scanned on m0 >= 0 and mirrored.
    """
    if t_max <= 0:
        raise DomainError("t_max must be positive")
    lo, hi = float(m0_window[0]), float(m0_window[1])
    if not (-1 < lo < hi < 1):
        raise DomainError(f"m0_window must satisfy -1 < lo < hi < 1, got {m0_window}")
    symmetric = abs(lo + hi) <= 1e-15
    if symmetric:
        scan = np.linspace(0.0, hi, max(2, m0_grid // 2 + 1))
    else:
        scan = np.linspace(lo, hi, max(2, m0_grid))

    cols = parallel_map(lambda m0: _fold_column(float(m0), params, t_max),
                        scan, threads)
    scans = [_column_scan(c, t_grid) for c in cols]
    crossings = [s[0] for s in scans]
    min_f = min(s[1] for s in scans)
    if not any(crossings):
        raise NoFold(t_max, min_f)

    folds: list[tuple[float, float]] = []
    if symmetric:
        # on the axis dF/dm0 vanishes identically, so every axis crossing
        # is already a fold; no 2D refinement needed
        folds.extend((r, 0.0) for r in crossings[0])

    seeds = []
    n_branches = max(len(c) for c in crossings)
    for k in range(n_branches):
        tk = [c[k] if len(c) > k else math.nan for c in crossings]
        for j in range(1, len(scan) - 1):
            a, b, c = tk[j - 1], tk[j], tk[j + 1]
            if math.isnan(a) or math.isnan(b) or math.isnan(c):
                continue
            if (b - a) * (c - b) <= 0 and not (a == b == c):
                seeds.append((b, float(scan[j])))

    for t0, m00 in seeds:
        pt = _newton_fold(t0, m00, params, t_max, (lo, hi))
        if pt is None or pt.t > t_max:
            continue
        m0_star = pt.m0
        if symmetric and abs(m0_star) < 1e-6:
            m0_star = 0.0
        folds.append((pt.t, abs(m0_star) if symmetric else m0_star))

    unique: list[tuple[float, float]] = []
    for t, m0 in sorted(folds):
        if not any(abs(t - t2) < 1e-6 and abs(m0 - m02) < 1e-3
                   for t2, m02 in unique):
            unique.append((t, m0))
    if symmetric:
        unique.extend((t, -m0) for t, m0 in list(unique) if m0 > 0)
    return [FoldPoint(float(t), float(m0))
            for t, m0 in sorted(unique, key=lambda p: (p[0], p[1]))]


@dataclass(frozen=True)
class PreBadInterval:
    """Final magnetizations reached by two or more branches of the curve.

    branches lists ((m0_lo, m0_hi), direction) descriptors of the
    monotone pieces whose images overlap the interval.
    """

    lo: float
    hi: float
    branches: tuple

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("interval needs lo < hi")

    def __contains__(self, m: float) -> bool:
        return self.lo < float(m) < self.hi


def monotone_pieces(samples) -> list[list[AccSample]]:
    """Maximal sample runs on which the final projection is monotone.

    Accepts a TransportResult (quarantine gaps split the curve) or a bare
    sample list. Pieces are cut at sign changes of the fold indicator, so
    within one piece m0 -> end.m is monotone and its image an interval.
    """
    if isinstance(samples, TransportResult):
        gaps = sorted(m0 for m0, _ in samples.quarantined)
        seq = list(samples.samples)
    else:
        gaps = []
        seq = sorted(samples, key=lambda s: s.m0)
    if len(seq) < 2:
        return []

    runs = []
    cur = [seq[0]]
    for a, b in zip(seq, seq[1:]):
        split = bisect_left(gaps, b.m0) - bisect_right(gaps, a.m0) > 0
        if split:
            runs.append(cur)
            cur = [b]
        else:
            cur.append(b)
    runs.append(cur)

    pieces = []
    for run in runs:
        if len(run) < 2:
            continue
        start = 0
        for i in range(len(run) - 1):
            if (run[i].F > 0) != (run[i + 1].F > 0):
                pieces.append(run[start:i + 1])
                start = i + 1
        pieces.append(run[start:])
    return [p for p in pieces if len(p) >= 2]


def pre_bad_intervals(samples) -> list[PreBadInterval]:
    """Maximal m'-intervals covered by >= 2 monotone pieces of the curve.

    A sweep over the piece images counts how many branches of the
    transported curve reach each final magnetization.
    """
    descr = []
    for p in monotone_pieces(samples):
        ms = [s.end.m for s in p]
        im_lo, im_hi = min(ms), max(ms)
        if im_hi - im_lo <= 0:
            continue
        direction = "increasing" if p[len(p) // 2].F > 0 else "decreasing"
        descr.append((im_lo, im_hi, (p[0].m0, p[-1].m0), direction))

    bounds = sorted({d[0] for d in descr} | {d[1] for d in descr})
    merged = []
    open_lo = None
    hi_seen = None
    for x0, x1 in zip(bounds, bounds[1:]):
        mid = 0.5 * (x0 + x1)
        cover = sum(1 for d in descr if d[0] < mid < d[1])
        if cover >= 2:
            if open_lo is None:
                open_lo = x0
            hi_seen = x1
        elif open_lo is not None:
            merged.append((open_lo, hi_seen))
            open_lo = None
    if open_lo is not None:
        merged.append((open_lo, hi_seen))

    out = []
    for ilo, ihi in merged:
        if ihi - ilo <= 1e-12:
            continue
        branches = tuple((d[2], d[3]) for d in descr if d[0] < ihi and d[1] > ilo)
        out.append(PreBadInterval(float(ilo), float(ihi), branches))
    return out


def enters_periodic_region(beta: float, beta_prime: float,
                           samples: int = 4001) -> bool:
    """Whether the allowed curve dips inside the closed-orbit lobes.

    The lobes exist only for beta_prime > 1, bounded by the energy-4
    level between the origin and the nonzero mean-field roots. By the odd
    symmetry of curve and potential it is enough to scan one lobe.
    """
    if beta_prime <= 1:
        return False
    roots = mean_field_roots(beta_prime)
    if len(roots) < 2:
        return False
    mstar = roots[-1]
    ms = np.linspace(1e-9, mstar * (1 - 1e-9), samples)
    vs = _g(ms, beta, beta_prime)
    energies = vs * vs + potential(ms, beta_prime)
    return bool(energies.min() < 4 - 1e-10)
