"""Gibbs/non-Gibbs phase structure over inverse temperature and horizon.

Closed forms first: the time the origin folds (and with it the short-time
boundary of the non-Gibbs region), the linearized fold time away from the
origin, and the temperature separating symmetric from broken first bad
points. The numeric side classifies bad sets on a (1/beta, t) grid and
bisects the onset times; it trusts `cost.classify_bad` and nothing else,
so the operational definition of every threshold is bad-set emptiness,
not fold existence.

Sign convention: onset times are reported positive. The origin folds at
t = ln((beta' - beta)/(1 - beta)) / (4 (1 - beta')),
which is positive exactly when beta > 1 and beta > beta'; outside that
wedge OutOfRegime is raised rather than returning a negative time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ._util import dump_json, write_csv
from .model import DomainError, ModelParams
from .acc import acc_slope
from .cost import classify_bad


class OutOfRegime(DomainError):
    """The requested closed form has no positive solution there."""


def _fold_time_from_slope(gp: float, beta_prime: float) -> float:
    w = 2.0 * abs(1.0 - beta_prime)
    if gp >= -w:
        raise OutOfRegime(
            f"no fold: launch-curve slope {gp:.6g} does not dominate "
            f"the local rate 2|1-beta'| = {w:.6g}")
    if beta_prime == 1.0:
        return -1.0 / gp
    c = 2.0 * (1.0 - beta_prime)
    return math.log((gp - c) / (gp + c)) / (4.0 * (1.0 - beta_prime))


def t_ngs_closed(beta: float, beta_prime: float) -> float:
    """Horizon at which the launch curve folds at the origin.

    Below beta_sb this is exactly where the origin turns bad. Deeper in
    the broken phase the origin can turn bad earlier, through a tie of
    the two well branches, so there the fold time is only an upper bound
    on t1; thresholds_numeric reports the operational value.

    Valid for beta > 1 and beta' < beta; anything else raises OutOfRegime.
    At beta' = 1 the expression degenerates to 1/(4(beta-1)).
    """
    if beta <= 0 or beta_prime < 0:
        raise DomainError("beta must be positive and beta_prime nonnegative")
    if beta <= 1.0:
        raise OutOfRegime(f"beta = {beta} is subcritical, the origin never folds")
    if beta_prime >= beta:
        raise OutOfRegime(
            f"beta' = {beta_prime} >= beta = {beta}: cooling dynamics, "
            "the origin stays good")
    if beta_prime == 1.0:
        return 1.0 / (4.0 * (beta - 1.0))
    return math.log((beta_prime - beta) / (1.0 - beta)) / (4.0 * (1.0 - beta_prime))


def fold_time_at(m0: float, beta: float, beta_prime: float) -> float:
    """Linearized fold time of the launch through m0 (exact on the axis).

    Solves cosh-type growth of the fold indicator along the trajectory
    frozen at its starting point, so off the axis it is an estimate; at
    m0 = 0 the trajectory really is constant and the value is exact.
    """
    params = ModelParams(beta=beta, beta_prime=beta_prime, t=0.0)
    gp = float(acc_slope(m0, params))
    return _fold_time_from_slope(gp, beta_prime)


def beta_sb(beta_prime: float) -> float:
    """Temperature where the first bad point switches symmetric <-> broken.

    Largest real root of
        4 b^3 - 6 (1 + b') b^2 + 12 b b' - b' (3 + 3 b' - b'^2) = 0,
    solved in closed form (trigonometric / Cardano on the depressed cubic)
    and polished with Newton. beta_sb(0) = 3/2 exactly.
    """
    if beta_prime < 0:
        raise DomainError("beta_prime must be nonnegative")
    bp = float(beta_prime)
    a = 4.0
    b = -6.0 * (1.0 + bp)
    c = 12.0 * bp
    d = -bp * (3.0 + 3.0 * bp - bp * bp)

    shift = b / (3.0 * a)
    p = c / a - shift * shift * 3.0
    q = 2.0 * shift ** 3 - shift * c / a + d / a
    disc = 0.25 * q * q + p ** 3 / 27.0
    if disc <= 0:
        # three real roots; the k = 0 cosine branch is the largest
        r = math.sqrt(-p / 3.0)
        arg = 1.0 if r == 0 else max(-1.0, min(1.0, 3.0 * q / (2.0 * p * r)))
        y = 2.0 * r * math.cos(math.acos(arg) / 3.0)
    else:
        s = math.sqrt(disc)
        y = math.copysign(abs(-0.5 * q + s) ** (1 / 3), -0.5 * q + s) \
            + math.copysign(abs(-0.5 * q - s) ** (1 / 3), -0.5 * q - s)
    root = y - shift

    for _ in range(6):
        f = ((a * root + b) * root + c) * root + d
        df = (3.0 * a * root + 2.0 * b) * root + c
        if df == 0:
            break
        step = f / df
        root -= step
        if abs(step) < 1e-12 * max(1.0, abs(root)):
            break
    return root


@dataclass(frozen=True)
class Thresholds:
    """Onset horizons at one (beta, beta') point; None means not seen."""
    t0: Optional[float]     # first horizon with a nonempty bad set
    t1: Optional[float]     # first horizon with 0 in the bad set
    t_per: Optional[float]  # t0 under cooling dynamics (beta' > beta > 1)
    t_max: float

    def to_json(self) -> str:
        return dump_json({"t0": self.t0, "t1": self.t1,
                          "t_per": self.t_per, "t_max": self.t_max})


class _BadCache:
    """Memoized bad sets along the t axis at fixed (beta, beta')."""

    def __init__(self, beta, beta_prime, transport_grid, window, threads):
        self.beta = beta
        self.beta_prime = beta_prime
        self.transport_grid = transport_grid
        self.window = window
        self.threads = threads
        self._seen: dict[float, tuple] = {}

    def bad(self, t: float) -> tuple:
        key = round(float(t), 12)
        if key not in self._seen:
            params = ModelParams(beta=self.beta, beta_prime=self.beta_prime,
                                 t=float(t))
            report = classify_bad(params, transport_grid=self.transport_grid,
                                  window=self.window, measure_jumps=False,
                                  threads=self.threads)
            self._seen[key] = tuple(report.bad)
        return self._seen[key]

    def nonempty(self, t: float) -> bool:
        return len(self.bad(t)) > 0

    def zero_bad(self, t: float) -> bool:
        return any(abs(b.m) <= 1e-6 for b in self.bad(t))


def _first_flip(pred, lo: float, hi: float, tol: float) -> float:
    """Smallest argument in (lo, hi] where pred turns True, to tol."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def thresholds_numeric(beta: float, beta_prime: float, t_max: float, *,
                       scan_points: int = 16, tol: float = 1e-3,
                       transport_grid: int = 200, window=(-0.999, 0.999),
                       threads=None) -> Thresholds:
    """Locate onset horizons by bisecting bad-set emptiness in t.

    The t axis is first walked on a coarse grid to bracket the first
    horizon with a nonempty bad set (t0) and the first with the origin
    bad (t1); each bracket is then bisected to tol. Under cooling
    dynamics (beta' > beta > 1) the t0 value doubles as t_per. Scanning
    cannot see a bad window narrower than the grid pitch, so scan_points
    bounds the resolution as well as the cost.
    """
    if t_max <= 0:
        raise DomainError("t_max must be positive")
    if scan_points < 2:
        raise DomainError("scan_points must be at least 2")
    cache = _BadCache(beta, beta_prime, transport_grid, window, threads)

    ts = np.linspace(t_max / scan_points, t_max, scan_points)
    t0 = None
    prev = 0.0
    for t in ts:
        if cache.nonempty(float(t)):
            t0 = _first_flip(cache.nonempty, prev, float(t), tol)
            break
        prev = float(t)

    t1 = None
    if t0 is not None:
        if cache.zero_bad(min(t0 + tol, t_max)):
            t1 = t0
        else:
            prev = t0
            for t in ts[ts > t0]:
                if cache.zero_bad(float(t)):
                    t1 = _first_flip(cache.zero_bad, prev, float(t), tol)
                    break
                prev = float(t)

    cooling = beta_prime > beta > 1.0
    return Thresholds(t0=t0, t1=t1, t_per=t0 if cooling else None, t_max=t_max)


class RegionLabel(Enum):
    GIBBS = "Gibbs"
    NON_GIBBS_SYMMETRIC = "NonGibbsSymmetric"
    NON_GIBBS_BROKEN = "NonGibbsBroken"
    UNKNOWN = "Unknown"


def _label_bad(bad) -> RegionLabel:
    if not bad:
        return RegionLabel.GIBBS
    zero = any(abs(b.m) <= 1e-6 for b in bad)
    nonzero = any(abs(b.m) > 1e-6 for b in bad)
    if zero and not nonzero:
        return RegionLabel.NON_GIBBS_SYMMETRIC
    if nonzero and not zero:
        return RegionLabel.NON_GIBBS_BROKEN
    return RegionLabel.UNKNOWN


@dataclass(frozen=True)
class PhaseDiagram:
    """Region labels over a (1/beta, t) grid at fixed dynamical beta'.

    labels[i][j] classifies (beta_inv[j], ts[i]). boundary carries the per
    column bisected onset horizon (None where the column never leaves the
    Gibbs region); closed_form the origin fold time where it applies.
    failures lists (beta_inv, t, message) for cells whose classification
    raised; violations lists cells that return to Gibbs above an earlier
    non-Gibbs cell in the same column, which the scan reports rather than
    assuming away.
    """
    beta_prime: float
    beta_inv: tuple
    ts: tuple
    labels: tuple
    boundary: tuple
    closed_form: tuple
    failures: tuple
    violations: tuple

    def to_csv(self, path) -> None:
        meta = {"beta_prime": self.beta_prime}
        rows = [(b, t, self.labels[i][j].value)
                for i, t in enumerate(self.ts)
                for j, b in enumerate(self.beta_inv)]
        write_csv(path, ["beta_inv", "t", "label"], rows, meta=meta)

    def to_json(self) -> str:
        return dump_json({
            "beta_prime": self.beta_prime,
            "beta_inv": list(self.beta_inv),
            "ts": list(self.ts),
            "labels": [[lab.value for lab in row] for row in self.labels],
            "boundary": [[b, t] for b, t in self.boundary],
            "closed_form": [[b, t] for b, t in self.closed_form],
            "failures": list(self.failures),
            "violations": [[b, t] for b, t in self.violations],
        })


def diagram(beta_prime: float, beta_inv, ts, *, trace_boundary: bool = True,
            tol: float = 1e-3, transport_grid: int = 150,
            window=(-0.999, 0.999), threads=None) -> PhaseDiagram:
    """Classify every grid cell and trace the onset boundary per column.

    beta_inv and ts are iterables of inverse temperatures and horizons.
    Each column shares one _BadCache, so boundary bisection reuses the
    cell classifications. Deterministic: same inputs, same diagram.
    """
    beta_inv = tuple(float(b) for b in beta_inv)
    ts = tuple(float(t) for t in ts)
    if any(b <= 0 for b in beta_inv):
        raise DomainError("beta_inv entries must be positive")
    if any(t <= 0 for t in ts):
        raise DomainError("ts entries must be positive")
    if list(ts) != sorted(ts):
        raise DomainError("ts must be increasing")

    columns = []
    boundary = []
    closed = []
    failures = []
    violations = []
    for b_inv in beta_inv:
        beta = 1.0 / b_inv
        cache = _BadCache(beta, beta_prime, transport_grid, window, threads)
        col = []
        for t in ts:
            try:
                col.append(_label_bad(cache.bad(t)))
            except Exception as exc:  # keep the sweep alive, report the cell
                col.append(RegionLabel.UNKNOWN)
                failures.append((b_inv, t, f"{type(exc).__name__}: {exc}"))
        columns.append(col)

        seen_bad = None
        for t, lab in zip(ts, col):
            if lab in (RegionLabel.NON_GIBBS_SYMMETRIC,
                       RegionLabel.NON_GIBBS_BROKEN):
                seen_bad = t
            elif lab is RegionLabel.GIBBS and seen_bad is not None:
                violations.append((b_inv, t))

        t_star = None
        if trace_boundary:
            first = next((i for i, lab in enumerate(col)
                          if lab in (RegionLabel.NON_GIBBS_SYMMETRIC,
                                     RegionLabel.NON_GIBBS_BROKEN)), None)
            if first is not None:
                lo = ts[first - 1] if first else 0.0
                try:
                    t_star = _first_flip(cache.nonempty, lo, ts[first], tol)
                except Exception as exc:
                    failures.append((b_inv, ts[first],
                                     f"boundary {type(exc).__name__}: {exc}"))
        boundary.append((b_inv, t_star))

        try:
            closed.append((b_inv, t_ngs_closed(beta, beta_prime)))
        except OutOfRegime:
            closed.append((b_inv, None))

    labels = tuple(tuple(columns[j][i] for j in range(len(beta_inv)))
                   for i in range(len(ts)))
    return PhaseDiagram(beta_prime=beta_prime, beta_inv=beta_inv, ts=ts,
                        labels=labels, boundary=tuple(boundary),
                        closed_form=tuple(closed), failures=tuple(failures),
                        violations=tuple(violations))
