"""Limiting conditional spin probabilities along optimal histories.

A single tagged spin rides the conditioned magnetization path as an
inhomogeneous two-state chain whose flip rates follow the path. Its
transition matrix over the horizon, weighted by the static bias of the
optimal starting magnetization, gives the limiting probability of the
spin's final state conditioned on the final magnetization. Where two
optimal histories tie, the kernel has no single value and only one-sided
evaluation is meaningful; the size of the two-sided mismatch is the
measured discontinuity.

Matrix convention: index 0 is spin +1, index 1 is spin -1, so
p[i, j] = p_t(sigma_i, eta_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from ._util import dump_json, parallel_map, write_csv
from .acc import TransportResult
from .cost import HistoryCandidate, NoConnection, optimal_histories
from .flow import Trajectory
from .model import DomainError, ModelParams, flip_rate


class AmbiguousMinimizer(RuntimeError):
    """Two optimal histories tie in cost: the kernel is two-valued here."""


def transition_matrix(path, params: ModelParams) -> np.ndarray:
    """Transition probabilities of the tagged spin along a path.

    path is a Trajectory (sampled via dense output) or any callable
    s -> m(s) defined on [0, params.t]. Integrates the forward equation
    dP/ds = P Q(s) from the identity with the rate matrix built from the
    flip rates at the path's magnetization, under the same tolerance
    budget as the flow integration. Rows sum to one within 1e-10.
    """
    t = params.t
    if isinstance(path, Trajectory):
        if path.horizon < t:
            raise DomainError(
                f"path covers [0, {path.horizon}], needs [0, {t}]")
        m_fn = lambda s: float(path.state_at(s).m)
    elif callable(path):
        m_fn = lambda s: float(path(s))
    else:
        raise TypeError("path must be a Trajectory or a callable s -> m")
    if t == 0:
        return np.eye(2)

    bp = params.beta_prime

    def rhs(s, y):
        m = m_fn(s)
        cp = float(flip_rate(1, m, bp))
        cm = float(flip_rate(-1, m, bp))
        p = y.reshape(2, 2)
        q = np.array([[-cp, cp], [cm, -cm]])
        return (p @ q).ravel()

    sol = solve_ivp(rhs, (0.0, t), np.eye(2).ravel(), method="RK45",
                    rtol=params.rtol, atol=params.atol)
    if not sol.success:
        raise RuntimeError(f"transition integration failed: {sol.message}")
    p = sol.y[:, -1].reshape(2, 2)
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-10:
        raise RuntimeError(f"row sums drifted: {p.sum(axis=1)}")
    return p


@dataclass(frozen=True)
class KernelEval:
    """Kernel value at one conditioning point.

    gamma_plus is the limiting probability of the tagged spin being +1
    given the final magnetization; m0_star the optimal starting
    magnetization the history launches from; p the 2x2 transition matrix
    of the tagged spin along that history.
    """

    m_end: float
    m0_star: float
    gamma_plus: float
    p: np.ndarray

    def to_json(self) -> str:
        return dump_json({
            "m_end": self.m_end,
            "m0_star": self.m0_star,
            "gamma_plus": self.gamma_plus,
            "p": [[self.p[0, 0], self.p[0, 1]],
                  [self.p[1, 0], self.p[1, 1]]],
        })


def _gamma_plus_from(m0: float, p: np.ndarray, beta: float) -> float:
    # static bias of the start point, normalized by 2 cosh(beta m0)
    w = math.exp(beta * m0)
    return (w * p[0, 0] + p[1, 0] / w) / (w + 1.0 / w)


def _eval_history(cand: HistoryCandidate, m_end: float,
                  params: ModelParams) -> KernelEval:
    p = transition_matrix(cand.trajectory, params)
    return KernelEval(m_end=float(m_end), m0_star=cand.m0,
                      gamma_plus=_gamma_plus_from(cand.m0, p, params.beta),
                      p=p)


def _candidates(m_end: float, params: ModelParams,
                transport_result: Optional[TransportResult],
                transport_grid, window) -> list:
    return optimal_histories(m_end, params, transport_result,
                             transport_grid=transport_grid, window=window)


def kernel(m_end: float, params: ModelParams, *,
           transport_result: Optional[TransportResult] = None,
           transport_grid=400, window=(-0.999, 0.999)) -> KernelEval:
    """Limiting conditional kernel at a continuity point.

    Finds the optimal history ending at m_end and propagates the tagged
    spin along it. Raises AmbiguousMinimizer when two histories tie in
    cost within the tie tolerance; use kernel_one_sided there.
    """
    cands = _candidates(m_end, params, transport_result, transport_grid,
                        window)
    best = cands[0]
    if len(cands) > 1 and cands[1].cost - best.cost <= params.cost_tie_tol:
        raise AmbiguousMinimizer(
            f"histories from m0 = {best.m0} and {cands[1].m0} tie at "
            f"m_end = {m_end}; evaluate one-sided")
    return _eval_history(best, m_end, params)


def kernel_one_sided(m_end: float, params: ModelParams, side: int, *,
                     transport_result: Optional[TransportResult] = None,
                     transport_grid=400, window=(-0.999, 0.999),
                     probe_eps: float = 1e-6) -> KernelEval:
    """Kernel limit at m_end approached from one side.

    side = +1 takes the limit from above, -1 from below. At a continuity
    point both sides agree with kernel(). At a bad point the tied
    candidates are disambiguated by whichever branch wins strictly at a
    probe point just off m_end on the requested side; the returned value
    still evaluates that branch's history ending exactly at m_end.
    """
    if side not in (-1, 1):
        raise DomainError(f"side must be -1 or +1, got {side}")
    cands = _candidates(m_end, params, transport_result, transport_grid,
                        window)
    best = cands[0]
    tied = [c for c in cands if c.cost - best.cost <= params.cost_tie_tol]
    if len(tied) == 1:
        return _eval_history(best, m_end, params)

    probe = m_end + side * probe_eps
    if not (-1 < probe < 1):
        raise DomainError(f"probe point {probe} leaves the open strip")
    winner = _candidates(probe, params, transport_result, transport_grid,
                         window)[0]
    chosen = next((c for c in tied if c.branch == winner.branch), None)
    if chosen is None:
        chosen = min(tied, key=lambda c: abs(c.m0 - winner.m0))
    return _eval_history(chosen, m_end, params)


def kernel_jump(m_bad: float, params: ModelParams, eps: float = 1e-5, *,
                transport_result: Optional[TransportResult] = None,
                transport_grid=400, window=(-0.999, 0.999)) -> float:
    """Two-sided kernel mismatch across a candidate bad point.

    Evaluates the kernel at m_bad +- eps and returns the absolute
    difference of the +1 probabilities. A genuine bad point keeps the
    jump bounded away from zero as eps shrinks; at a continuity point it
    decays linearly. Ties at the side points propagate AmbiguousMinimizer.
    """
    if eps <= 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    hi = kernel(m_bad + eps, params, transport_result=transport_result,
                transport_grid=transport_grid, window=window)
    lo = kernel(m_bad - eps, params, transport_result=transport_result,
                transport_grid=transport_grid, window=window)
    return abs(hi.gamma_plus - lo.gamma_plus)


def sweep_rows(m_primes, params: ModelParams, *,
               transport_result: Optional[TransportResult] = None,
               transport_grid=400, window=(-0.999, 0.999),
               threads=None) -> list:
    """(m_prime, gamma_plus, m0_star) over a conditioning grid.

    Bad or unreachable points come back with NaN entries so downstream
    curves show gaps instead of fabricated values.
    """
    from .acc import transport as _transport

    if transport_result is None and params.t > 0:
        transport_result = _transport(params, transport_grid, window=window)

    def one(mp: float):
        try:
            ev = kernel(float(mp), params, transport_result=transport_result,
                        transport_grid=transport_grid, window=window)
        except (AmbiguousMinimizer, NoConnection):
            return (float(mp), math.nan, math.nan)
        return (float(mp), ev.gamma_plus, ev.m0_star)

    return parallel_map(one, m_primes, threads)


def write_sweep(path, rows, params: ModelParams):
    """CSV for a kernel sweep, one row per conditioning value."""
    meta = {"beta": params.beta, "beta_prime": params.beta_prime,
            "t": params.t}
    write_csv(path, ["m_prime", "gamma_plus", "m0_star"], rows, meta=meta)
