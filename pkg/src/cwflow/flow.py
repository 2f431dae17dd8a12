"""Euler-Lagrange phase flow of the optimal-history problem.

Second-order dynamics m'' = f(m) on the open strip |m| < 1, with the
conserved generalized energy C = v^2 + W(m), the C = 4 separatrix, an
adaptive integrator carrying variational (sensitivity) equations and the
accumulated action, and the closed-form linear flow of the
infinite-temperature dynamics as an oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import DomainError, rate_denominator
from . import ldp


class BoundaryHit(RuntimeError):
    """Trajectory reached |m| = 1 - strip_margin before the horizon."""

    def __init__(self, s_exit: float, start, trajectory=None, message: str = ""):
        self.s_exit = s_exit
        self.start = start
        self.trajectory = trajectory  # partial path on [0, s_exit], if available
        super().__init__(message or f"trajectory left the strip at s = {s_exit:.6g}")


class StepUnderflow(RuntimeError):
    """Integrator step size collapsed below machine resolution."""


class EnergyDriftError(RuntimeError):
    """First-integral drift exceeded tolerance even after a tighter retry."""


@dataclass(frozen=True)
class PhasePoint:
    m: float
    v: float


def _as_point(p) -> PhasePoint:
    if isinstance(p, PhasePoint):
        return p
    m, v = p
    return PhasePoint(float(m), float(v))


def acceleration(m, beta_prime: float):
    """Right side f(m) of m'' = f(m).

    f(m) = 16 e^{2 b' m} B(m) G(m) / D(m)^3 with B = (1+m) - e^{2 b' m}(1-m),
    G = 1 + (m^2 - 1) b', D = (1+m) + e^{2 b' m}(1-m).
    """
    m = np.asarray(m, dtype=float)
    e = np.exp(2 * beta_prime * m)
    b = (1 + m) - e * (1 - m)
    g = 1 + (m * m - 1) * beta_prime
    d = (1 + m) + e * (1 - m)
    out = 16 * e * b * g / d**3
    return out if out.ndim else float(out)


def acceleration_slope(m, beta_prime: float):
    """Analytic f'(m); drives the variational equations.

    Product/quotient rule on f = A B G / D^3 with A = 16 e^{2 b' m}:
    f' = A(2b' B G + B' G + B G')/D^3 - 3 A B G D'/D^4.
    """
    m = np.asarray(m, dtype=float)
    bp = beta_prime
    e = np.exp(2 * bp * m)
    a = 16 * e
    b = (1 + m) - e * (1 - m)
    g = 1 + (m * m - 1) * bp
    d = (1 + m) + e * (1 - m)
    b1 = 1 - 2 * bp * e * (1 - m) + e
    g1 = 2 * m * bp
    d1 = 1 + 2 * bp * e * (1 - m) - e
    out = a * (2 * bp * b * g + b1 * g + b * g1) / d**3 - 3 * a * b * g * d1 / d**4
    return out if out.ndim else float(out)


def el_field(p, beta_prime: float):
    """Phase-space vector field (dm/ds, dv/ds) at a point."""
    p = _as_point(p)
    if abs(p.m) >= 1:
        raise DomainError("el_field needs |m| < 1")
    return p.v, acceleration(p.m, beta_prime)


def potential(m, beta_prime: float):
    """W(m) = 16 e^{2 b' m}(1 - m^2)/D^2; the energy is v^2 + W(m).

    W <= 4 on the strip with equality exactly at the mean-field roots of
    beta_prime, so fixed points of the flow sit on the C = 4 level.
    """
    m = np.asarray(m, dtype=float)
    e = np.exp(2 * beta_prime * m)
    d = rate_denominator(m, beta_prime)
    out = 16 * e * (1 - m * m) / (d * d)
    return out if out.ndim else float(out)


def energy(p, beta_prime: float):
    """Conserved generalized energy C = v^2 + W(m) of the flow."""
    p = _as_point(p)
    if abs(p.m) >= 1:
        raise DomainError("energy needs |m| < 1")
    return p.v * p.v + potential(p.m, beta_prime)


def energy_reference(p, beta_prime: float):
    """Quotient form of the energy, kept verbatim as a consistency oracle."""
    p = _as_point(p)
    m, v = p.m, p.v
    e2 = math.exp(2 * beta_prime * m)
    e4 = math.exp(4 * beta_prime * m)
    d = rate_denominator(m, beta_prime)
    return (e4 * (1 - m) ** 2 * v**2 + (1 + m) ** 2 * v**2
            + 2 * e2 * (1 - m * m) * (8 + v**2)) / (d * d)


def separatrix(m, branch, beta_prime: float):
    """Velocity of the C = 4 level curve: +-2 B(m)/D(m).

    branch is '+'/'-' or +1/-1. The '-' branch coincides with the typical
    drift; the '+' branch passes through every mean-field fixed point.
    """
    sign = {"+": 1.0, "-": -1.0, 1: 1.0, -1: -1.0}.get(branch)
    if sign is None:
        raise DomainError(f"branch must be '+' or '-', got {branch!r}")
    m = np.asarray(m, dtype=float)
    if not np.all(np.abs(m) <= 1):
        raise DomainError("separatrix needs |m| <= 1")
    e = np.exp(2 * beta_prime * m)
    b = (1 + m) - e * (1 - m)
    out = sign * 2 * b / rate_denominator(m, beta_prime)
    return out if out.ndim else float(out)


# scalar closures for the integrator hot path (same formulas as above)

def _f_scalar(m: float, bp: float) -> float:
    e = math.exp(2 * bp * m)
    d = (1 + m) + e * (1 - m)
    return 16 * e * ((1 + m) - e * (1 - m)) * (1 + (m * m - 1) * bp) / (d * d * d)


def _fp_scalar(m: float, bp: float) -> float:
    e = math.exp(2 * bp * m)
    a = 16 * e
    b = (1 + m) - e * (1 - m)
    g = 1 + (m * m - 1) * bp
    d = (1 + m) + e * (1 - m)
    b1 = 1 - 2 * bp * e * (1 - m) + e
    g1 = 2 * m * bp
    d1 = 1 + 2 * bp * e * (1 - m) - e
    return a * (2 * bp * b * g + b1 * g + b * g1) / d**3 - 3 * a * b * g * d1 / d**4


_CLAMP = 1 - 1e-15


def _j_scalar(m: float, v: float, bp: float) -> float:
    # Runge-Kutta stages may probe slightly past the strip before the
    # boundary event is located; clamp only this evaluation, never the state.
    if m > _CLAMP:
        m = _CLAMP
    elif m < -_CLAMP:
        m = -_CLAMP
    e = math.exp(2 * bp * m)
    d = (1 + m) + e * (1 - m)
    p = e * (1 - m) / d
    s = math.sqrt(16 * p * (1 - p) + v * v)
    lam = 0.5 * math.log((v + s) / (4 * p))
    return lam * v - (p * math.expm1(2 * lam) + (1 - p) * math.expm1(-2 * lam))


class Trajectory:
    """Integrated phase path with sensitivities, action, and dense output.

    Sample arrays live on the integrator's own accepted steps; arbitrary
    times inside [0, horizon] are served by the continuous extension.
    """

    def __init__(self, times, states, jacs, action, beta_prime, energy0, sol):
        self.times = times
        self.states = states          # (n, 2) columns m, v
        self.jacs = jacs              # (n, 2, 2) flow Jacobians, or None
        self.action = action          # (n,) accumulated cost, or None
        self.beta_prime = beta_prime
        self.energy0 = energy0
        self._sol = sol

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def state_at(self, s) -> PhasePoint:
        if self._sol is None:
            return PhasePoint(float(self.states[0, 0]), float(self.states[0, 1]))
        y = self._sol(s)
        return PhasePoint(float(y[0]), float(y[1]))

    def jac_at(self, s) -> np.ndarray:
        if self.jacs is None:
            raise ValueError("trajectory was integrated without sensitivities")
        if self._sol is None:
            return np.eye(2)
        y = self._sol(s)
        return np.array([[y[2], y[3]], [y[4], y[5]]])

    def states_at(self, ts) -> np.ndarray:
        """Vectorized state sampling; returns shape (len(ts), 2)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self._sol is None:
            return np.repeat(self.states[:1], len(ts), axis=0)
        return self._sol(ts)[:2].T

    def jacs_at(self, ts) -> np.ndarray:
        """Vectorized Jacobian sampling; returns shape (len(ts), 2, 2)."""
        if self.jacs is None:
            raise ValueError("trajectory was integrated without sensitivities")
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self._sol is None:
            return np.repeat(np.eye(2)[None], len(ts), axis=0)
        y = self._sol(ts)
        return np.stack([y[2], y[3], y[4], y[5]], axis=1).reshape(-1, 2, 2)

    def action_at(self, s) -> float:
        if self.action is None:
            raise ValueError("trajectory was integrated without the action")
        if self._sol is None:
            return 0.0
        return float(self._sol(s)[-1])

    def energies(self) -> np.ndarray:
        w = potential(self.states[:, 0], self.beta_prime)
        return self.states[:, 1] ** 2 + w

    def to_csv(self, path):
        rows = self._table()
        header = "s,m,v,J11,J12,J21,J22,action,energy"
        np.savetxt(path, rows, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    def to_json(self, path=None):
        rows = self._table()
        doc = {
            "beta_prime": self.beta_prime,
            "energy0": self.energy0,
            "columns": ["s", "m", "v", "J11", "J12", "J21", "J22", "action", "energy"],
            "rows": rows.tolist(),
        }
        if path is None:
            return doc
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
        return doc

    def _table(self) -> np.ndarray:
        n = len(self.times)
        jac = self.jacs.reshape(n, 4) if self.jacs is not None else np.full((n, 4), np.nan)
        act = self.action if self.action is not None else np.full(n, np.nan)
        return np.column_stack([self.times, self.states, jac, act, self.energies()])


def _trivial_trajectory(start: PhasePoint, beta_prime: float, sensitivities, action):
    times = np.array([0.0])
    states = np.array([[start.m, start.v]])
    jacs = np.eye(2)[None, :, :] if sensitivities else None
    act = np.array([0.0]) if action else None
    e0 = energy(start, beta_prime)
    return Trajectory(times, states, jacs, act, beta_prime, e0, None)


def integrate(start, horizon: float, beta_prime: float, *,
              rtol: float = 1e-10, atol: float = 1e-12,
              energy_tol: float = 1e-8, strip_margin: float = 1e-9,
              sensitivities: bool = True, action: bool = True,
              _retry: int = 0) -> Trajectory:
    """Integrate the EL flow from a phase point for the given horizon.

    Dormand-Prince 5(4) pair with dense output. The state is augmented
    with the 2x2 flow Jacobian (via the analytic f') and the running
    action integral, all under one tolerance budget. Exits the admissible
    strip raise BoundaryHit; the first integral is monitored afterwards
    and the run is retried once at 100x tighter tolerance on drift.
    """
    start = _as_point(start)
    if abs(start.m) > 1 - strip_margin:
        raise DomainError(f"start magnetization {start.m} outside the admissible strip")
    if horizon < 0:
        raise DomainError("horizon must be >= 0")
    if horizon == 0:
        return _trivial_trajectory(start, beta_prime, sensitivities, action)

    bp = beta_prime
    if sensitivities and action:
        y0 = [start.m, start.v, 1.0, 0.0, 0.0, 1.0, 0.0]

        def rhs(s, y):
            m, v = y[0], y[1]
            fp = _fp_scalar(m, bp)
            return (v, _f_scalar(m, bp), y[4], y[5], fp * y[2], fp * y[3],
                    _j_scalar(m, v, bp))
    elif sensitivities:
        y0 = [start.m, start.v, 1.0, 0.0, 0.0, 1.0]

        def rhs(s, y):
            m = y[0]
            fp = _fp_scalar(m, bp)
            return (y[1], _f_scalar(m, bp), y[4], y[5], fp * y[2], fp * y[3])
    elif action:
        y0 = [start.m, start.v, 0.0]

        def rhs(s, y):
            m, v = y[0], y[1]
            return (v, _f_scalar(m, bp), _j_scalar(m, v, bp))
    else:
        y0 = [start.m, start.v]

        def rhs(s, y):
            return (y[1], _f_scalar(y[0], bp))

    edge = 1 - strip_margin

    def hit_hi(s, y):
        return y[0] - edge

    def hit_lo(s, y):
        return y[0] + edge

    hit_hi.terminal = True
    hit_lo.terminal = True

    sol = solve_ivp(rhs, (0.0, horizon), y0, method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, events=(hit_hi, hit_lo))
    if sol.status == -1:
        raise StepUnderflow(sol.message)

    times = sol.t
    states = sol.y[:2].T.copy()
    jacs = None
    if sensitivities:
        jacs = np.stack([sol.y[2], sol.y[3], sol.y[4], sol.y[5]], axis=1).reshape(-1, 2, 2)
    act = sol.y[-1].copy() if action else None

    e0 = energy(start, beta_prime)
    traj = Trajectory(times, states, jacs, act, beta_prime, e0, sol.sol)
    drift_max = float(np.max(np.abs(traj.energies() - e0)))
    if drift_max > energy_tol * (1 + abs(e0)):
        if _retry >= 1:
            raise EnergyDriftError(
                f"energy drift {drift_max:.3e} above tolerance after retry")
        return integrate(start, horizon, beta_prime, rtol=rtol / 100,
                         atol=atol / 100, energy_tol=energy_tol,
                         strip_margin=strip_margin, sensitivities=sensitivities,
                         action=action, _retry=_retry + 1)
    if sol.status == 1:
        s_exit = min(float(ev[0]) for ev in sol.t_events if len(ev))
        raise BoundaryHit(s_exit, start, trajectory=traj)
    return traj


@dataclass(frozen=True)
class LinearFlowPath:
    """Two-point path of the infinite-temperature flow m'' = 4m.

    m(s) = c1 e^{-2s} + c2 e^{2s}; the coefficients are fixed by the
    endpoint pair. Exact for beta_prime = 0, where the EL field is linear.
    """

    m_start: float
    m_end: float
    t: float
    c1: float
    c2: float

    def m(self, s):
        s = np.asarray(s, dtype=float)
        out = self.c1 * np.exp(-2 * s) + self.c2 * np.exp(2 * s)
        return out if out.ndim else float(out)

    def v(self, s):
        s = np.asarray(s, dtype=float)
        out = -2 * self.c1 * np.exp(-2 * s) + 2 * self.c2 * np.exp(2 * s)
        return out if out.ndim else float(out)

    def __call__(self, s):
        return self.m(s)


def closed_form_path_b0(m_start: float, m_end: float, t: float) -> LinearFlowPath:
    """Connecting path of the linear flow between fixed endpoints in time t."""
    if t == 0:
        if m_start != m_end:
            raise DomainError("zero-horizon path needs equal endpoints")
        return LinearFlowPath(m_start, m_end, 0.0, m_start, 0.0)
    if t < 0:
        raise DomainError("t must be >= 0")
    e2t = math.exp(2 * t)
    em2t = math.exp(-2 * t)
    den = e2t - em2t
    c1 = (m_start * e2t - m_end) / den
    c2 = (m_end - m_start * em2t) / den
    return LinearFlowPath(float(m_start), float(m_end), float(t), c1, c2)
