"""Large-deviation rate densities for the magnetization path.

The density j(m, v) prices a velocity v at magnetization m. Three
mutually consistent routes are provided: the compound-jump rate
cp_rate(v, p), the Legendre route through the governing function
hamiltonian/optimal_momentum (the primary evaluation path), and the
longhand square-root/logarithm expression lagrangian_reference kept as a
cross-check oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainError, rate_denominator

MOMENTUM_CAP = 30.0  # |lambda| beyond this overflows exp(2 lambda) budgets


@dataclass(frozen=True)
class LagrangianEval:
    value: float
    momentum: float
    energy: float


def _check_open(m):
    m = np.asarray(m, dtype=float)
    if not np.all(np.abs(m) < 1):
        raise DomainError("lagrangian quantities need |m| < 1")
    return m


def jump_bias(m, beta_prime: float):
    """Probability weight p(m) of an upward jump, in (0, 1) for |m| < 1."""
    m = _check_open(m)
    e = np.exp(2 * beta_prime * m)
    out = e * (1 - m) / rate_denominator(m, beta_prime)
    return out if out.ndim else float(out)


def cp_rate(v, p):
    """Rate density of a +-2 compound jump process with up-weight p.

    J_p(v) = (v/2) ln((v + S)/(4p)) - S/2 + 1 with S = sqrt(16p(1-p) + v^2).
    Nonnegative, convex in v, zero at the mean velocity 2(2p - 1).
    """
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("cp_rate needs p strictly inside (0, 1)")
    s = np.sqrt(16 * p * (1 - p) + v * v)
    # v ln(...) -> 0 as v -> 0 since S > 0; evaluate the limit exactly
    main = np.where(v == 0, 0.0, 0.5 * v * np.log(np.where(v == 0, 1.0, (v + s) / (4 * p))))
    out = main - 0.5 * s + 1.0
    return out if out.ndim else float(out)


def hamiltonian(m, lam, beta_prime: float):
    """Generator dual of the rate density: p(e^{2 lam}-1) + (1-p)(e^{-2 lam}-1)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) > MOMENTUM_CAP):
        raise DomainError(f"momentum magnitude capped at {MOMENTUM_CAP}")
    p = jump_bias(m, beta_prime)
    out = p * np.expm1(2 * lam) + (1 - p) * np.expm1(-2 * lam)
    return out if np.ndim(out) else float(out)


def optimal_momentum(m, v, beta_prime: float):
    """Maximizer of lam*v - hamiltonian(m, lam): lam* = (1/2) ln((v + S)/(4p))."""
    v = np.asarray(v, dtype=float)
    p = jump_bias(m, beta_prime)
    s = np.sqrt(16 * p * (1 - p) + v * v)
    out = 0.5 * np.log((v + s) / (4 * p))
    return out if out.ndim else float(out)


def lagrangian(m: float, v: float, beta_prime: float) -> LagrangianEval:
    """Rate density j(m, v) with its maximizing momentum and dual energy.

    Evaluated through the Legendre route: j = lam* v - hamiltonian(m, lam*).
    """
    lam = optimal_momentum(m, v, beta_prime)
    ham = hamiltonian(m, lam, beta_prime)
    return LagrangianEval(value=float(lam * v - ham), momentum=float(lam), energy=float(ham))


def lagrangian_value(m, v, beta_prime: float):
    """Vectorized j(m, v) without the per-point record, for grids."""
    lam = optimal_momentum(m, v, beta_prime)
    p = jump_bias(m, beta_prime)
    ham = p * np.expm1(2 * lam) + (1 - p) * np.expm1(-2 * lam)
    out = lam * np.asarray(v, dtype=float) - ham
    return out if np.ndim(out) else float(out)


def lagrangian_reference(m: float, v: float, beta_prime: float) -> float:
    """Longhand closed form of j(m, v), transcribed verbatim as an oracle.

    Kept separate from the Legendre route on purpose: the two must agree,
    and the agreement is a test, not a runtime branch. Cancellation-prone
    near v = 0; uses the exact v -> 0 limit for the v ln(...) terms.
    """
    m = float(m)
    v = float(v)
    if abs(m) >= 1:
        raise DomainError("lagrangian_reference needs |m| < 1")
    e2 = np.exp(2 * beta_prime * m)
    e4 = np.exp(4 * beta_prime * m)
    z = (e4 * (-1 + m) ** 2 * v**2 + (1 + m) ** 2 * v**2
         - 2 * e2 * (-1 + m**2) * (8 + v**2)) / (1 - e2 * (-1 + m) + m) ** 2
    sz = np.sqrt(z)
    if v == 0:
        logs = 0.0
    else:
        logs = v * np.log(np.exp(-2 * beta_prime * m) * (-1 + e2 * (-1 + m) - m)
                          / (4 * (-1 + m))) + v * np.log(v + sz)
    return float(0.5 * (2 - sz + logs))
