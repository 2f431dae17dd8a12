"""Core model quantities: flip rates, static rate function, mean-field roots, drift.

Everything here is a pure function of its arguments. Scalar inputs give
scalar outputs; numpy arrays broadcast elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy


class DomainError(ValueError):
    """Argument outside the admissible magnetization range or parameter domain."""


@dataclass(frozen=True)
class ModelParams:
    """Inverse initial temperature, inverse dynamical temperature, horizon.

    Numerical knobs ride along so that every downstream routine sees one
    consistent tolerance budget.
    """

    beta: float
    beta_prime: float
    t: float
    rtol: float = 1e-10
    atol: float = 1e-12
    energy_tol: float = 1e-8
    strip_margin: float = 1e-9  # admissible strip is |m| <= 1 - strip_margin
    cost_tie_tol: float = 1e-7  # two costs within this are treated as tied

    def __post_init__(self):
        if not (self.beta > 0):
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if not (self.beta_prime >= 0):
            raise DomainError(f"beta_prime must be >= 0, got {self.beta_prime}")
        if not (self.t >= 0):
            raise DomainError(f"t must be >= 0, got {self.t}")

    def with_t(self, t: float) -> "ModelParams":
        return ModelParams(self.beta, self.beta_prime, t, self.rtol, self.atol,
                           self.energy_tol, self.strip_margin, self.cost_tie_tol)


def _check_m(m, closed: bool = True):
    m = np.asarray(m, dtype=float)
    limit_ok = np.abs(m) <= 1 if closed else np.abs(m) < 1
    if not np.all(limit_ok):
        raise DomainError(f"magnetization out of range: {m[~limit_ok] if m.ndim else m}")
    return m


def rate_denominator(m, beta_prime: float):
    """D(m) = (1+m) + e^{2 beta' m}(1-m), strictly positive on [-1, 1]."""
    m = np.asarray(m, dtype=float)
    return (1 + m) + np.exp(2 * beta_prime * m) * (1 - m)


def flip_rate(sigma: int, m, beta_prime: float):
    """Rate for a spin in state sigma to flip, given surrounding magnetization m.

    Exponential form of e^{-sigma beta' m} / (cosh(beta' m) - m sinh(beta' m)):
    c(+1, m) = 2 / D(m) and c(-1, m) = 2 e^{2 beta' m} / D(m). The two forms
    agree to machine precision; the exponential one avoids hyperbolic
    cancellation near m = +-1.
    """
    if sigma not in (-1, 1):
        raise DomainError(f"sigma must be -1 or +1, got {sigma}")
    m = _check_m(m, closed=True)
    d = rate_denominator(m, beta_prime)
    if sigma == 1:
        out = 2.0 / d
    else:
        out = 2.0 * np.exp(2 * beta_prime * m) / d
    return out if out.ndim else float(out)


def quadratic_energy(m, beta: float):
    """Mean-field energy density -beta m^2 / 2."""
    m = _check_m(m, closed=True)
    out = -0.5 * beta * m * m
    return out if out.ndim else float(out)


def bernoulli_rate(m):
    """Rate function of the symmetric +-1 coin: ((1+m)/2)ln(1+m) + ((1-m)/2)ln(1-m).

    Extends continuously to m = +-1 via the 0 ln 0 = 0 convention.
    """
    m = _check_m(m, closed=True)
    out = 0.5 * (xlogy(1 + m, 1 + m) + xlogy(1 - m, 1 - m))
    return out if out.ndim else float(out)


def static_rate(m, beta: float):
    """Endpoint punishment H(m) + I(m) charged to the initial magnetization."""
    m = _check_m(m, closed=True)
    out = quadratic_energy(m, beta) + bernoulli_rate(m)
    return out if np.ndim(out) else float(out)


def static_rate_slope(m, beta: float):
    """d/dm of static_rate: -beta m + artanh(m). Defined on the open interval."""
    m = _check_m(m, closed=False)
    out = -beta * m + np.arctanh(m)
    return out if out.ndim else float(out)


def mean_field_roots(beta: float) -> list[float]:
    """Nonnegative solutions of m = tanh(beta m), ascending.

    Returns [0.0] for beta <= 1 and [0.0, m*] for beta > 1, with m* found by
    bisection to absolute tolerance 1e-12. beta = inf is the flagged
    zero-temperature limit where the positive root is pinned to 1.
    """
    if not beta >= 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if math.isinf(beta):
        return [0.0, 1.0]
    if beta <= 1:
        return [0.0]

    def h(m):
        return math.tanh(beta * m) - m

    lo = None
    for cand in (1e-3, 1e-6, 1e-9, 1e-12):
        if h(cand) > 0:
            lo = cand
            break
    if lo is None:  # beta barely above 1, root below representable bracket
        return [0.0]
    hi = 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    # Newton polish: the root seeds saddle-point trajectories downstream,
    # where any residual is amplified exponentially in time
    for _ in range(3):
        th = math.tanh(beta * root)
        slope = beta * (1 - th * th) - 1
        if slope == 0:
            break
        root -= (th - root) / slope
    return [0.0, root]


def drift(m, beta_prime: float):
    """Zero-cost (typical) velocity of the magnetization.

    Exponential form 2(e^{2 beta' m}(1-m) - (1+m)) / D(m); identical to the
    hyperbolic quotient 2(sinh - m cosh)/(cosh - m sinh).
    """
    m = _check_m(m, closed=True)
    e = np.exp(2 * beta_prime * m)
    out = 2 * (e * (1 - m) - (1 + m)) / rate_denominator(m, beta_prime)
    return out if out.ndim else float(out)
