"""Finite-size stochastic verification of the limit predictions.

Three layers: exact sampling of the equilibrium magnetization count,
event-driven (Gillespie) simulation of the induced magnetization chain,
and a conditioned estimator of the tagged-spin kernel from the pair
process (tagged spin, plus-count of the rest). All randomness flows
through numpy Generators; an integer seed makes every event sequence
reproducible, and replica streams are spawned from the master seed so
results do not depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._util import dump_json, parallel_map, write_csv
from .model import DomainError, ModelParams, flip_rate


class InsufficientAcceptance(RuntimeError):
    """Conditioning window captured too few paths for a stable estimate."""


MIN_ACCEPTED = 200


@dataclass(frozen=True)
class ChainState:
    """Pair-process state: tagged spin and plus-count of the remaining sites.

    k counts the +1 spins among sites 2..n, so the magnetization of the
    rest is m_hat = (2k - (n-1)) / (n-1).
    """

    n: int
    k: int
    sigma1: int
    time: float

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if not 0 <= self.k <= self.n - 1:
            raise DomainError(f"k must lie in 0..{self.n - 1}, got {self.k}")
        if self.sigma1 not in (-1, 1):
            raise DomainError(f"sigma1 must be -1 or +1, got {self.sigma1}")
        if self.time < 0:
            raise DomainError(f"time must be >= 0, got {self.time}")

    @property
    def m_hat(self) -> float:
        return (2 * self.k - (self.n - 1)) / (self.n - 1)


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise DomainError(f"system size must be an integer >= 2, got {n}")
    return int(n)


def initial_law(n, beta: float) -> np.ndarray:
    """Exact distribution of the plus-count k under the equilibrium measure.

    P(k) is proportional to C(n, k) exp((beta/2n)(2k - n)^2); binomial
    weights enter through log-gamma so any n is safe from overflow.
    """
    n = _check_n(n)
    if not beta >= 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    k = np.arange(n + 1, dtype=float)
    lw = -gammaln(k + 1) - gammaln(n - k + 1)
    lw += (beta / (2 * n)) * (2 * k - n) ** 2
    lw -= lw.max()
    w = np.exp(lw)
    return w / w.sum()


def sample_initial(n, beta: float, rng=None, size=None):
    """Draw plus-counts k from the equilibrium measure, exactly.

    Categorical sampling over {0..n}; deterministic given an integer
    seed. size=None returns a single int, otherwise an int array.
    """
    rng = np.random.default_rng(rng)
    p = initial_law(n, beta)
    out = rng.choice(len(p), p=p, size=size)
    return int(out) if size is None else out


def sample_pair_initial(n, beta: float, rng=None) -> ChainState:
    """Equilibrium draw of (sigma1, k) via exchangeability.

    Samples the total plus-count, then assigns the tagged spin +1 with
    probability (total)/n and removes it from the count of the rest.
    """
    rng = np.random.default_rng(rng)
    total = sample_initial(n, beta, rng)
    plus = rng.random() < total / n
    return ChainState(n=n, k=total - 1 if plus else total,
                      sigma1=1 if plus else -1, time=0.0)


def _chain_tables(n, beta_prime):
    # up-rate vanishes at k = n and down-rate at k = 0; the flipping spin
    # is excluded from its own field, hence the +-1/n shifts
    k = np.arange(n + 1, dtype=float)
    up = np.zeros(n + 1)
    up[:-1] = (n - k[:-1]) * flip_rate(-1, (2 * k[:-1] - n + 1) / n, beta_prime)
    dn = np.zeros(n + 1)
    dn[1:] = k[1:] * flip_rate(1, (2 * k[1:] - n - 1) / n, beta_prime)
    lam = up + dn
    return lam, up / lam


def _gillespie_chain(k: int, lam, p_up, t_end: float, times, rng):
    """Jump chain over plus-counts; returns counts at the sample times.

    A sample time reads the state left by the last event at or before
    it. Also accumulates the integral of the total rate along the path,
    the compensator of the event count.
    """
    draw_wait = rng.exponential
    draw_u = rng.random
    rec = np.empty(len(times), dtype=np.int64)
    idx, n_rec = 0, len(times)
    time = 0.0
    events = 0
    rate_int = 0.0
    while True:
        rate = lam[k]
        nxt = time + draw_wait() / rate
        while idx < n_rec and times[idx] < nxt:
            rec[idx] = k
            idx += 1
        if nxt >= t_end:
            rate_int += rate * (t_end - time)
            break
        rate_int += rate * (nxt - time)
        time = nxt
        k += 1 if draw_u() < p_up[k] else -1
        events += 1
    while idx < n_rec:
        rec[idx] = k
        idx += 1
    return rec, events, rate_int, k


@dataclass(frozen=True)
class SimPath:
    """Recorded magnetization path of one finite-size run."""

    times: np.ndarray
    m: np.ndarray
    n: int
    params: ModelParams
    k0: int
    events: int
    rate_integral: float
    seed: int | None = None

    def to_csv(self, path):
        meta = {
            "n": self.n,
            "beta": self.params.beta,
            "beta_prime": self.params.beta_prime,
            "t": self.params.t,
            "k0": self.k0,
            "events": self.events,
            "rate_integral": self.rate_integral,
            "seed": self.seed,
        }
        rows = list(zip(self.times.tolist(), self.m.tolist()))
        write_csv(path, ["time", "m"], rows, meta=meta)


def simulate(n, params: ModelParams, rng=None, times=None, *,
             m0=None, k0=None) -> SimPath:
    """Exact event-driven run of the magnetization chain to the horizon.

    The initial count is k0 if given, else the nearest count to m0, else
    an equilibrium draw at params.beta. Dynamics run at params.beta_prime.
    times (default: 101 uniform points) must be sorted inside [0, t].
    """
    n = _check_n(n)
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)

    if times is None:
        times = np.linspace(0.0, params.t, 101)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise DomainError("times must be a nonempty 1-d array")
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be sorted ascending")
    if times[0] < 0 or times[-1] > params.t * (1 + 1e-12) + 1e-12:
        raise DomainError(f"times must lie inside [0, {params.t}]")

    if m0 is not None and k0 is not None:
        raise DomainError("give either m0 or k0, not both")
    if k0 is None:
        if m0 is not None:
            if not -1 <= m0 <= 1:
                raise DomainError(f"m0 out of range: {m0}")
            k0 = int(round(n * (1 + m0) / 2))
        else:
            k0 = sample_initial(n, params.beta, rng)
    k0 = int(k0)
    if not 0 <= k0 <= n:
        raise DomainError(f"k0 must lie in 0..{n}, got {k0}")

    lam, p_up = _chain_tables(n, params.beta_prime)
    rec, events, rate_int, _ = _gillespie_chain(
        k0, lam, p_up, params.t, times, rng)
    return SimPath(times=times, m=(2 * rec - n) / n, n=n, params=params,
                   k0=k0, events=events, rate_integral=rate_int, seed=seed)


def _pair_tables(n, beta_prime):
    # row 0: sigma1 = -1, row 1: sigma1 = +1; column k = 0..n-1
    ks = np.arange(n, dtype=float)
    rest = 2 * ks - (n - 1)
    lam = np.empty((2, n))
    cut_tag = np.empty((2, n))
    cut_up = np.empty((2, n))
    for row, sig in ((0, -1), (1, 1)):
        tag = np.asarray(flip_rate(sig, rest / n, beta_prime))
        up = np.zeros(n)
        up[:-1] = (n - 1 - ks[:-1]) * flip_rate(-1, (sig + rest[:-1] + 1) / n,
                                                beta_prime)
        dn = np.zeros(n)
        dn[1:] = ks[1:] * flip_rate(1, (sig + rest[1:] - 1) / n, beta_prime)
        tot = tag + up + dn
        lam[row] = tot
        cut_tag[row] = tag / tot
        cut_up[row] = (tag + up) / tot
    return lam, cut_tag, cut_up


def _gillespie_pair(row: int, k: int, t_end: float, lam, cut_tag, cut_up, rng):
    draw_wait = rng.exponential
    draw_u = rng.random
    time = 0.0
    while True:
        time += draw_wait() / lam[row, k]
        if time >= t_end:
            return row, k
        u = draw_u()
        if u < cut_tag[row, k]:
            row = 1 - row
        elif u < cut_up[row, k]:
            k += 1
        else:
            k -= 1


def _wilson(successes: int, trials: int, z: float = 1.959963984540054):
    ph = successes / trials
    denom = 1 + z * z / trials
    center = (ph + z * z / (2 * trials)) / denom
    half = z * math.sqrt(ph * (1 - ph) / trials
                         + z * z / (4 * trials * trials)) / denom
    return center - half, center + half


@dataclass(frozen=True)
class KernelEstimate:
    """Conditioned tagged-spin estimate with a 95% Wilson interval."""

    estimate: float
    low: float
    high: float
    plus: int
    accepted: int
    replicas: int
    n: int
    m_prime: float
    window: float
    params: ModelParams
    seed: int | None = None

    def to_json(self) -> str:
        return dump_json({
            "estimate": self.estimate,
            "low": self.low,
            "high": self.high,
            "plus": self.plus,
            "accepted": self.accepted,
            "replicas": self.replicas,
            "n": self.n,
            "m_prime": self.m_prime,
            "window": self.window,
            "beta": self.params.beta,
            "beta_prime": self.params.beta_prime,
            "t": self.params.t,
            "seed": self.seed,
        })


def _child_rngs(rng, count: int):
    if isinstance(rng, np.random.Generator):
        return rng.spawn(count)
    seq = rng if isinstance(rng, np.random.SeedSequence) \
        else np.random.SeedSequence(rng)
    return [np.random.default_rng(s) for s in seq.spawn(count)]


def estimate_kernel(n, params: ModelParams, m_prime: float, window=None,
                    replicas: int = 4000, rng=None, *,
                    threads=None) -> KernelEstimate:
    """Estimate the probability the tagged spin ends up at +1 near m_prime.

    Each replica draws (sigma1, k) from equilibrium at params.beta, runs
    the pair process at params.beta_prime to the horizon with exact
    self-excluded fields, and is accepted when the final rest
    magnetization lands within the window of m_prime (default 2/sqrt(n),
    the natural fluctuation scale). The estimate is the accepted
    fraction of sigma1 = +1. Replica streams are spawned from the master
    seed and merged by index, so the result is identical for any thread
    count.

    Raises InsufficientAcceptance when fewer than 200 paths land in the
    window; near atypical m_prime the acceptance probability decays
    exponentially and plain rejection is the wrong tool.
    """
    n = _check_n(n)
    if not -1 <= m_prime <= 1:
        raise DomainError(f"m_prime out of range: {m_prime}")
    if window is None:
        window = 2 / math.sqrt(n)
    if not window > 0:
        raise DomainError(f"window must be > 0, got {window}")
    if replicas < 1:
        raise DomainError(f"replicas must be >= 1, got {replicas}")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None

    p_init = initial_law(n, params.beta)
    lam, cut_tag, cut_up = _pair_tables(n, params.beta_prime)
    t_end = params.t
    children = _child_rngs(rng, replicas)

    def one(g):
        total = int(g.choice(n + 1, p=p_init))
        plus = g.random() < total / n
        row = 1 if plus else 0
        k = total - 1 if plus else total
        row, k = _gillespie_pair(row, k, t_end, lam, cut_tag, cut_up, g)
        m_hat = (2 * k - (n - 1)) / (n - 1)
        if abs(m_hat - m_prime) <= window:
            return row
        return -1

    outcomes = parallel_map(one, children, threads)
    accepted = sum(1 for o in outcomes if o >= 0)
    if accepted < MIN_ACCEPTED:
        raise InsufficientAcceptance(
            f"window {window:.4g} around m' = {m_prime} captured {accepted} "
            f"of {replicas} paths (need >= {MIN_ACCEPTED}); widen the window "
            f"or move m' toward the typical path")
    plus = sum(1 for o in outcomes if o == 1)
    low, high = _wilson(plus, accepted)
    return KernelEstimate(estimate=plus / accepted, low=low, high=high,
                          plus=plus, accepted=accepted, replicas=replicas,
                          n=n, m_prime=float(m_prime), window=float(window),
                          params=params, seed=seed)
