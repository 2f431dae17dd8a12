"""Acceptance gate: one end-to-end test per advertised guarantee.

Nine numbered criteria, each exercised at its published tolerance and
runtime budget. Every test finishes with a single "criterion N: PASS"
line (visible under pytest -s); the pytest -v report gives the same
one-line-per-criterion verdict. These tests deliberately re-derive
their reference values from closed forms or independent routes rather
than trusting the module under test.
"""

import math
import time

import numpy as np
from scipy.stats import chi2

from cwflow import (
    ModelParams,
    PhasePoint,
    beta_sb,
    classify_bad,
    drift,
    estimate_kernel,
    fold_times,
    integrate,
    kernel,
    lagrangian_value,
    optimal_momentum,
    path_cost_b0,
    sample_initial,
    shoot,
    simulate,
    static_rate_slope,
    t_ngs_closed,
    thresholds_numeric,
    transition_matrix,
    transport,
)
from cwflow.acc import acc_curve, enters_periodic_region
from cwflow.cli import main as cli_main
from cwflow.flow import BoundaryHit, closed_form_path_b0, energy, potential
from cwflow.ldp import lagrangian_reference


def test_criterion_1_transition_time_matches_closed_form():
    """First origin fold of the transported curve vs the closed-form time."""
    for beta, bp in ((1.25, 0.0), (1.4, 0.0), (1.25, 0.5)):
        tstar = t_ngs_closed(beta, bp)
        t0 = time.time()
        folds = fold_times(ModelParams(beta, bp, 1.5 * tstar), 1.5 * tstar,
                           t_grid=100, m0_grid=200)
        elapsed = time.time() - t0
        first = min(folds, key=lambda f: f.t)
        assert abs(first.m0) < 1e-9, (beta, bp, first)
        assert abs(first.t - tstar) < 1e-3, (beta, bp, first.t, tstar)
        assert elapsed < 30.0
    print("criterion 1: PASS (origin fold within 1e-3 of closed form, "
          "3 parameter points)")


def test_criterion_2_symmetry_breaking_cubic():
    t0 = time.time()
    assert abs(beta_sb(0.0) - 1.5) < 1e-10
    worst = 0.0
    for bp in np.linspace(0.0, 2.0, 41):
        b = beta_sb(bp)
        resid = (4 * b**3 - 6 * (1 + bp) * b**2 + 12 * b * bp
                 - bp * (3 + 3 * bp - bp**2))
        worst = max(worst, abs(resid))
    assert worst < 1e-10
    assert time.time() - t0 < 1.0
    print(f"criterion 2: PASS (beta_sb(0) = 3/2, cubic residual {worst:.1e})")


def test_criterion_3_shooting_matches_linear_flow_closed_forms():
    """Shooting cost and path vs the explicit formulas at beta' = 0.

    Draws are rejected when the required launch energy exceeds the
    documented sweep envelope (four times the separatrix level).
    """
    rng = np.random.default_rng(20260816)
    t0 = time.time()
    worst_cost = worst_path = 0.0
    kept = 0
    while kept < 50:
        beta = rng.uniform(0.2, 2.5)
        t = rng.uniform(0.1, 3.0)
        m0 = rng.uniform(-0.9, 0.9)
        mp = rng.uniform(-0.9, 0.9)
        ref = closed_form_path_b0(m0, mp, t)
        if ref.v(0.0) ** 2 + potential(m0, 0.0) > 14.0:
            continue
        kept += 1
        best = min(shoot(m0, mp, ModelParams(beta, 0.0, t)),
                   key=lambda r: r.action)
        worst_cost = max(worst_cost,
                         abs(best.action - path_cost_b0(m0, mp, t)))
        traj = integrate(PhasePoint(m0, best.v0), t, 0.0)
        for s in np.linspace(0.0, t, 21):
            worst_path = max(worst_path, abs(traj.state_at(s).m - ref.m(s)))
    assert worst_cost < 1e-6
    assert worst_path < 1e-7
    assert time.time() - t0 < 120.0
    print(f"criterion 3: PASS (50 random pairs, cost err {worst_cost:.1e}, "
          f"path err {worst_path:.1e})")


def test_criterion_4_memoryless_kernel_closed_form():
    # at beta' = 0 the tagged spin ignores the crowd, so any driving path
    # must give p_t(+,+) = (1 + e^{-2t}) / 2
    for t in (0.1, 0.5, 2.0):
        p = transition_matrix(lambda s: 0.3 * math.cos(s),
                              ModelParams(1.0, 0.0, t))
        half = 0.5 * (1.0 + math.exp(-2.0 * t))
        assert abs(p[0, 0] - half) < 1e-9
        assert abs(p[1, 1] - half) < 1e-9
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    params = ModelParams(1.25, 0.0, 0.45)
    ke = kernel(0.2, params)
    want = 0.5 * (1.0 + math.tanh(params.beta * ke.m0_star)
                  * math.exp(-2.0 * params.t))
    assert abs(ke.gamma_plus - want) < 1e-9
    print("criterion 4: PASS (memoryless kernel matches closed form "
          "to 1e-9)")


def test_criterion_5_region_structure():
    # (a) subcritical: no bad points at five beta <= 1 samples up to t = 10
    for beta, bp in ((0.3, 0.5), (0.6, 0.0), (0.85, 1.5), (0.95, 2.0),
                     (1.0, 0.0)):
        t0 = time.time()
        for t in (0.5, 2.0, 10.0):
            rep = classify_bad(ModelParams(beta, bp, t), transport_grid=150,
                               measure_jumps=False)
            assert len(rep.bad) == 0, f"(a) beta={beta} bp={bp} t={t}"
        assert time.time() - t0 < 600.0

    # (b) supercritical heating: exactly the origin turns bad
    t0 = time.time()
    rep = classify_bad(ModelParams(1.25, 0.0, 0.45), transport_grid=150)
    assert len(rep.bad) == 1 and abs(rep.bad[0].m) < 1e-6, "(b) bad set"
    assert rep.bad[0].kernel_jump > 0.1, "(b) kernel jump"
    assert time.time() - t0 < 600.0

    # (c) low temperature: between t0 and t1 the bad pair sits off axis
    t0 = time.time()
    th = thresholds_numeric(2.5, 0.0, 0.3, scan_points=10, tol=1e-3,
                            transport_grid=150)
    assert th.t0 is not None and th.t1 is not None, "(c) thresholds"
    assert 0.0 < th.t0 < th.t1 < 0.3, "(c) ordering"
    mid = 0.5 * (th.t0 + th.t1)
    rep = classify_bad(ModelParams(2.5, 0.0, mid), transport_grid=150,
                       measure_jumps=False)
    ms = sorted(b.m for b in rep.bad)
    assert len(ms) == 2 and ms[0] < -0.01 and ms[1] > 0.01, "(c) pair"
    assert abs(ms[0] + ms[1]) < 1e-6, "(c) mirror symmetry"
    assert time.time() - t0 < 600.0

    # (d) cooling: periodic onset is finite, bad points appear off axis,
    # and the origin is never bad
    t0 = time.time()
    th = thresholds_numeric(1 / 0.85, 1.5, 2.0, scan_points=8, tol=2e-3,
                            transport_grid=150)
    assert th.t_per is not None and 1.2 < th.t_per < 1.5, "(d) onset"
    assert time.time() - t0 < 600.0
    saw_nonzero = False
    for t in (2.0, 3.5, 6.0):
        t0 = time.time()
        rep = classify_bad(ModelParams(1 / 0.85, 1.5, t), transport_grid=150,
                           measure_jumps=False)
        assert all(abs(b.m) > 1e-6 for b in rep.bad), f"(d) origin bad, t={t}"
        saw_nonzero = saw_nonzero or any(abs(b.m) > 0.01 for b in rep.bad)
        assert time.time() - t0 < 600.0
    assert saw_nonzero, "(d) no off-axis bad points found"
    print("criterion 5: PASS (empty / origin / mirror pair / cooling "
          "structures all as advertised)")


def test_criterion_6_periodic_region_entry_iff_between_one_and_bp():
    t0 = time.time()
    rng = np.random.default_rng(33)
    for bp in (1.2, 1.5, 2.0):
        for _ in range(20):
            while True:
                beta = rng.uniform(0.2, 2.8)
                if abs(beta - 1.0) > 1e-3 and abs(beta - bp) > 1e-3:
                    break
            got = enters_periodic_region(beta, bp)
            want = 1.0 < beta < bp
            assert got == want, (beta, bp, got)
    assert time.time() - t0 < 60.0
    print("criterion 6: PASS (periodic-region entry iff 1 < beta < beta', "
          "60 sampled points)")


def test_criterion_7_invariant_suites():
    # rate density nonnegative, zero exactly on the drift
    for bp in (0.0, 0.7, 1.5):
        m = np.linspace(-0.99, 0.99, 200)
        v = np.linspace(-3.0, 3.0, 200)
        grid = lagrangian_value(m[:, None], v[None, :], bp)
        assert grid.min() > -1e-10, bp
        on_drift = lagrangian_value(m, drift(m, bp), bp)
        assert np.max(np.abs(on_drift)) < 1e-10, bp

    # energy conservation along 100 random admissible trajectories
    rng = np.random.default_rng(7)
    checked = 0
    worst_drift = 0.0
    while checked < 100:
        bp = float(rng.choice((0.0, 0.8, 1.5)))
        m0 = rng.uniform(-0.9, 0.9)
        v0 = rng.uniform(-3.0, 3.0)
        horizon = rng.uniform(0.3, 2.0)
        try:
            # one decade under the default tolerances: this suite measures
            # the discretization error itself, not the runtime drift guard
            tr = integrate((m0, v0), horizon, bp, rtol=1e-11, atol=1e-13,
                           sensitivities=False)
        except BoundaryHit:
            continue
        checked += 1
        e0 = energy(PhasePoint(m0, v0), bp)
        dev = max(abs(energy(tr.state_at(s), bp) - e0)
                  for s in np.linspace(0.0, horizon, 21))
        worst_drift = max(worst_drift, dev / horizon)
    assert worst_drift < 1e-8

    # Legendre route vs the longhand closed form
    worst_leg = 0.0
    for _ in range(200):
        bp = float(rng.choice((0.0, 0.5, 1.0, 1.8)))
        m = rng.uniform(-0.95, 0.95)
        v = rng.uniform(-3.0, 3.0)
        worst_leg = max(worst_leg, abs(lagrangian_value(m, v, bp)
                                       - lagrangian_reference(m, v, bp)))
    assert worst_leg < 1e-8

    # forward sensitivities vs central finite differences
    done = 0
    h = 1e-6
    while done < 20:
        bp = float(rng.choice((0.0, 0.8, 1.5)))
        m0 = rng.uniform(-0.8, 0.8)
        v0 = rng.uniform(-2.0, 2.0)
        t = rng.uniform(0.3, 1.5)
        try:
            jac = integrate((m0, v0), t, bp).jac_at(t)
            cols = []
            for dm, dv in ((h, 0.0), (0.0, h)):
                hi = integrate((m0 + dm, v0 + dv), t, bp,
                               sensitivities=False).state_at(t)
                lo = integrate((m0 - dm, v0 - dv), t, bp,
                               sensitivities=False).state_at(t)
                cols.append([(hi.m - lo.m) / (2 * h),
                             (hi.v - lo.v) / (2 * h)])
        except BoundaryHit:
            continue
        done += 1
        fd = np.array(cols).T
        assert np.max(np.abs(jac - fd) / (1 + np.abs(fd))) < 1e-4

    # free-end stationarity of the allowed curve
    worst_free = 0.0
    for beta, bp in ((1.25, 0.0), (1.25, 0.5), (2.5, 0.0), (1 / 0.85, 1.5)):
        params = ModelParams(beta, bp, 1.0)
        for m0 in np.linspace(-0.95, 0.95, 381):
            resid = (optimal_momentum(m0, acc_curve(m0, params), bp)
                     - static_rate_slope(m0, beta))
            worst_free = max(worst_free, abs(resid))
    assert worst_free < 1e-10

    # matched temperatures leave the allowed curve invariant under the flow
    params = ModelParams(1.3, 1.3, 1.0)
    tr = transport(params, 200)
    worst_inv = max(abs(s.end.v - acc_curve(s.end.m, params)) for s in tr)
    assert worst_inv < 1e-6
    print(f"criterion 7: PASS (energy drift {worst_drift:.1e}/unit time, "
          f"Legendre gap {worst_leg:.1e}, free-end residual "
          f"{worst_free:.1e}, curve invariance {worst_inv:.1e})")


def test_criterion_8_monte_carlo_concentration():
    t_all = time.time()
    # 200 seeded chains hug the deterministic decay
    times = np.linspace(0.0, 1.0, 51)
    target = 0.8 * np.exp(-2.0 * times)
    pr = ModelParams(1.0, 0.0, 1.0)
    ok = 0
    for seed in range(5000, 5200):
        path = simulate(5000, pr, np.random.default_rng(seed),
                        times=times, m0=0.8)
        ok += float(np.max(np.abs(path.m - target))) < 0.05
    assert ok >= 190, ok

    # matched-temperature dynamics preserve the equilibrium law
    n, beta = 200, 1.5
    pr = ModelParams(beta, beta, 0.4)
    rng = np.random.default_rng(314)
    finals = np.empty(10_000, dtype=np.int64)
    for i in range(10_000):
        path = simulate(n, pr, rng, times=[pr.t])
        finals[i] = round((path.m[-1] * n + n) / 2)
    fresh = sample_initial(n, beta, rng, size=10_000)
    lo = min(finals.min(), fresh.min())
    hi = max(finals.max(), fresh.max())
    edges = np.arange(lo, hi + 2)
    c1, _ = np.histogram(finals, bins=edges)
    c2, _ = np.histogram(fresh, bins=edges)
    keep = (c1 + c2) >= 10
    o1 = np.append(c1[keep], c1[~keep].sum())
    o2 = np.append(c2[keep], c2[~keep].sum())
    stat = np.sum((o1 - o2) ** 2 / np.maximum(o1 + o2, 1))
    pval = chi2.sf(stat, len(o1) - 1)
    assert pval > 0.01, pval

    # Wilson intervals cover the limiting kernel at a continuity point
    params = ModelParams(1.25, 0.0, 0.1)
    exact = kernel(0.58, params).gamma_plus
    hits = 0
    for rep in range(20):
        est = estimate_kernel(1000, params, 0.58, replicas=1500,
                              rng=np.random.default_rng(9000 + rep))
        hits += est.low <= exact <= est.high
    assert hits >= 18, hits
    assert time.time() - t_all < 600.0
    print(f"criterion 8: PASS (decay {ok}/200, stationarity p = {pval:.3f}, "
          f"kernel coverage {hits}/20)")


def test_criterion_9_cli_determinism(tmp_path, monkeypatch):
    """Re-running any command from its emitted config is byte-identical,
    independent of the worker-thread count."""
    cases = [
        ["lagrangian", "--beta-prime", "0.7", "--grid", "31"],
        ["bad", "--beta", "1.25", "--beta-prime", "0", "--t", "0.45",
         "--grid", "150", "--scan", "401"],
        ["mc", "--beta", "1.25", "--beta-prime", "0", "--t", "0.1",
         "--n", "300", "--m-prime", "0.58", "--replicas", "700",
         "--seed", "5"],
    ]
    for i, argv in enumerate(cases):
        stem = argv[0]
        a = tmp_path / f"a{i}"
        b = tmp_path / f"b{i}"
        a.mkdir()
        b.mkdir()
        monkeypatch.chdir(a)
        assert cli_main(argv + ["--threads", "1"]) == 0
        monkeypatch.chdir(b)
        assert cli_main([stem, "--config", str(a / f"{stem}.json"),
                         "--threads", "2"]) == 0
        for ext in (".csv", ".json"):
            assert (a / (stem + ext)).read_bytes() \
                == (b / (stem + ext)).read_bytes(), (stem, ext)
    print("criterion 9: PASS (3 commands byte-identical across "
          "thread counts)")
