import json
import math

import numpy as np
import pytest

from cwflow.model import DomainError
from cwflow import phase
from cwflow.phase import RegionLabel

# onset of the symmetric bad point, axis fold values frozen against the
# transported-curve detector in the acc tests
T_FOLD_125_0 = 0.40235947810852509365
T_FOLD_125_05 = 0.5493061443340548457
# first off-axis fold at beta=2.5, beta'=0, from the 2D fold search
T0_BROKEN = 0.04908961288719256
M0_BROKEN = 0.5969409170798006
# horizon where the migrating bad pair at beta=2.5 merges into the origin;
# this precedes the axis fold ln(5/3)/4 = 0.1277 because deep in the broken
# phase the tie at 0 is between the two well branches, not a central fold
T1_BROKEN = 0.0886
# first fold under cooling at beta=1/0.85, beta'=1.5
T_PER_COOL = 1.3509001898461421


def test_t_ngs_closed_frozen_values():
    assert phase.t_ngs_closed(1.25, 0.0) == pytest.approx(T_FOLD_125_0, rel=1e-14)
    assert phase.t_ngs_closed(2.0, 0.0) == pytest.approx(math.log(2) / 4, rel=1e-14)
    assert phase.t_ngs_closed(1.25, 0.5) == pytest.approx(T_FOLD_125_05, rel=1e-14)


def test_t_ngs_closed_zero_beta_prime_form():
    for beta in (1.05, 1.25, 1.5, 2.0, 3.0):
        want = 0.25 * math.log(beta / (beta - 1.0))
        assert phase.t_ngs_closed(beta, 0.0) == pytest.approx(want, rel=1e-13)


def test_t_ngs_closed_unit_beta_prime_limit():
    assert phase.t_ngs_closed(1.25, 1.0) == pytest.approx(1.0, rel=1e-14)
    below = phase.t_ngs_closed(1.25, 1.0 - 1e-9)
    above = phase.t_ngs_closed(1.25, 1.0 + 1e-9)
    assert abs(below - 1.0) < 1e-7
    assert abs(above - 1.0) < 1e-7


def test_t_ngs_closed_out_of_regime():
    for beta, bp in ((0.9, 0.0), (1.0, 0.0), (1.25, 1.5), (1.2, 1.2)):
        with pytest.raises(phase.OutOfRegime):
            phase.t_ngs_closed(beta, bp)
    # OutOfRegime is a DomainError so one except clause can catch both
    assert issubclass(phase.OutOfRegime, DomainError)
    with pytest.raises(DomainError):
        phase.t_ngs_closed(-1.0, 0.0)


def test_fold_time_at_axis_matches_t_ngs():
    for beta, bp in ((1.25, 0.0), (2.5, 0.0), (1.25, 0.5), (1.4, 1.2)):
        assert phase.fold_time_at(0.0, beta, bp) == pytest.approx(
            phase.t_ngs_closed(beta, bp), rel=1e-13)


def test_fold_time_at_unit_beta_prime_limit():
    t = phase.fold_time_at(0.3, 1.6, 1.0)
    near = phase.fold_time_at(0.3, 1.6, 1.0 + 1e-9)
    assert abs(t - near) < 1e-6
    assert t > 0


def test_fold_time_curve_minimum_matches_detected_fold():
    # at beta'=0 the frozen-coefficient fold time is exact for every m0, so
    # the curve minimum must reproduce the detected first off-axis fold
    ms = np.linspace(0.45, 0.75, 1201)
    ts = np.array([phase.fold_time_at(m, 2.5, 0.0) for m in ms])
    k = int(np.argmin(ts))
    lo, hi = ms[k - 1], ms[k + 1]
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda m: phase.fold_time_at(m, 2.5, 0.0),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    assert res.fun == pytest.approx(T0_BROKEN, abs=1e-9)
    assert res.x == pytest.approx(M0_BROKEN, abs=1e-5)


def test_fold_time_at_out_of_regime():
    with pytest.raises(phase.OutOfRegime):
        phase.fold_time_at(0.0, 0.8, 0.0)
    with pytest.raises(phase.OutOfRegime):
        phase.fold_time_at(0.9, 1.25, 0.0)  # slope too weak far out


def test_beta_sb_zero_is_exact():
    assert phase.beta_sb(0.0) == 1.5


def test_beta_sb_cubic_residual():
    for bp in np.linspace(0.0, 2.0, 41):
        b = phase.beta_sb(float(bp))
        res = 4 * b**3 - 6 * (1 + bp) * b * b + 12 * b * bp \
            - bp * (3 + 3 * bp - bp * bp)
        assert abs(res) < 1e-10
        assert b > 1.0


def test_beta_sb_stays_above_dynamical_temperature():
    for bp in (0.5, 1.0, 1.5):
        assert 1.0 / phase.beta_sb(bp) < 1.0 / bp


def test_beta_sb_domain():
    with pytest.raises(DomainError):
        phase.beta_sb(-0.1)


def test_fold_curve_curvature_flips_at_beta_sb():
    # the axis changes from first fold to locally latest fold at beta_sb:
    # the m0-curvature of the fold-time curve crosses zero there
    h = 1e-3
    for bp in (0.0, 0.5, 1.2):
        bs = phase.beta_sb(bp)

        def curv(beta):
            return (phase.fold_time_at(h, beta, bp)
                    - 2 * phase.fold_time_at(0.0, beta, bp)
                    + phase.fold_time_at(-h, beta, bp)) / (h * h)

        assert abs(curv(bs)) < 1e-4
        assert curv(bs - 0.1) > 0.1
        assert curv(bs + 0.1) < -0.1


def test_thresholds_symmetric_onset():
    # heating regime with beta below beta_sb: one onset, zero immediately bad
    th = phase.thresholds_numeric(1.25, 0.0, 0.6, scan_points=8,
                                  transport_grid=150)
    assert th.t0 == pytest.approx(T_FOLD_125_0, abs=2e-3)
    assert th.t1 == pytest.approx(T_FOLD_125_0, abs=2e-3)
    assert th.t_per is None


def test_thresholds_broken_onset():
    # beta above beta_sb: mirror pair appears first, the origin follows
    th = phase.thresholds_numeric(2.5, 0.0, 0.3, scan_points=10,
                                  transport_grid=150)
    assert th.t0 == pytest.approx(T0_BROKEN, abs=2e-3)
    assert th.t1 == pytest.approx(T1_BROKEN, abs=2e-3)
    assert th.t0 < th.t1
    assert th.t1 < 0.25 * math.log(5.0 / 3.0)  # well tie beats the axis fold
    assert th.t_per is None


def test_thresholds_subcritical_all_none():
    th = phase.thresholds_numeric(0.9, 0.0, 1.0, scan_points=5,
                                  transport_grid=120)
    assert th == phase.Thresholds(t0=None, t1=None, t_per=None, t_max=1.0)


def test_thresholds_cooling_onset():
    th = phase.thresholds_numeric(1 / 0.85, 1.5, 2.0, scan_points=8,
                                  transport_grid=150)
    assert th.t_per is not None
    assert th.t_per == pytest.approx(T_PER_COOL, abs=2e-3)
    assert th.t0 == th.t_per
    assert th.t1 is None  # the origin stays good under cooling


def test_thresholds_to_json():
    th = phase.Thresholds(t0=0.5, t1=None, t_per=None, t_max=2.0)
    data = json.loads(th.to_json())
    assert data == {"t0": 0.5, "t1": None, "t_per": None, "t_max": 2.0}


def test_thresholds_domain():
    with pytest.raises(DomainError):
        phase.thresholds_numeric(1.25, 0.0, 0.0)
    with pytest.raises(DomainError):
        phase.thresholds_numeric(1.25, 0.0, 1.0, scan_points=1)


def test_diagram_heating_grid(tmp_path):
    d = phase.diagram(0.0, (0.8, 1.1), (0.2, 0.5), transport_grid=150)
    assert d.labels[0] == (RegionLabel.GIBBS, RegionLabel.GIBBS)
    assert d.labels[1] == (RegionLabel.NON_GIBBS_SYMMETRIC, RegionLabel.GIBBS)
    assert d.failures == ()
    assert d.violations == ()

    (b0, t_star), (b1, none_star) = d.boundary
    assert b0 == 0.8 and b1 == 1.1
    assert none_star is None
    assert t_star == pytest.approx(T_FOLD_125_0, abs=1e-2)

    (c0, t_closed), (c1, closed_none) = d.closed_form
    assert t_closed == pytest.approx(T_FOLD_125_0, rel=1e-12)
    assert closed_none is None

    out = tmp_path / "diagram.csv"
    d.to_csv(out)
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("# ")
    assert json.loads(lines[0][2:]) == {"beta_prime": 0.0}
    assert lines[1] == "beta_inv,t,label"
    assert len(lines) == 6
    assert lines[2].endswith(",Gibbs")

    data = json.loads(d.to_json())
    assert data["labels"][1][0] == "NonGibbsSymmetric"
    assert data["boundary"][1] == [1.1, None]


def test_diagram_cooling_three_bands():
    # one cooling column: Gibbs below the first fold, a broken band above
    # it, and Gibbs again once the near-axis branch dominates everything
    d = phase.diagram(1.5, (0.85,), (1.0, 2.0, 5.0), transport_grid=150)
    col = tuple(row[0] for row in d.labels)
    assert col == (RegionLabel.GIBBS, RegionLabel.NON_GIBBS_BROKEN,
                   RegionLabel.GIBBS)
    assert d.violations == ((0.85, 5.0),)
    b, t_star = d.boundary[0]
    assert t_star == pytest.approx(T_PER_COOL, abs=2e-3)
    assert d.closed_form[0][1] is None  # cooling, origin never folds


def test_diagram_determinism():
    kw = dict(trace_boundary=False, transport_grid=120)
    one = phase.diagram(0.0, (0.8,), (0.2, 0.5), **kw)
    two = phase.diagram(0.0, (0.8,), (0.2, 0.5), **kw)
    assert one.to_json() == two.to_json()
    assert one == two


def test_diagram_domain():
    with pytest.raises(DomainError):
        phase.diagram(0.0, (0.0, 1.1), (0.2,))
    with pytest.raises(DomainError):
        phase.diagram(0.0, (0.8,), (0.5, 0.2))
    with pytest.raises(DomainError):
        phase.diagram(0.0, (0.8,), (-0.1, 0.5))
