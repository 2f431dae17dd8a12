import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwflow import ldp, model
from cwflow.ldp import (
    cp_rate,
    hamiltonian,
    jump_bias,
    lagrangian,
    lagrangian_reference,
    lagrangian_value,
    optimal_momentum,
)
from cwflow.model import DomainError, drift, mean_field_roots

# frozen from an independent arbitrary-precision evaluation
J_03_10_15 = 0.063284597150114043594
LAM_03_10_15 = 0.17257356960941283946
J_M06_M20_08 = 0.71201423531648657172
J_02_10_15 = 0.079208760218363138981
J_00_05_00 = 0.031090208982400725781


def simple_j(m, v):
    # infinite-temperature closed form, transcribed for cross-evaluation
    s = np.sqrt(4 - 4 * m * m + v * v)
    main = np.where(v == 0, 0.0, 0.5 * v * np.log(np.where(v == 0, 1.0, (v + s) / (2 - 2 * m))))
    return main - 0.5 * s + 1.0


class TestJumpBias:
    def test_symmetric_point(self):
        for bp in (0.0, 1.3, 2.0):
            assert jump_bias(0.0, bp) == pytest.approx(0.5, abs=1e-15)

    def test_infinite_temperature(self):
        m = np.linspace(-0.99, 0.99, 99)
        assert np.max(np.abs(jump_bias(m, 0.0) - (1 - m) / 2)) < 1e-15

    def test_frozen_value(self):
        want = 0.56978175904237624903
        assert jump_bias(0.3, 1.5) == pytest.approx(want, abs=1e-15)

    def test_open_interval(self):
        m = np.linspace(-0.999, 0.999, 201)
        p = jump_bias(m, 2.5)
        assert np.all((p > 0) & (p < 1))
        with pytest.raises(DomainError):
            jump_bias(1.0, 1.0)


class TestCpRate:
    def test_zero_at_balanced(self):
        assert cp_rate(0.0, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_rest_cost(self):
        for p in (0.2, 0.7, 0.9):
            assert cp_rate(0.0, p) == pytest.approx(1 - 2 * math.sqrt(p * (1 - p)), abs=1e-14)
            assert cp_rate(0.0, p) > 0

    def test_zero_at_mean_velocity(self):
        for p in (0.1, 0.4, 0.8):
            assert cp_rate(2 * (2 * p - 1), p) == pytest.approx(0.0, abs=1e-14)

    def test_momentum_vanishes_at_mean_velocity(self):
        # lam* solves the quadratic; at the mean it must be 0
        for m, bp in ((0.3, 1.5), (-0.5, 0.7)):
            v = drift(m, bp)
            assert abs(optimal_momentum(m, v, bp)) < 1e-14

    def test_domain(self):
        with pytest.raises(DomainError):
            cp_rate(1.0, 0.0)
        with pytest.raises(DomainError):
            cp_rate(1.0, 1.0)


class TestHamiltonian:
    def test_zero_momentum(self):
        for m, bp in ((0.2, 1.0), (-0.8, 0.0), (0.0, 2.0)):
            assert hamiltonian(m, 0.0, bp) == 0.0

    def test_symmetric_point_is_cosh(self):
        lam = np.linspace(-3, 3, 61)
        assert np.max(np.abs(hamiltonian(0.0, lam, 1.7) - (np.cosh(2 * lam) - 1))) < 1e-12

    def test_slope_at_zero_is_drift(self):
        h = 1e-7
        for m, bp in ((0.3, 1.5), (-0.6, 0.9), (0.1, 0.0)):
            fd = (hamiltonian(m, h, bp) - hamiltonian(m, -h, bp)) / (2 * h)
            assert fd == pytest.approx(drift(m, bp), abs=1e-6)

    def test_momentum_cap(self):
        with pytest.raises(DomainError):
            hamiltonian(0.1, 31.0, 1.0)


class TestOptimalMomentum:
    def test_origin(self):
        assert optimal_momentum(0.0, 0.0, 1.5) == pytest.approx(0.0, abs=1e-15)

    def test_velocity_recovered(self):
        # dH/dlam at lam* equals v
        rng = np.random.default_rng(1)
        h = 1e-7
        for _ in range(50):
            m = rng.uniform(-0.9, 0.9)
            v = rng.uniform(-4, 4)
            bp = rng.uniform(0, 2.5)
            lam = optimal_momentum(m, v, bp)
            fd = (hamiltonian(m, lam + h, bp) - hamiltonian(m, lam - h, bp)) / (2 * h)
            assert fd == pytest.approx(v, abs=1e-5)

    def test_frozen_value(self):
        assert optimal_momentum(0.3, 1.0, 1.5) == pytest.approx(LAM_03_10_15, abs=1e-15)


class TestLagrangian:
    def test_frozen_values(self):
        assert lagrangian(0.3, 1.0, 1.5).value == pytest.approx(J_03_10_15, abs=1e-14)
        assert lagrangian(-0.6, -2.0, 0.8).value == pytest.approx(J_M06_M20_08, abs=1e-14)
        assert lagrangian(0.0, 0.5, 0.0).value == pytest.approx(J_00_05_00, abs=1e-14)

    def test_golden_section_sup_oracle(self):
        # independently maximized lam v - H over lam in [-20, 20]
        assert lagrangian(0.2, 1.0, 1.5).value == pytest.approx(J_02_10_15, abs=1e-12)

    def test_zero_on_drift(self):
        m = np.linspace(-0.95, 0.95, 191)
        for bp in (0.0, 0.9, 1.5, 2.5):
            vals = lagrangian_value(m, drift(m, bp), bp)
            assert np.max(np.abs(vals)) < 1e-13

    def test_rest_zero_exactly_at_mean_field_roots(self):
        for bp in (1.25, 1.7):
            for r in mean_field_roots(bp):
                assert lagrangian(r, 0.0, bp).value < 1e-11
            assert lagrangian(0.4, 0.0, bp).value > 1e-4

    def test_record_identity(self):
        ev = lagrangian(0.3, 1.0, 1.5)
        assert ev.value == pytest.approx(ev.momentum * 1.0 - ev.energy, abs=1e-12)

    def test_matches_cp_rate_composition(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            m = rng.uniform(-0.95, 0.95)
            v = rng.uniform(-4, 4)
            bp = rng.uniform(0, 2.5)
            assert lagrangian(m, v, bp).value == pytest.approx(
                cp_rate(v, jump_bias(m, bp)), abs=1e-12)

    def test_matches_reference_form(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            m = rng.uniform(-0.95, 0.95)
            v = rng.uniform(-4, 4)
            bp = rng.uniform(0, 2.5)
            assert lagrangian(m, v, bp).value == pytest.approx(
                lagrangian_reference(m, v, bp), abs=1e-9)

    def test_infinite_temperature_closed_form(self):
        m = np.linspace(-0.95, 0.95, 39)
        v = np.linspace(-4, 4, 41)
        mm, vv = np.meshgrid(m, v)
        assert np.max(np.abs(lagrangian_value(mm, vv, 0.0) - simple_j(mm, vv))) < 1e-12

    @settings(max_examples=200)
    @given(st.floats(-0.95, 0.95), st.floats(-4, 4), st.floats(0, 2.5))
    def test_nonnegative(self, m, v, bp):
        assert lagrangian_value(m, v, bp) >= -1e-13

    def test_convex_in_velocity(self):
        v = np.linspace(-4, 4, 201)
        for m, bp in ((0.0, 1.5), (0.6, 0.5), (-0.4, 2.0)):
            j = lagrangian_value(m, v, bp)
            second = j[:-2] - 2 * j[1:-1] + j[2:]
            assert np.min(second) > -1e-8

    def test_momentum_is_velocity_slope(self):
        # d j / d v = lam*, the quantity entering the free-end condition
        h = 1e-6
        rng = np.random.default_rng(4)
        for _ in range(30):
            m = rng.uniform(-0.9, 0.9)
            v = rng.uniform(-3, 3)
            bp = rng.uniform(0, 2.0)
            fd = (lagrangian_value(m, v + h, bp) - lagrangian_value(m, v - h, bp)) / (2 * h)
            assert fd == pytest.approx(lagrangian(m, v, bp).momentum, abs=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            lagrangian(1.0, 0.0, 1.0)
