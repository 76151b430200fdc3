"""Kernel tables, return probabilities, sup-norm decay, occupation sums."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lrvoter.errors import CutoffCertificationError
from lrvoter.heatkernel import (
    KernelTable,
    OccupationSum,
    convolve_power,
    occupation_sum,
    q_norm_series,
    return_prob,
    supnorm_exponent,
)
from lrvoter.analytic import q_norm_squared
from lrvoter.steplaw import StepLaw

CANONICAL = StepLaw.canonical(0.5)
LOG_LAW = StepLaw(0.45, 0.25, "log_corrected")


def make_table(law, t, M):
    with pytest.warns(UserWarning, match="leaks"):
        return convolve_power(law, t, M)


class TestConvolvePower:
    def test_one_step_table_is_the_pmf(self):
        table = make_table(CANONICAL, 1, 500)
        lattice = np.arange(-500, 501)
        assert np.array_equal(table.masses, CANONICAL.pmf(lattice))
        assert table.leaked_mass == pytest.approx(
            1.0 - float(CANONICAL.pmf(lattice).sum()), abs=1e-15)

    def test_two_step_center_against_direct_summation(self):
        table = make_table(CANONICAL, 2, 20_000)
        m = np.arange(-(10**6), 10**6 + 1)
        pm = CANONICAL.pmf(m)
        direct = float(pm @ pm)
        # both are lower bounds for p_2(0); the wider direct sum dominates
        assert table.mass(0) <= direct + 1e-12
        assert direct - table.mass(0) <= table.leaked_mass

    def test_symmetry_and_conservation(self):
        for t in (1, 2, 5):
            table = make_table(CANONICAL, t, 3000)
            assert np.max(np.abs(table.masses - table.masses[::-1])) < 1e-12
            assert float(table.masses.sum()) + table.leaked_mass == pytest.approx(
                1.0, abs=1e-12)
            assert float(table.masses.min()) >= 0.0

    def test_mass_outside_window_is_zero(self):
        table = make_table(CANONICAL, 1, 100)
        assert table.mass(101) == 0.0
        assert table.mass(-200) == 0.0
        assert table.mass(100) > 0.0

    def test_rejects_nonpositive_step_count(self):
        with pytest.raises(ValueError):
            convolve_power(CANONICAL, 0, 100)

    def test_rejects_enormous_window(self):
        with pytest.raises(ValueError, match="window"):
            convolve_power(CANONICAL, 1, 1 << 30)

    def test_default_window_needs_no_leak_warning_at_alpha_09(self):
        # shallow tails + default window: leak below the warning threshold
        law = StepLaw.canonical(0.9)
        table = convolve_power(law, 1)
        assert table.leaked_mass < 1e-3

    def test_chapman_kolmogorov_one_plus_one(self):
        p1 = make_table(CANONICAL, 1, 2000)
        p2 = make_table(CANONICAL, 2, 2000)
        conv = np.convolve(p1.masses, p1.masses)
        center = conv[len(p1.masses) - 1 - 500 : len(p1.masses) + 500]
        window = p2.masses[2000 - 500 : 2000 + 501]
        assert np.max(np.abs(center - window)) < 1e-12

    def test_chapman_kolmogorov_two_plus_three(self):
        p2 = make_table(CANONICAL, 2, 2000)
        p3 = make_table(CANONICAL, 3, 2000)
        p5 = make_table(CANONICAL, 5, 2000)
        conv = np.convolve(p2.masses, p3.masses)
        tol = p5.leaked_mass + p2.leaked_mass + p3.leaked_mass + 1e-10
        for n in (-100, -1, 0, 7, 250):
            composed = float(conv[n + 2 * 2000])
            assert abs(composed - p5.mass(n)) < tol

    @settings(max_examples=12, deadline=None)
    @given(
        alpha=st.floats(0.25, 0.95),
        t=st.integers(1, 4),
        halfwidth=st.integers(64, 1500),
    )
    def test_invariants_hold_across_laws(self, alpha, t, halfwidth):
        law = StepLaw.canonical(alpha)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = convolve_power(law, t, halfwidth)
        assert isinstance(table, KernelTable)
        assert float(table.masses.min()) >= 0.0
        assert float(table.masses.sum()) + table.leaked_mass == pytest.approx(
            1.0, abs=1e-12)
        assert np.max(np.abs(table.masses - table.masses[::-1])) < 1e-12


class TestReturnProb:
    def test_matches_two_step_convolution_oracle(self):
        table = make_table(CANONICAL, 2, 20_000)
        assert abs(return_prob(CANONICAL, 2) - table.mass(0)) <= (
            table.leaked_mass + 1e-8)

    def test_decreasing_in_t(self):
        values = [return_prob(CANONICAL, t) for t in (2, 3, 4, 5, 6, 8, 10, 20, 50)]
        assert all(a > b for a, b in zip(values, values[1:]))
        log_values = [return_prob(LOG_LAW, t) for t in (1, 2, 3, 4, 6)]
        assert all(a > b for a, b in zip(log_values, log_values[1:]))

    def test_decay_slope_matches_inverse_alpha(self):
        ts = [100, 200, 400, 1000, 2000, 4000, 10_000]
        logs = np.log([return_prob(CANONICAL, t) for t in ts])
        slope = np.polyfit(np.log(ts), logs, 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.05)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            return_prob(CANONICAL, 0)


class TestSupnormExponent:
    def test_canonical_alpha_half_slope(self):
        fit = supnorm_exponent(CANONICAL, [100, 200, 400, 1000, 2000, 4000, 10_000])
        assert fit.slope == pytest.approx(-2.0, abs=0.1)
        assert fit.slope <= -1.0 / (0.5 + 0.05) + 0.05
        assert max(abs(r) for r in fit.residuals) < 0.05
        assert all(e <= 1e-3 * v for v, e in zip(fit.supnorms, fit.error_bounds))

    def test_alpha_07_slope(self):
        law = StepLaw.canonical(0.7)
        fit = supnorm_exponent(law, [100, 200, 400, 1000, 2000, 4000, 10_000])
        assert fit.slope == pytest.approx(-1.0 / 0.7, abs=0.1)
        assert fit.slope <= -1.0 / (0.7 + 0.05) + 0.05

    def test_single_point_grid_rejected(self):
        with pytest.raises(ValueError):
            supnorm_exponent(CANONICAL, [100])

    def test_narrow_grid_rejected(self):
        with pytest.raises(ValueError, match="decades"):
            supnorm_exponent(CANONICAL, [100, 200, 400])

    def test_odd_times_rejected(self):
        with pytest.raises(ValueError, match="even"):
            supnorm_exponent(CANONICAL, [101, 1000, 10_001])


class TestOccupationSum:
    def test_origin_window_against_green_value(self):
        occ = occupation_sum(CANONICAL, 0, 0, t_cut=2048)
        green, _ = quad(
            lambda x: 1.0 / CANONICAL.one_minus_char(x), 0.0, math.pi,
            points=[1e-8, 1e-6, 1e-4, 1e-2], epsabs=1e-13, epsrel=1e-11,
            limit=400)
        green /= math.pi
        assert occ.value <= green <= occ.value + occ.tail_bound

    def test_origin_window_against_return_prob_series(self):
        occ = occupation_sum(CANONICAL, 0, 0, t_cut=256)
        series = 1.0 + sum(return_prob(CANONICAL, t) for t in range(1, 257))
        assert occ.value == pytest.approx(series, abs=1e-9)

    def test_small_horizon_against_kernel_tables(self):
        tables = [make_table(CANONICAL, t, 20_000) for t in (1, 2, 3, 4)]
        leak = sum(t.leaked_mass for t in tables)
        for k in (0, 3, 7, -5):
            direct = (1.0 if 0 <= k <= 6 else 0.0) + sum(
                tab.mass(n1 - k) for tab in tables for n1 in range(7))
            occ = occupation_sum(CANONICAL, k, 6, t_cut=4)
            assert direct <= occ.value <= direct + leak + 1e-7

    def test_far_window_is_near_zero(self):
        occ = occupation_sum(CANONICAL, 10**7, 100, t_cut=2048)
        assert 0.0 < occ.value < 0.01
        # the k-independent tail bound legitimately dominates out here
        assert occ.tail_bound > occ.value

    def test_growth_exponent_near_alpha(self):
        ns = [2**j for j in range(8, 13)]
        values = []
        for n in ns:
            occ = occupation_sum(CANONICAL, 0, n, t_cut=8 * n)
            assert occ.tail_bound <= 0.01 * occ.value  # certified horizon
            values.append(occ.value)
        slope = np.polyfit(np.log(ns), np.log(values), 1)[0]
        assert slope == pytest.approx(0.5, abs=0.1)
        assert slope <= 0.5 + 0.1

    def test_float_conversion_and_fields(self):
        occ = occupation_sum(CANONICAL, 0, 4, t_cut=64)
        assert isinstance(occ, OccupationSum)
        assert float(occ) == occ.value
        assert occ.tail_bound > 0.0
        assert occ.t_cut == 64

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            occupation_sum(CANONICAL, 0, -1, t_cut=64)
        with pytest.raises(ValueError):
            occupation_sum(CANONICAL, 0, 4, t_cut=1)


class TestQNormSeries:
    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
    def test_series_route_matches_quadrature(self, alpha):
        law = StepLaw.canonical(alpha)
        series = q_norm_series(law)
        exact = q_norm_squared(law)
        assert abs(series - exact) / exact < 1e-4

    def test_log_corrected_law(self):
        series = q_norm_series(LOG_LAW)
        exact = q_norm_squared(LOG_LAW)
        assert abs(series - exact) / exact < 1e-4

    def test_rejects_short_series(self):
        with pytest.raises(ValueError):
            q_norm_series(CANONICAL, t_terms=32)


class TestCertification:
    def test_uncertifiable_series_raises(self):
        # sabotage: a law object whose character the panel grid cannot pin
        class Jitter(StepLaw):
            def one_minus_char(self, x):
                base = StepLaw.one_minus_char(self, x)
                return base * (1.0 + 1e-3 * np.sin(1e5 * np.asarray(x)))

        jitter = Jitter(0.5, 0.5, "constant")
        with pytest.raises(CutoffCertificationError):
            q_norm_series(jitter)
