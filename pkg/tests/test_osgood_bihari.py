import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from mkvlab.coeff_calc import CoefficientFn, gronwall_curve
from mkvlab.exceptions import DomainError, ValidationError
from mkvlab.osgood_bihari import (
    UNKNOWN,
    BihariCurve,
    LinearModulus,
    LogModulus,
    MaxOfModulus,
    PowerModulus,
    TabulatedModulus,
    bihari_bound_curve,
    in_domain,
    osgood_diverges_at_zero,
    phi_rho,
    phi_rho_endpoints,
    psi_rho,
)


class TestFrozenTransforms:
    def test_power_one(self):
        rho = PowerModulus(1.0)
        npt.assert_allclose(phi_rho(rho, math.e), 1.0, rtol=1e-14)
        npt.assert_allclose(psi_rho(rho, 2.0, math.log(3.0)), 6.0,
                            rtol=1e-13)

    def test_power_half(self):
        rho = PowerModulus(0.5)
        npt.assert_allclose(phi_rho(rho, 4.0), 2.0, rtol=1e-14)
        npt.assert_allclose(psi_rho(rho, 1.0, 2.0), 4.0, rtol=1e-14)
        lo, hi = phi_rho_endpoints(rho)
        assert lo == -2.0 and hi == math.inf

    def test_power_two_domain(self):
        rho = PowerModulus(2.0)
        lo, hi = phi_rho_endpoints(rho)
        assert lo == -math.inf and hi == 1.0
        assert not in_domain(rho, 1.0, 2.0)
        assert in_domain(rho, 2.0, 0.25)
        with pytest.raises(DomainError):
            psi_rho(rho, 1.0, 2.0)

    def test_linear(self):
        rho = LinearModulus(2.0)
        npt.assert_allclose(phi_rho(rho, math.e), 0.5, rtol=1e-14)
        npt.assert_allclose(psi_rho(rho, 3.0, 1.0), 3.0 * math.exp(2.0),
                            rtol=1e-13)

    def test_log_modulus(self):
        rho = LogModulus(1.0)
        npt.assert_allclose(phi_rho(rho, math.e), math.log(2.0), rtol=1e-13)
        npt.assert_allclose(phi_rho(rho, 1.0 / math.e), -math.log(2.0),
                            rtol=1e-13)
        # inverse closed form round-trips the two branches
        npt.assert_allclose(psi_rho(rho, 1.0, math.log(2.0)), math.e,
                            rtol=1e-12)

    def test_phi_at_one_is_zero(self):
        for rho in (PowerModulus(0.5), PowerModulus(2.0), LinearModulus(1.0),
                    LogModulus(0.7)):
            assert phi_rho(rho, 1.0) == 0.0

    def test_psi_at_zero_shift_is_identity(self):
        for rho in (PowerModulus(0.5), LogModulus(1.0)):
            assert psi_rho(rho, 1.7, 0.0) == 1.7


class TestNumericAgainstClosed:
    @pytest.mark.parametrize("alpha", [0.5, 0.75, 1.0, 2.0])
    def test_phi_quadrature_matches(self, alpha):
        rho = PowerModulus(alpha)
        for w in np.logspace(-3, 3, 25):
            a = phi_rho(rho, float(w))
            b = phi_rho(rho, float(w), force_numeric=True)
            npt.assert_allclose(b, a, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("alpha", [0.5, 0.75, 1.0])
    def test_psi_numeric_matches(self, alpha):
        rho = PowerModulus(alpha)
        rng = np.random.default_rng(42)
        for _ in range(20):
            v = float(rng.uniform(0.05, 5.0))
            w = float(rng.uniform(0.0, 3.0))
            a = psi_rho(rho, v, w)
            b = psi_rho(rho, v, w, force_numeric=True)
            npt.assert_allclose(b, a, rtol=1e-6)

    def test_roundtrip_thousand_points(self):
        rho = PowerModulus(0.5)
        ws = np.logspace(-4, 4, 1000)
        for w in ws:
            y = phi_rho(rho, float(w))
            back = psi_rho(rho, 1.0, y)
            npt.assert_allclose(back, w, rtol=1e-8)


class TestMonotonicity:
    @settings(max_examples=80, deadline=None)
    @given(st.floats(0.3, 1.0), st.floats(0.01, 4.0), st.floats(0.01, 4.0),
           st.floats(0.0, 2.0), st.floats(0.0, 2.0))
    def test_psi_monotone(self, alpha, v1, v2, w1, w2):
        rho = PowerModulus(alpha)
        lo_v, hi_v = min(v1, v2), max(v1, v2)
        lo_w, hi_w = min(w1, w2), max(w1, w2)
        assert psi_rho(rho, lo_v, lo_w) <= psi_rho(rho, hi_v, lo_w) + 1e-12
        assert psi_rho(rho, lo_v, lo_w) <= psi_rho(rho, lo_v, hi_w) + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.3, 2.5), st.floats(0.02, 50.0))
    def test_phi_sign_convention(self, alpha, w):
        rho = PowerModulus(alpha)
        val = phi_rho(rho, w)
        if w < 1.0:
            assert val < 0
        elif w == 1.0:
            assert val == 0.0
        else:
            assert val > 0


class TestDivergenceAtZero:
    def test_power_thresholds(self):
        assert osgood_diverges_at_zero(PowerModulus(1.0), 1) is True
        assert osgood_diverges_at_zero(PowerModulus(0.99), 1) is False
        assert osgood_diverges_at_zero(PowerModulus(0.5), 2) is True
        assert osgood_diverges_at_zero(PowerModulus(0.49), 2) is False

    def test_linear_and_log(self):
        assert osgood_diverges_at_zero(LinearModulus(3.0), 1) is True
        assert osgood_diverges_at_zero(LinearModulus(3.0), 2) is True
        assert osgood_diverges_at_zero(LogModulus(1.0), 1) is True
        assert osgood_diverges_at_zero(LogModulus(1.0), 2) is True

    def test_max_follows_dominant_branch(self):
        # near zero v dominates v^2, so the max behaves like the first power
        rho = MaxOfModulus(PowerModulus(1.0), PowerModulus(2.0))
        assert osgood_diverges_at_zero(rho, 1) is True
        rho2 = MaxOfModulus(PowerModulus(0.5), PowerModulus(2.0))
        assert osgood_diverges_at_zero(rho2, 1) is False

    def test_tabulated_slope_rule(self):
        v = np.logspace(-6, 2, 40)
        rho = TabulatedModulus(v, v**0.6)
        assert osgood_diverges_at_zero(rho, 1) is False
        assert osgood_diverges_at_zero(rho, 2) is True
        near = TabulatedModulus(v, v**1.02)
        assert osgood_diverges_at_zero(near, 1) == UNKNOWN

    def test_exponent_validated(self):
        with pytest.raises(ValidationError):
            osgood_diverges_at_zero(PowerModulus(1.0), 3)


class TestConeChecks:
    def test_degenerate_linear_rejected_by_ops(self):
        rho = LinearModulus(0.0)
        report = rho.verify_cone()
        assert not report["ok"]
        with pytest.raises(ValidationError):
            phi_rho(rho, 2.0)

    def test_decreasing_table_rejected(self):
        v = np.asarray([0.1, 1.0, 10.0])
        rho = TabulatedModulus(v, np.asarray([5.0, 1.0, 0.2]))
        with pytest.raises(ValidationError):
            psi_rho(rho, 1.0, 1.0)


class TestTabulatedNumerics:
    def test_matches_power_law_it_samples(self):
        v = np.logspace(-8, 8, 80)
        rho = TabulatedModulus(v, np.sqrt(v))
        exact = PowerModulus(0.5)
        for w in (0.01, 0.4, 3.0, 250.0):
            npt.assert_allclose(phi_rho(rho, w), phi_rho(exact, w),
                                rtol=1e-4)
            npt.assert_allclose(psi_rho(rho, 1.0, 1.0),
                                psi_rho(exact, 1.0, 1.0), rtol=1e-4)

    def test_endpoints_probe(self):
        v = np.logspace(-8, 8, 80)
        lo, hi = phi_rho_endpoints(TabulatedModulus(v, np.sqrt(v)))
        npt.assert_allclose(lo, -2.0, rtol=1e-3)
        assert hi == math.inf


class TestBihariCurve:
    def test_frozen_exponential(self):
        grid = np.linspace(0.0, 1.0, 11)
        curve = bihari_bound_curve(PowerModulus(1.0), 1.0, 0.0, 1.0, grid)
        npt.assert_allclose(curve.values[-1], math.e, rtol=1e-12)
        assert curve.t0_plus == math.inf
        assert not curve.blew_up

    def test_frozen_blowup_time(self):
        grid = np.linspace(0.0, 2.0, 21)
        curve = bihari_bound_curve(PowerModulus(2.0), 1.0, 0.0, 1.0, grid)
        assert curve.t0_plus == 1.0
        assert math.isnan(curve.values[10])
        assert np.all(np.isnan(curve.values[10:]))
        assert np.all(np.isfinite(curve.values[:10]))
        assert curve.blew_up

    def test_additive_term_enters_inside(self):
        # with the linear modulus the bound is (init + int add) * exp(int mult)
        grid = np.linspace(0.0, 2.0, 9)
        add = CoefficientFn.constant(0.5)
        mult = CoefficientFn.constant(-1.0)
        curve = bihari_bound_curve(PowerModulus(1.0), 2.0, add, mult, grid)
        want = (2.0 + 0.5 * grid) * np.exp(-grid)
        npt.assert_allclose(curve.values, want, rtol=1e-12)

    def test_degenerates_to_affine_comparison_without_forcing(self):
        # zero additive part: the power-one bound and the affine curve agree
        rng = np.random.default_rng(7)
        grid = np.linspace(0.0, 3.0, 61)
        for _ in range(5):
            init = float(rng.uniform(0.1, 4.0))
            rate_samples = rng.uniform(-2.0, 1.0, size=4)
            rate = CoefficientFn.from_samples(
                np.linspace(0.0, 3.0, 4), rate_samples)
            b = bihari_bound_curve(PowerModulus(1.0), init, 0.0, rate, grid)
            g = gronwall_curve(rate, init, None, grid)
            npt.assert_allclose(b.values, g.values, rtol=1e-10, atol=1e-12)

    def test_negative_accumulation_rejected(self):
        grid = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValidationError):
            bihari_bound_curve(PowerModulus(1.0), 0.0, -1.0, 0.0, grid)
