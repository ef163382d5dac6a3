import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucwave.exceptions import ConfigurationError, UsageError
from ucwave.geometry import (
    GeometryConfig,
    Region,
    WeightParams,
    check_pseudoconvexity,
    derive_params,
    gamma_contains,
    grad_margin,
    psi,
    region_contains,
)


class TestDeriveParams:
    def test_paper_values(self, cfg51, p51):
        assert p51.rho0 == pytest.approx(0.8125, abs=1e-15)
        assert p51.rho1 == pytest.approx(1.5625, abs=1e-15)
        assert p51.rho == pytest.approx(0.8875, abs=1e-15)
        # hand check: T = sqrt((rho1 - rho) / (1 - eps))
        assert p51.T == pytest.approx(math.sqrt(0.675 / 0.95), rel=1e-14)
        assert abs(p51.T - 0.843) < 1e-3

    def test_rho_fraction_zero(self):
        cfg = GeometryConfig(r=0.5, R=1.0, beta=0.5, eps=0.05, rho_fraction=0.0)
        p = derive_params(cfg)
        assert p.rho == pytest.approx(p.rho0) == pytest.approx(0.5)

    def test_explicit_T_below_bound_rejected(self):
        cfg = GeometryConfig(r=0.75, R=1.0, beta=0.5, eps=0.05, T=0.5)
        with pytest.raises(ConfigurationError, match="rho1"):
            derive_params(cfg)

    def test_explicit_T_above_bound_accepted(self):
        cfg = GeometryConfig(r=0.75, R=1.0, beta=0.5, eps=0.05, T=2.0)
        assert derive_params(cfg).T == 2.0

    def test_config_invariants(self):
        with pytest.raises(ConfigurationError):
            GeometryConfig(r=1.0, R=1.0, beta=0.5, eps=0.05)
        with pytest.raises(ConfigurationError):
            GeometryConfig(r=0.5, R=1.0, beta=0.0, eps=0.05)
        with pytest.raises(ConfigurationError):
            GeometryConfig(r=0.5, R=1.0, beta=0.5, eps=0.0)
        with pytest.raises(ConfigurationError):
            GeometryConfig(r=0.5, R=1.0, beta=0.5, eps=0.05, dim=2)

    @given(
        f1=st.floats(0.01, 0.45),
        f2=st.floats(0.5, 0.95),
    )
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_rho_fraction(self, f1, f2):
        base = dict(r=0.75, R=1.0, beta=0.5, eps=0.05)
        lo = derive_params(GeometryConfig(rho_fraction=f1, **base))
        hi = derive_params(GeometryConfig(rho_fraction=f2, **base))
        assert hi.rho > lo.rho
        assert hi.T < lo.T


class TestPsi:
    def test_center_value(self, p51):
        assert psi(p51, 0.0, 0.0) == pytest.approx(0.25)

    def test_at_data_boundary(self, p51):
        # at x = -r the distance to the center is r + beta, so psi = rho1
        assert psi(p51, 0.0, -0.75) == pytest.approx(p51.rho1) == pytest.approx(1.5625)

    def test_hand_value(self, p51):
        assert psi(p51, 1.0, -0.5) == pytest.approx(1.0 - 0.95)

    def test_vectorized(self, p51):
        t = np.linspace(-0.5, 0.5, 7)
        x = np.linspace(-1.0, 0.0, 7)
        vals = psi(p51, t, x)
        assert vals.shape == (7,)
        assert vals[0] == pytest.approx(psi(p51, t[0], x[0]))


class TestRegions:
    def test_B_membership(self, p51):
        assert region_contains(p51, Region.B(), 0.0, -0.9)  # psi = 1.96 > 0.8875
        assert not region_contains(p51, Region.B(), 0.0, -0.2)  # psi = 0.49

    def test_B_boundary_abscissa(self, p51):
        xb = p51.y - math.sqrt(p51.rho)
        assert xb == pytest.approx(-0.44207, abs=1e-4)
        assert region_contains(p51, Region.B(), 0.0, xb - 1e-9)
        assert not region_contains(p51, Region.B(), 0.0, xb + 1e-9)

    def test_omega_T(self, p51):
        assert region_contains(p51, Region.omega_T(), 0.0, -0.9)
        assert not region_contains(p51, Region.omega_T(), 0.0, -0.5)
        # outside the time interval is outside the region
        assert not region_contains(p51, Region.omega_T(), 2 * p51.T, -0.9)

    def test_B1_equals_B(self, p51, rng):
        t = rng.uniform(-p51.T, p51.T, 500)
        x = rng.uniform(-1, 0, 500)
        np.testing.assert_array_equal(
            region_contains(p51, Region.B(), t, x),
            region_contains(p51, Region.B_kappa(1.0), t, x),
        )

    def test_kappa_nesting(self, p51, rng):
        t = rng.uniform(-p51.T, p51.T, 2000)
        x = rng.uniform(-1, 0, 2000)
        for k_small, k_big in [(0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]:
            inner = region_contains(p51, Region.B_kappa(k_big), t, x)
            outer = region_contains(p51, Region.B_kappa(k_small), t, x)
            assert np.all(outer[inner])  # B_kappa subset of B_kappa' for kappa' < kappa

    def test_omega_meets_B_and_B_is_proper(self, p51, rng):
        t = rng.uniform(-p51.T, p51.T, 4000)
        x = rng.uniform(-1, 0, 4000)
        in_b = region_contains(p51, Region.B(), t, x)
        in_om = region_contains(p51, Region.omega_T(), t, x)
        assert np.any(in_b & in_om)
        assert not np.all(in_b)

    def test_complement(self, p51, rng):
        t = rng.uniform(-p51.T, p51.T, 1000)
        x = rng.uniform(-1, 0, 1000)
        in_b = region_contains(p51, Region.B(), t, x)
        in_c = region_contains(p51, Region.complement_of_B(), t, x)
        assert np.all(in_b ^ in_c)

    def test_kappa_validation(self):
        with pytest.raises(ConfigurationError):
            Region.B_kappa(0.0)
        with pytest.raises(ConfigurationError):
            Region.B_kappa(1.5)


class TestPseudoconvexity:
    def test_standard_params_pass(self, p51):
        rep = check_pseudoconvexity(p51, 10000, rng_seed=0)
        assert rep.passed
        assert rep.hessian_max_dev <= 1e-12
        assert rep.grad_min_margin > 0.0

    def test_hand_point_margin(self, p51):
        # |grad psi|^2 - |dt psi|^2 at (t, x) = (0.5, -0.9)
        expected = 4.0 * (1.96 - 0.9025 * 0.25)
        assert grad_margin(p51, 0.5, -0.9) == pytest.approx(expected)
        assert expected > 0.0

    def test_degenerate_eps_fails(self, p51):
        p0 = WeightParams(
            rho0=p51.rho0, rho1=p51.rho1, rho=p51.rho, T=p51.T, y=p51.y,
            eps=0.0, delta=p51.delta, R=p51.R, r=p51.r,
        )
        rep = check_pseudoconvexity(p0, 200, rng_seed=0)
        assert not rep.passed
        assert "degenerate" in rep.message or rep.hessian_min_value <= 0.0

    def test_sample_count_validation(self, p51):
        with pytest.raises(ConfigurationError):
            check_pseudoconvexity(p51, 0)

    @given(
        r=st.floats(0.3, 0.8),
        beta=st.floats(0.2, 1.5),
        eps=st.floats(0.01, 0.5),
        frac=st.floats(0.05, 0.9),
    )
    @settings(max_examples=25, deadline=None)
    def test_any_valid_geometry_passes(self, r, beta, eps, frac):
        cfg = GeometryConfig(r=r, R=1.0, beta=beta, eps=eps, rho_fraction=frac)
        rep = check_pseudoconvexity(derive_params(cfg), 500, rng_seed=7)
        assert rep.passed


class TestGamma:
    def test_left_boundary_always_in(self, cfg_forward, p_forward):
        for t in [0.0, 0.5, 1.0, 1.7, 2.0]:
            assert gamma_contains(cfg_forward, p_forward.T, t, -1.0)

    def test_right_boundary_short_horizon(self):
        cfg = GeometryConfig(r=0.75, R=1.0, beta=0.5, eps=0.05,
                             T=0.85, time_interval="forward")
        # dist(0, omega) = 0.75 > T/2, so the right boundary never qualifies
        assert not gamma_contains(cfg, 0.843, 0.4215, 0.0)

    def test_right_boundary_long_horizon(self, cfg_forward):
        assert gamma_contains(cfg_forward, 2.0, 1.0, 0.0)  # 0.75 <= 1.0
        assert not gamma_contains(cfg_forward, 2.0, 0.1, 0.0)

    def test_symmetric_interval_rejected(self, cfg51):
        with pytest.raises(UsageError):
            gamma_contains(cfg51, 0.843, 0.0, -1.0)

    def test_non_boundary_point_rejected(self, cfg_forward):
        with pytest.raises(ConfigurationError):
            gamma_contains(cfg_forward, 2.0, 1.0, -0.5)
