import math

import numpy as np
import pytest

from psloco.errors import (InsufficientDataError, ManifoldDomainError,
                           ParameterError)
from psloco.manifold import (BundleSpec, ManifoldDescriptor, bundle_contains,
                             sensitivity_norm, sigma_apex, sigma_general, zeta)
from psloco.pendulum import SagittalState, closed_form_state

DESC = ManifoldDescriptor(xdot_apex=0.6, x_foot=1.2, omega=3.13)


class TestSigmaGeneral:
    def test_zero_at_initial_point(self):
        assert sigma_general(SagittalState(1.05, 0.82), 1.05, 0.82, 1.2, 3.13) == 0.0

    def test_reduces_to_apex_form(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            x = rng.uniform(0.7, 1.7)
            xd = rng.uniform(0.1, 1.5)
            s = SagittalState(x, xd)
            general = sigma_general(s, DESC.x_foot, DESC.xdot_apex,
                                    DESC.x_foot, DESC.omega)
            apex = sigma_apex(s, DESC)
            assert abs(general - apex) <= 1e-12 * max(abs(general), abs(apex), 1e-9)

    def test_zero_along_closed_form_trajectory(self):
        x0, xd0 = 0.95, 0.8
        for t in np.linspace(-0.5, 0.5, 41):
            s = closed_form_state(x0, xd0, 1.2, 3.13, float(t))
            val = sigma_general(s, x0, xd0, 1.2, 3.13)
            assert abs(val) <= 1e-9


class TestSigmaApex:
    def test_zero_at_apex(self):
        assert sigma_apex(SagittalState(1.2, 0.6), DESC) == 0.0

    def test_hand_evaluated(self):
        # (0.6^2 / 3.13^2) * (0.7^2 - 0.6^2) computed by hand
        expected = 0.36 * 0.13 / (3.13 ** 2)
        assert expected == pytest.approx(0.00477702, abs=1e-8)
        assert sigma_apex(SagittalState(1.2, 0.7), DESC) == pytest.approx(
            expected, abs=1e-15)

    def test_sign_convention(self):
        fast = SagittalState(1.25, 0.9)   # faster than the manifold
        slow = SagittalState(1.25, 0.4)
        assert sigma_apex(fast, DESC) > 0
        assert sigma_apex(slow, DESC) < 0

    def test_quadratic_scaling_in_apex_velocity(self):
        lam = 1.7
        rel = 0.08
        bracket = 0.21  # xd^2 - xdot_apex^2 - omega^2 rel^2 held fixed
        for scale in (1.0, lam):
            va = 0.6 * scale
            xd = math.sqrt(bracket + va ** 2 + 3.13 ** 2 * rel ** 2)
            desc = ManifoldDescriptor(va, 1.2, 3.13)
            val = sigma_apex(SagittalState(1.2 + rel, xd), desc)
            if scale == 1.0:
                base = val
        assert val == pytest.approx(lam ** 2 * base, rel=1e-12)


class TestZeta:
    def test_initial_value(self):
        v = zeta(SagittalState(1.0, 0.8), 1.0, 0.8, 1.2, 3.13, zeta0=2.5)
        assert v == pytest.approx(2.5, abs=1e-12)

    def test_vanishes_at_foot(self):
        assert zeta(SagittalState(1.2, 0.9), 1.0, 0.8, 1.2, 3.13) == 0.0

    def test_rejects_zero_reference_velocity(self):
        with pytest.raises(ManifoldDomainError):
            zeta(SagittalState(1.0, 0.5), 1.0, 0.0, 1.2, 3.13)

    def test_rejects_sign_flip(self):
        with pytest.raises(ManifoldDomainError):
            zeta(SagittalState(1.0, -0.5), 1.0, 0.8, 1.2, 3.13)

    def test_rejects_reference_on_foot(self):
        with pytest.raises(ManifoldDomainError):
            zeta(SagittalState(1.0, 0.5), 1.2, 0.8, 1.2, 3.13)

    def test_gradient_orthogonal_to_sigma(self):
        # central-difference gradients of the two fields at a generic point
        x0, xd0 = 1.45, 0.9
        pt = (1.1, 0.7)

        def grad(f, x, xd, h=2e-6):
            return np.array([
                (f(x + h, xd) - f(x - h, xd)) / (2 * h),
                (f(x, xd + h) - f(x, xd - h)) / (2 * h),
            ])

        gs = grad(lambda x, xd: sigma_apex(SagittalState(x, xd), DESC), *pt)
        gz = grad(lambda x, xd: zeta(SagittalState(x, xd), x0, xd0,
                                     DESC.x_foot, DESC.omega), *pt)
        cosine = abs(gs @ gz) / (np.linalg.norm(gs) * np.linalg.norm(gz))
        assert cosine <= 1e-6


class TestSensitivityNorm:
    def test_constant_integrand(self):
        zs = np.linspace(0.0, 2.0, 50)
        samples = [(z, -0.3) for z in zs]
        assert sensitivity_norm(samples, 0.0, 2.0) == pytest.approx(0.3, abs=1e-12)

    def test_zero(self):
        samples = [(z, 0.0) for z in np.linspace(0.0, 1.0, 20)]
        assert sensitivity_norm(samples, 0.0, 1.0) == 0.0

    def test_linear_ramp(self):
        c = 0.8
        zs = np.linspace(0.0, 1.0, 1001)
        samples = [(z, c * z) for z in zs]
        assert sensitivity_norm(samples, 0.0, 1.0) == pytest.approx(
            c / math.sqrt(3.0), rel=1e-6)

    def test_subinterval(self):
        zs = np.linspace(0.0, 4.0, 400)
        samples = [(z, 1.5) for z in zs]
        assert sensitivity_norm(samples, 1.0, 3.0) == pytest.approx(1.5, abs=1e-12)

    def test_single_sample_rejected(self):
        with pytest.raises(InsufficientDataError):
            sensitivity_norm([(0.0, 1.0)], 0.0, 1.0)

    def test_coverage_required(self):
        samples = [(z, 1.0) for z in np.linspace(0.0, 0.5, 10)]
        with pytest.raises(InsufficientDataError):
            sensitivity_norm(samples, 0.0, 1.0)

    def test_bad_interval(self):
        samples = [(z, 1.0) for z in np.linspace(0.0, 1.0, 10)]
        with pytest.raises(ParameterError):
            sensitivity_norm(samples, 1.0, 1.0)


class TestBundle:
    def test_zero_inside(self):
        assert bundle_contains(0.0, BundleSpec(1e-3))

    def test_boundary_inclusive(self):
        assert bundle_contains(1e-3, BundleSpec(1e-3))
        assert bundle_contains(-1e-3, BundleSpec(1e-3))

    def test_outside(self):
        assert not bundle_contains(1.1e-3, BundleSpec(1e-3))

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            BundleSpec(0.0)


class TestConservation:
    def test_sigma_zero_along_apex_trajectory(self):
        # tau = 0 from apex initial conditions keeps sigma at zero
        scale = DESC.sigma_scale
        for t in np.linspace(-0.6, 0.6, 121):
            s = closed_form_state(DESC.x_foot, DESC.xdot_apex, DESC.x_foot,
                                  DESC.omega, float(t))
            assert abs(sigma_apex(s, DESC)) <= 1e-8 * scale
