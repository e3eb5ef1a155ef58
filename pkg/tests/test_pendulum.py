import math

import numpy as np
import pytest

from psloco.errors import DivergenceError, GeometryError, TorqueLimitError
from psloco.pendulum import (GRAVITY, LateralState, PathSurface, SagittalState,
                             StepParameters, closed_form_state,
                             integrate_trajectory, lateral_derivative,
                             omega_from_surface, orbital_energy, rk4_step,
                             sagittal_derivative, surface_height)


def make_params(omega=3.13, foot=(1.2, 0.0, 0.0), **kw):
    return StepParameters(omega=omega, foot=foot, surface=PathSurface(0.0, 1.0), **kw)


class TestSagittalDerivative:
    def test_apex_zero_torque(self):
        p = make_params()
        xd, xdd = sagittal_derivative(SagittalState(1.2, 0.6), p, 0.0)
        assert xd == 0.6
        assert xdd == 0.0

    def test_hand_evaluated_offset(self):
        p = make_params()
        _, xdd = sagittal_derivative(SagittalState(1.1, 0.6), p, 0.0)
        assert xdd == pytest.approx(-0.97969, abs=1e-12)

    def test_hand_evaluated_torque(self):
        # at the foot, only the torque term remains: -(omega^2 / (m g)) * tau
        expected = -(3.13 ** 2) / 9.81 * 3.0
        assert expected == pytest.approx(-2.9959938837920487, abs=1e-12)
        p = make_params()
        _, xdd = sagittal_derivative(SagittalState(1.2, 0.6), p, 3.0)
        assert xdd == pytest.approx(expected, abs=1e-12)

    def test_torque_outside_limits(self):
        p = make_params()
        with pytest.raises(TorqueLimitError):
            sagittal_derivative(SagittalState(1.2, 0.6), p, 3.5)


class TestLateralDerivative:
    def test_equilibrium(self):
        p = make_params(foot=(1.2, 0.1, 0.0))
        yd, ydd = lateral_derivative(LateralState(0.1, 0.2), p, 0.0)
        assert yd == 0.2
        assert ydd == 0.0

    def test_hand_evaluated(self):
        p = make_params(foot=(1.2, 0.0, 0.0))
        _, ydd = lateral_derivative(LateralState(0.1, 0.0), p, 0.0)
        assert ydd == pytest.approx(0.97969, abs=1e-12)

    def test_odd_symmetry(self):
        p = make_params(foot=(1.2, 0.0, 0.0))
        _, plus = lateral_derivative(LateralState(0.07, 0.0), p, 0.0)
        _, minus = lateral_derivative(LateralState(-0.07, 0.0), p, 0.0)
        assert plus == -minus

    def test_torque_outside_limits(self):
        p = make_params()
        with pytest.raises(TorqueLimitError):
            lateral_derivative(LateralState(0.0, 0.0), p, -3.01)


class TestClosedForm:
    def test_identity_at_zero_time(self):
        s = closed_form_state(1.0, 0.6, 1.2, 3.13, 0.0)
        assert (s.x, s.xdot) == (1.0, 0.6)

    def test_vanishing_first_term(self):
        omega, t = 3.13, 0.17
        s = closed_form_state(1.2, 0.6, 1.2, omega, t)
        assert s.x == pytest.approx(1.2 + 0.6 / omega * math.sinh(omega * t),
                                    abs=1e-15)

    def test_against_fine_rk4(self):
        # independent oracle: fixed-step 4th-order integration with dt=1e-5
        pos, vel = 1.0, 0.6
        dt = 1e-5
        for _ in range(10_000):
            pos, vel = rk4_step(pos, vel, 1.2, 3.13, 0.0, dt)
        s = closed_form_state(1.0, 0.6, 1.2, 3.13, 0.1)
        assert s.x == pytest.approx(pos, abs=1e-9)
        assert s.xdot == pytest.approx(vel, abs=1e-9)

    def test_time_reversal(self):
        s = closed_form_state(1.0, 0.6, 1.2, 3.13, 0.4)
        back = closed_form_state(s.x, s.xdot, 1.2, 3.13, -0.4)
        assert back.x == pytest.approx(1.0, abs=1e-9)
        assert back.xdot == pytest.approx(0.6, abs=1e-9)

    def test_energy_conserved_along_solution(self):
        e0 = orbital_energy(1.0, 0.6, 1.2, 3.13)
        for t in np.linspace(-0.8, 0.8, 33):
            s = closed_form_state(1.0, 0.6, 1.2, 3.13, float(t))
            e = orbital_energy(s.x, s.xdot, 1.2, 3.13)
            assert abs(e - e0) <= 1e-10 * max(1.0, abs(e0))

    def test_satisfies_ode_by_central_differences(self):
        h = 1e-5
        omega, foot = 3.13, 1.2
        for t in (0.0, 0.13, 0.31):
            sm = closed_form_state(1.0, 0.6, foot, omega, t - h)
            s0 = closed_form_state(1.0, 0.6, foot, omega, t)
            sp = closed_form_state(1.0, 0.6, foot, omega, t + h)
            xdot_fd = (sp.x - sm.x) / (2 * h)
            xddot_fd = (sp.x - 2 * s0.x + sm.x) / (h * h)
            assert xdot_fd == pytest.approx(s0.xdot, abs=1e-7)
            assert xddot_fd == pytest.approx(omega ** 2 * (s0.x - foot), abs=1e-4)


class TestIntegrateTrajectory:
    def test_zero_steps(self):
        p = make_params()
        traj = integrate_trajectory(SagittalState(1.0, 0.6), p, None, 1e-3, 0)
        assert traj.n_samples == 1
        assert traj.pos[0] == 1.0
        assert traj.vel[0] == 0.6

    def test_energy_conservation(self):
        p = make_params()
        traj = integrate_trajectory(SagittalState(1.0, 0.6), p, None, 1e-3, 600)
        e0 = orbital_energy(traj.pos[0], traj.vel[0], 1.2, p.omega)
        e1 = orbital_energy(traj.pos[-1], traj.vel[-1], 1.2, p.omega)
        assert abs(e1 - e0) <= 1e-8

    def test_matches_closed_form(self):
        p = make_params()
        n = 800
        traj = integrate_trajectory(SagittalState(1.05, 0.45), p, None, 1e-3, n)
        ref = closed_form_state(1.05, 0.45, 1.2, p.omega, n * 1e-3)
        assert traj.pos[-1] == pytest.approx(ref.x, abs=1e-6)
        assert traj.vel[-1] == pytest.approx(ref.xdot, abs=1e-6)

    def test_fourth_order_convergence(self):
        p = make_params()
        horizon = 0.512
        errs = []
        for dt in (4e-3, 2e-3, 1e-3):
            n = int(round(horizon / dt))
            traj = integrate_trajectory(SagittalState(1.0, 0.6), p, None, dt, n)
            ref = closed_form_state(1.0, 0.6, 1.2, p.omega, horizon)
            errs.append(abs(traj.pos[-1] - ref.x))
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.35)
        assert errs[1] / errs[2] == pytest.approx(16.0, rel=0.35)

    def test_time_reversal_round_trip(self):
        pos, vel = 1.0, 0.6
        for _ in range(300):
            pos, vel = rk4_step(pos, vel, 1.2, 3.13, 0.0, 1e-3)
        for _ in range(300):
            pos, vel = rk4_step(pos, vel, 1.2, 3.13, 0.0, -1e-3)
        assert pos == pytest.approx(1.0, abs=1e-9)
        assert vel == pytest.approx(0.6, abs=1e-9)

    def test_const_accel_scheme_is_less_accurate_but_close(self):
        p = make_params()
        traj = integrate_trajectory(SagittalState(1.0, 0.6), p, None, 1e-3, 200,
                                    scheme="const_accel")
        ref = closed_form_state(1.0, 0.6, 1.2, p.omega, 0.2)
        assert traj.pos[-1] == pytest.approx(ref.x, abs=1e-3)

    def test_schedule_sequence_and_callable(self):
        p = make_params()
        seq = [0.5] * 10
        t1 = integrate_trajectory(SagittalState(1.0, 0.6), p, seq, 1e-3, 10)
        t2 = integrate_trajectory(SagittalState(1.0, 0.6), p,
                                  lambda k, x, v: 0.5, 1e-3, 10)
        assert t1.pos[-1] == t2.pos[-1]
        assert np.all(t1.tau[:-1] == 0.5)

    def test_divergence_error_names_step(self):
        p = make_params()
        with pytest.raises(DivergenceError) as err:
            integrate_trajectory(SagittalState(1.0, 0.6), p, None, 1e3, 50)
        assert err.value.step >= 1

    def test_lateral_axis(self):
        p = make_params(foot=(1.2, 0.1, 0.0))
        traj = integrate_trajectory(LateralState(0.0, 0.2), p, None, 1e-3, 100,
                                    axis="lateral")
        ref = closed_form_state(0.0, 0.2, 0.1, p.omega, 0.1)
        assert traj.pos[-1] == pytest.approx(ref.x, abs=1e-8)


class TestSurfaces:
    def test_flat_surface(self):
        s = PathSurface(0.0, 0.9)
        for x in (-1.0, 0.0, 2.5):
            assert surface_height(s, x) == 0.9

    def test_identity_slope(self):
        assert surface_height(PathSurface(1.0, 0.0), 0.3) == pytest.approx(0.3)

    def test_ten_degree_tilt(self):
        s = PathSurface(math.tan(math.radians(10.0)), 0.0)
        assert surface_height(s, 1.0) == pytest.approx(0.17633, abs=1e-5)

    def test_omega_flat_unit_height(self):
        omega = omega_from_surface(PathSurface(0.0, 1.0), (0.7, 0.0, 0.0))
        assert omega == pytest.approx(3.1320919526731648, abs=1e-12)
        assert omega == pytest.approx(3.13, abs=0.01)

    def test_omega_unit_z_apex(self):
        omega = omega_from_surface(PathSurface(0.0, GRAVITY), (0.0, 0.0, 0.0))
        assert omega == pytest.approx(1.0, abs=1e-12)

    def test_omega_tilted(self):
        omega = omega_from_surface(PathSurface(0.5, 0.5), (1.0, 0.0, 0.0))
        assert omega == pytest.approx(math.sqrt(9.81), abs=1e-12)

    def test_omega_geometry_error(self):
        with pytest.raises(GeometryError):
            omega_from_surface(PathSurface(0.0, 0.5), (0.0, 0.0, 0.5))


class TestValidation:
    def test_step_parameters_rejects_bad_omega(self):
        with pytest.raises(ValueError):
            StepParameters(omega=-1.0, foot=(0, 0, 0), surface=PathSurface(0, 1))

    def test_step_parameters_rejects_bad_limits(self):
        with pytest.raises(ValueError):
            StepParameters(omega=3.0, foot=(0, 0, 0), surface=PathSurface(0, 1),
                           tau_y_limits=(3.0, -3.0))

    def test_states_must_be_finite(self):
        with pytest.raises(ValueError):
            SagittalState(math.nan, 0.0)
        with pytest.raises(ValueError):
            LateralState(0.0, math.inf)
