import math

import numpy as np
import pytest

from psloco.errors import (DegenerateTransitionError, GeometryError,
                           NonConvergenceError, ParameterError)
from psloco.manifold import sigma_apex
from psloco.pendulum import PathSurface, SagittalState, StepParameters, rk4_step
from psloco.planner import (ApexKeyframe, TerrainSpec, TerrainStep,
                            find_transition, fit_multicontact, generate_nominal,
                            generate_terrain, keyframes_for_terrain,
                            lateral_foot_search, progression_map, time_to_apex)


def flat_terrain(feet_x, apex_height=1.0):
    steps = []
    for k, fx in enumerate(feet_x):
        y = 0.1 if k % 2 == 0 else -0.1
        steps.append(TerrainStep((fx, y, 0.0), 0.0,
                                 PathSurface(0.0, apex_height)))
    return TerrainSpec(tuple(steps))


def flat_plan(feet_x, velocities=None, apex_height=1.0, **kw):
    terrain = flat_terrain(feet_x, apex_height)
    velocities = velocities or [0.6] * len(feet_x)
    kfs = [ApexKeyframe(v, apex_height) for v in velocities]
    return generate_nominal(terrain, kfs, **kw)


class TestGenerateNominal:
    def test_apex_anchoring(self):
        (m,) = flat_plan([1.2])
        assert m.xdot_at(1.2) == pytest.approx(0.6, abs=1e-12)

    def test_sigma_zero_everywhere(self):
        manifolds = flat_plan([0.0, 0.5, 1.0])
        for m in manifolds:
            scale = m.descriptor.sigma_scale
            sig = np.abs([sigma_apex(SagittalState(x, v), m.descriptor)
                          for x, v in zip(m.xs, m.xdots)])
            assert sig.max() <= 1e-8 * scale

    def test_manifold_matches_quadratic_velocity_law(self):
        (m,) = flat_plan([0.7])
        d = m.descriptor
        expected = d.xdot_apex ** 2 + d.omega ** 2 * (m.xs - d.x_foot) ** 2
        assert np.max(np.abs(m.xdots ** 2 - expected)) <= 1e-8

    def test_valley_profiles(self):
        manifolds = flat_plan(np.arange(7) * 0.5)
        for m in manifolds:
            i_min = int(np.argmin(m.xdots))
            assert m.xs[i_min] == pytest.approx(m.descriptor.x_foot, abs=2e-3)

    def test_spline_reproduces_knots(self):
        (m,) = flat_plan([0.3])
        resid = np.abs(m.v2_at(m.xs) - m.xdots ** 2)
        assert resid.max() <= 1e-9

    def test_keyframe_count_mismatch(self):
        terrain = flat_terrain([0.0, 0.5])
        with pytest.raises(ParameterError):
            generate_nominal(terrain, [ApexKeyframe(0.6, 1.0)])

    def test_surface_below_foot(self):
        steps = (TerrainStep((0.0, 0.1, 0.5), 0.0, PathSurface(0.0, 0.2)),)
        with pytest.raises(GeometryError):
            generate_nominal(TerrainSpec(steps), [ApexKeyframe(0.6, 1.0)])


class TestFindTransition:
    def test_symmetric_midpoint(self):
        m1, m2 = flat_plan([0.0, 0.5])
        tp = find_transition(m1, m2)
        assert tp.x_trans == pytest.approx(0.25, abs=1e-12)
        assert tp.xdot_trans > 0.6

    def test_equal_omega_analytic_oracle(self):
        rng = np.random.default_rng(3)
        omega = math.sqrt(9.81)  # flat surfaces, unit apex height
        for _ in range(30):
            v1 = rng.uniform(0.4, 0.8)
            v2 = rng.uniform(0.4, 0.8)
            gap = rng.uniform(0.35, 0.6)
            m1, m2 = flat_plan([0.0, gap], velocities=[v1, v2])
            tp = find_transition(m1, m2)
            x_star = gap / 2 + (v1 ** 2 - v2 ** 2) / (2 * omega ** 2 * (0.0 - gap))
            assert tp.x_trans == pytest.approx(x_star, abs=1e-6)

    def test_transition_on_both_manifolds(self):
        m1, m2 = flat_plan([0.0, 0.5], velocities=[0.55, 0.72])
        tp = find_transition(m1, m2)
        s = SagittalState(tp.x_trans, tp.xdot_trans)
        for m in (m1, m2):
            scale = m.descriptor.sigma_scale
            assert abs(sigma_apex(s, m.descriptor)) <= 1e-6 * scale

    def test_degenerate(self):
        (m1,) = flat_plan([0.0])
        with pytest.raises(DegenerateTransitionError):
            find_transition(m1, m1)


class TestLateralFootSearch:
    def params(self, omega=3.13, y_guess=0.1):
        return StepParameters(omega=omega, foot=(0.0, y_guess, 0.0),
                              surface=PathSurface(0.0, 1.0))

    def lateral_apex_velocity(self, y0, yd0, y_foot, omega, t_apex, dt=1e-3):
        pos, vel = y0, yd0
        n = int(t_apex / dt)
        for _ in range(n):
            pos, vel = rk4_step(pos, vel, y_foot, omega, 0.0, dt)
        rem = t_apex - n * dt
        if rem > 0:
            pos, vel = rk4_step(pos, vel, y_foot, omega, 0.0, rem)
        return pos, vel

    def test_immediate_convergence_at_equilibrium(self):
        p = self.params(y_guess=0.1)
        y = lateral_foot_search(0.1, 0.0, p, (-1.0, 1.0), t_apex=0.4)
        assert y == 0.1

    def test_converges_and_nulls_apex_velocity(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            y0 = rng.uniform(-0.1, 0.1)
            yd0 = rng.uniform(-0.3, 0.3)
            t_apex = rng.uniform(0.2, 0.5)
            omega = rng.uniform(2.8, 3.5)
            p = self.params(omega=omega, y_guess=y0 + 0.05)
            y_foot = lateral_foot_search(y0, yd0, p, (-1.5, 1.5),
                                         t_apex=t_apex, ydot_tol=1e-4)
            _, vel = self.lateral_apex_velocity(y0, yd0, y_foot, omega, t_apex)
            assert abs(vel) <= 1e-4

    def test_clamps_with_warning_and_reports_best(self):
        p = self.params(y_guess=0.02)
        with pytest.warns(RuntimeWarning):
            with pytest.raises(NonConvergenceError) as err:
                lateral_foot_search(0.0, 0.3, p, (0.0, 0.05), t_apex=0.3)
        assert err.value.best == pytest.approx(0.05, abs=1e-12)

    def test_wider_offset_gives_larger_apex_acceleration(self):
        omega, t_apex = 3.13, 0.35
        accs = []
        for y_foot in (0.08, 0.2):
            pos, _ = self.lateral_apex_velocity(0.0, 0.0, y_foot, omega, t_apex)
            accs.append(abs(omega ** 2 * (pos - y_foot)))
        assert accs[1] > accs[0]


class TestQuintic:
    def test_boundary_residuals(self):
        seg = fit_multicontact(((0.1, 0.5, -1.2), (0.4, 0.7, 2.0)),
                               duration_fraction=0.25, step_duration=0.8)
        assert seg.duration == pytest.approx(0.2, abs=1e-15)
        assert float(seg.position(0.0)) == pytest.approx(0.1, abs=1e-9)
        assert float(seg.velocity(0.0)) == pytest.approx(0.5, abs=1e-9)
        assert float(seg.acceleration(0.0)) == pytest.approx(-1.2, abs=1e-9)
        assert float(seg.position(seg.duration)) == pytest.approx(0.4, abs=1e-9)
        assert float(seg.velocity(seg.duration)) == pytest.approx(0.7, abs=1e-9)
        assert float(seg.acceleration(seg.duration)) == pytest.approx(2.0, abs=1e-9)

    def test_identical_boundary_is_constant(self):
        seg = fit_multicontact(((0.3, 0.0, 0.0), (0.3, 0.0, 0.0)),
                               duration_fraction=0.5, step_duration=1.0)
        for t in np.linspace(0, seg.duration, 7):
            assert float(seg.position(t)) == pytest.approx(0.3, abs=1e-12)

    def test_vector_boundaries(self):
        p0 = np.array([0.0, 1.0])
        p1 = np.array([0.5, 2.0])
        seg = fit_multicontact(((p0, 0 * p0, 0 * p0), (p1, 0 * p1, 0 * p1)),
                               duration_fraction=0.25, step_duration=1.0)
        np.testing.assert_allclose(seg.position(seg.duration), p1, atol=1e-9)

    def test_degenerate_rejected(self):
        with pytest.raises(ParameterError):
            fit_multicontact(((0, 0, 0), (1, 0, 0)), duration_fraction=0.0,
                             step_duration=1.0)
        with pytest.raises(ParameterError):
            fit_multicontact(((0, 0, 0), (1, 0, 0)), duration_fraction=0.25,
                             step_duration=0.0)


class TestGenerateTerrain:
    def test_height_deltas_within_bounds(self):
        terrain = generate_terrain(100, 0.1, 0.3, math.radians(10), seed=5)
        heights = [s.foot[2] for s in terrain.steps]
        deltas = np.abs(np.diff(heights))
        assert np.all(deltas >= 0.1) and np.all(deltas <= 0.3)

    def test_deterministic(self):
        t1 = generate_terrain(20, 0.1, 0.3, 0.1, seed=42)
        t2 = generate_terrain(20, 0.1, 0.3, 0.1, seed=42)
        assert t1 == t2

    def test_histogram_roughly_uniform(self):
        terrain = generate_terrain(400, 0.1, 0.3, 0.0, seed=9)
        deltas = np.abs(np.diff([s.foot[2] for s in terrain.steps]))
        counts, _ = np.histogram(deltas, bins=4, range=(0.1, 0.3))
        expected = len(deltas) / 4
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < 11.34  # 99% quantile, 3 degrees of freedom

    def test_invalid_bounds(self):
        with pytest.raises(ParameterError):
            generate_terrain(10, 0.3, 0.1, 0.0, seed=1)
        with pytest.raises(ParameterError):
            generate_terrain(0, 0.1, 0.3, 0.0, seed=1)

    def test_surfaces_realize_apex_height(self):
        terrain = generate_terrain(10, 0.1, 0.3, math.radians(10), seed=2,
                                   apex_height=1.0)
        for s in terrain.steps:
            z_apex = s.surface.a * s.foot[0] + s.surface.b - s.foot[2]
            assert z_apex == pytest.approx(1.0, abs=1e-12)


class TestProgressionMap:
    def flat_step(self, foot_x, y=0.0):
        return StepParameters(omega=math.sqrt(9.81), foot=(foot_x, y, 0.0),
                              surface=PathSurface(0.0, 1.0))

    def test_nominal_plan_is_reproduced(self):
        cur, nxt = self.flat_step(0.0), self.flat_step(0.5)
        planned = ApexKeyframe(0.7, 1.0)
        out = progression_map(ApexKeyframe(0.6, 1.0), None, cur, nxt, planned)
        assert out.xdot_apex == pytest.approx(0.7, abs=1e-6)
        assert out.z_apex == pytest.approx(1.0, abs=1e-12)

    def test_mirror_symmetric_steps_preserve_velocity(self):
        cur, nxt = self.flat_step(0.0), self.flat_step(0.5)
        out = progression_map(ApexKeyframe(0.6, 1.0), None, cur, nxt,
                              ApexKeyframe(0.6, 1.0))
        assert out.xdot_apex == pytest.approx(0.6, abs=1e-6)

    def test_flat_ground_map_is_velocity_preserving(self):
        feet = [0.0, 0.45, 0.9]
        v = 0.55
        for q in range(2):
            cur, nxt = self.flat_step(feet[q]), self.flat_step(feet[q + 1])
            out = progression_map(ApexKeyframe(v, 1.0), None, cur, nxt,
                                  ApexKeyframe(v, 1.0))
            v = out.xdot_apex
        assert v == pytest.approx(0.55, abs=1e-5)


class TestKeyframeRule:
    def test_velocity_tracks_height_change(self):
        terrain = generate_terrain(5, 0.1, 0.3, 0.0, seed=3)
        kfs = keyframes_for_terrain(terrain)
        heights = [s.foot[2] for s in terrain.steps]
        for q in range(1, 5):
            dh = heights[q] - heights[q - 1]
            expected = min(max(0.6 - 0.2 * dh, 0.4), 0.8)
            assert kfs[q].xdot_apex == pytest.approx(expected, abs=1e-12)


class TestTimeHelpers:
    def test_time_to_apex_matches_simulation(self):
        omega = 3.13
        t = time_to_apex(1.0, 0.8, 1.2, omega)
        pos, vel = 1.0, 0.8
        n = int(t / 1e-5)
        for _ in range(n):
            pos, vel = rk4_step(pos, vel, 1.2, omega, 0.0, 1e-5)
        assert pos == pytest.approx(1.2, abs=1e-4)

    def test_time_to_apex_unreachable(self):
        with pytest.raises(GeometryError):
            time_to_apex(1.0, 0.1, 1.2, 3.13)  # below the asymptote
