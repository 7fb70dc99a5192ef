"""
Tests for the method-of-steps engine.
"""

import numpy as np
import pytest

from delayguard.errors import DomainError, StepUnderflowError
from delayguard.steps import ScalarTrajectory, StepControl, VectorTrajectory, method_of_steps


def _delayed_growth(t, y, lagged):
    return lagged


def _one(t):
    return np.array([1.0])


class TestStepControl:
    """Test cases for StepControl."""

    def test_defaults(self):
        """Test default tolerances and the τ/64 step cap."""
        ctrl = StepControl()
        assert ctrl.rtol == 1e-9
        assert ctrl.atol == 1e-12
        assert ctrl.resolved_max_step(2.0) == pytest.approx(2.0 / 64)

    def test_explicit_max_step(self):
        """Test an explicit max step wins."""
        assert StepControl(max_step=0.1).resolved_max_step(2.0) == 0.1

    def test_validation(self):
        """Test tolerances must be positive."""
        with pytest.raises(ValueError):
            StepControl(rtol=0.0)


class TestMethodOfSteps:
    """Test cases for method_of_steps."""

    def test_polynomial_solution(self):
        """Test u' = u(t-1), u = 1 on [-1, 0]: u = 1 + t, then 2 + (t² - 1)/2."""
        traj = method_of_steps(_delayed_growth, _one, 1, 1.0, 2.0, StepControl(), ScalarTrajectory)
        assert traj(0.5) == pytest.approx(1.5, abs=1e-8)
        assert traj(1.0) == pytest.approx(2.0, abs=1e-8)
        assert traj(2.0) == pytest.approx(3.5, abs=1e-8)
        assert traj.derivative(1.5) == pytest.approx(1.5, abs=1e-6)
        assert not traj.blown_up

    def test_breakpoints_are_mesh_points(self):
        """Test every multiple of τ is a mesh point."""
        traj = method_of_steps(_delayed_growth, _one, 1, 0.5, 2.0, StepControl(), ScalarTrajectory)
        mesh = traj.mesh
        for point in traj.breakpoints:
            assert np.min(np.abs(mesh - point)) == 0.0
        assert traj.last_time == 2.0

    def test_history_region(self):
        """Test values on [-τ, 0] come from the history."""
        traj = method_of_steps(_delayed_growth, lambda t: np.array([2.0 + t]), 1, 1.0, 1.5,
                               StepControl(), ScalarTrajectory)
        assert traj(-0.5) == 1.5
        assert traj(0.0) == 2.0

    def test_domain(self):
        """Test evaluation beyond the integrated range fails."""
        traj = method_of_steps(_delayed_growth, _one, 1, 1.0, 1.5, StepControl(), ScalarTrajectory)
        with pytest.raises(DomainError):
            traj(2.0)
        with pytest.raises(DomainError):
            traj(-1.5)

    def test_vector_rotation(self):
        """Test a rotation keeps the norm constant."""
        def rhs(t, y, lagged):
            return np.array([y[1], -y[0]])

        traj = method_of_steps(rhs, lambda t: np.array([1.0, 0.0]), 2, 1.0, 6.0, StepControl(), VectorTrajectory)
        for t in np.linspace(0.0, 6.0, 13):
            assert np.linalg.norm(traj(t)) == pytest.approx(1.0, abs=1e-7)
        assert np.allclose(traj(np.pi / 2), [0.0, -1.0], atol=1e-7)

    def test_blowup_threshold(self):
        """Test fast delayed growth stops at the overflow threshold."""
        def rhs(t, y, lagged):
            return lagged ** 2

        traj = method_of_steps(rhs, lambda t: np.array([2.0]), 1, 1.0, 20.0, StepControl(), ScalarTrajectory)
        assert traj.blown_up
        assert traj.blowup_time is not None
        assert traj.last_time < 20.0

    def test_singularity_stops_before_it(self):
        """Test u' = u², u(0) = 1 ends before its pole at t = 1."""
        def rhs(t, y, lagged):
            return y ** 2

        try:
            traj = method_of_steps(rhs, _one, 1, 5.0, 2.0, StepControl(), ScalarTrajectory)
            assert traj.blown_up
        except StepUnderflowError as e:
            traj = e.trajectory
            assert traj is not None
        assert 0.9 < traj.last_time <= 1.0 + 1e-6

    def test_clamp_nonnegative(self):
        """Test negative values are clamped and counted."""
        def rhs(t, y, lagged):
            return np.array([-10.0])

        traj = method_of_steps(rhs, lambda t: np.array([0.1]), 1, 1.0, 1.5, StepControl(), ScalarTrajectory,
                               clamp_nonnegative=True)
        assert traj.clamped > 0
        assert all(value[0] >= 0.0 for segment in traj.segments for value in segment.values)

    def test_clamp_continues_from_clamped_state(self):
        """Test y' = t - 1/2 from 0.1 stays at 0 until t = 1/2 and reaches 1/8 at t = 1."""
        def rhs(t, y, lagged):
            return np.array([t - 0.5])

        history = lambda t: np.array([0.1])
        clamped = method_of_steps(rhs, history, 1, 1.0, 1.0, StepControl(), ScalarTrajectory, clamp_nonnegative=True)
        free = method_of_steps(rhs, history, 1, 1.0, 1.0, StepControl(), ScalarTrajectory)
        assert clamped.clamped > 0
        assert clamped(1.0) == pytest.approx(0.125, abs=5e-4)
        assert free(1.0) == pytest.approx(0.1, abs=1e-8)

    def test_sample(self):
        """Test sampling on a grid."""
        traj = method_of_steps(_delayed_growth, _one, 1, 1.0, 2.0, StepControl(), ScalarTrajectory)
        values = traj.sample([0.0, 1.0, 2.0])
        assert values.shape == (3, 1)
        assert np.allclose(values[:, 0], [1.0, 2.0, 3.5], atol=1e-8)
