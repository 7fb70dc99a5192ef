"""
Tests for the problem data model.

Covers coefficient wrappers, the sharp γ extraction, the nonlinearity
catalog and the sampled invariant checks of ProblemSpec.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayguard.errors import InvalidInputError
from delayguard.model import (
    HistoryFn,
    MatrixFn,
    NonlinearMap,
    ProblemSpec,
    TimeScalarFn,
    VectorFn,
    gamma_from_matrix,
    make_nonlinearity,
    norm,
    verify_growth_majorant,
)


def _problem(**changes) -> ProblemSpec:
    alpha = TimeScalarFn.constant(1.0)
    fields = dict(
        n=2,
        tau=1.0,
        p=2.0,
        horizon=3.0,
        A=MatrixFn.constant([[-1.0, 0.0], [0.0, -2.0]]),
        G=make_nonlinearity("sharp_power", alpha, 2.0, 2, seed=3),
        f=VectorFn.zero(2),
        beta=TimeScalarFn.constant(0.0),
        v=HistoryFn(2, lambda t: [1.0, 0.5]),
    )
    fields.update(changes)
    return ProblemSpec(**fields)


class TestTimeScalarFn:
    """Test cases for TimeScalarFn."""

    def test_constant_has_exact_antiderivative(self):
        """Test constant functions integrate exactly."""
        fn = TimeScalarFn.constant(3.0)
        assert fn(7.0) == 3.0
        assert fn.antiderivative(2.0) == 6.0
        assert fn.constant_value == 3.0

    def test_scaled(self):
        """Test scaling keeps the antiderivative consistent."""
        fn = TimeScalarFn.constant(2.0).scaled(1.5)
        assert fn(0.0) == 3.0
        assert fn.antiderivative(2.0) == 6.0
        assert fn.antiderivative_mismatch([0.0, 1.0, 2.0]) < 1e-8

    def test_vanishes_on(self):
        """Test zero detection on an interval."""
        assert TimeScalarFn.constant(0.0).vanishes_on(0.0, 10.0)
        assert not TimeScalarFn.constant(1e-300).vanishes_on(0.0, 10.0)
        bump = TimeScalarFn(lambda t: max(0.0, t - 5.0))
        assert bump.vanishes_on(0.0, 5.0)
        assert not bump.vanishes_on(0.0, 6.0)


class TestGammaFromMatrix:
    """Test cases for the logarithmic-norm extraction."""

    def test_symmetric_part(self):
        """Test γ is the top eigenvalue of the symmetric part."""
        A = MatrixFn.constant([[1.0, 2.0], [0.0, 1.0]])
        assert gamma_from_matrix(A, 0.0) == pytest.approx(2.0)

    def test_skew_matrix_has_zero_gamma(self):
        """Test a rotation generator is neutral."""
        A = MatrixFn.constant([[0.0, 1.0], [-1.0, 0.0]])
        assert gamma_from_matrix(A, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_sharpness(self):
        """Test ⟨u, Au⟩ ≤ γ‖u‖² with equality on the top eigenvector."""
        m = np.array([[-1.0, 3.0], [1.0, -4.0]])
        gamma = gamma_from_matrix(MatrixFn.constant(m), 0.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = rng.standard_normal(2)
            assert u @ m @ u <= gamma * (u @ u) + 1e-12
        vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
        top = vecs[:, -1]
        assert top @ m @ top == pytest.approx(gamma)

    def test_non_finite_entries(self):
        """Test non-finite matrices are rejected."""
        A = MatrixFn.constant([[math.inf]])
        with pytest.raises(InvalidInputError):
            gamma_from_matrix(A, 0.0)

    def test_non_square(self):
        """Test MatrixFn.constant rejects non-square input."""
        with pytest.raises(InvalidInputError):
            MatrixFn.constant([[1.0, 2.0]])


class TestNonlinearities:
    """Test cases for the nonlinearity catalog."""

    @pytest.mark.parametrize("name", ["sharp_power", "soft_power"])
    def test_power_maps_attain_majorant(self, name):
        """Test ‖G(t,u)‖ = α‖u‖^p for the power maps."""
        G = make_nonlinearity(name, TimeScalarFn.constant(0.5), 3.0, 3, seed=11)
        u = np.array([0.3, -1.2, 0.4])
        assert norm(G(0.0, u)) == pytest.approx(0.5 * norm(u) ** 3)

    def test_sharp_power_is_rotated(self):
        """Test sharp_power applies a seeded orthogonal factor."""
        alpha = TimeScalarFn.constant(1.0)
        u = np.array([1.0, 0.0, 0.0])
        first = make_nonlinearity("sharp_power", alpha, 2.0, 3, seed=1)(0.0, u)
        again = make_nonlinearity("sharp_power", alpha, 2.0, 3, seed=1)(0.0, u)
        other = make_nonlinearity("sharp_power", alpha, 2.0, 3, seed=2)(0.0, u)
        assert np.array_equal(first, again)
        assert not np.allclose(first, other)

    def test_zero(self):
        """Test the zero map."""
        G = make_nonlinearity("zero", TimeScalarFn.constant(0.0), 2.0, 2)
        assert np.array_equal(G(1.0, [3.0, 4.0]), np.zeros(2))

    def test_invalid_rotation(self):
        """Test a non-orthogonal rotation is rejected."""
        with pytest.raises(InvalidInputError):
            make_nonlinearity("sharp_power", TimeScalarFn.constant(1.0), 2.0, 2, rotation=[[2.0, 0.0], [0.0, 1.0]])

    def test_unknown_name(self):
        """Test unknown catalog names are rejected."""
        with pytest.raises(InvalidInputError):
            make_nonlinearity("cubic", TimeScalarFn.constant(1.0), 2.0, 1)

    def test_exponent_must_exceed_one(self):
        """Test p ≤ 1 is rejected."""
        with pytest.raises(InvalidInputError):
            make_nonlinearity("zero", TimeScalarFn.constant(1.0), 1.0, 1)


class TestGrowthMajorant:
    """Test cases for verify_growth_majorant."""

    def test_catalog_map_passes(self):
        """Test a catalog map satisfies its declared majorant."""
        G = make_nonlinearity("sharp_power", TimeScalarFn.constant(2.0), 2.0, 3, seed=5)
        report = verify_growth_majorant(G, 200, 2.0, seed=0, dimension=3)
        assert not report.violated
        assert report.max_ratio == pytest.approx(1.0)
        assert report.samples == 200

    def test_violation_detected(self):
        """Test a map exceeding its majorant is flagged."""
        G = NonlinearMap("double", 2.0, TimeScalarFn.constant(1.0), lambda t, u: 2.0 * norm(u) * u)
        report = verify_growth_majorant(G, 50, 1.0, seed=0, dimension=2)
        assert report.violated
        assert report.max_ratio == pytest.approx(2.0)

    def test_deterministic(self):
        """Test the report depends only on the seed."""
        G = make_nonlinearity("soft_power", TimeScalarFn(lambda t: 1.0 + t), 2.0, 2)
        first = verify_growth_majorant(G, 30, 1.0, seed=9, dimension=2)
        second = verify_growth_majorant(G, 30, 1.0, seed=9, dimension=2)
        assert first == second

    def test_invalid_arguments(self):
        """Test sample count and radius are validated."""
        G = make_nonlinearity("zero", TimeScalarFn.constant(0.0), 2.0, 1)
        with pytest.raises(InvalidInputError):
            verify_growth_majorant(G, 0, 1.0, seed=0, dimension=1)
        with pytest.raises(InvalidInputError):
            verify_growth_majorant(G, 10, 0.0, seed=0, dimension=1)


class TestProblemSpec:
    """Test cases for ProblemSpec."""

    def test_valid_problem(self):
        """Test a consistent problem has no sampled violations."""
        problem = _problem()
        assert problem.sample_violations() == []
        assert problem.alpha(0.0) == 1.0

    def test_horizon_must_exceed_tau(self):
        """Test T > τ is enforced."""
        with pytest.raises(ValueError):
            _problem(horizon=1.0)

    def test_dimension_mismatch(self):
        """Test component dimensions must agree with n."""
        with pytest.raises(ValueError):
            _problem(f=VectorFn.zero(3))

    def test_exponent_mismatch(self):
        """Test G's exponent must equal p."""
        with pytest.raises(ValueError):
            _problem(p=3.0)

    def test_forcing_above_beta(self):
        """Test ‖f‖ ≤ β is checked."""
        problem = _problem(f=VectorFn.constant([1.0, 0.0]), beta=TimeScalarFn.constant(0.5))
        paths = [path for path, _ in problem.sample_violations()]
        assert "forcing.beta" in paths

    def test_supplied_gamma_below_sharp_value(self):
        """Test a supplied γ must dominate the derived one."""
        problem = _problem(gamma=TimeScalarFn.constant(-5.0))
        paths = [path for path, _ in problem.sample_violations()]
        assert "gamma" in paths

    def test_supplied_gamma_above_sharp_value(self):
        """Test a larger γ is accepted."""
        problem = _problem(gamma=TimeScalarFn.constant(0.0))
        assert problem.sample_violations() == []
        assert problem.bound_data().gamma(1.0) == 0.0

    def test_discontinuous_history(self):
        """Test jumps in the history are detected."""
        v = HistoryFn(2, lambda t: [1.0, 0.0] if t < -0.5 else [0.0, 1.0])
        paths = [path for path, _ in _problem(v=v).sample_violations()]
        assert "history" in paths

    def test_negative_alpha(self):
        """Test α ≥ 0 is checked."""
        G = make_nonlinearity("zero", TimeScalarFn.constant(-1.0), 2.0, 2)
        paths = [path for path, _ in _problem(G=G).sample_violations()]
        assert "alpha" in paths

    def test_bound_data(self):
        """Test the derived majorants."""
        bd = _problem().bound_data()
        assert bd.gamma(0.0) == pytest.approx(-1.0)
        assert bd.w(-0.5) == pytest.approx(math.hypot(1.0, 0.5))
        assert bd.p == 2.0
        assert bd.tau == 1.0


_finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
_vectors = st.integers(min_value=1, max_value=6).flatmap(lambda n: st.tuples(
    st.lists(_finite, min_size=n, max_size=n), st.lists(_finite, min_size=n, max_size=n)))


class TestProperties:
    """Property-based tests for the norm and the sharp γ."""

    @given(_vectors, _finite)
    def test_norm_axioms(self, pair, c):
        """Test nonnegativity, homogeneity and the triangle inequality."""
        u, v = (np.array(x) for x in pair)
        assert norm(u) >= 0.0
        assert norm(c * u) == pytest.approx(abs(c) * norm(u), rel=1e-12, abs=1e-300)
        assert norm(u + v) <= norm(u) + norm(v) + 1e-9 * (1.0 + norm(u) + norm(v))

    @settings(max_examples=200)
    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=9, max_size=9),
        st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=3),
    )
    def test_gamma_never_underestimates(self, entries, u):
        """Test ⟨u, Au⟩ ≤ γ‖u‖² for random 3×3 matrices."""
        A = np.array(entries).reshape(3, 3)
        x = np.array(u)
        gamma = gamma_from_matrix(MatrixFn.constant(A), 0.0)
        assert x @ A @ x <= gamma * (x @ x) + 1e-9 * (1.0 + np.abs(A).sum() * (x @ x))
