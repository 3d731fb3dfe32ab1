"""Model zoo: LIBSVM parsing, ridge/logistic oracles, fixtures, sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hygrad as hg
from hygrad.errors import DataError, ParseError, UsageError

from conftest import seeded_y


class TestParseLibsvm:
    def test_single_line(self):
        ds = hg.parse_libsvm("1 1:0.5 3:-2\n")
        assert ds.n == 1 and ds.d_x == 3
        assert np.array_equal(ds.features[0], [0.5, 0.0, -2.0])
        assert ds.labels[0] == 1.0

    def test_empty_file_rejected(self):
        with pytest.raises(ParseError, match="empty"):
            hg.parse_libsvm("")

    def test_comments_and_blank_lines(self):
        text = "# header comment\n\n-1 2:1.5 # trailing\n"
        ds = hg.parse_libsvm(text)
        assert ds.n == 1 and ds.d_x == 2
        assert ds.labels[0] == -1.0
        assert np.array_equal(ds.features[0], [0.0, 1.5])

    def test_non_numeric_label_names_line(self):
        with pytest.raises(ParseError) as exc:
            hg.parse_libsvm("1 1:2\nbogus 1:3\n")
        assert exc.value.line == 2

    def test_non_numeric_value(self):
        with pytest.raises(ParseError) as exc:
            hg.parse_libsvm("1 1:x\n")
        assert exc.value.line == 1

    def test_non_increasing_index(self):
        with pytest.raises(ParseError, match="increase"):
            hg.parse_libsvm("1 2:1 2:2\n")
        with pytest.raises(ParseError, match="increase"):
            hg.parse_libsvm("1 3:1 2:2\n")

    def test_zero_index_rejected(self):
        with pytest.raises(ParseError, match="1-based"):
            hg.parse_libsvm("1 0:5\n")

    def test_missing_colon_rejected(self):
        with pytest.raises(ParseError):
            hg.parse_libsvm("1 15\n")

    def test_dims_override(self):
        ds = hg.parse_libsvm("1 1:1\n", dims=4)
        assert ds.d_x == 4
        with pytest.raises(ParseError):
            hg.parse_libsvm("1 5:1\n", dims=4)

    def test_bytes_input(self):
        ds = hg.parse_libsvm(b"2.5 1:1\n")
        assert ds.labels[0] == 2.5

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_roundtrip(self, data):
        n = data.draw(st.integers(1, 6))
        d = data.draw(st.integers(1, 5))
        finite = st.floats(allow_nan=False, allow_infinity=False,
                           min_value=-1e12, max_value=1e12)
        feats = np.array([[data.draw(finite) for _ in range(d)] for _ in range(n)])
        labels = np.array([data.draw(finite) for _ in range(n)])
        ds = hg.Dataset(feats, labels)
        back = hg.parse_libsvm(hg.serialize_libsvm(ds), dims=d)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)


class TestRidge:
    def test_scalar_fixture_equivalence(self, scalar_fixture):
        # A 1x1 instance with 2 A'A = 1 and 2 A'b = 1 reproduces the scalar
        # fixture: the root is 1/(1 + e^y).
        s = 1.0 / np.sqrt(2.0)
        train = hg.Dataset(np.array([[s]]), np.array([s]))
        problem = hg.make_ridge(train, train, hg.OuterVariant.affine())
        y = np.zeros(1)
        assert problem.exact_root(y)[0] == pytest.approx(0.5, abs=1e-14)
        x = np.array([0.3])
        assert problem.residual(x, y) == pytest.approx(
            scalar_fixture.residual(x, y), abs=1e-14)
        assert problem.jac_x(x, y)[0, 0] == pytest.approx(
            scalar_fixture.jac_x(x, y)[0, 0], abs=1e-14)

    def test_unregularized_limit(self, reg_train, reg_val):
        problem = hg.make_ridge(reg_train, reg_val, hg.OuterVariant.quadratic())
        y = -30.0 * np.ones(problem.d_y)
        root = problem.exact_root(y)
        gram2 = 2.0 * reg_train.features.T @ reg_train.features
        rhs2 = 2.0 * reg_train.features.T @ reg_train.labels
        direct = hg.linear_solve(gram2, rhs2)
        assert np.linalg.norm(root - direct) <= 1e-8 * np.linalg.norm(direct)

    def test_second_x_derivative_vanishes(self, ridge_quadratic):
        rng = np.random.default_rng(1)
        x = rng.normal(size=ridge_quadratic.d_x)
        y = rng.normal(size=ridge_quadratic.d_y)
        u = rng.normal(size=ridge_quadratic.d_x)
        assert np.array_equal(ridge_quadratic.inner.djac_x_dir_x(x, y, u),
                              np.zeros((7, 7)))

    def test_jacobian_positive_definite(self, ridge_quadratic):
        # Cholesky success certifies positive definiteness for every tested y.
        for seed in range(20):
            y = seeded_y(ridge_quadratic, seed, low=-2.0, high=2.0)
            np.linalg.cholesky(ridge_quadratic.jac_x(np.zeros(7), y))

    def test_dimension_mismatch_rejected(self, reg_train):
        bad_val = hg.synthetic_validation_dataset(10, 3, seed=0)
        with pytest.raises(hg.ContractViolation):
            hg.make_ridge(reg_train, bad_val, hg.OuterVariant.quadratic())


class TestLogistic:
    def test_single_sample_root_vs_bisection(self):
        # Root of x = sigmoid(-x), bracketed and bisected to 1e-12.
        train = hg.Dataset(np.array([[1.0]]), np.array([1.0]))
        problem = hg.make_logistic(train, train, hg.OuterVariant.affine())
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid - float(hg.stable_sigmoid(np.array([-mid]))[0]) < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        root = problem.exact_root(np.zeros(1))[0]
        assert root == pytest.approx(0.5 * (lo + hi), abs=1e-12)

    def test_zero_logits_exact(self, cls_train):
        problem = hg.make_logistic(cls_train, cls_train, hg.OuterVariant.affine())
        y = np.zeros(problem.d_y)
        expected = -0.5 * cls_train.features.T @ cls_train.labels
        assert np.array_equal(problem.residual(np.zeros(problem.d_x), y), expected)

    def test_sigmoid_at_zero_is_half(self):
        assert hg.stable_sigmoid(np.array([0.0]))[0] == 0.5

    def test_extreme_logits_stay_finite(self):
        big = np.array([800.0, -800.0])
        s = hg.stable_sigmoid(big)
        assert np.all(np.isfinite(s))
        assert s[0] == 1.0 and s[1] == 0.0
        train = hg.Dataset(np.array([[1.0]]), np.array([1.0]))
        problem = hg.make_logistic(train, train, hg.OuterVariant.affine())
        jac = problem.jac_x(np.array([800.0]), np.zeros(1))
        assert np.isfinite(jac).all()

    def test_label_validation(self, cls_train):
        bad = hg.Dataset(cls_train.features, np.abs(cls_train.labels) * 2.0)
        with pytest.raises(DataError):
            hg.make_logistic(bad, cls_train, hg.OuterVariant.affine())

    def test_residual_is_gradient_of_objective(self, logistic_quadratic,
                                               cls_train):
        rng = np.random.default_rng(9)
        x = rng.normal(size=5)
        y = rng.uniform(-1, 1, size=5)
        step = 1e-6
        fd = np.zeros(5)
        for j in range(5):
            hi, lo = x.copy(), x.copy()
            hi[j] += step
            lo[j] -= step
            fd[j] = (hg.logistic_inner_value(cls_train, hi, y)
                     - hg.logistic_inner_value(cls_train, lo, y)) / (2 * step)
        residual = logistic_quadratic.residual(x, y)
        assert np.linalg.norm(fd - residual) <= 1e-6 * (1 + np.linalg.norm(residual))


class TestSampleY:
    def test_deterministic(self):
        a = hg.sample_y(4, -1.0, 1.0, seed=123)
        b = hg.sample_y(4, -1.0, 1.0, seed=123)
        assert np.array_equal(a, b)

    def test_range(self):
        y = hg.sample_y(100, 3.0, 6.0, seed=5)
        assert np.all(y >= 3.0) and np.all(y < 6.0)

    def test_degenerate_dimension(self):
        with pytest.raises(UsageError):
            hg.sample_y(0, 0.0, 1.0, seed=1)

    def test_bad_interval(self):
        with pytest.raises(UsageError):
            hg.sample_y(2, 1.0, 1.0, seed=1)


class TestFixtures:
    def test_scalar_ridge_closed_forms(self, scalar_fixture):
        y = np.zeros(1)
        assert scalar_fixture.exact_root(y)[0] == 0.5
        assert np.linalg.norm(scalar_fixture.residual(
            scalar_fixture.exact_root(y), y)) <= 1e-15

    def test_linear1d_closed_forms(self, linear1d_fixture):
        y = np.array([0.7])
        root = linear1d_fixture.exact_root(y)
        assert root[0] == pytest.approx(np.exp(-0.7), abs=1e-15)
        assert abs(linear1d_fixture.residual(root, y)[0]) <= 1e-15
