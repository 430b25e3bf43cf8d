import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smscoach.core import CoachError
from smscoach.features import COLUMNS, Standardization
from smscoach.regression import (
    ManifestMismatchError,
    ModelState,
    SingularDesignError,
    UndefinedStatisticError,
    adjusted_r2,
    fit,
    stability,
)


def _design(rng, n, p):
    return np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])


def test_exact_line():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    m = fit(X, 3.0 + 2.0 * np.arange(5.0), 0.0)
    assert m.coefficients == pytest.approx([3.0, 2.0], abs=1e-12)
    assert m.r2 == pytest.approx(1.0)
    assert m.adjusted_r2 == pytest.approx(1.0)


def test_ridge_spares_intercept():
    rng = np.random.default_rng(1)
    X = _design(rng, 50, 4)
    y = rng.standard_normal(50)
    lam = 3.0
    penalty = np.diag([0.0, lam, lam, lam])
    oracle = np.linalg.solve(X.T @ X + penalty, X.T @ y)
    assert fit(X, y, lam).coefficients == pytest.approx(oracle, rel=1e-10)
    # a huge penalty leaves only the mean
    assert fit(X, y, 1e12).coefficients[0] == pytest.approx(y.mean(), rel=1e-6)


def test_singular_needs_ridge():
    X = np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)])
    y = np.arange(6.0)
    with pytest.raises(SingularDesignError):
        fit(X, y, 0.0)
    assert np.all(np.isfinite(fit(X, y, 1e-6).coefficients))


def test_input_checks():
    X = np.ones((3, 2))
    with pytest.raises(CoachError):
        fit(X, np.ones(2))
    with pytest.raises(CoachError):
        fit(X, np.array([1.0, np.nan, 2.0]))
    with pytest.raises(CoachError):
        fit(X, np.ones(3), -1.0)
    with pytest.raises(ManifestMismatchError):
        fit(X, np.ones(3), manifest=["a"])


def test_adjusted_r2_formula():
    # 1 - (4/(20-3-1)) / (10/19)
    assert adjusted_r2(4.0, 10.0, 20, 3) == pytest.approx(1 - (4 / 16) / (10 / 19), rel=1e-15)
    with pytest.raises(UndefinedStatisticError):
        adjusted_r2(1.0, 2.0, 4, 3)
    with pytest.raises(UndefinedStatisticError):
        adjusted_r2(0.0, 0.0, 10, 2)


def test_adjusted_r2_undefined_when_few_rows():
    X = np.column_stack([np.ones(3), [0.0, 1.0, 3.0], [1.0, 0.0, 2.0]])
    m = fit(X, np.array([1.0, 2.0, 0.5]), 1e-6)
    assert m.adjusted_r2 is None


def test_constant_target():
    m = fit(np.column_stack([np.ones(4), np.arange(4.0)]), np.full(4, 2.0), 0.0)
    assert m.r2 == 0.0 and m.adjusted_r2 == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(10, 40), st.integers(2, 6))
def test_normal_equations_hold(seed, n, p):
    rng = np.random.default_rng(seed)
    X = _design(rng, n, p)
    y = rng.standard_normal(n)
    b = fit(X, y, 0.0).coefficients
    # residuals are orthogonal to every column
    assert np.allclose(X.T @ (y - X @ b), 0, atol=1e-9 * max(1.0, np.abs(X.T @ y).max()))


def test_stability():
    a = ModelState(np.array([1.0, -2.0]), ("intercept", "x"), None, 0.0, 5, None)
    b = ModelState(np.array([-1.5, 2.5]), ("intercept", "x"), None, 0.0, 6, None)
    assert stability(a, b) == pytest.approx(0.5 + 0.5)
    assert stability(a, a) == 0.0
    c = ModelState(np.array([1.0, 2.0]), ("intercept", "y"), None, 0.0, 5, None)
    with pytest.raises(ManifestMismatchError):
        stability(a, c)


def test_snapshot_roundtrip():
    rng = np.random.default_rng(2)
    std = Standardization(rng.normal(size=10), rng.uniform(1, 2, 10))
    m = ModelState(rng.normal(size=len(COLUMNS)), COLUMNS, std, 1e-6, 800, 0.3, 0.4, day=40)
    back = ModelState.from_dict(m.to_dict())
    assert np.array_equal(back.coefficients, m.coefficients)
    assert back.manifest == m.manifest and back.day == 40 and back.adjusted_r2 == 0.3
    assert np.array_equal(back.standardization.scale, std.scale)
    with pytest.raises(CoachError):
        ModelState.from_dict({**m.to_dict(), "version": 99})
    with pytest.raises(ManifestMismatchError):
        m.predict(np.ones((2, 3)))
