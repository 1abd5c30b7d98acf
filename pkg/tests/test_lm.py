import numpy as np
import pytest

from vortexcool.lm import SingularSystemError, fd_jacobian, levenberg_marquardt


def test_linear_least_squares_matches_lstsq():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 3))
    b = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: A @ x - b, np.zeros(3), xtol=1e-12)
    expected = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(res.x, expected, rtol=1e-8, atol=1e-10)
    assert res.converged


def test_rosenbrock():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    res = levenberg_marquardt(fun, [-1.2, 1.0], max_iterations=500, xtol=1e-12)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-8)


def test_cost_history_never_increases():
    t = np.linspace(0, 4, 40)
    y = 3.0 * np.exp(-0.7 * t) + 0.5
    fun = lambda x: x[0] * np.exp(-x[1] * t) + x[2] - y  # noqa: E731
    res = levenberg_marquardt(fun, [1.0, 0.1, 0.0])
    assert np.all(np.diff(res.cost_history) <= 0)
    np.testing.assert_allclose(res.x, [3.0, 0.7, 0.5], rtol=1e-7)


def test_rank_deficient_start_raises():
    t = np.linspace(0, 1, 10)
    # a and b only enter as their product
    fun = lambda x: x[0] * x[1] * t - 2 * t  # noqa: E731
    with pytest.raises(SingularSystemError):
        levenberg_marquardt(fun, [1.0, 1.0])


def test_max_iterations_reports_not_converged():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    res = levenberg_marquardt(fun, [-1.2, 1.0], max_iterations=2)
    assert not res.converged
    assert res.iterations == 2


def test_nonfinite_trial_steps_are_rejected():
    # residual undefined for x <= 0; the solver must back off instead of failing
    fun = lambda x: np.array([np.log(x[0]) - 1.0]) if x[0] > 0 else np.array([np.nan])  # noqa: E731
    res = levenberg_marquardt(fun, [0.05], damping=1e-8, check_rank=False)
    assert res.x[0] == pytest.approx(np.e, rel=1e-8)


def test_fd_jacobian():
    fun = lambda x: np.array([x[0] ** 2, x[0] * x[1]])  # noqa: E731
    J = fd_jacobian(fun, np.array([2.0, 3.0]))
    np.testing.assert_allclose(J, [[4.0, 0.0], [3.0, 2.0]], rtol=1e-8)
