import numpy as np
import pytest
from numpy.testing import assert_allclose

from nexusopt.analysis import (
    closeness,
    cosine_matrix,
    first_order_transfer,
    flatness_closeness_bound,
    locate_task_minimizer,
    mean_pairwise_cosine,
    newton_minimize,
)
from nexusopt.errors import DegenerateGradient, MissingMinimizer
from nexusopt.numerics import rng_root, rng_substream
from nexusopt.tasks import (
    QuadraticTask,
    TaskFamily,
    TaskSet,
    random_cubic_task,
    random_spd_matrix,
    sample_family,
    stationary_point,
)


def test_cosine_matrix_identical_tasks():
    task = QuadraticTask(np.eye(2), np.ones(2))
    S = cosine_matrix(TaskSet([task, task]), np.zeros(2))
    assert_allclose(S, np.ones((2, 2)), atol=1e-14)


def test_cosine_matrix_orthogonal_gradients():
    ts = TaskSet([
        QuadraticTask(np.eye(2), np.array([1.0, 0.0])),
        QuadraticTask(np.eye(2), np.array([0.0, 1.0])),
    ])
    S = cosine_matrix(ts, np.zeros(2))
    assert_allclose(S[0, 1], 0.0, atol=1e-15)
    assert_allclose(np.diag(S), 1.0)


def test_cosine_matrix_matches_brute_force():
    rng = rng_root(1)
    tasks = [
        QuadraticTask(random_spd_matrix(4, rng_substream(rng, f"A{k}")), rng.generator.standard_normal(4))
        for k in range(5)
    ]
    ts = TaskSet(tasks)
    theta = rng.generator.standard_normal(4)
    S = cosine_matrix(ts, theta)
    grads = [t.grad(theta) for t in tasks]
    for i in range(5):
        for j in range(5):
            expected = grads[i] @ grads[j] / (np.linalg.norm(grads[i]) * np.linalg.norm(grads[j]))
            assert abs(S[i, j] - expected) <= 1e-12
    assert_allclose(S, S.T, atol=1e-15)
    assert S.min() >= -1.0 - 1e-12 and S.max() <= 1.0 + 1e-12


def test_cosine_matrix_degenerate_gradient_names_task():
    task = QuadraticTask(np.eye(2), np.zeros(2))
    other = QuadraticTask(np.eye(2), np.ones(2))
    with pytest.raises(DegenerateGradient) as err:
        cosine_matrix(TaskSet([other, task]), np.zeros(2))
    assert err.value.task_index == 1


def test_closeness_symmetric_pair():
    ts = TaskSet([
        QuadraticTask(np.eye(2), np.array([1.0, 0.0])),
        QuadraticTask(np.eye(2), np.array([-1.0, 0.0])),
    ])
    report = closeness(stationary_point(ts), ts)
    assert_allclose(report.mean_sq, 1.0)
    assert_allclose(report.per_task_distance, [1.0, 1.0])
    assert_allclose(report.curvature_floor, 1.0)


def test_closeness_at_stationary_point_equals_sample_variance():
    # for isotropic equal-curvature tasks the stationary point is the mean of
    # the minimizers, so mean_sq is exactly their (1/K-normalized) variance
    family = TaskFamily(np.zeros(4), 1.5, 2.0)
    ts = sample_family(family, 6, rng_root(44))
    theta_bar = stationary_point(ts)
    report = closeness(theta_bar, ts)
    mins = np.array([t.minimizer for t in ts.tasks])
    sample_var = float(np.mean(np.sum((mins - mins.mean(axis=0)) ** 2, axis=1)))
    assert abs(report.mean_sq - sample_var) <= 1e-12


def test_closeness_zero_variance_family():
    family = TaskFamily(np.array([0.5, -0.5]), 0.0, 2.0)
    ts = sample_family(family, 4, rng_root(2))
    report = closeness(np.array([0.5, -0.5]), ts)
    assert report.mean_sq == 0.0


def test_closeness_single_task_at_minimizer():
    task = QuadraticTask(np.eye(3), np.ones(3))
    report = closeness(np.ones(3), TaskSet([task]))
    assert report.mean_sq == 0.0


def test_closeness_needs_minimizers_for_non_analytic_tasks():
    from nexusopt.mlp import DataSource, MLPSpec, MLPTask

    spec = MLPSpec((2, 2, 1))
    task = MLPTask(spec, DataSource(np.ones((4, 2)), np.zeros((4, 1))))
    with pytest.raises(MissingMinimizer):
        closeness(np.zeros(spec.n_params), TaskSet([task]))


def test_locate_minimizer_reaches_quadratic_optimum():
    rng = rng_root(3)
    task = QuadraticTask(random_spd_matrix(2, rng, (0.5, 2.0)), np.array([0.3, -0.2]))
    for offset in (np.array([0.01, -0.02]), np.array([-0.3, 0.4])):
        result = locate_task_minimizer(task, task.minimizer + offset)
        assert result.converged
        assert np.linalg.norm(result.theta - task.minimizer) <= 1e-6
        assert np.linalg.norm(task.grad(result.theta)) <= 1e-8


def test_locate_minimizer_immediate_at_optimum():
    task = QuadraticTask(np.eye(2), np.ones(2))
    result = locate_task_minimizer(task, np.ones(2))
    assert result.converged and result.steps == 0


def test_locate_minimizer_reports_non_convergence():
    task = QuadraticTask(np.eye(2), np.zeros(2))
    result = locate_task_minimizer(task, np.array([5.0, 5.0]), max_steps=10)
    assert not result.converged
    assert result.steps == 10


def test_newton_minimize_cubic():
    task = random_cubic_task(3, rng_root(4), third_bound=0.3)
    theta = newton_minimize(task, task.minimizer)
    assert np.linalg.norm(task.grad(theta)) <= 1e-10


def test_first_order_transfer_self_quadratic():
    task = QuadraticTask(np.eye(2), np.zeros(2))
    ts = TaskSet([task])
    theta = np.array([2.0, -1.0])
    gamma = 0.01
    check = first_order_transfer(theta, ts, task, gamma)
    g_sq = float(task.grad(theta) @ task.grad(theta))
    assert_allclose(check.residual, -0.5 * gamma**2 * g_sq, rtol=1e-10)


def test_first_order_transfer_orthogonal_gradients():
    train_task = QuadraticTask(np.eye(2), np.array([1.0, 0.0]))
    downstream = QuadraticTask(np.eye(2), np.array([0.0, 1.0]))
    ts = TaskSet([train_task])
    check = first_order_transfer(np.zeros(2), ts, downstream, 1e-3)
    assert check.rhs == 0.0
    assert abs(check.lhs) <= 10 * 1e-6


def test_first_order_transfer_residual_scales_quadratically():
    rng = rng_root(5)
    ts = TaskSet([
        QuadraticTask(random_spd_matrix(3, rng_substream(rng, "a")), rng.generator.standard_normal(3)),
        random_cubic_task(3, rng_substream(rng, "b"), third_bound=0.3),
    ])
    downstream = random_cubic_task(3, rng_substream(rng, "c"), third_bound=0.3)
    theta = rng.generator.standard_normal(3)
    gammas = np.array([1e-2, 1e-3, 1e-4])
    residuals = [abs(first_order_transfer(theta, ts, downstream, g).residual) for g in gammas]
    slope = np.polyfit(np.log(gammas), np.log(residuals), 1)[0]
    assert 1.9 <= slope <= 2.1


def test_first_order_transfer_residual_scales_quadratically_on_mlp():
    from nexusopt.mlp import DataSource, MLPSpec, MLPTask

    rng = rng_root(51)
    gen = rng.generator
    spec = MLPSpec((3, 5, 1), "tanh")
    tasks = [
        MLPTask(spec, DataSource(gen.standard_normal((32, 3)), gen.standard_normal((32, 1))))
        for _ in range(3)
    ]
    ts = TaskSet(tasks[:2])
    theta = 0.5 * gen.standard_normal(spec.n_params)
    gammas = np.array([1e-2, 1e-3, 1e-4])
    residuals = [abs(first_order_transfer(theta, ts, tasks[2], g).residual) for g in gammas]
    slope = np.polyfit(np.log(gammas), np.log(residuals), 1)[0]
    assert 1.9 <= slope <= 2.1


def test_flatness_closeness_hand_example():
    downstream = QuadraticTask(2.0 * np.eye(2), np.array([1.0, 0.0]))
    fb = flatness_closeness_bound(np.zeros(2), downstream)
    assert_allclose(fb.downstream_min_loss, 0.0)
    assert_allclose(fb.closeness_term, 1.0)
    assert_allclose(fb.flatness_term, 2.0)
    assert_allclose(fb.bound, 1.0)
    assert_allclose(downstream.loss(np.zeros(2)), fb.bound, atol=1e-12)


def test_flatness_closeness_at_the_minimizer():
    downstream = QuadraticTask(np.eye(2), np.array([0.5, 0.5]), offset=0.3)
    fb = flatness_closeness_bound(np.array([0.5, 0.5]), downstream)
    assert fb.bound == downstream.loss(downstream.minimizer)


def test_flatness_closeness_exact_for_anisotropic_quadratics():
    rng = rng_root(6)
    for i in range(20):
        sub = rng_substream(rng, str(i))
        downstream = QuadraticTask(random_spd_matrix(3, sub, (0.3, 4.0)), sub.generator.standard_normal(3))
        theta = sub.generator.standard_normal(3)
        fb = flatness_closeness_bound(theta, downstream)
        assert abs(downstream.loss(theta) - fb.bound) <= 1e-10


def test_flatness_closeness_inequality_on_cubics():
    root = rng_root(7)
    for i in range(50):
        rng = rng_substream(root, str(i))
        downstream = random_cubic_task(3, rng, third_bound=0.2)
        theta_star = newton_minimize(downstream, downstream.minimizer)
        theta = theta_star + 0.3 * rng.generator.standard_normal(3)
        fb = flatness_closeness_bound(theta, downstream)
        assert downstream.loss(theta) <= fb.bound + 1e-12


def test_mean_pairwise_cosine():
    S = np.array([[1.0, 0.5, -0.5], [0.5, 1.0, 0.0], [-0.5, 0.0, 1.0]])
    assert_allclose(mean_pairwise_cosine(S), 0.0)
    assert np.isnan(mean_pairwise_cosine(np.ones((1, 1))))
