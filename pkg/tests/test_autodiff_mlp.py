import numpy as np
import pytest
from numpy.testing import assert_allclose

from nexusopt.errors import ZeroDirection
from nexusopt.mlp import (
    DataSource,
    MLPSpec,
    MLPTask,
    datasource_from_dict,
    datasource_to_dict,
    make_synthetic_sources,
    mlp_forward,
)
from nexusopt.numerics import fd_gradient, rng_root, rng_substream


def random_task(rng, widths=(3, 5, 2), n=16, activation="tanh", weight=1.0):
    gen = rng.generator
    spec = MLPSpec(widths, activation)
    x = gen.standard_normal((n, widths[0]))
    y = gen.standard_normal((n, widths[-1]))
    return MLPTask(spec, DataSource(x, y), weight), spec


def test_flatten_round_trip_is_bit_exact():
    spec = MLPSpec((4, 7, 3))
    theta = rng_root(1).generator.standard_normal(spec.n_params)
    again = spec.flatten(spec.unflatten(theta))
    assert np.array_equal(theta, again)
    assert spec.n_params == 4 * 7 + 7 + 7 * 3 + 3


def test_tanh_net_zero_params_zero_targets():
    spec = MLPSpec((3, 4, 2), "tanh")
    x = rng_root(2).generator.standard_normal((8, 3))
    task = MLPTask(spec, DataSource(x, np.zeros((8, 2))))
    theta = np.zeros(spec.n_params)
    assert task.loss(theta) == 0.0
    assert_allclose(task.grad(theta), 0.0, atol=1e-15)


def test_grad_matches_fd_on_random_configs():
    # the fundamental autodiff correctness gate
    root = rng_root(31)
    for i in range(20):
        rng = rng_substream(root, f"cfg/{i}")
        gen = rng.generator
        widths = (int(gen.integers(2, 5)), int(gen.integers(2, 7)), int(gen.integers(1, 4)))
        task, spec = random_task(rng, widths, n=int(gen.integers(4, 20)))
        theta = 0.7 * gen.standard_normal(spec.n_params)
        analytic = task.grad(theta)
        numeric = fd_gradient(task.loss, theta, eps=1e-6)
        denom = max(np.linalg.norm(numeric), 1e-10)
        assert np.linalg.norm(analytic - numeric) / denom <= 1e-5


def test_weight_scales_loss_and_grad():
    rng = rng_root(4)
    task, spec = random_task(rng)
    theta = rng.generator.standard_normal(spec.n_params)
    heavy = task.scaled(2.5)
    assert_allclose(heavy.loss(theta), 2.5 * task.loss(theta), rtol=1e-15)
    assert_allclose(heavy.grad(theta), 2.5 * task.grad(theta), rtol=1e-14)


def test_duplicating_samples_is_invariant():
    rng = rng_root(5)
    task, spec = random_task(rng, n=6)
    theta = rng.generator.standard_normal(spec.n_params)
    doubled = MLPTask(task.spec, DataSource(
        np.vstack([task.source.inputs, task.source.inputs]),
        np.vstack([task.source.targets, task.source.targets]),
    ))
    assert_allclose(doubled.loss(theta), task.loss(theta), rtol=1e-15)
    assert_allclose(doubled.grad(theta), task.grad(theta), rtol=1e-13, atol=1e-16)


def test_sample_order_is_irrelevant():
    rng = rng_root(6)
    task, spec = random_task(rng, n=9)
    theta = rng.generator.standard_normal(spec.n_params)
    perm = rng.generator.permutation(9)
    shuffled = task.minibatch(perm)
    assert_allclose(shuffled.loss(theta), task.loss(theta), rtol=1e-14)
    assert_allclose(shuffled.grad(theta), task.grad(theta), rtol=1e-12, atol=1e-16)


def test_hvp_rejects_zero_direction():
    rng = rng_root(7)
    task, spec = random_task(rng)
    with pytest.raises(ZeroDirection):
        task.hvp(np.zeros(spec.n_params), np.zeros(spec.n_params))


def test_hvp_is_symmetric_bilinear_form():
    rng = rng_root(8)
    task, spec = random_task(rng)
    gen = rng.generator
    theta = 0.5 * gen.standard_normal(spec.n_params)
    for _ in range(5):
        u = gen.standard_normal(spec.n_params)
        v = gen.standard_normal(spec.n_params)
        uhv = float(u @ task.hvp(theta, v))
        vhu = float(v @ task.hvp(theta, u))
        assert abs(uhv - vhu) <= 1e-4 * max(abs(uhv), abs(vhu), 1.0)


def test_linear_model_hvp_matches_gauss_newton():
    # single linear layer: predictions x W + b, so the Hessian of the MSE is
    # constant in theta and equals the Gauss-Newton form
    rng = rng_root(9)
    gen = rng.generator
    spec = MLPSpec((3, 2), "identity")
    n = 12
    x = gen.standard_normal((n, 3))
    y = gen.standard_normal((n, 2))
    task = MLPTask(spec, DataSource(x, y))

    def analytic_hvp(v):
        Vw = v[:6].reshape(3, 2)
        vb = v[6:]
        dyhat = x @ Vw + vb
        scale = 2.0 / (n * 2)
        return np.concatenate([(scale * x.T @ dyhat).reshape(-1), scale * dyhat.sum(axis=0)])

    for theta_scale in (0.0, 1.0, 3.0):
        theta = theta_scale * gen.standard_normal(spec.n_params)
        v = gen.standard_normal(spec.n_params)
        assert_allclose(task.hvp(theta, v), analytic_hvp(v), rtol=1e-6, atol=1e-8)


def test_relu_hand_case():
    # widths (1,1,1), relu hidden: y = w2 * relu(w1 x + b1) + b2
    spec = MLPSpec((1, 1, 1), "relu")
    x = np.array([[2.0]])
    y = np.array([[0.0]])
    task = MLPTask(spec, DataSource(x, y))
    theta = np.array([1.0, 0.5, 3.0, 0.0])  # w1, b1, w2, b2
    # hidden = relu(2.5) = 2.5, pred = 7.5, loss = 56.25
    assert_allclose(task.loss(theta), 56.25)
    # dL/dpred = 2*7.5 = 15; grads: w2: 15*2.5, b2: 15, w1: 15*3*2, b1: 15*3
    assert_allclose(task.grad(theta), [90.0, 45.0, 37.5, 15.0])


def test_shared_teachers_align_gradients():
    rng = rng_root(100)
    sources, _ = make_synthetic_sources(4, 6, 1, 1024, shared_fraction=1.0, rng=rng)
    spec = MLPSpec((6, 6, 1), "tanh")
    tasks = [MLPTask(spec, s) for s in sources]
    theta = 0.5 * rng_substream(rng, "probe").generator.standard_normal(spec.n_params)
    grads = [t.grad(theta) for t in tasks]
    for i in range(len(grads)):
        for j in range(i + 1, len(grads)):
            cos = grads[i] @ grads[j] / (np.linalg.norm(grads[i]) * np.linalg.norm(grads[j]))
            assert cos >= 0.99


def test_independent_teachers_have_orthogonal_parameters():
    root = rng_root(11)
    cosines = []
    for trial in range(40):
        rng = rng_substream(root, f"trial/{trial}")
        teacher_spec = MLPSpec((6, 6, 1), "tanh")
        a = teacher_spec.init_params(rng_substream(rng, "a"))
        b = teacher_spec.init_params(rng_substream(rng, "b"))
        cosines.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
    cosines = np.array(cosines)
    se = cosines.std(ddof=1) / np.sqrt(len(cosines))
    assert abs(cosines.mean()) <= 3 * se


def test_make_synthetic_sources_deterministic():
    a_sources, a_held = make_synthetic_sources(3, 4, 2, 16, 0.5, rng_root(12))
    b_sources, b_held = make_synthetic_sources(3, 4, 2, 16, 0.5, rng_root(12))
    for sa, sb in zip(a_sources + [a_held], b_sources + [b_held]):
        assert np.array_equal(sa.inputs, sb.inputs)
        assert np.array_equal(sa.targets, sb.targets)


def test_held_out_source_differs_from_training_sources():
    sources, held = make_synthetic_sources(3, 4, 1, 16, 0.5, rng_root(13))
    for s in sources:
        assert not np.array_equal(s.targets, held.targets)


def test_datasource_json_round_trip():
    src = DataSource(np.array([[1.0, 2.0]]), np.array([[0.5]]), 7)
    back = datasource_from_dict(datasource_to_dict(src))
    assert np.array_equal(back.inputs, src.inputs)
    assert np.array_equal(back.targets, src.targets)
    assert back.source_id == 7


def test_forward_matches_task_internal_path():
    rng = rng_root(14)
    task, spec = random_task(rng, n=5)
    theta = rng.generator.standard_normal(spec.n_params)
    pred = mlp_forward(spec, theta, task.source.inputs)
    expected_loss = float(np.mean((pred - task.source.targets) ** 2))
    assert_allclose(task.loss(theta), expected_loss, rtol=1e-15)
