import numpy as np
import pytest

from tempsort import mrnn
from tempsort.core import Alternative, Dataset, Grid, encode_array
from tempsort.errors import ShapeMismatch


def _config(**kw):
    base = dict(m=2, T=3, gamma=2, hidden_size=3, q_hidden=2, class_count=2)
    base.update(kw)
    return mrnn.MrnnConfig(**base)


def _random_params(config, rng, scale=0.7):
    params = mrnn.init_params(config, rng)
    for _, a in params.items():
        a[...] = rng.normal(0, scale, a.shape)
        # keep clear of the ReLU kink so finite differences stay on one side
        a[np.abs(a) < 1e-3] += 0.05
    return params


def _zero_params(config):
    return mrnn.init_params(config).zeros_like()


def finite_difference(params, config, v, y, step=1e-5):
    out = params.zeros_like()
    for name, a in params.items():
        g = getattr(out, name)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + step
            up = mrnn.loss(params, config, v, y)
            a[idx] = old - step
            down = mrnn.loss(params, config, v, y)
            a[idx] = old
            g[idx] = (up - down) / (2 * step)
    return out


def max_gradient_error(analytic, numeric, floor=1e-7):
    worst = 0.0
    for name, a in analytic.items():
        b = getattr(numeric, name)
        err = np.abs(a - b) / np.maximum(np.abs(b), floor / 1e-4)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


def test_zero_parameters_give_zero_trace():
    config = _config()
    trace = mrnn.forward(_zero_params(config), config, np.random.default_rng(0).uniform(0, 1, (2, 3, 2)))
    assert np.all(trace.hidden == 0) and np.all(trace.sub_marginal == 0)
    assert trace.comprehensive[0] == 0.0
    assert np.all(trace.discount == 0.5)


def test_recurrence_step_examples():
    assert mrnn.recurrence_step(0.23, 0.10, 1.99) == pytest.approx(0.429)
    assert mrnn.recurrence_step(1.02, 0.55, 0.54) == pytest.approx(1.317)


def test_forward_matches_loop_oracle():
    config = _config(m=2, T=4, gamma=3, hidden_size=3, q_hidden=2)
    rng = np.random.default_rng(1)
    params = _random_params(config, rng)
    v = rng.uniform(0, 1, (2, 4, 3))
    trace = mrnn.forward(params, config, v).single()
    relu = lambda x: np.maximum(x, 0)  # noqa: E731
    sig = lambda x: 1 / (1 + np.exp(-x))  # noqa: E731
    total = 0.0
    for j in range(2):
        h = np.zeros(3)
        u = 0.0
        tau_prev = None
        for t in range(4):
            h_prev = h
            h = np.tanh(relu(params.w_v[j]) @ v[j, t] + relu(params.w_h[j]) @ h_prev + params.b[j])
            f = relu(params.w_f[t, j]) @ (h + 1)
            u = f if t == 0 else f + tau_prev * u
            r = np.tanh(relu(params.q_w1[j]) @ h + params.q_b1[j])
            tau_prev = sig(relu(params.q_w2[j]) @ r + params.q_b2[j])
            assert trace.sub_marginal[t, j] == pytest.approx(f, rel=1e-12)
            assert trace.marginal[t, j] == pytest.approx(u, rel=1e-12)
        total += u
    assert trace.comprehensive == pytest.approx(total, rel=1e-12)


def test_relaxed_variant_matches_its_recurrence():
    config = _config(mode="relaxed")
    rng = np.random.default_rng(2)
    params = _random_params(config, rng)
    v = rng.uniform(0, 1, (2, 3, 2))
    trace = mrnn.forward(params, config, v).single()
    h = np.tanh(np.maximum(params.w_v[0], 0) @ v[0, 0] + params.b[0])
    assert trace.sub_marginal[0, 0] == pytest.approx(np.maximum(params.w_f[0, 0], 0) @ h, rel=1e-12)


def test_forward_shape_check():
    config = _config()
    with pytest.raises(ShapeMismatch):
        mrnn.forward(_zero_params(config), config, np.zeros((3, 3, 2)))


def test_class_probabilities_table():
    assert mrnn.class_probabilities(0.5, (1, 4)) == pytest.approx([0.6225, 0.3482, 0.0293], abs=1e-4)
    assert mrnn.class_probabilities(5.0, (1, 4)) == pytest.approx([0.0180, 0.2510, 0.7311], abs=1e-4)
    p = mrnn.class_probabilities(0.7, (0.0,))
    assert p == pytest.approx([1 / (1 + np.exp(0.7)), 1 / (1 + np.exp(-0.7))])


def test_class_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(500):
        th = np.sort(rng.normal(0, 3, rng.integers(1, 5)))
        th = th + np.arange(len(th)) * 1e-3
        assert mrnn.class_probabilities(rng.normal(0, 10), th).sum() == pytest.approx(1.0, abs=1e-12)


def test_ordinal_loss_examples():
    per, mean = mrnn.ordinal_loss([0.5, 1.5, 5.0], [1, 2, 3], (1.0, 4.0))
    assert per == pytest.approx([0.4741, 0.6040, 0.3133], abs=1e-4)
    assert mean == pytest.approx(0.4638, abs=1e-4)
    per, _ = mrnn.ordinal_loss([1e6], [1], (0.0,))
    assert per[0] == pytest.approx(-np.log(1e-12))


@pytest.mark.parametrize("mode", ["strict", "relaxed"])
@pytest.mark.parametrize("H", [2, 3])
def test_gradients_match_finite_differences(mode, H):
    config = _config(class_count=H, mode=mode)
    rng = np.random.default_rng(H)
    params = _random_params(config, rng)
    params.thr_base[:] = 2.0
    v = rng.uniform(0, 1, (5, 2, 3, 2))
    y = rng.integers(1, H + 1, 5)
    _, grads = mrnn.gradients(params, config, v, y)
    assert max_gradient_error(grads, finite_difference(params, config, v, y)) < 1e-4


def test_zero_parameter_gradients():
    config = _config()
    params = _zero_params(config)
    v = np.random.default_rng(0).uniform(0, 1, (4, 2, 3, 2))
    _, grads = mrnn.gradients(params, config, v, np.array([1, 1, 1, 2]))
    assert np.all(grads.w_v == 0)
    assert grads.thr_base[0] != 0


def test_duplicated_batch_same_mean_gradient():
    config = _config()
    rng = np.random.default_rng(5)
    params = _random_params(config, rng)
    v = rng.uniform(0, 1, (4, 2, 3, 2))
    y = np.array([1, 2, 2, 1])
    la, ga = mrnn.gradients(params, config, v, y)
    lb, gb = mrnn.gradients(params, config, np.concatenate([v, v]), np.concatenate([y, y]))
    assert la == pytest.approx(lb, abs=1e-12)
    for name, a in ga.items():
        assert np.allclose(a, getattr(gb, name), rtol=0, atol=1e-12)


def _toy(n=10, T=3, seed=0):
    rng = np.random.default_rng(seed)
    series = rng.uniform(-1, 1, (n, 1, T))
    series[:, 0, -1] = np.linspace(-1, 1, n)
    labels = np.where(series[:, 0, -1] > 0, 2, 1)
    alts = [Alternative(f"a{i}", series[i], int(labels[i])) for i in range(n)]
    return Dataset(alts, ["g1"], T, 2)


def test_toy_set_reaches_full_training_accuracy():
    ds = _toy()
    grid = Grid.from_bounds(-np.ones((1, 3)), np.ones((1, 3)), 2)
    config = mrnn.MrnnConfig(m=1, T=3, gamma=2, hidden_size=4, epochs=500, batch_size=10, seed=1)
    v = encode_array(ds.series, grid)
    params, report = mrnn.train_arrays(v, ds.labels, v[:0], ds.labels[:0], config)
    U = mrnn.forward(params, config, v).comprehensive
    pred = np.searchsorted(params.thresholds(), U, side="right") + 1
    assert np.array_equal(pred, ds.labels)
    assert report.epochs_run == 500


def test_training_is_bit_reproducible():
    ds = _toy(20, seed=2)
    grid = Grid.from_bounds(-np.ones((1, 3)), np.ones((1, 3)), 2)
    config = mrnn.MrnnConfig(m=1, T=3, gamma=2, hidden_size=4, epochs=30, seed=7)
    a, ra = mrnn.train(ds, grid, config)
    b, rb = mrnn.train(ds, grid, config)
    assert np.array_equal(a.flat(), b.flat())
    assert ra.train_loss == rb.train_loss and ra.validation_loss == rb.validation_loss


def test_thresholds_stay_ordered_during_training():
    ds = _toy(30, seed=3)
    ds = Dataset(
        [Alternative(a.id, a.series, 1 + i % 3) for i, a in enumerate(ds.alternatives)], ["g1"], 3, 3
    )
    grid = Grid.from_bounds(-np.ones((1, 3)), np.ones((1, 3)), 2)
    config = mrnn.MrnnConfig(m=1, T=3, gamma=2, hidden_size=3, class_count=3, epochs=20, learning_rate=0.5)
    params, report = mrnn.train(ds, grid, config)
    assert np.all(np.diff(report.thresholds) > 0)


def test_predict_interval_rule():
    config = _config(m=1, T=1, gamma=1)
    params = _zero_params(config)
    params.w_f[:] = 1.0
    params.thr_base[:] = 1.64
    grid = Grid.from_bounds([[0.0]], [[1.0]], 1)
    params.b[:] = 1.0  # h = tanh(1), f = 3 * (tanh(1) + 1)
    assert mrnn.predict(params, config, grid, Alternative("x", [[0.0]])) == 2
    params.w_f[:] = 0.0
    assert mrnn.predict(params, config, grid, Alternative("x", [[0.0]])) == 1


def test_predict_agrees_with_probability_argmax_for_two_classes():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        theta, U = rng.normal(0, 5, 2)
        if abs(U - theta) < 1e-9:
            continue
        by_interval = 1 + int(U >= theta)
        assert by_interval == 1 + int(np.argmax(mrnn.class_probabilities(U, (theta,))))


def test_export_marginals():
    config = _config(m=2, T=3, gamma=3)
    grid = Grid.from_bounds(np.zeros((2, 3)), np.ones((2, 3)), 3)
    v = np.random.default_rng(0).uniform(0, 1, (5, 2, 3, 3))
    curves, tau = mrnn.export_marginals(_zero_params(config), config, grid, v)
    assert curves.shape == (2, 3, 4) and np.all(curves == 0)
    params = _random_params(config, np.random.default_rng(1))
    curves, tau = mrnn.export_marginals(params, config, grid, v)
    assert np.all(np.diff(curves, axis=-1) >= 0)
    assert tau.shape == (5, 2, 2) and np.all((tau > 0) & (tau < 1))


def test_strict_monotone_and_independent():
    config = mrnn.MrnnConfig(m=3, T=4, gamma=3, hidden_size=4, q_hidden=3)
    grid = Grid.from_bounds(-np.ones((3, 4)), np.ones((3, 4)), 3)
    rng = np.random.default_rng(7)
    for _ in range(200):
        params = _random_params(config, rng, scale=1.0)
        g = rng.uniform(-1.2, 1.2, (3, 4))
        j, t = rng.integers(3), rng.integers(4)
        h = g.copy()
        h[j, t] += rng.exponential(0.5)
        a = mrnn.forward(params, config, encode_array(g, grid))
        b = mrnn.forward(params, config, encode_array(h, grid))
        assert b.comprehensive[0] >= a.comprehensive[0]
        others = [k for k in range(3) if k != j]
        for arr in ("hidden", "sub_marginal", "discount", "marginal"):
            assert np.array_equal(getattr(a, arr)[0][:, others], getattr(b, arr)[0][:, others])


def test_config_validation():
    with pytest.raises(ValueError):
        mrnn.MrnnConfig(m=1, T=1, class_count=1)
    with pytest.raises(ValueError):
        mrnn.MrnnConfig(m=1, T=1, mode="free")
