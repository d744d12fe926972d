import numpy as np
import pytest

from stablerps.model import (
    Dataset,
    Dense,
    ModelSpec,
    accuracy,
    backward,
    forward,
    global_index,
    init_params,
    load_csv,
    loss_and_grad,
    save_csv,
    shrink_model,
    unpack,
    weight_coords,
)


def linear(w, bias=False):
    spec = ModelSpec((Dense(len(w), 1, "identity", bias),), "mse")
    return spec, np.array(w, dtype=float)


# -- layout ------------------------------------------------------------------


def test_global_index_examples():
    spec = ModelSpec((Dense(2, 3), Dense(3, 1)))
    assert global_index(spec, 0, 0, 0) == 0
    assert global_index(spec, 1, 0, 2) == 8


def test_global_index_round_trip():
    spec = ModelSpec.mlp([3, 5, 4, 2])
    seen = set()
    for i in range(spec.n_weights):
        layer, row, col = weight_coords(spec, i)
        assert global_index(spec, layer, row, col) == i
        seen.add((layer, row, col))
    assert len(seen) == spec.n_weights


def test_global_index_rejects_bias_and_bad_coords():
    spec = ModelSpec((Dense(2, 3), Dense(3, 1)))
    with pytest.raises(ValueError):
        global_index(spec, 0, 0, 2)  # bias column
    with pytest.raises(IndexError):
        global_index(spec, 2, 0, 0)


def test_unpack_shapes_and_order():
    spec = ModelSpec.mlp([2, 3, 1])
    params = np.arange(spec.n_params, dtype=float)
    (w0, b0), (w1, b1) = unpack(spec, params)
    assert w0.shape == (3, 2) and w0[1, 0] == 2.0
    assert b0.tolist() == [9.0, 10.0, 11.0] and b1.tolist() == [12.0]


# -- forward -----------------------------------------------------------------


def test_forward_identity():
    spec = ModelSpec((Dense(3, 3, "identity", True),))
    params = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
    x = np.random.default_rng(0).standard_normal((5, 3))
    out, _ = forward(spec, params, x)
    assert np.array_equal(out, x)


def test_forward_zero_loss():
    spec = ModelSpec.mlp([4, 3, 2])
    out, loss = forward(spec, np.zeros(spec.n_params), np.ones((3, 4)), np.zeros((3, 2)))
    assert loss == 0.0


def test_forward_and_backward_hand_example():
    spec, w = linear([1, 2])
    out, loss = forward(spec, w, np.array([[1.0, 1.0]]), np.array([[0.0]]))
    assert out[0, 0] == 3.0 and loss == 9.0
    assert np.allclose(backward(spec, w, np.array([[1.0, 1.0]]), np.array([[0.0]])), [6.0, 6.0])


def test_zero_inputs_zero_weight_gradients():
    spec = ModelSpec((Dense(3, 2, "identity", True),))
    params = np.random.default_rng(1).standard_normal(spec.n_params)
    g = backward(spec, params, np.zeros((4, 3)), np.ones((4, 2)))
    assert np.all(g[: spec.n_weights] == 0.0)


def test_forward_shape_mismatch():
    spec = ModelSpec.mlp([3, 2])
    with pytest.raises(ValueError):
        forward(spec, np.zeros(spec.n_params + 1), np.ones((1, 3)))
    with pytest.raises(ValueError):
        forward(spec, np.zeros(spec.n_params), np.ones((1, 4)))


def test_losses_nonnegative():
    rng = np.random.default_rng(2)
    for loss in ("mse", "softmax_ce"):
        spec = ModelSpec.mlp([4, 5, 3], "tanh", loss)
        params = init_params(spec, 0)
        t = rng.integers(0, 3, 10) if loss == "softmax_ce" else rng.standard_normal((10, 3))
        assert forward(spec, params, rng.standard_normal((10, 4)), t)[1] >= 0


def _fd_check(spec, params, x, t, h=1e-6):
    _, grad, _ = loss_and_grad(spec, params, x, t)
    worst = 0.0
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fd = (forward(spec, params + e, x, t)[1] - forward(spec, params - e, x, t)[1]) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(1.0, abs(fd), abs(grad[i])))
    return worst


@pytest.mark.parametrize("seed", range(10))
def test_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 5)))]
    act = ["tanh", "relu", "identity"][seed % 3]
    loss = ["mse", "softmax_ce"][seed % 2]
    spec = ModelSpec.mlp(sizes, act, loss)
    params = init_params(spec, seed) + 0.1 * rng.standard_normal(spec.n_params)
    x = rng.standard_normal((7, sizes[0]))
    t = rng.integers(0, sizes[-1], 7) if loss == "softmax_ce" else rng.standard_normal((7, sizes[-1]))
    assert _fd_check(spec, params, x, t) < 1e-5


def test_accuracy_percent():
    out = np.array([[0.1, 0.9], [0.8, 0.2], [0.3, 0.7]])
    assert accuracy(out, np.array([1, 0, 0])) == pytest.approx(200 / 3)


# -- init --------------------------------------------------------------------


def test_init_params_he_and_zero_bias():
    spec = ModelSpec.mlp([200, 300, 5])
    p = init_params(spec, 0)
    assert abs(p[spec.weight_slice(0)].std() - np.sqrt(2 / 200)) < 0.003
    assert np.all(p[spec.n_weights :] == 0)
    assert np.array_equal(p, init_params(spec, 0))


# -- SMALL-MODEL -------------------------------------------------------------


def test_shrink_unchanged_at_full_size():
    spec = ModelSpec.mlp([20, 64, 64, 4])
    assert shrink_model(spec, spec.n_weights) == spec


def test_shrink_quarter_one_hidden_layer_square():
    spec = ModelSpec((Dense(1, 64, "relu"), Dense(64, 64, "relu"), Dense(64, 1)))
    small = shrink_model(spec, spec.n_weights // 4)
    assert all(abs(w - 32) <= 1 for w in small.hidden_widths)
    assert small.n_weights <= spec.n_weights // 4
    assert len(small.layers) == len(spec.layers)


def test_shrink_is_maximal_and_rejects_infeasible():
    spec = ModelSpec.mlp([20, 64, 64, 4])
    for target in (500, 1000, 3000):
        small = shrink_model(spec, target)
        assert small.n_weights <= target
    minimal = ModelSpec.mlp([20, 1, 1, 4])
    with pytest.raises(ValueError):
        shrink_model(spec, minimal.n_weights - 1)
    assert shrink_model(spec, minimal.n_weights).hidden_widths == (1, 1)


# -- CSV ---------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cls = Dataset(rng.standard_normal((10, 3)), rng.integers(0, 4, 10))
    save_csv(cls, tmp_path / "c.csv")
    back = load_csv(tmp_path / "c.csv", classification=True)
    assert np.array_equal(back.inputs, cls.inputs) and np.array_equal(back.targets, cls.targets)
    reg = Dataset(rng.standard_normal((6, 2)), rng.standard_normal((6, 2)))
    save_csv(reg, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv", n_targets=2)
    assert np.array_equal(back.targets, reg.targets)


def test_csv_without_header(tmp_path):
    (tmp_path / "d.csv").write_text("1,2,0\n3,4,1\n")
    d = load_csv(tmp_path / "d.csv", classification=True)
    assert d.inputs.tolist() == [[1, 2], [3, 4]] and d.targets.tolist() == [0, 1]


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0]))
