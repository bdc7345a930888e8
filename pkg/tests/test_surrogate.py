import numpy as np
import pytest

from falconn.sim import InputSignal, corners_random, first_order, linear_second_order, run_experiment
from falconn.sim.trace import Trace
from falconn.surrogate import (
    LinearKnownDynamics,
    SurrogateModel,
    TrainConfig,
    build_lifting,
    dataset_loss,
    load_checkpoint,
    loss_and_grad,
    loss_gradient,
    save_checkpoint,
    simulate_surrogate,
    train,
)
from falconn.sim.integrate import integrate_rk4
from falconn.sim.signals import uniform_grid
from falconn.surrogate.model import _Batch


def fd_gradient(f, x, rel=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def synthetic(n_traces=3, seed=0, plant=None, horizon=10.0):
    plant = plant or first_order()
    rng = np.random.default_rng(seed)
    return [
        run_experiment(plant, corners_random(plant.u_min, plant.u_max, plant.input_names, horizon, 5.0, rng))
        for _ in range(n_traces)
    ]


def test_lifting_blocks():
    L = build_lifting(2, [2, 1])
    np.testing.assert_array_equal(L.A, [[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(L.B, [[0, 0], [1, 0], [0, 1]])
    np.testing.assert_array_equal(L.C, [[1, 0, 0], [0, 0, 1]])
    assert L.dim == 3


def test_lifting_order_one_is_identity_output():
    L = build_lifting(1, 1)
    assert L.A.shape == (1, 1) and L.A[0, 0] == 0 and L.B[0, 0] == 1 and L.C[0, 0] == 1


def test_lifting_rejects_zero_order():
    with pytest.raises(ValueError):
        build_lifting(1, 0)


def test_zero_mlp_outputs_zero():
    m = SurrogateModel.create(["u"], ["y"], orders=2, zero=True)
    Z = np.random.default_rng(0).normal(size=(5, 2))
    d, _ = m.driven(Z, np.ones((5, 1)))
    assert np.all(d == 0)


def test_known_dynamics_reproduces_rk4():
    fk = LinearKnownDynamics([[-1.0]], [[1.0]])
    m = SurrogateModel.create(["u"], ["y"], orders=1, f_k=fk, zero=True)
    u = InputSignal([0.0, 1.0], [[1.0], [-1.0]], ["u"], 2.0)
    grid = uniform_grid(2.0, 0.1)
    y = simulate_surrogate(m, [0.5], u, grid)
    ref = integrate_rk4(lambda x, uu, t: -x + uu, [0.5], u, grid)
    np.testing.assert_allclose(y[:, 0], ref[:, 0], rtol=0, atol=1e-14)


def _trace(ys, us, dt=0.01):
    t = np.arange(len(ys)) * dt
    return Trace([0.0], t, {"u": np.asarray(us, float)}, {"y": np.asarray(ys, float)}, period=dt)


def test_loss_exact_model_is_zero():
    fk = LinearKnownDynamics([[-1.0]], [[1.0]])
    m = SurrogateModel.create(["u"], ["x"], orders=1, f_k=fk, zero=True)
    data = synthetic(1)
    # same field, step and integrator as the plant
    assert dataset_loss(m, data, step=0.01) < 1e-20


def test_constant_zero_prediction_vs_ones_is_one():
    m = SurrogateModel.create(["u"], ["y"], orders=1, zero=True)
    batch = _Batch(np.zeros((1, 1)), np.zeros((1, 10, 1)), np.ones((1, 11, 1)), 0.1)
    assert loss_and_grad(m, [batch], want_grad=False)[0] == 1.0


def test_loss_additive_over_traces():
    m = SurrogateModel.create(["u"], ["x"], orders=1, seed=3)
    data = synthetic(2, seed=1)
    total = dataset_loss(m, data)
    parts = dataset_loss(m, data[:1]) + dataset_loss(m, data[1:])
    assert total == pytest.approx(parts, rel=1e-14)


def test_zero_model_zero_data_zero_gradient():
    m = SurrogateModel.create(["u"], ["y"], orders=2, zero=True)
    tr = _trace(np.zeros(21), np.zeros(21), dt=0.1)
    assert np.all(loss_gradient(m, [tr], step=0.1) == 0)


@pytest.mark.parametrize("seed", range(20))
def test_loss_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    orders = int(rng.integers(1, 3))
    plant = first_order() if orders == 1 else linear_second_order(horizon=2.0)
    data = synthetic(1 + seed % 2, seed=seed, plant=plant, horizon=1.0 if orders == 1 else 2.0)
    fk = LinearKnownDynamics(rng.normal(size=(1, orders)) * 0.3, [[0.5]]) if seed % 3 == 0 else None
    m = SurrogateModel.create(list(plant.input_names), list(plant.output_names), orders=orders,
                              hidden=(4, 3), seed=seed, f_k=fk)
    g = loss_gradient(m, data)
    fd = fd_gradient(lambda th: dataset_loss(m.with_theta(th), data), m.theta.copy())
    assert rel_err(g, fd) < 1e-4


def test_gradient_additive_over_traces():
    m = SurrogateModel.create(["u"], ["x"], orders=1, hidden=(4, 3), seed=2)
    data = synthetic(2, seed=4)
    np.testing.assert_allclose(
        loss_gradient(m, data), loss_gradient(m, data[:1]) + loss_gradient(m, data[1:]), rtol=1e-12, atol=1e-15
    )


@pytest.fixture(scope="module")
def trained():
    data = synthetic(3)
    return data, train(data, TrainConfig(orders=1))


def test_train_fits_first_order_plant(trained):
    data, model = trained
    assert dataset_loss(model, data) < 1e-3


def test_train_reduces_loss_tenfold():
    plant = first_order()
    tr = run_experiment(plant, InputSignal.constant(0.7, ["u"], 5.0))
    model = train([tr], TrainConfig(orders=1, adam_epochs=100, lbfgs_iters=10))
    assert model.meta["final_loss"] * 10 <= model.meta["initial_loss"]


def test_train_is_deterministic():
    data = synthetic(1, seed=5, horizon=3.0)
    cfg = TrainConfig(orders=1, adam_epochs=30, lbfgs_iters=5, seed=7)
    a, b = train(data, cfg), train(data, cfg)
    assert np.array_equal(a.theta, b.theta)


def test_train_returns_best_loss(trained):
    data, model = trained
    assert dataset_loss(model, data) == pytest.approx(model.meta["final_loss"], rel=1e-12)


def test_train_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train([])


def test_lifting_consistency():
    m = SurrogateModel.create(["u"], ["y"], orders=2, seed=1)
    u = InputSignal([0.0, 0.5], [[1.0], [-1.0]], ["u"], 1.0)
    grid = uniform_grid(1.0, 0.01)
    _, Z = simulate_surrogate(m, [0.2, -0.1], u, grid, return_states=True)
    dz0 = np.gradient(Z[:, 0], 0.01)
    assert np.max(np.abs(dz0[1:-1] - Z[1:-1, 1])) < 1e-3


def test_hybrid_prior_beats_cold_start():
    data = synthetic(2, seed=9)
    fk = LinearKnownDynamics([[-1.0]], [[1.0]])
    hybrid = SurrogateModel.create(["u"], ["x"], orders=1, f_k=fk, zero=True)
    cold = SurrogateModel.create(["u"], ["x"], orders=1, seed=0)
    assert dataset_loss(hybrid, data) < dataset_loss(cold, data)


def test_checkpoint_round_trip(tmp_path, trained):
    _, model = trained
    path = save_checkpoint(model, tmp_path / "m.json")
    back = load_checkpoint(path)
    assert np.array_equal(back.theta, model.theta)
    assert back.lifting.orders == model.lifting.orders
    assert back.input_names == model.input_names


def test_checkpoint_with_prior_round_trip(tmp_path):
    fk = LinearKnownDynamics([[-1.0]], [[1.0]], [0.25])
    m = SurrogateModel.create(["u"], ["x"], orders=1, f_k=fk, seed=4)
    back = load_checkpoint(save_checkpoint(m, tmp_path / "m.json"))
    Z, U = np.ones((3, 1)), np.ones((3, 1))
    np.testing.assert_array_equal(back.vector_field(Z, U), m.vector_field(Z, U))


def test_checkpoint_version_mismatch(tmp_path):
    import json

    m = SurrogateModel.create(["u"], ["x"], orders=1)
    p = save_checkpoint(m, tmp_path / "m.json")
    rec = json.loads(p.read_text())
    rec["version"] = 99
    p.write_text(json.dumps(rec))
    with pytest.raises(ValueError):
        load_checkpoint(p)
