import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from falconn.sim import InputSignal, corners_random, first_order, run_experiment
from falconn.surrogate import SurrogateModel
from falconn.symreg import (
    Candidate,
    DistillationError,
    SrConfig,
    SymbolicModel,
    complexity,
    diff,
    distill,
    eval_expr,
    evolve,
    expr_jacobian,
    parse_expr,
    sample_derivatives,
    score_candidates,
    select_candidate,
    to_string,
)
from falconn.symreg.gp import _Generator
from falconn.surrogate.lifting import build_lifting


def random_tree(seed, depth=4, n_states=2, n_inputs=1):
    gen = _Generator(np.random.default_rng(seed), n_states, n_inputs, 30)
    while True:
        e = gen.tree(depth)
        if complexity(e) < 30:
            return e


def cand(text, mse=0.0):
    e = parse_expr(text)
    return Candidate(e, complexity(e), mse)


# --- evaluation -------------------------------------------------------------


def test_eval_sum():
    assert eval_expr(parse_expr("z1 + u1"), [0.0, 2.0], [0.0, 3.0]) == 5.0


def test_eval_sin_zero():
    assert eval_expr(parse_expr("sin(0.0)"), [0.0], [0.0]) == 0.0


def test_division_by_zero_is_flagged():
    assert not math.isfinite(eval_expr(parse_expr("1.0 / z0"), [0.0], [0.0]))
    assert not math.isfinite(eval_expr(parse_expr("1.0 / z0"), [1e-13], [0.0]))
    assert eval_expr(parse_expr("1.0 / z0"), [1e-11], [0.0]) == pytest.approx(1e11)


def test_exp_overflow_is_flagged():
    assert eval_expr(parse_expr("exp(z0)"), [1000.0], [0.0]) == math.inf


def test_complexity_is_node_count():
    assert complexity(parse_expr("(u0 - z0)")) == 3
    assert complexity(parse_expr("sin((z0 * 2.0))")) == 4
    assert complexity(parse_expr("2.5")) == 1


@given(st.integers(0, 10_000))
@settings(max_examples=200, deadline=None)
def test_string_round_trip(seed):
    e = random_tree(seed)
    assert parse_expr(to_string(e)) == e


def test_parse_precedence_and_negatives():
    assert parse_expr("z0 - 2 * u0") == ("-", ("z", 0), ("*", ("c", 2.0), ("u", 0)))
    assert parse_expr("-1.5e-3") == ("c", -1.5e-3)
    with pytest.raises(ValueError):
        parse_expr("z0 +")
    with pytest.raises(ValueError):
        parse_expr("log(z0)")


# --- symbolic derivatives ---------------------------------------------------


def test_product_rule_example():
    assert diff(parse_expr("z1 * u1"), ("z", 1)) == ("u", 1)


def test_sin_derivative():
    assert diff(parse_expr("sin(z1)"), ("z", 1)) == ("cos", ("z", 1))


def test_derivative_of_unrelated_variable_is_zero():
    assert diff(parse_expr("sin(z0) * u0"), ("z", 1)) == ("c", 0.0)


@pytest.mark.parametrize("seed", range(100))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(10_000 + seed)
    e = random_tree(seed)
    dz, du = expr_jacobian(e, 2, 1)
    for _ in range(20):
        z = rng.uniform(-1.5, 1.5, 2)
        u = rng.uniform(-1.5, 1.5, 1)
        f0 = eval_expr(e, z, u)
        if not math.isfinite(f0) or abs(f0) > 1e6:
            continue
        x = np.concatenate([z, u])
        analytic = np.array([eval_expr(d, z, u) for d in dz + du])
        fd = np.empty(3)
        ok = True
        for i in range(3):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fp, fm = eval_expr(e, xp[:2], xp[2:]), eval_expr(e, xm[:2], xm[2:])
            ok &= math.isfinite(fp) and math.isfinite(fm)
            fd[i] = (fp - fm) / (2 * h)
        # stay away from poles, where neither route is meaningful
        if not ok or not np.all(np.isfinite(analytic)) or np.max(np.abs(analytic)) > 1e4:
            continue
        err = np.max(np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd)))
        assert err < 1e-6, (to_string(e), z, u)
        return
    pytest.skip("no regular point found")


# --- evolution --------------------------------------------------------------


@pytest.fixture(scope="module")
def linear_samples():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(500, 1))
    U = rng.uniform(-1, 1, (500, 1))
    return Z, U


def test_evolve_recovers_decay_plus_input(linear_samples):
    Z, U = linear_samples
    (front,) = evolve(Z, U, -Z[:, 0] + U[:, 0], SrConfig(seed=0))
    assert any(c.mse < 1e-6 and c.complexity <= 4 for c in front)


def test_evolve_recovers_constant(linear_samples):
    Z, U = linear_samples
    (front,) = evolve(Z, U, np.full(len(Z), 2.5), SrConfig(seed=0, iterations=10))
    best = front[0]
    assert best.complexity == 1 and best.mse < 1e-10
    assert best.expr[1] == pytest.approx(2.5)


def test_front_is_pareto_and_capped(linear_samples):
    Z, U = linear_samples
    y = np.sin(Z[:, 0]) * U[:, 0] + 0.3 * Z[:, 0] ** 2
    cfg = SrConfig(seed=3, iterations=30, max_complexity=12)
    (front,) = evolve(Z, U, y, cfg)
    cs = [c.complexity for c in front]
    ms = [c.mse for c in front]
    assert cs == sorted(cs) and len(set(cs)) == len(cs)
    assert all(a > b for a, b in zip(ms, ms[1:]))
    assert all(c < cfg.max_complexity and complexity(x.expr) == c for c, x in zip(cs, front))


def test_evolve_is_deterministic(linear_samples):
    Z, U = linear_samples
    y = np.cos(Z[:, 0]) + U[:, 0]
    cfg = SrConfig(seed=11, iterations=15)
    assert evolve(Z, U, y, cfg) == evolve(Z, U, y, cfg)


def test_sr_config_validation():
    with pytest.raises(ValueError):
        SrConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        SrConfig(population=0)


# --- derivative sampling ----------------------------------------------------


@pytest.fixture(scope="module")
def small_model():
    plant = first_order()
    rng = np.random.default_rng(0)
    data = [run_experiment(plant, corners_random(plant.u_min, plant.u_max, plant.input_names, 10, 5, rng))
            for _ in range(2)]
    model = SurrogateModel.create(["u"], ["x"], orders=1, hidden=(4, 3), seed=1)
    return model, data


def test_samples_without_perturbation_lie_on_rollouts(small_model):
    model, data = small_model
    a = sample_derivatives(model, data, n_extra=0)
    b = sample_derivatives(model, data, n_extra=30, perturb_scale=0.0)
    assert len(a) == 2 * 101
    base = {tuple(r) for r in np.hstack([a.Z, a.U])}
    assert all(tuple(r) in base for r in np.hstack([b.Z, b.U]))


def test_sample_targets_are_surrogate_field(small_model):
    model, data = small_model
    s = sample_derivatives(model, data)
    np.testing.assert_array_equal(s.target, model.vector_field(s.Z, s.U))


def test_sample_count_with_default_extra(small_model):
    model, data = small_model
    assert len(sample_derivatives(model, data, perturb_scale=0.25)) == 3 * 2 * 101


# --- selection --------------------------------------------------------------


@pytest.fixture(scope="module")
def decay_data():
    plant = first_order()
    rng = np.random.default_rng(3)
    return [run_experiment(plant, corners_random(plant.u_min, plant.u_max, plant.input_names, 10, 5, rng))
            for _ in range(2)]


LIFT1 = build_lifting(1, 1)


def test_select_prefers_trajectory_over_derivative_error(decay_data):
    # the more complex candidate fits derivatives better but drifts in simulation
    front = [cand("(u0 - z0)", mse=1e-2), cand("((u0 - z0) + 0.2)", mse=1e-3)]
    sym = select_candidate([front], decay_data, LIFT1, ["u"], ["x"])
    assert to_string(sym.exprs[0]) == "(u0 - z0)"


def test_select_single_candidate(decay_data):
    sym = select_candidate([[cand("(u0 - (0.9 * z0))")]], decay_data, LIFT1, ["u"], ["x"])
    assert to_string(sym.exprs[0]) == "(u0 - (0.9 * z0))"
    assert sym.trajectory_mse > 0


def test_select_rejects_input_free_candidate(decay_data):
    front = [cand("(0.0 - z0)", mse=1e-5), cand("((u0 - z0) * 0.5)", mse=1e-1)]
    sym = select_candidate([front], decay_data, LIFT1, ["u"], ["x"])
    assert to_string(sym.exprs[0]) == "((u0 - z0) * 0.5)"


def test_select_rejects_cancelled_input(decay_data):
    front = [cand("((u0 - u0) - z0)"), cand("((u0 * 2.0) - z0)", mse=1.0)]
    sym = select_candidate([front], decay_data, LIFT1, ["u"], ["x"])
    assert to_string(sym.exprs[0]) == "((u0 * 2.0) - z0)"


def test_select_rejects_unstable_candidate(decay_data):
    front = [cand("((z0 * z0) * 5.0) + u0", mse=0.0), cand("(u0 - (2.0 * z0))", mse=1.0)]
    sym = select_candidate([front], decay_data, LIFT1, ["u"], ["x"])
    assert to_string(sym.exprs[0]) == "(u0 - (2.0 * z0))"


def test_all_filtered_raises(decay_data):
    with pytest.raises(DistillationError):
        select_candidate([[cand("(0.0 - z0)")]], decay_data, LIFT1, ["u"], ["x"])


def test_selection_is_exhaustive_minimum(decay_data):
    texts = ["(u0 - z0)", "(u0 - (1.1 * z0))", "((0.9 * u0) - z0)", "(u0 - (z0 * z0))", "sin(u0)", "(0.5 * u0)"]
    front = [cand(t, mse=float(i)) for i, t in enumerate(texts)]
    scored = score_candidates([front], decay_data, LIFT1, ["u"], ["x"])
    sym = select_candidate([front], decay_data, LIFT1, ["u"], ["x"])
    assert all(sym.trajectory_mse <= loss for loss, _ in scored)


def test_symbolic_model_round_trip():
    lift = build_lifting(1, 2)
    m = SymbolicModel((parse_expr("((u0 - z0) * 4.0) - (0.8 * z1)"),), lift, ("Ref",), ("Pos",), (0.1,))
    back = SymbolicModel.from_dict(m.to_dict())
    assert back.exprs == m.exprs and back.lifting.orders == (2,)


def test_symbolic_jacobians_include_companion_block():
    lift = build_lifting(1, 2)
    m = SymbolicModel((parse_expr("(u0 * z0) - z1"),), lift, ("u",), ("y",))
    Jz, Ju = m.jacobians(np.array([[2.0, 3.0]]), np.array([[5.0]]))
    np.testing.assert_array_equal(Jz[0], [[0.0, 1.0], [5.0, -1.0]])
    np.testing.assert_array_equal(Ju[0], [[0.0], [2.0]])


# --- end to end -------------------------------------------------------------


def test_recovery_of_linear_plant():
    a, b = -0.5, 2.0
    plant = first_order(a=a, b=b)
    rng = np.random.default_rng(21)
    data = [run_experiment(plant, corners_random(plant.u_min, plant.u_max, plant.input_names, 10, 5, rng))
            for _ in range(3)]
    Z = rng.uniform(-4, 4, (600, 1))
    U = rng.uniform(-1, 1, (600, 1))
    fronts = evolve(Z, U, a * Z[:, 0] + b * U[:, 0], SrConfig(seed=0))
    sym = select_candidate(fronts, data, LIFT1, ["u"], ["x"])
    held = run_experiment(plant, InputSignal(np.arange(10.0), rng.uniform(-1, 1, 10), ["u"], 10.0))
    assert sym.trajectory_loss([held]) < 1e-4


def test_distill_is_deterministic(small_model):
    model, data = small_model
    cfg = SrConfig(seed=2, iterations=10)
    a, _ = distill(model, data, cfg)
    b, _ = distill(model, data, cfg)
    assert a.exprs == b.exprs
