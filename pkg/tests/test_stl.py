import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from falconn.stl import (
    NN_BETA_SPEC,
    NN_SPEC,
    NNX_SPEC,
    And,
    EmptyIntervalError,
    Finally,
    Globally,
    HorizonError,
    NegPred,
    Not,
    Or,
    Pred,
    SampledSignal,
    StlSyntaxError,
    UnknownChannelError,
    formula_depth,
    formula_horizon,
    interval_indices,
    is_nnf,
    max_arity,
    parse_formula,
    robustness_exact,
    robustness_gradient_check,
    robustness_smooth,
    soft_max,
    soft_min,
    to_nnf,
)

from stl_oracle import brute_robustness, random_instance, satisfies


def ramp():
    return SampledSignal([0.0, 1.0, 2.0], {"y": [1.0, 2.0, 3.0]})


# -- parsing ---------------------------------------------------------------


def test_parse_atomic():
    f = parse_formula("y > 0")
    assert isinstance(f, Pred)
    assert parse_formula("mu", {"mu": "y > 0"}) == f


def test_parse_nn_shape():
    f = parse_formula(NN_SPEC)
    assert isinstance(f, Globally) and (f.a, f.b) == (1.0, 37.0)
    assert isinstance(f.child, Or)
    left, right = f.child.children
    assert isinstance(left, NegPred)
    assert isinstance(right, Finally) and isinstance(right.child, Globally)
    assert isinstance(right.child.child, NegPred)

    def no_and(g):
        if isinstance(g, And):
            return False
        return all(no_and(c) for c in getattr(g, "children", ())) and (
            not hasattr(g, "child") or no_and(g.child)
        )

    assert no_and(f)


def test_parse_nnx_shape():
    f = parse_formula(NNX_SPEC)
    assert isinstance(f, And) and len(f.children) == 3
    assert [type(c) for c in f.children] == [Finally, Finally, Globally]


@pytest.mark.parametrize(
    "text, expected", [(NN_SPEC, 40.0), (NN_BETA_SPEC, 40.0), (NNX_SPEC, 3.0)]
)
def test_table_horizons(text, expected):
    f = parse_formula(text)
    assert is_nnf(f)
    assert formula_horizon(f) == pytest.approx(expected)


def test_interval_bounds_are_exact():
    f = parse_formula("G[0.1,0.3](x > 0)")
    assert (f.a, f.b) == (0.1, 0.3)


@pytest.mark.parametrize(
    "text, pos",
    [
        ("G[0,1](x > )", 11),
        ("G[2,1](x > 0)", 1),
        ("F[-1,2](x > 0)", 1),
        ("X[0,1](x > 0)", 0),
        ("x > 0 &", 7),
        ("x ? 0", 2),
    ],
)
def test_syntax_errors(text, pos):
    with pytest.raises(StlSyntaxError) as err:
        parse_formula(text)
    assert err.value.position == pos


def test_chained_comparison_is_conjunction():
    f = parse_formula("1 < x < 2")
    assert isinstance(f, And) and len(f.children) == 2


# -- normalization -----------------------------------------------------------


def test_de_morgan():
    f = to_nnf(Not(parse_formula("x > 0 & y > 0")))
    assert isinstance(f, Or) and all(isinstance(c, NegPred) for c in f.children)


def test_globally_duality():
    f = to_nnf(Not(parse_formula("G[1,2](x > 0)")))
    assert isinstance(f, Finally) and (f.a, f.b) == (1.0, 2.0)
    assert isinstance(f.child, NegPred)


def test_double_negation():
    p = parse_formula("x > 0")
    assert to_nnf(Not(Not(p))) == p


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nnf_preserves_robustness(seed):
    rng = np.random.default_rng(seed)
    f, times, sig = random_instance(rng, allow_not=True)
    g = to_nnf(f)
    assert is_nnf(g)
    s = SampledSignal(times, sig)
    assert robustness_exact(g, s) == pytest.approx(brute_robustness(f, sig, 0, 0.25), abs=1e-12)


# -- horizon -----------------------------------------------------------------


def test_horizon_examples():
    assert formula_horizon(parse_formula("G[1,37] F[0,2] G[0,1] (y > 0)")) == 40
    assert formula_horizon(parse_formula("y > 0")) == 0
    assert formula_horizon(parse_formula("F[0,1](y > 0) & G[2,3](y > 0)")) == 3


# -- interval binding ----------------------------------------------------------


def test_interval_indices():
    assert list(interval_indices([0, 1, 2, 3], 0, 1, 2)) == [1, 2]
    assert list(interval_indices([0, 0.5, 1.0], 0, 0, 0)) == [0]
    assert list(interval_indices([0, 0.2, 0.4], 0.2, 0.1, 0.3)) == [1, 2]


def test_interval_indices_empty():
    with pytest.raises(EmptyIntervalError):
        interval_indices([0, 1, 2], 0, 5, 6)


# -- exact robustness ------------------------------------------------------------


def test_constant_signal():
    s = SampledSignal(np.arange(5.0), {"y": np.ones(5)})
    for t in range(5):
        assert robustness_exact(parse_formula("y > 0"), s, t) == 1.0


def test_globally_and_finally_on_ramp():
    assert robustness_exact(parse_formula("G[0,2](y < 2.5)"), ramp()) == pytest.approx(-0.5)
    assert robustness_exact(parse_formula("F[0,2](y > 2.5)"), ramp()) == pytest.approx(0.5)


def test_horizon_exceeded():
    with pytest.raises(HorizonError):
        robustness_exact(parse_formula("G[0,5](y > 0)"), ramp())


def test_unknown_channel():
    with pytest.raises(UnknownChannelError):
        robustness_exact(parse_formula("z > 0"), ramp())


def test_exact_abs_is_true_abs():
    s = SampledSignal([0.0], {"y": [-2.0]})
    assert robustness_exact(parse_formula("abs(y) > 1"), s) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sign_soundness(seed):
    rng = np.random.default_rng(seed)
    f, times, sig = random_instance(rng)
    r = robustness_exact(f, SampledSignal(times, sig))
    if r > 0:
        assert satisfies(f, sig, 0, 0.25)
    elif r < 0:
        assert not satisfies(f, sig, 0, 0.25)


# -- smooth robustness ---------------------------------------------------------------


def test_soft_closed_forms():
    assert soft_max([0.0, 0.0], 2.0) == pytest.approx(math.log(2) / 2, abs=1e-12)
    assert soft_min([1.0, 1.0], 2.0) == pytest.approx(1 - math.log(2) / 2, abs=1e-12)


def test_soft_is_overflow_safe():
    assert soft_max([1e4, 1e4 - 1], 50.0) == pytest.approx(1e4, abs=1e-3)
    assert soft_min([-1e4, 0.0], 50.0) == pytest.approx(-1e4, abs=1e-3)


@pytest.mark.parametrize("k", [2.0, 8.0, 50.0, 1000.0])
def test_smooth_converges_to_exact(k):
    f = parse_formula("G[0,2](y < 2.5)")
    r = robustness_smooth(f, ramp(), 0, k)
    assert r.mode == "smooth" and r.gradient is not None
    assert abs(r.value + 0.5) <= math.log(3) / k


def test_smooth_rejects_bad_k():
    with pytest.raises(ValueError):
        robustness_smooth(parse_formula("y > 0"), ramp(), 0, 0.0)


def test_gradient_entries_cover_every_sample():
    r = robustness_smooth(parse_formula("F[0,2](y > x)"), SampledSignal([0, 1, 2], {"x": [0, 0, 0], "y": [1, 2, 3]}), 0, 2)
    assert set(r.gradient) == {"x", "y"}
    assert all(g.shape == (3,) for g in r.gradient.values())


def test_gradient_linear_predicate():
    s = SampledSignal([0.0, 1.0], {"x": [0.3, -1.0], "y": [2.0, 0.5]})
    assert robustness_gradient_check(parse_formula("2*x - 3*y > 1"), s, 0, 2.0) < 1e-8


def test_gradient_nested_random_signal():
    rng = np.random.default_rng(7)
    s = SampledSignal(np.arange(20) * 0.5, {"x": rng.normal(size=20)})
    f = parse_formula("G[0,4] F[0,3] (x > 0.2)")
    assert robustness_gradient_check(f, s, 0, 2.0) < 1e-4


def test_gradient_abs_predicate_away_from_kink():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 2.0, size=10) * rng.choice([-1, 1], size=10)
    s = SampledSignal(np.arange(10) * 0.1, {"x": x, "r": np.full(10, 0.1)})
    f = parse_formula("G[0,0.5](abs(x - r) < 1.5)")
    assert robustness_gradient_check(f, s, 0, 2.0) < 1e-4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lse_error_bound(seed):
    rng = np.random.default_rng(seed)
    f, times, sig = random_instance(rng)
    s = SampledSignal(times, sig)
    exact = robustness_exact(f, s)
    m = max_arity(f, times)
    for k in (1.0, 2.0, 8.0):
        err = abs(robustness_smooth(f, s, 0, k).value - exact)
        assert err <= formula_depth(f) * math.log(m) / k + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_gradients(seed):
    rng = np.random.default_rng(seed)
    f, times, sig = random_instance(rng, max_samples=15)
    assert robustness_gradient_check(f, SampledSignal(times, sig), 0, 2.0) < 1e-4
