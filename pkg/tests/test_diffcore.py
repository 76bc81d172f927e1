import numpy as np
import pytest

from hidenav import diffcore as dc

import fdcheck
import prim_suite


# ------------------------------------------------------------- forward values

def test_relu_forward():
    tape = dc.Tape()
    y = dc.relu(tape.const([-1.0, 0.0, 2.0]))
    assert np.array_equal(y.value, [0.0, 0.0, 2.0])


def test_neighborhood_max_spreads_single_peak():
    grid = np.zeros((3, 3))
    grid[1, 1] = 5.0
    tape = dc.Tape()
    y = dc.neighborhood_max3(tape.const(grid))
    assert np.array_equal(y.value, np.full((3, 3), 5.0))


def test_neighborhood_max_idempotent_on_constant():
    tape = dc.Tape()
    c = tape.const(np.full((4, 5), -1.0))
    once = dc.neighborhood_max3(c)
    twice = dc.neighborhood_max3(once)
    assert np.array_equal(once.value, np.full((4, 5), -1.0))
    assert np.array_equal(twice.value, once.value)


def test_sigmoid_softplus_values():
    tape = dc.Tape()
    x = tape.const([0.0, 100.0, -100.0])
    s = dc.sigmoid(x)
    assert np.allclose(s.value, [0.5, 1.0, 0.0])
    sp = dc.softplus(x)
    assert np.allclose(sp.value, [np.log(2.0), 100.0, 0.0])


# ------------------------------------------------------------------- backward

def test_square_gradient():
    ps = dc.ParameterSet()
    ps.add("x", np.array(3.0))
    tape = dc.Tape()
    x = tape.param(ps, "x")
    out = dc.mul(x, x)
    dc.backward(tape, out)
    assert ps.entry("x").grad == pytest.approx(6.0)


def test_maxpool_routes_gradient_to_argmax():
    ps = dc.ParameterSet()
    ps.add("x", np.array([[1.0, 2.0], [3.0, 4.0]]))
    tape = dc.Tape()
    out = dc.maxpool2x2(tape.param(ps, "x"))
    dc.backward(tape, out)
    assert np.array_equal(ps.entry("x").grad, [[0.0, 0.0], [0.0, 1.0]])


def test_mlp_gradcheck_tight():
    rng = np.random.default_rng(11)
    ps = dc.ParameterSet()
    ps.add("w1", rng.normal(size=(4, 6)) * 0.5)
    ps.add("b1", rng.normal(size=6) * 0.1)
    ps.add("w2", rng.normal(size=(6, 1)) * 0.5)
    ps.add("b2", rng.normal(size=1) * 0.1)
    x = rng.normal(size=(3, 4))

    def build(tape):
        h = dc.tanh(dc.linear(tape.const(x), tape.param(ps, "w1"), tape.param(ps, "b1")))
        y = dc.linear(h, tape.param(ps, "w2"), tape.param(ps, "b2"))
        return dc.mean(y)

    fdcheck.assert_gradcheck(build, ps, rel_tol=1e-5)


def test_conv2d_gradcheck_tight():
    rng = np.random.default_rng(12)
    ps = dc.ParameterSet()
    ps.add("x", rng.normal(size=(6, 6)))
    ps.add("k", rng.normal(size=(3, 3)))
    ps.add("b", rng.normal(size=1))
    w = rng.normal(size=(6, 6))

    def build(tape):
        y = dc.conv2d_same(tape.param(ps, "x"), tape.param(ps, "k"), tape.param(ps, "b"))
        return dc.mean(dc.mul(y, tape.const(w)))

    fdcheck.assert_gradcheck(build, ps, rel_tol=1e-5)


def test_backward_requires_scalar():
    ps = dc.ParameterSet()
    ps.add("x", np.ones(3))
    tape = dc.Tape()
    y = dc.relu(tape.param(ps, "x"))
    with pytest.raises(dc.ShapeError):
        dc.backward(tape, y)


def test_backward_zeroes_previous_grads_and_fills_unused():
    ps = dc.ParameterSet()
    ps.add("used", np.array(2.0))
    ps.add("unused", np.ones(4))
    for _ in range(2):
        tape = dc.Tape()
        x = tape.param(ps, "used")
        dummy = tape.param(ps, "unused")  # bound but not in the output graph
        del dummy
        out = dc.mul(x, x)
        dc.backward(tape, out)
        assert ps.entry("used").grad == pytest.approx(4.0)
    assert np.array_equal(ps.entry("unused").grad, np.zeros(4))


def test_backward_linearity():
    rng = np.random.default_rng(5)
    ps = dc.ParameterSet()
    ps.add("x", rng.normal(size=(3, 3)))

    def f(tape):
        x = tape.param(ps, "x")
        return dc.mean(dc.mul(x, x))

    def g(tape):
        x = tape.param(ps, "x")
        return dc.mean(dc.tanh(x))

    tape = dc.Tape()
    dc.backward(tape, dc.add(f(tape), g(tape)))
    combined = ps.entry("x").grad.copy()
    tape = dc.Tape()
    dc.backward(tape, f(tape))
    gf = ps.entry("x").grad.copy()
    tape = dc.Tape()
    dc.backward(tape, g(tape))
    gg = ps.entry("x").grad.copy()
    assert np.allclose(combined, gf + gg, atol=1e-15)


def test_backward_deterministic_bitwise():
    def run():
        rng = np.random.default_rng(42)
        ps = dc.ParameterSet()
        ps.add("k", rng.normal(size=(2, 1, 3, 3)))
        ps.add("b", rng.normal(size=2))
        x = rng.normal(size=(1, 5, 5))
        tape = dc.Tape()
        y = dc.conv2d_same(tape.const(x), tape.param(ps, "k"), tape.param(ps, "b"))
        out = dc.mean(dc.maxpool2x2(dc.relu(y)))
        dc.backward(tape, out)
        return ps.entry("k").grad.copy(), ps.entry("b").grad.copy()

    g1, g2 = run(), run()
    assert g1[0].tobytes() == g2[0].tobytes()
    assert g1[1].tobytes() == g2[1].tobytes()


# ------------------------------------------------------------------ catalogue

@pytest.mark.parametrize("name", prim_suite.PRIMITIVE_NAMES)
def test_primitive_gradcheck(name):
    prim_suite.run_gradcheck(name, seeds=range(20))


# ------------------------------------------------------------------ shape errors

def test_shape_errors_name_the_primitive():
    tape = dc.Tape()
    a = tape.const(np.ones((2, 3)))
    b = tape.const(np.ones((3, 2)))
    with pytest.raises(dc.ShapeError, match="add"):
        dc.add(a, b)
    with pytest.raises(dc.ShapeError, match="conv2d_same"):
        dc.conv2d_same(a, tape.const(np.ones((4, 4))), tape.const(np.ones(1)))
    with pytest.raises(dc.ShapeError, match="linear"):
        dc.linear(a, tape.const(np.ones((5, 2))), tape.const(np.ones(2)))
    with pytest.raises(dc.ShapeError, match="mse_loss"):
        dc.mse_loss(a, np.ones((2, 4)))


def test_non_finite_rejected():
    tape = dc.Tape()
    with pytest.raises(ValueError, match="non-finite"):
        tape.const(np.array([1.0, np.nan]))
    ps = dc.ParameterSet()
    with pytest.raises(ValueError, match="non-finite"):
        ps.add("w", np.array([np.inf]))


# ----------------------------------------------------------------------- adam

def test_adam_first_step_closed_form():
    ps = dc.ParameterSet()
    ps.add("x", np.array(0.0))
    ps.entry("x").grad[...] = 1.0
    dc.adam_step(ps, lr=0.001)
    assert ps.entry("x").value == pytest.approx(-0.001 / (1.0 + 1e-8), rel=1e-12)
    assert ps.entry("x").adam_t == 1


def test_adam_zero_grad_is_noop():
    ps = dc.ParameterSet()
    ps.add("x", np.array([1.0, -2.0]))
    dc.adam_step(ps, lr=0.001)
    assert np.array_equal(ps.entry("x").value, [1.0, -2.0])


def test_adam_constant_gradient_descends_monotonically():
    ps = dc.ParameterSet()
    ps.add("x", np.array(0.0))
    ps.entry("x").grad[...] = 1.0
    dc.adam_step(ps, lr=0.001)
    after_one = float(ps.entry("x").value)
    ps.entry("x").grad[...] = 1.0
    dc.adam_step(ps, lr=0.001)
    assert float(ps.entry("x").value) < after_one < 0.0


# ---------------------------------------------------------------- soft update

def test_soft_update_blend():
    live, target = dc.ParameterSet(), dc.ParameterSet()
    live.add("w", np.array([1.0]))
    target.add("w", np.array([0.0]))
    dc.soft_update(target, live, tau=0.05)
    assert target.value("w")[0] == pytest.approx(0.05)
    dc.soft_update(target, live, tau=1.0)
    assert target.value("w")[0] == pytest.approx(1.0)
    before = target.value("w").copy()
    dc.soft_update(target, live, tau=0.0)
    assert np.array_equal(target.value("w"), before)


def test_parameter_set_order_and_duplicates():
    ps = dc.ParameterSet()
    ps.add("b", np.zeros(1))
    ps.add("a", np.zeros(1))
    assert ps.names() == ["a", "b"]
    with pytest.raises(ValueError, match="duplicate"):
        ps.add("a", np.zeros(1))
