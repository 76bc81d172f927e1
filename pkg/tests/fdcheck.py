"""Central finite-difference gradient oracle for tape graphs."""
import numpy as np

from hidenav import diffcore as dc


def numeric_grads(build, pset, h=1e-6):
    """d(out)/d(param) by central differences; build(tape) -> scalar node."""
    grads = {}
    for entry in pset:
        g = np.zeros_like(entry.value)
        flat = entry.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(build(dc.Tape()).value)
            flat[i] = orig - h
            down = float(build(dc.Tape()).value)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[entry.name] = g
    return grads


def analytic_grads(build, pset):
    tape = dc.Tape()
    out = build(tape)
    dc.backward(tape, out)
    return {e.name: e.grad.copy() for e in pset}


def max_errors(build, pset, h=1e-6):
    """(max relative error, max absolute-error-at-tiny-gradient) vs the oracle."""
    num = numeric_grads(build, pset, h=h)
    ana = analytic_grads(build, pset)
    rel_max, tiny_abs_max = 0.0, 0.0
    for name in num:
        n, a = num[name].reshape(-1), ana[name].reshape(-1)
        for i in range(n.size):
            err = abs(a[i] - n[i])
            if abs(n[i]) < 1e-6:
                tiny_abs_max = max(tiny_abs_max, err)
            else:
                rel_max = max(rel_max, err / abs(n[i]))
    return rel_max, tiny_abs_max


def assert_gradcheck(build, pset, rel_tol=1e-4, tiny_tol=1e-7, h=1e-6):
    rel, tiny = max_errors(build, pset, h=h)
    assert rel < rel_tol, f"relative gradient error {rel} >= {rel_tol}"
    assert tiny < tiny_tol, f"absolute gradient error {tiny} >= {tiny_tol} at tiny gradients"
