"""Reverse-mode autodiff over dense float64 arrays.

Define-by-run: primitives append nodes to a Tape in execution order; backward
walks the node list in exact reverse, accumulating gradients additively.
Gradients of parameters land in their ParameterSet entries; parameters of a
bound set that were never used keep zero-filled gradients.

Max-style primitives (maxpool, neighborhood max, elementwise maximum, mvprop)
route the gradient to the first maximum in row-major window order on ties.
"""
import numpy as np

from .. import _kernels as K
from .params import ParameterSet, ShapeError, check_finite


class Node:
    __slots__ = ("tape", "value", "grad", "backward_fn", "entry")

    def __init__(self, tape, value, backward_fn=None, entry=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.backward_fn = backward_fn
        self.entry = entry

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered record of primitive applications plus bound parameter sets."""

    def __init__(self):
        self.nodes = []
        self._psets = []

    def _push(self, value, backward_fn=None, entry=None, op="node"):
        value = np.asarray(value, dtype=np.float64)
        check_finite(value, op)
        node = Node(self, value, backward_fn, entry)
        self.nodes.append(node)
        return node

    def param(self, pset, name):
        if pset not in self._psets:
            self._psets.append(pset)
        entry = pset.entry(name)
        return self._push(entry.value, entry=entry, op=f"param {name!r}")

    def const(self, value):
        return self._push(np.asarray(value, dtype=np.float64), op="const")


def backward(tape, out):
    """Reverse pass from a scalar output; writes gradients into bound sets."""
    if out.value.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {out.shape}")
    for pset in tape._psets:
        pset.zero_grads()
    for node in tape.nodes:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        node.backward_fn(node.grad)
    for node in tape.nodes:
        if node.entry is not None and node.grad is not None:
            node.entry.grad += node.grad


def _acc(node, g):
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64)
    else:
        node.grad += g


def _as_node(x, like):
    if isinstance(x, Node):
        return x
    return like.tape.const(x)


def _shape_fail(op, *shapes):
    raise ShapeError(f"{op}: incompatible shapes " + " vs ".join(str(s) for s in shapes))


# ---------------------------------------------------------------- elementwise

def relu(x):
    mask = x.value > 0

    def back(g):
        _acc(x, g * mask)

    return x.tape._push(np.where(mask, x.value, 0.0), back, op="relu")


def tanh(x):
    y = np.tanh(x.value)

    def back(g):
        _acc(x, g * (1.0 - y * y))

    return x.tape._push(y, back, op="tanh")


def sigmoid(x):
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))

    def back(g):
        _acc(x, g * y * (1.0 - y))

    return x.tape._push(y, back, op="sigmoid")


def softplus(x):
    y = np.logaddexp(0.0, x.value)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))

    def back(g):
        _acc(x, g * s)

    return x.tape._push(y, back, op="softplus")


def _binary(op, a, b, forward, back_a, back_b):
    if isinstance(b, Node) or isinstance(a, Node):
        pass
    if not isinstance(a, Node) and not isinstance(b, Node):
        raise TypeError(f"{op}: at least one Node operand required")
    scalar_b = not isinstance(b, Node) and np.ndim(b) == 0
    scalar_a = not isinstance(a, Node) and np.ndim(a) == 0
    if not scalar_a:
        a = _as_node(a, b if isinstance(b, Node) else a)
    if not scalar_b:
        b = _as_node(b, a)
    av = a.value if isinstance(a, Node) else float(a)
    bv = b.value if isinstance(b, Node) else float(b)
    if isinstance(a, Node) and isinstance(b, Node) and a.shape != b.shape:
        _shape_fail(op, a.shape, b.shape)
    tape = a.tape if isinstance(a, Node) else b.tape
    y = forward(av, bv)

    def back(g):
        if isinstance(a, Node):
            _acc(a, back_a(g, av, bv))
        if isinstance(b, Node):
            _acc(b, back_b(g, av, bv))

    return tape._push(y, back, op=op)


def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def maximum(a, b):
    """Elementwise max of a pair; ties route the gradient to the first input."""
    b = _as_node(b, a)
    if a.shape != b.shape:
        _shape_fail("maximum", a.shape, b.shape)
    take_a = a.value >= b.value

    def back(g):
        _acc(a, g * take_a)
        _acc(b, g * ~take_a)

    return a.tape._push(np.where(take_a, a.value, b.value), back, op="maximum")


# ------------------------------------------------------------------- linear

def linear(x, w, b):
    """y = x @ w + b for x (F,) or (B, F), w (F, O), b (O,)."""
    xv, wv, bv = x.value, w.value, b.value
    if wv.ndim != 2 or bv.ndim != 1 or wv.shape[1] != bv.shape[0]:
        _shape_fail("linear", xv.shape, wv.shape, bv.shape)
    if xv.shape[-1] != wv.shape[0] or xv.ndim not in (1, 2):
        _shape_fail("linear", xv.shape, wv.shape)
    y = xv @ wv + bv

    def back(g):
        _acc(x, g @ wv.T)
        if xv.ndim == 1:
            _acc(w, np.outer(xv, g))
            _acc(b, g)
        else:
            _acc(w, xv.T @ g)
            _acc(b, g.sum(axis=0))

    return x.tape._push(y, back, op="linear")


def concat_cols(a, b):
    """Concatenate along the last axis, for (B, Fa)+(B, Fb) or (Fa,)+(Fb,)."""
    b = _as_node(b, a)
    if a.value.ndim != b.value.ndim or a.value.shape[:-1] != b.value.shape[:-1]:
        _shape_fail("concat_cols", a.shape, b.shape)
    na = a.value.shape[-1]

    def back(g):
        _acc(a, g[..., :na])
        _acc(b, g[..., na:])

    return a.tape._push(np.concatenate([a.value, b.value], axis=-1), back,
                        op="concat_cols")


def flatten(x, batched=False):
    shape = x.value.shape
    y = x.value.reshape(shape[0], -1) if batched else x.value.reshape(-1)

    def back(g):
        _acc(x, g.reshape(shape))

    return x.tape._push(y, back, op="flatten")


def select_column(x, j):
    if x.value.ndim != 2:
        _shape_fail("select_column", x.shape)

    def back(g):
        gx = np.zeros_like(x.value)
        gx[:, j] = g
        _acc(x, gx)

    return x.tape._push(x.value[:, j].copy(), back, op="select_column")


# ---------------------------------------------------------------- conv / pool

def conv2d_same(x, k, b):
    """Same-padded 3x3 convolution.

    Accepted shapes: x (H,W)|(B,H,W) with k (3,3) and scalar bias, or
    x (C,H,W)|(B,C,H,W) with k (O,C,3,3) and bias (O,).
    """
    xv, kv = x.value, k.value
    if kv.shape[-2:] != (3, 3):
        _shape_fail("conv2d_same", kv.shape)
    if kv.ndim == 2:
        if xv.ndim == 2:
            x4, out_shape = xv[None, None], xv.shape
        elif xv.ndim == 3:
            x4, out_shape = xv[:, None], xv.shape
        else:
            _shape_fail("conv2d_same", xv.shape, kv.shape)
        if b.value.size != 1:
            _shape_fail("conv2d_same bias", b.value.shape)
        k4 = kv[None, None]
    elif kv.ndim == 4:
        if xv.ndim == 3:
            x4 = xv[None]
        elif xv.ndim == 4:
            x4 = xv
        else:
            _shape_fail("conv2d_same", xv.shape, kv.shape)
        if x4.shape[1] != kv.shape[1]:
            _shape_fail("conv2d_same", xv.shape, kv.shape)
        if b.value.shape != (kv.shape[0],):
            _shape_fail("conv2d_same bias", b.value.shape, kv.shape)
        k4 = kv
        out_shape = (xv.shape[0], kv.shape[0]) + xv.shape[-2:] if xv.ndim == 4 \
            else (kv.shape[0],) + xv.shape[-2:]
    else:
        _shape_fail("conv2d_same", kv.shape)
    x4 = np.ascontiguousarray(x4)
    y4 = K.conv3x3(x4, np.ascontiguousarray(k4))
    if kv.ndim == 4:
        y = y4.reshape(out_shape) + (b.value[:, None, None] if xv.ndim == 3
                                     else b.value[None, :, None, None])
    else:
        y = y4.reshape(out_shape) + float(b.value.reshape(-1)[0])

    def back(g):
        g4 = np.ascontiguousarray(g.reshape(y4.shape))
        _acc(x, K.conv3x3_grad_input(g4, np.ascontiguousarray(k4)).reshape(xv.shape))
        _acc(k, K.conv3x3_grad_kernel(x4, g4).reshape(kv.shape))
        if kv.ndim == 4:
            _acc(b, g4.sum(axis=(0, 2, 3)).reshape(b.value.shape))
        else:
            _acc(b, np.full(b.value.shape, g4.sum()))

    return x.tape._push(y, back, op="conv2d_same")


def maxpool2x2(x):
    """2x2 stride-2 max pool; trailing odd rows/cols pool over partial windows."""
    xv = x.value
    if xv.ndim == 2:
        x4 = xv[None, None]
    elif xv.ndim == 3:
        x4 = xv[:, None]
    elif xv.ndim == 4:
        x4 = xv
    else:
        _shape_fail("maxpool2x2", xv.shape)
    x4 = np.ascontiguousarray(x4)
    y4, idx = K.maxpool2(x4)
    if xv.ndim == 2:
        y = y4[0, 0]
    elif xv.ndim == 3:
        y = y4[:, 0]
    else:
        y = y4

    def back(g):
        g4 = np.ascontiguousarray(g.reshape(y4.shape))
        _acc(x, K.maxpool2_scatter(g4, idx, xv.shape[-2], xv.shape[-1]).reshape(xv.shape))

    return x.tape._push(y, back, op="maxpool2x2")


def neighborhood_max3(x):
    """3x3/stride-1 neighborhood max; windows are clipped at the borders."""
    xv = x.value
    if xv.ndim == 2:
        x3 = xv[None]
    elif xv.ndim == 3:
        x3 = xv
    else:
        _shape_fail("neighborhood_max3", xv.shape)
    x3 = np.ascontiguousarray(x3)
    y3, idx = K.nmax3(x3)
    y = y3[0] if xv.ndim == 2 else y3

    def back(g):
        g3 = np.ascontiguousarray(g.reshape(y3.shape))
        _acc(x, K.nmax3_scatter(g3, idx).reshape(xv.shape))

    return x.tape._push(y, back, op="neighborhood_max3")


def mvprop(rbar, p, n_iter):
    """Value propagation: v0 = rbar, v <- max(v, rbar + p*(nmax3(v) - rbar)).

    rbar may be (H, W) or a stack (G, H, W); a 2D p is shared across the
    stack and its gradient sums over it.
    """
    rbar = _as_node(rbar, p)
    rv, pv = rbar.value, p.value
    if n_iter < 1:
        raise ShapeError("mvprop: n_iter must be >= 1")
    if rv.shape[-2:] != pv.shape[-2:] or rv.ndim not in (2, 3) or pv.ndim not in (2, 3):
        _shape_fail("mvprop", rv.shape, pv.shape)
    r3 = rv[None] if rv.ndim == 2 else rv
    if pv.ndim == 2:
        p3 = np.broadcast_to(pv, r3.shape)
    elif pv.shape == r3.shape:
        p3 = pv
    else:
        _shape_fail("mvprop", rv.shape, pv.shape)
    r3 = np.ascontiguousarray(r3)
    p3 = np.ascontiguousarray(p3)
    v, nm, idx, upd = K.mvprop_forward(r3, p3, n_iter)
    y = v[0] if rv.ndim == 2 else v

    def back(g):
        g3 = np.ascontiguousarray(g.reshape(v.shape))
        g_r, g_p = K.mvprop_backward(g3, r3, p3, nm, idx, upd)
        _acc(rbar, g_r.reshape(rv.shape))
        _acc(p, g_p.sum(axis=0) if pv.ndim == 2 and r3.shape[0] > 1 else g_p.reshape(pv.shape))

    return p.tape._push(y, back, op="mvprop")


# ------------------------------------------------------------ select / reduce

def select_pixel(x, index):
    """Pick x[r, c] from (H, W), or per-row pixels from (B, H, W) via (B, 2)."""
    xv = x.value
    if xv.ndim == 2:
        r, c = int(index[0]), int(index[1])
        if not (0 <= r < xv.shape[0] and 0 <= c < xv.shape[1]):
            _shape_fail("select_pixel", xv.shape, (r, c))

        def back(g):
            gx = np.zeros_like(xv)
            gx[r, c] = g
            _acc(x, gx)

        return x.tape._push(np.float64(xv[r, c]), back, op="select_pixel")
    if xv.ndim == 3:
        idx = np.asarray(index, dtype=np.int64)
        if idx.shape != (xv.shape[0], 2):
            _shape_fail("select_pixel", xv.shape, idx.shape)
        rows = np.arange(xv.shape[0])

        def back(g):
            gx = np.zeros_like(xv)
            np.add.at(gx, (rows, idx[:, 0], idx[:, 1]), g)
            _acc(x, gx)

        return x.tape._push(xv[rows, idx[:, 0], idx[:, 1]].copy(), back,
                            op="select_pixel")
    _shape_fail("select_pixel", xv.shape)


def gather_maps(x, index):
    """Pick whole maps from a stack: (G, H, W)[index] -> (B, H, W)."""
    xv = x.value
    if xv.ndim != 3:
        _shape_fail("gather_maps", xv.shape)
    idx = np.asarray(index, dtype=np.int64)

    def back(g):
        gx = np.zeros_like(xv)
        np.add.at(gx, idx, g)
        _acc(x, gx)

    return x.tape._push(xv[idx].copy(), back, op="gather_maps")


def mean(x):
    n = x.value.size

    def back(g):
        _acc(x, np.full_like(x.value, float(g) / n))

    return x.tape._push(np.float64(x.value.mean()), back, op="mean")


def mse_loss(pred, target):
    target = _as_node(target, pred)
    if pred.shape != target.shape:
        _shape_fail("mse_loss", pred.shape, target.shape)
    diff = pred.value - target.value
    n = diff.size

    def back(g):
        scale = 2.0 * float(g) / n
        _acc(pred, scale * diff)
        _acc(target, -scale * diff)

    return pred.tape._push(np.float64(np.mean(diff * diff)), back, op="mse_loss")
