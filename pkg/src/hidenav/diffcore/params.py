"""Named trainable arrays with gradient and Adam state."""
import numpy as np


class ShapeError(ValueError):
    """Incompatible array shapes passed to a primitive or parameter op."""


def check_finite(a, what):
    if not np.isfinite(a).all():
        raise ValueError(f"{what}: non-finite values rejected")
    return a


class Entry:
    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "adam_t")

    def __init__(self, name, value):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)
        self.adam_t = 0


class ParameterSet:
    """Uniquely named float64 arrays; iteration is lexicographic by name."""

    def __init__(self):
        self._entries = {}

    def add(self, name, value):
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.ascontiguousarray(value, dtype=np.float64)
        check_finite(value, f"parameter {name!r}")
        entry = Entry(name, value)
        self._entries[name] = entry
        return entry

    def names(self):
        return sorted(self._entries)

    def entry(self, name):
        return self._entries[name]

    def value(self, name):
        return self._entries[name].value

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return (self._entries[n] for n in self.names())

    def __len__(self):
        return len(self._entries)

    def zero_grads(self):
        for e in self:
            e.grad[:] = 0.0

    def clone(self):
        other = ParameterSet()
        for e in self:
            other.add(e.name, e.value.copy())
        return other

    def copy_values_from(self, other):
        if self.names() != other.names():
            raise ShapeError("parameter sets differ in names")
        for name in self.names():
            mine, theirs = self._entries[name], other._entries[name]
            if mine.value.shape != theirs.value.shape:
                raise ShapeError(
                    f"parameter {name!r}: shape {mine.value.shape} vs {theirs.value.shape}")
            mine.value[:] = theirs.value

    def flat_values(self):
        """All values concatenated in name order (checkpoint layout)."""
        if not self._entries:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate([self._entries[n].value.ravel() for n in self.names()])

    def load_flat(self, vec):
        total = sum(e.value.size for e in self)
        if vec.size != total:
            raise ShapeError(f"flat vector of {vec.size} values, expected {total}")
        check_finite(vec, "flat parameter vector")
        off = 0
        for e in self:
            n = e.value.size
            e.value[:] = vec[off:off + n].reshape(e.value.shape)
            off += n


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update in place, from the stored gradients."""
    for e in params:
        e.adam_t += 1
        e.adam_m += (1.0 - beta1) * (e.grad - e.adam_m)
        e.adam_v += (1.0 - beta2) * (e.grad * e.grad - e.adam_v)
        m_hat = e.adam_m / (1.0 - beta1 ** e.adam_t)
        v_hat = e.adam_v / (1.0 - beta2 ** e.adam_t)
        e.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def soft_update(target, live, tau):
    """target <- tau*live + (1-tau)*target, per parameter."""
    if target.names() != live.names():
        raise ShapeError("soft update across mismatched parameter sets")
    for name in target.names():
        t, l = target.entry(name), live.entry(name)
        t.value += tau * (l.value - t.value)


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
