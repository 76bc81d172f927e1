"""Planning layer: a value-propagation map with a learned Gaussian attention
window over it.

The propagation network turns the top-down image into a per-pixel flow
probability p; unrolled neighborhood max-pooling spreads the goal reward into
a value map in [-1, 0]. A small CNN reads (value map, agent position image)
and predicts a 2x2 covariance whose Gaussian density, binarized above its
mean, masks which pixels are eligible subgoals. Selection is the argmax of
the masked value map over in-mask pixels; the Q-value of a chosen pixel is
the literal mask*value product, which keeps the value side differentiable
for the Bellman update (the binarized mask itself passes no gradient).
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import diffcore as dc
from .envs import proj, proj_inv

PROP_ITERS = 35
ATTN_CHANNELS = 32
ATTN_FC = 64


@dataclass(frozen=True)
class ValueMap:
    values: np.ndarray
    iterations: int


@dataclass(frozen=True)
class AttentionWindow:
    mean: tuple          # agent position, world units
    cov: np.ndarray      # (2, 2) symmetric positive definite, pixel units
    density: np.ndarray  # (H, W) Gaussian likelihood at pixel centers
    mask: np.ndarray     # (H, W) uint8, density > mean(density), agent pixel forced in


def reward_map(shape, goal_pixel):
    """-1 everywhere except 0 at the goal pixel."""
    h, w = shape
    r, c = int(goal_pixel[0]), int(goal_pixel[1])
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"goal pixel {goal_pixel} outside {shape}")
    out = np.full((h, w), -1.0)
    out[r, c] = 0.0
    return out


def mvprop(rbar, p, n_iter):
    """Forward-only value propagation (the differentiable twin lives on the tape)."""
    rbar = np.asarray(rbar, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if rbar.shape != p.shape:
        raise dc.ShapeError(f"mvprop: {rbar.shape} vs {p.shape}")
    v, _, _, _ = K.mvprop_forward(rbar[None], p[None], n_iter)
    return ValueMap(v[0], n_iter)


def gaussian_mask(s_pos, cov, grid):
    """Binarized Gaussian window centered on the agent, in pixel coordinates."""
    cov = np.asarray(cov, dtype=np.float64)
    h, w = grid.height, grid.width
    b = grid.block_size
    mean_r, mean_c = s_pos[1] / b, s_pos[0] / b
    rows = np.arange(h) + 0.5
    cols = np.arange(w) + 0.5
    dr = rows[:, None] - mean_r
    dco = cols[None, :] - mean_c
    a, d, off = cov[0, 0], cov[1, 1], cov[0, 1]
    det = a * d - off * off
    if det <= 0:
        raise ValueError("covariance must be positive definite")
    q = (dr * dr * d - 2.0 * dr * dco * off + dco * dco * a) / det
    density = np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det))
    mask = (density > density.mean()).astype(np.uint8)
    mask[proj(s_pos, grid)] = 1
    return AttentionWindow(tuple(s_pos), cov, density, mask)


def masked_argmax(values, mask):
    """Row-major-first argmax over in-mask pixels (mask must be nonempty)."""
    masked = np.where(mask > 0, values, -np.inf)
    flat = int(np.argmax(masked))
    return flat // values.shape[1], flat % values.shape[1]


def _pool_out(n):
    return (n + 1) // 2


class PlanningLayer:
    """Live and target networks bound to one grid geometry."""

    def __init__(self, grid, rng, n_prop_iters=PROP_ITERS, window="gaussian"):
        self.grid = grid
        self.n_prop_iters = n_prop_iters
        self.window = window  # "gaussian" or ("fixed", n)
        h, w = grid.height, grid.width
        for _ in range(3):
            h, w = _pool_out(h), _pool_out(w)
        self.flat_dim = ATTN_CHANNELS * h * w
        self.live = self._init_params(rng)
        self.target = self.live.clone()
        # forward caches, valid until the corresponding parameters change
        self._vmap_cache = {"live": {}, "target": {}}
        self._sig_cache = {"live": {}, "target": {}}

    def _init_params(self, rng):
        ps = dc.ParameterSet()
        ps.add("prop.conv1.k", dc.he_uniform(rng, (3, 3), 9))
        ps.add("prop.conv1.b", np.zeros(1))
        ps.add("prop.conv2.k", dc.he_uniform(rng, (3, 3), 9))
        ps.add("prop.conv2.b", np.zeros(1))
        c = ATTN_CHANNELS
        ps.add("attn.conv1.k", dc.he_uniform(rng, (c, 2, 3, 3), 2 * 9))
        ps.add("attn.conv1.b", np.zeros(c))
        ps.add("attn.conv2.k", dc.he_uniform(rng, (c, c, 3, 3), c * 9))
        ps.add("attn.conv2.b", np.zeros(c))
        ps.add("attn.conv3.k", dc.he_uniform(rng, (c, c, 3, 3), c * 9))
        ps.add("attn.conv3.b", np.zeros(c))
        ps.add("attn.fc1.w", dc.he_uniform(rng, (self.flat_dim, ATTN_FC), self.flat_dim))
        ps.add("attn.fc1.b", np.zeros(ATTN_FC))
        ps.add("attn.fc2.w", dc.he_uniform(rng, (ATTN_FC, ATTN_FC), ATTN_FC))
        ps.add("attn.fc2.b", np.zeros(ATTN_FC))
        ps.add("attn.head.w", dc.he_uniform(rng, (ATTN_FC, 3), ATTN_FC))
        ps.add("attn.head.b", np.zeros(3))
        return ps

    def _params(self, which):
        if which == "live":
            return self.live
        if which == "target":
            return self.target
        raise ValueError(f"which must be live|target, got {which!r}")

    def invalidate(self, which="both"):
        for side in ("live", "target") if which == "both" else (which,):
            self._vmap_cache[side].clear()
            self._sig_cache[side].clear()

    # ------------------------------------------------------------- forwards

    def propagation_map(self, image, which="live"):
        ps = self._params(which)
        h1 = K.conv3x3(image[None, None], ps.value("prop.conv1.k")[None, None])[0, 0] \
            + ps.value("prop.conv1.b")[0]
        h2 = K.conv3x3(h1[None, None], ps.value("prop.conv2.k")[None, None])[0, 0] \
            + ps.value("prop.conv2.b")[0]
        return 0.5 * (1.0 + np.tanh(0.5 * h2))

    def value_map(self, image, goal_pixel, which="live"):
        """Cached forward value map for one image and goal."""
        cache = self._vmap_cache[which]
        key = (image.tobytes(), tuple(goal_pixel))
        hit = cache.get(key)
        if hit is not None:
            return hit
        p = self.propagation_map(image, which)
        v = mvprop(reward_map(image.shape, goal_pixel), p, self.n_prop_iters).values
        cache[key] = v
        return v

    def _attn_batch(self, vmaps, pos_pixels, which):
        """(sigma1, sigma2, rho) rows for stacked (value map, position) inputs."""
        ps = self._params(which)
        bsz, h, w = vmaps.shape
        x = np.zeros((bsz, 2, h, w))
        x[:, 0] = vmaps
        x[np.arange(bsz), 1, pos_pixels[:, 0], pos_pixels[:, 1]] = 1.0
        for layer in (1, 2, 3):
            x = K.conv3x3(x, ps.value(f"attn.conv{layer}.k")) \
                + ps.value(f"attn.conv{layer}.b")[None, :, None, None]
            x, _ = K.maxpool2(x)
            x = np.maximum(x, 0.0)
        x = x.reshape(bsz, -1)
        x = np.maximum(x @ ps.value("attn.fc1.w") + ps.value("attn.fc1.b"), 0.0)
        x = np.maximum(x @ ps.value("attn.fc2.w") + ps.value("attn.fc2.b"), 0.0)
        out = x @ ps.value("attn.head.w") + ps.value("attn.head.b")
        s1 = np.logaddexp(0.0, out[:, 0])
        s2 = np.logaddexp(0.0, out[:, 1])
        rho = np.tanh(out[:, 2])
        return s1, s2, rho

    def attention_cov(self, value_map, pos_pixel, which="live"):
        """2x2 covariance [[s1^2, r*s1*s2], [r*s1*s2, s2^2]] from the window net."""
        if value_map.shape != (self.grid.height, self.grid.width):
            raise dc.ShapeError(
                f"attention_cov: map {value_map.shape} vs grid "
                f"({self.grid.height}, {self.grid.width})")
        s1, s2, rho = self._attn_batch(value_map[None],
                                       np.asarray(pos_pixel)[None], which)
        s1, s2, rho = float(s1[0]), float(s2[0]), float(rho[0])
        off = rho * s1 * s2
        return np.array([[s1 * s1, off], [off, s2 * s2]])

    def _sigma_rows(self, pairs, vmap_of, which):
        """Cached window-net outputs per (image key, goal pixel, agent pixel).

        The net sees only the value map (a function of image+goal) and the
        one-hot agent pixel, so rows with equal keys share one forward pass;
        cache entries survive until that side's parameters change.
        """
        cache = self._sig_cache[which]
        missing = [k for k in dict.fromkeys(pairs) if k not in cache]
        if missing:
            vm = np.stack([vmap_of(k) for k in missing])
            px = np.array([k[2] for k in missing], dtype=np.int64)
            s1, s2, rho = self._attn_batch(vm, px, which)
            for i, k in enumerate(missing):
                cache[k] = (float(s1[i]), float(s2[i]), float(rho[i]))
        return [cache[k] for k in pairs]

    def window_for(self, s_pos, vmap, which="live", image=None, goal_pixel=None):
        """The attention window at a position (gaussian or fixed variant)."""
        px = proj(s_pos, self.grid)
        if self.window != "gaussian":
            from .baselines import fixed_window_mask
            n = self.window[1]
            mask = fixed_window_mask(px, n, self.grid)
            return AttentionWindow(tuple(s_pos), np.eye(2) * n,
                                   mask.astype(np.float64), mask)
        if image is not None and goal_pixel is not None:
            key = (image.tobytes(), tuple(goal_pixel), px)
            s1, s2, rho = self._sigma_rows([key], lambda k: vmap, which)[0]
            off = rho * s1 * s2
            cov = np.array([[s1 * s1, off], [off, s2 * s2]])
        else:
            cov = self.attention_cov(vmap, px, which)
        return gaussian_mask(s_pos, cov, self.grid)

    def _masks_batch(self, image_key, goal_pixels, pos_world, vmap_of, which):
        """Binary windows for aligned rows of goals and continuous positions."""
        bsz = len(goal_pixels)
        h, w = self.grid.height, self.grid.width
        pixels = np.stack([np.array(proj(p, self.grid)) for p in pos_world])
        masks = np.zeros((bsz, h, w))
        if self.window == "gaussian":
            pairs = [(image_key, tuple(goal_pixels[i]), tuple(pixels[i]))
                     for i in range(bsz)]
            sig = self._sigma_rows(pairs, lambda k: vmap_of(k[1]), which)
            b = self.grid.block_size
            rows = np.arange(h) + 0.5
            cols = np.arange(w) + 0.5
            for i, (s1, s2, rho) in enumerate(sig):
                a, d = s1 * s1, s2 * s2
                off = rho * s1 * s2
                det = a * d - off * off
                dr = rows[:, None] - pos_world[i][1] / b
                dco = cols[None, :] - pos_world[i][0] / b
                q = (dr * dr * d - 2.0 * dr * dco * off + dco * dco * a) / det
                dens = np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det))
                masks[i] = dens > dens.mean()
                masks[i, pixels[i, 0], pixels[i, 1]] = 1.0
        else:
            from .baselines import fixed_window_mask
            for i in range(bsz):
                masks[i] = fixed_window_mask(tuple(pixels[i]), self.window[1],
                                             self.grid)
        return masks, pixels

    # ------------------------------------------------------------- decisions

    def plan_subgoal(self, s_pos, image, goal_world, epsilon, rng, which="live"):
        """Masked-argmax subgoal; epsilon-greedy picks a uniform in-mask pixel.

        Returns (relative displacement, chosen pixel).
        """
        goal_px = proj(goal_world, self.grid)
        vmap = self.value_map(image, goal_px, which)
        win = self.window_for(s_pos, vmap, which, image=image, goal_pixel=goal_px)
        if epsilon > 0 and rng is not None and rng.random() < epsilon:
            choices = np.argwhere(win.mask > 0)
            pixel = tuple(choices[rng.integers(len(choices))])
        else:
            pixel = masked_argmax(vmap, win.mask)
        target = proj_inv(pixel, self.grid)
        rel = (target[0] - s_pos[0], target[1] - s_pos[1])
        return rel, pixel

    def planner_q(self, s_pos, image, goal_world, pixel, which="live"):
        """mask * value at the chosen pixel (the scalar the update regresses)."""
        goal_px = proj(goal_world, self.grid)
        vmap = self.value_map(image, goal_px, which)
        win = self.window_for(s_pos, vmap, which, image=image, goal_pixel=goal_px)
        return float(vmap[pixel] * win.mask[pixel])

    def _masked_peak(self, vmap, mask):
        return float(np.max(np.where(mask > 0, vmap, -np.inf)))

    # --------------------------------------------------------------- training

    def update(self, transitions, gamma, lr):
        """One Bellman regression step on a batch of planner transitions."""
        if not transitions:
            raise ValueError("empty planner batch")
        bsz = len(transitions)
        groups = {}
        for i, t in enumerate(transitions):
            groups.setdefault(id(t.image), []).append(i)

        # targets: r + gamma_t * max over the target net's window of its value map
        y = np.array([t.reward for t in transitions], dtype=np.float64)
        boot = [i for i, t in enumerate(transitions) if t.gamma_t != 0.0]
        if boot:
            by_img = {}
            for i in boot:
                by_img.setdefault(id(transitions[i].image), []).append(i)
            for idxs in by_img.values():
                image = transitions[idxs[0]].image
                key = image.tobytes()
                goal_px = [proj(transitions[i].goal, self.grid) for i in idxs]
                vm_rows = np.stack([self.value_map(image, gp, "target")
                                    for gp in goal_px])
                masks, _ = self._masks_batch(
                    key, goal_px, [transitions[i].next_pos for i in idxs],
                    lambda gp: self.value_map(image, gp, "target"), "target")
                peaks = np.max(np.where(masks > 0, vm_rows, -np.inf), axis=(1, 2))
                for row, i in enumerate(idxs):
                    y[i] += transitions[i].gamma_t * peaks[row]

        tape = dc.Tape()
        total = None
        for idxs in groups.values():
            image = transitions[idxs[0]].image
            goal_pixels = {}
            for i in idxs:
                gp = proj(transitions[i].goal, self.grid)
                goal_pixels.setdefault(gp, len(goal_pixels))
            rbar = np.stack([reward_map(image.shape, gp)
                             for gp in goal_pixels])
            h1 = dc.conv2d_same(tape.const(image),
                                tape.param(self.live, "prop.conv1.k"),
                                tape.param(self.live, "prop.conv1.b"))
            h2 = dc.conv2d_same(h1, tape.param(self.live, "prop.conv2.k"),
                                tape.param(self.live, "prop.conv2.b"))
            p = dc.sigmoid(h2)
            vmaps = dc.mvprop(tape.const(rbar), p, self.n_prop_iters)
            gidx = [goal_pixels[proj(transitions[i].goal, self.grid)] for i in idxs]
            per = dc.gather_maps(vmaps, gidx)
            detached = vmaps.value
            masks, _ = self._masks_batch(
                image.tobytes(),
                [proj(transitions[i].goal, self.grid) for i in idxs],
                [transitions[i].pos for i in idxs],
                lambda gp: detached[goal_pixels[gp]], "live")
            vbar = dc.mul(per, tape.const(masks))
            pixels = np.array([transitions[i].pixel for i in idxs])
            q = dc.select_pixel(vbar, pixels)
            loss_g = dc.mse_loss(q, y[idxs])
            weighted = dc.mul(loss_g, len(idxs) / bsz)
            total = weighted if total is None else dc.add(total, weighted)

        dc.backward(tape, total)
        dc.adam_step(self.live, lr)
        self.invalidate("live")
        return float(total.value)

    def soft_update(self, tau):
        dc.soft_update(self.target, self.live, tau)
        self.invalidate("target")
