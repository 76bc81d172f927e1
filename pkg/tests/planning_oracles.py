"""Independent brute-force oracles for the planning layer tests."""
import numpy as np


def mvprop_loops(rbar, p, n_iter):
    """The propagation recurrence written as plain Python loops."""
    h, w = rbar.shape
    v = rbar.astype(float).copy()
    for _ in range(n_iter):
        vbar = np.empty_like(v)
        for i in range(h):
            for j in range(w):
                best = -np.inf
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ii, jj = i + di, j + dj
                        if 0 <= ii < h and 0 <= jj < w:
                            best = max(best, v[ii, jj])
                vbar[i, j] = rbar[i, j] + p[i, j] * (best - rbar[i, j])
        v = np.maximum(v, vbar)
    return v


def bfs_reachable(p_binary, goal, max_steps):
    """Pixels within max_steps 8-neighborhood hops of the goal through p=1 cells."""
    h, w = p_binary.shape
    seen = np.zeros((h, w), dtype=bool)
    seen[goal] = True
    frontier = [goal]
    for _ in range(max_steps):
        nxt = []
        for i, j in frontier:
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w and not seen[ii, jj] \
                            and p_binary[ii, jj] == 1:
                        seen[ii, jj] = True
                        nxt.append((ii, jj))
        if not nxt:
            break
        frontier = nxt
    return seen


def argmax_in_mask_loops(values, mask):
    """First row-major maximum among in-mask pixels."""
    best, best_px = -np.inf, None
    h, w = values.shape
    for i in range(h):
        for j in range(w):
            if mask[i, j] and values[i, j] > best:
                best, best_px = values[i, j], (i, j)
    return best_px
