"""Non-learned planning baseline (RRT) and ablation window variants."""
from dataclasses import dataclass

import numpy as np

from .envs import proj


@dataclass(frozen=True)
class RRTConfig:
    step_size: float = 2.0
    goal_bias: float = 0.05
    max_iterations: int = 5000
    goal_tolerance: float = 1.0
    collision_resolution: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.goal_bias <= 1.0):
            raise ValueError("goal_bias must be in [0, 1]")
        for field in ("step_size", "max_iterations", "goal_tolerance",
                      "collision_resolution"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


@dataclass(frozen=True)
class RRTPath:
    waypoints: list  # world (x, y) from start to near-goal


@dataclass(frozen=True)
class RRTFailure:
    iterations: int


def segment_free(grid, a, b, resolution):
    """Sample the segment every `resolution` units; all samples must be free."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    dist = float(np.hypot(*(b - a)))
    n = max(2, int(np.ceil(dist / resolution)) + 1)
    for t in np.linspace(0.0, 1.0, n):
        if not grid.is_free_world(a + t * (b - a)):
            return False
    return True


def rrt_plan(grid, start, goal, cfg, rng):
    """Rapidly exploring random tree over continuous free space.

    Returns an RRTPath on success or RRTFailure when the iteration budget is
    exhausted (a result, not an exception).
    """
    if not grid.is_free_world(start) or not grid.is_free_world(goal):
        return RRTFailure(0)
    start = (float(start[0]), float(start[1]))
    goal = np.asarray(goal, dtype=float)
    nodes = np.empty((cfg.max_iterations + 1, 2))
    nodes[0] = start
    parents = np.full(cfg.max_iterations + 1, -1, dtype=np.int64)
    count = 1
    span_x = grid.width * grid.block_size
    span_y = grid.height * grid.block_size
    for it in range(cfg.max_iterations):
        if rng.random() < cfg.goal_bias:
            sample = goal.copy()
        else:
            while True:
                sample = rng.uniform((0.0, 0.0), (span_x, span_y))
                if grid.is_free_world(sample):
                    break
        diffs = nodes[:count] - sample
        nearest = int(np.argmin(np.einsum("ij,ij->i", diffs, diffs)))
        direction = sample - nodes[nearest]
        dist = float(np.hypot(*direction))
        if dist < 1e-9:
            continue
        new = sample if dist <= cfg.step_size \
            else nodes[nearest] + direction * (cfg.step_size / dist)
        if not grid.is_free_world(new) \
                or not segment_free(grid, nodes[nearest], new, cfg.collision_resolution):
            continue
        nodes[count] = new
        parents[count] = nearest
        count += 1
        if float(np.max(np.abs(new - goal))) < cfg.goal_tolerance:
            path = []
            i = count - 1
            while i >= 0:
                path.append((float(nodes[i, 0]), float(nodes[i, 1])))
                i = parents[i]
            path.reverse()
            return RRTPath(path)
    return RRTFailure(cfg.max_iterations)


def fixed_window_mask(agent_pixel, n, grid):
    """The n x n block of pixels centered on the agent, clipped at borders."""
    if n % 2 != 1 or n < 1:
        raise ValueError("window size must be odd and positive")
    mask = np.zeros((grid.height, grid.width), dtype=np.uint8)
    r, c = int(agent_pixel[0]), int(agent_pixel[1])
    half = n // 2
    mask[max(0, r - half):r + half + 1, max(0, c - half):c + half + 1] = 1
    return mask


class RRTSubgoalSource:
    """Feeds RRT waypoints one at a time as planner-style subgoals.

    Used by the hide_rrt variant during training/evaluation and by the
    rrt_ll baseline at evaluation; waypoint hand-off mirrors the learned
    planner's inner loop (advance on reach or after the horizon).
    """

    def __init__(self, grid, cfg=None):
        self.grid = grid
        self.cfg = cfg or RRTConfig()
        self._path = None
        self._next = 1

    def begin_episode(self, task, rng):
        result = rrt_plan(task.grid, task.start, task.goal, self.cfg, rng)
        self._path = result.waypoints if isinstance(result, RRTPath) else None
        self._next = 1
        return self._path is not None

    def propose(self, s_pos, image, goal_world, epsilon, rng, which="live"):
        """(relative subgoal, pixel) for the next pending waypoint.

        Waypoints are consumed sequentially, one per inner rollout; any
        waypoint the agent is already on top of is skipped.
        """
        if self._path is None:
            target = tuple(goal_world)
        else:
            while self._next < len(self._path) and \
                    np.max(np.abs(np.asarray(self._path[self._next]) - s_pos)) < 1.0:
                self._next += 1
            idx = min(self._next, len(self._path) - 1)
            target = self._path[idx]
            self._next = idx + 1
        pixel = proj(target, self.grid)
        return (target[0] - s_pos[0], target[1] - s_pos[1]), pixel
