"""Continuous agents on the occupancy grid: point mass and unicycle.

Both integrate at dt=0.1 with axis-separable wall collision resolved in four
substeps; a blocked axis cancels that axis' motion and zeroes the matching
velocity. Rewards are sparse: 0 and terminal when the infinity-norm distance
to the goal drops below 1, otherwise -1.
"""
from dataclasses import dataclass

import numpy as np

GOAL_EPS = 1.0
EPISODE_LIMIT = 500
_SUBSTEPS = 4


@dataclass(frozen=True)
class AgentSpec:
    kind: str  # "point_mass" | "unicycle"
    action_dim: int = 2
    action_bound: float = 1.0
    dt: float = 0.1
    gain: float = 2.0
    drag: float = 0.5
    v_max: float = 2.0
    turn_rate: float = np.pi  # unicycle only, rad/s at full action

    @property
    def internal_dim(self):
        """Width of the proprioceptive observation vector."""
        return 2 if self.kind == "point_mass" else 3


POINT_MASS = AgentSpec(kind="point_mass")
UNICYCLE = AgentSpec(kind="unicycle")

AGENTS = {"point_mass": POINT_MASS, "unicycle": UNICYCLE}


@dataclass(frozen=True)
class EnvState:
    position: np.ndarray  # world (x, y)
    internal: np.ndarray  # point_mass: (vx, vy); unicycle: (heading, speed)
    step_count: int = 0


def reset(task, spec, rng):
    """Start state at the task start with small random internal perturbation."""
    internal = rng.uniform(-0.05, 0.05, size=2)
    return EnvState(np.array(task.start, dtype=np.float64), internal, 0)


def observe_internal(state, spec):
    """Proprioceptive vector fed to the control policy."""
    if spec.kind == "point_mass":
        return state.internal.copy()
    heading, speed = state.internal
    return np.array([np.cos(heading), np.sin(heading), speed])


def goal_reached(position, goal, eps=GOAL_EPS):
    return float(np.max(np.abs(np.asarray(position) - np.asarray(goal)))) < eps


def _move(grid, pos, delta):
    """Axis-separable move; returns (new position, blocked-axis mask)."""
    x, y = pos
    blocked = [False, False]
    nx = x + delta[0]
    if grid.is_free_world((nx, y)):
        x = nx
    else:
        blocked[0] = True
    ny = y + delta[1]
    if grid.is_free_world((x, ny)):
        y = ny
    else:
        blocked[1] = True
    return (x, y), blocked


def step(state, action, task, spec):
    """One environment transition; returns (next_state, reward, done)."""
    a = np.clip(np.asarray(action, dtype=np.float64), -spec.action_bound, spec.action_bound)
    grid = task.grid
    pos = (float(state.position[0]), float(state.position[1]))
    sub_dt = spec.dt / _SUBSTEPS

    if spec.kind == "point_mass":
        v = state.internal.copy()
        v += (spec.gain * a - spec.drag * v) * spec.dt
        v = np.clip(v, -spec.v_max, spec.v_max)
        for _ in range(_SUBSTEPS):
            pos, blocked = _move(grid, pos, (v[0] * sub_dt, v[1] * sub_dt))
            if blocked[0]:
                v[0] = 0.0
            if blocked[1]:
                v[1] = 0.0
        internal = v
    elif spec.kind == "unicycle":
        heading, speed = state.internal
        heading = float((heading + spec.turn_rate * a[0] * spec.dt + np.pi)
                        % (2 * np.pi) - np.pi)
        speed = float(np.clip(speed + (spec.gain * a[1] - spec.drag * speed) * spec.dt,
                              -spec.v_max, spec.v_max))
        vx, vy = speed * np.cos(heading), speed * np.sin(heading)
        for _ in range(_SUBSTEPS):
            pos, blocked = _move(grid, pos, (vx * sub_dt, vy * sub_dt))
            if blocked[0] or blocked[1]:
                speed, vx, vy = 0.0, 0.0, 0.0
        internal = np.array([heading, speed])
    else:
        raise ValueError(f"unknown agent kind {spec.kind!r}")

    next_state = EnvState(np.array(pos), internal, state.step_count + 1)
    if goal_reached(pos, task.goal):
        return next_state, 0.0, True
    done = next_state.step_count >= EPISODE_LIMIT
    return next_state, -1.0, done


def run_policy(task, spec, policy, rng, max_steps=EPISODE_LIMIT):
    """Roll a (state -> action) callable to termination; returns success flag."""
    state = reset(task, spec, rng)
    for _ in range(max_steps):
        state, reward, done = step(state, policy(state), task, spec)
        if done:
            return reward == 0.0, state
    return False, state
