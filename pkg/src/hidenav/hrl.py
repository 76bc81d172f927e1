"""Joint two-level training: nested rollouts with subgoal testing, hindsight
action and goal relabeling, per-level episode replay, and the update schedule.

The top level plans a subgoal (epsilon-greedy during training), decides with
probability test_prob whether to test it, and hands it to the control layer
for up to `h` primitive steps (noise-free while testing). Failed subgoals are
replaced in hindsight by the position actually reached; tested failures add a
penalty transition with zero discount. Goal relabeling follows the future
strategy: per transition, k future states of the same episode become virtual
goals with the reward recomputed under the level's goal test.
"""
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import envs
from .envs import EPISODE_LIMIT, goal_reached, observe_internal, proj


@dataclass(frozen=True)
class TrainConfig:
    h: int = 40                   # subgoal horizon, primitive steps per subgoal
    test_prob: float = 0.3        # subgoal testing probability
    gamma: float = 0.98
    tau: float = 0.05
    lr: float = 0.001
    batch: int = 1024
    updates_per_epoch: int = 40
    warmup: int = 256             # buffer transitions before updates start
    her_k: int = 2
    eps_plan: float = 0.05
    noise_ctrl: float = 0.1       # std as a fraction of the action range
    penalty: float = -40.0        # failed tested subgoal, = -h

    def __post_init__(self):
        if not (0.0 <= self.test_prob <= 1.0):
            raise ValueError("test_prob must be in [0, 1]")
        for name in ("h", "gamma", "tau", "lr", "batch", "updates_per_epoch",
                     "warmup", "her_k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PlannerTransition:
    pos: np.ndarray        # agent position when the subgoal was issued
    goal: np.ndarray       # absolute goal this transition is judged against
    pixel: tuple           # chosen pixel (action), possibly hindsight-replaced
    subgoal_rel: tuple     # relative displacement issued
    reward: float
    gamma_t: float
    next_pos: np.ndarray   # position reached at the end of the inner rollout
    image: np.ndarray
    tested: bool = False
    hindsight_action: bool = False
    her: bool = False


@dataclass(frozen=True)
class ControlTransition:
    internal: np.ndarray
    pos: np.ndarray
    goal: np.ndarray       # absolute target position
    action: np.ndarray
    reward: float
    gamma_t: float
    next_internal: np.ndarray
    next_pos: np.ndarray
    tested: bool = False
    her: bool = False


class ReplayBuffer:
    """Ring of whole episodes; uniform sampling over stored transitions."""

    def __init__(self, capacity_episodes=500):
        self.capacity = capacity_episodes
        self._episodes = deque()
        self._total = 0

    def add_episode(self, transitions):
        self._episodes.append(list(transitions))
        self._total += len(transitions)
        while len(self._episodes) > self.capacity:
            self._total -= len(self._episodes.popleft())

    def __len__(self):
        return self._total

    @property
    def episode_count(self):
        return len(self._episodes)

    def sample(self, rng, n):
        if self._total == 0:
            raise ValueError("sampling from an empty buffer")
        lengths = np.fromiter((len(e) for e in self._episodes), dtype=np.int64,
                              count=len(self._episodes))
        bounds = np.cumsum(lengths)
        flat = rng.integers(0, self._total, size=n)
        out = []
        for f in flat:
            epi = int(np.searchsorted(bounds, f, side="right"))
            offset = int(f - (bounds[epi - 1] if epi else 0))
            out.append(self._episodes[epi][offset])
        return out


# ------------------------------------------------------------------ relabeling

def hindsight_action_relabel(transition, achieved_pos, grid, goal_eps=envs.GOAL_EPS):
    """Replace the planner action by the position the controller reached."""
    achieved = np.asarray(achieved_pos, dtype=np.float64)
    reached_goal = goal_reached(achieved, transition.goal, goal_eps)
    return replace(
        transition,
        pixel=proj(achieved, grid_for(transition, grid)),
        subgoal_rel=(achieved[0] - transition.pos[0], achieved[1] - transition.pos[1]),
        reward=0.0 if reached_goal else -1.0,
        gamma_t=0.0 if reached_goal else transition.gamma_t,
        hindsight_action=True)


def grid_for(transition, grid):
    return grid


def subgoal_penalty(transition, cfg):
    """The extra transition a failed tested subgoal deposits."""
    return replace(transition, reward=cfg.penalty, gamma_t=0.0, tested=True)


def her_relabel(episode, k, rng, gamma, goal_eps=envs.GOAL_EPS):
    """Future-strategy goal relabeling over one episode of either level.

    For transition t, k future step indices u are drawn uniformly from
    (t, T]; the state achieved at step u becomes the virtual goal and the
    reward/discount are recomputed under the level's goal test.
    """
    if not episode:
        raise ValueError("cannot relabel an empty episode")
    total = len(episode)
    out = []
    for t, tr in enumerate(episode):
        for _ in range(k):
            u = int(rng.integers(t + 1, total + 1))
            new_goal = np.array(episode[u - 1].next_pos, dtype=np.float64)
            reached = goal_reached(tr.next_pos, new_goal, goal_eps)
            out.append(replace(tr, goal=new_goal,
                               reward=0.0 if reached else -1.0,
                               gamma_t=0.0 if reached else gamma,
                               her=True))
    return out


@dataclass
class EpisodeTrace:
    success: bool
    env_steps: int
    subgoals: int
    tested: int
    planner_stored: int
    control_stored: int


class LearnedSubgoalSource:
    """Adapter so the trainer treats the planning layer like any source."""

    def __init__(self, planner):
        self.planner = planner

    def begin_episode(self, task, rng):
        return True

    def propose(self, s_pos, image, goal_world, epsilon, rng, which="live"):
        return self.planner.plan_subgoal(s_pos, image, goal_world, epsilon, rng, which)


class Trainer:
    """Owns the nets, buffers, and rollout/update loop for one experiment."""

    def __init__(self, task, agent_spec, controller, cfg, rng, planner=None,
                 subgoal_source=None, absolute=False, train_planner=True,
                 control_only=False, env_step=envs.step):
        self.task = task
        self.spec = agent_spec
        self.controller = controller
        self.planner = planner
        self.cfg = cfg
        self.rng = rng
        self.absolute = absolute
        self.train_planner = train_planner and planner is not None
        self.control_only = control_only
        self.env_step = env_step
        if subgoal_source is None and planner is not None:
            subgoal_source = LearnedSubgoalSource(planner)
        self.source = subgoal_source
        self.image = envs.render_topdown(task.grid)
        self.buffer0 = ReplayBuffer()
        self.buffer1 = ReplayBuffer()

    # ------------------------------------------------------------ observation

    def control_obs(self, internal, pos, goal_abs):
        if self.absolute:
            return np.concatenate([internal, pos, goal_abs])
        return np.concatenate([internal, goal_abs - pos])

    def obs_dim(self):
        return self.spec.internal_dim + (4 if self.absolute else 2)

    # --------------------------------------------------------------- rollouts

    def _inner_rollout(self, state, subgoal_abs, task, rng, explore, testing,
                       collect):
        """Run the control layer toward one subgoal; returns (state, done, steps)."""
        transitions = []
        reached = env_done = False
        steps = 0
        noise = self.cfg.noise_ctrl * self.spec.action_bound \
            if (explore and not testing) else 0.0
        while steps < self.cfg.h:
            internal = observe_internal(state, self.spec)
            obs = self.control_obs(internal, state.position, subgoal_abs)
            action = self.controller.act(obs, noise, rng if noise > 0 else None)
            next_state, env_reward, env_done = self.env_step(state, action, task,
                                                             self.spec)
            reached = goal_reached(next_state.position, subgoal_abs)
            if collect:
                transitions.append(ControlTransition(
                    internal=internal, pos=state.position.copy(),
                    goal=np.array(subgoal_abs), action=np.asarray(action),
                    reward=0.0 if reached else -1.0,
                    gamma_t=0.0 if reached else self.cfg.gamma,
                    next_internal=observe_internal(next_state, self.spec),
                    next_pos=next_state.position.copy(), tested=testing))
            state = next_state
            steps += 1
            if reached or env_done:
                break
        return state, reached, env_done, steps, transitions


    def run_episode(self, task=None, rng=None, explore=True, collect=None):
        """One nested episode; stores transitions when collecting.

        Returns an EpisodeTrace. Greedy when explore is False (evaluation).
        """
        task = task or self.task
        rng = rng if rng is not None else self.rng
        if collect is None:
            collect = explore
        image = self.image if task is self.task else envs.render_topdown(task.grid)
        if self.source is not None:
            self.source.begin_episode(task, rng)
        state = envs.reset(task, self.spec, rng)
        goal = np.array(task.goal)

        if self.control_only:
            return self._control_only_episode(task, state, rng, explore, collect)

        planner_main = []
        planner_extra = []
        control_rollouts = []
        success = False
        subgoals = tested_count = 0
        while subgoals < self.cfg.h and state.step_count < EPISODE_LIMIT \
                and not success:
            s_pos = state.position.copy()
            eps = self.cfg.eps_plan if explore else 0.0
            rel, pixel = self.source.propose(s_pos, image, goal, eps, rng)
            subgoal_abs = s_pos + np.asarray(rel)
            testing = explore and (rng.random() < self.cfg.test_prob)
            tested_count += testing
            state, reached, env_done, _, inner = self._inner_rollout(
                state, subgoal_abs, task, rng, explore, testing, collect)
            success = goal_reached(state.position, goal)
            subgoals += 1
            if not collect:
                if env_done:
                    break
                continue
            achieved = state.position.copy()
            base = PlannerTransition(
                pos=s_pos, goal=goal.copy(), pixel=pixel, subgoal_rel=tuple(rel),
                reward=0.0 if success else -1.0,
                gamma_t=0.0 if success else self.cfg.gamma,
                next_pos=achieved, image=image, tested=testing)
            if reached:
                planner_main.append(base)
            else:
                if testing:
                    planner_extra.append(subgoal_penalty(base, self.cfg))
                planner_main.append(
                    hindsight_action_relabel(base, achieved, task.grid))
            control_rollouts.append(inner)
            if env_done:
                break

        if collect:
            level0 = [t for rollout in control_rollouts for t in rollout]
            for rollout in control_rollouts:
                if rollout:
                    level0.extend(her_relabel(rollout, self.cfg.her_k, rng,
                                              self.cfg.gamma))
            if level0:
                self.buffer0.add_episode(level0)
            level1 = list(planner_main) + list(planner_extra)
            if planner_main:
                level1.extend(her_relabel(planner_main, self.cfg.her_k, rng,
                                          self.cfg.gamma))
            if level1:
                self.buffer1.add_episode(level1)
            return EpisodeTrace(success, state.step_count, subgoals, tested_count,
                                len(level1), len(level0))
        return EpisodeTrace(success, state.step_count, subgoals, tested_count, 0, 0)

    def _control_only_episode(self, task, state, rng, explore, collect):
        """Flat goal-conditioned episode: random goal, single-level machinery."""
        free = np.argwhere(task.grid.cells == 1)
        cell = free[rng.integers(len(free))]
        b = task.grid.block_size
        goal = np.array([(cell[1] + rng.random()) * b, (cell[0] + rng.random()) * b])
        transitions = []
        success = False
        noise = self.cfg.noise_ctrl * self.spec.action_bound if explore else 0.0
        while state.step_count < EPISODE_LIMIT and not success:
            internal = observe_internal(state, self.spec)
            obs = self.control_obs(internal, state.position, goal)
            action = self.controller.act(obs, noise, rng if noise > 0 else None)
            next_state, _, env_done = self.env_step(state, action, task, self.spec)
            success = goal_reached(next_state.position, goal)
            if collect:
                transitions.append(ControlTransition(
                    internal=internal, pos=state.position.copy(), goal=goal.copy(),
                    action=np.asarray(action), reward=0.0 if success else -1.0,
                    gamma_t=0.0 if success else self.cfg.gamma,
                    next_internal=observe_internal(next_state, self.spec),
                    next_pos=next_state.position.copy()))
            state = next_state
            if env_done:
                break
        if collect and transitions:
            level0 = list(transitions)
            level0.extend(her_relabel(transitions, self.cfg.her_k, rng,
                                      self.cfg.gamma))
            self.buffer0.add_episode(level0)
            return EpisodeTrace(success, state.step_count, 0, 0, 0, len(level0))
        return EpisodeTrace(success, state.step_count, 0, 0, 0, 0)

    # ---------------------------------------------------------------- updates

    def _control_batch(self, transitions):
        obs = np.stack([self.control_obs(t.internal, t.pos, t.goal)
                        for t in transitions])
        actions = np.stack([t.action for t in transitions])
        rewards = np.array([t.reward for t in transitions])
        gammas = np.array([t.gamma_t for t in transitions])
        next_obs = np.stack([self.control_obs(t.next_internal, t.next_pos, t.goal)
                             for t in transitions])
        return obs, actions, rewards, gammas, next_obs

    def run_updates(self):
        """Per-epoch update pass: batched steps per warm level plus one soft update."""
        losses = {"critic": [], "actor": [], "planner": []}
        if len(self.buffer0) >= self.cfg.warmup:
            for _ in range(self.cfg.updates_per_epoch):
                batch = self.buffer0.sample(self.rng, self.cfg.batch)
                c, a = self.controller.update(*self._control_batch(batch),
                                              lr=self.cfg.lr)
                losses["critic"].append(c)
                losses["actor"].append(a)
            self.controller.soft_update(self.cfg.tau)
        if self.train_planner and len(self.buffer1) >= self.cfg.warmup:
            for _ in range(self.cfg.updates_per_epoch):
                batch = self.buffer1.sample(self.rng, self.cfg.batch)
                losses["planner"].append(
                    self.planner.update(batch, self.cfg.gamma, self.cfg.lr))
            self.planner.soft_update(self.cfg.tau)
        return {k: (float(np.mean(v)) if v else float("nan"))
                for k, v in losses.items()}


def evaluate(trainer, tasks, episodes_per_task, seed):
    """Greedy success rates per task, deterministic in (nets, tasks, seed).

    `tasks` maps name -> MazeTask or name -> list of MazeTask (episodes cycle
    through the list, one per episode).
    """
    table = {}
    for t_idx, (name, task_or_list) in enumerate(tasks.items()):
        tasks_list = task_or_list if isinstance(task_or_list, list) else [task_or_list]
        wins = 0
        for ep in range(episodes_per_task):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(t_idx, ep)))
            task = tasks_list[ep % len(tasks_list)]
            trace = trainer.run_episode(task, rng, explore=False, collect=False)
            wins += trace.success
        table[name] = wins / episodes_per_task
    return table
