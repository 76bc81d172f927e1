from dataclasses import replace

import numpy as np
import pytest

from hidenav import envs, hrl
from hidenav.controller import ControlLayer
from hidenav.hrl import (ControlTransition, PlannerTransition, ReplayBuffer,
                         TrainConfig, Trainer, her_relabel,
                         hindsight_action_relabel, subgoal_penalty)
from hidenav.planner import PlanningLayer


def kinematic_step(state, action, task, spec):
    """Stub dynamics: position moves by the clipped action, no inertia."""
    a = np.clip(np.asarray(action, dtype=float), -spec.action_bound, spec.action_bound)
    pos = state.position + a
    if not task.grid.is_free_world(pos):
        pos = state.position
    nxt = envs.EnvState(pos, state.internal, state.step_count + 1)
    if envs.goal_reached(pos, task.goal):
        return nxt, 0.0, True
    return nxt, -1.0, nxt.step_count >= envs.EPISODE_LIMIT


class StepToward:
    """Scripted controller: drive straight at the relative goal."""

    def __init__(self, obs_dim=4):
        self.obs_dim = obs_dim

    def act(self, obs, noise_std=0.0, rng=None):
        return np.clip(obs[-2:], -1.0, 1.0)


class ChunkSource:
    """Scripted planner: subgoal = goal displacement clipped to `reach` units."""

    def __init__(self, grid, reach=3.0):
        self.grid = grid
        self.reach = reach

    def begin_episode(self, task, rng):
        return True

    def propose(self, s_pos, image, goal_world, epsilon, rng, which="live"):
        rel = np.clip(np.asarray(goal_world) - s_pos, -self.reach, self.reach)
        target = s_pos + rel
        return (float(rel[0]), float(rel[1])), envs.proj(target, self.grid)


def _cfg(**kw):
    base = dict(h=10, test_prob=0.3, batch=16, updates_per_epoch=4, warmup=20,
                penalty=-10.0)
    base.update(kw)
    return TrainConfig(**base)


def _stub_trainer(cfg=None, seed=7, task=None):
    task = task or envs.load_fixture("empty")
    cfg = cfg or _cfg()
    return Trainer(task, envs.POINT_MASS, StepToward(), cfg,
                   np.random.default_rng(seed),
                   subgoal_source=ChunkSource(task.grid),
                   train_planner=False, env_step=kinematic_step)


# -------------------------------------------------------------- train_episode

def test_lambda_zero_never_tests():
    trainer = _stub_trainer(_cfg(test_prob=0.0))
    for _ in range(3):
        trace = trainer.run_episode()
        assert trace.tested == 0
    for buf in (trainer.buffer0, trainer.buffer1):
        for episode in buf._episodes:
            assert all(not t.tested for t in episode)


def test_stub_policy_reaches_subgoals_no_hindsight_actions():
    trainer = _stub_trainer()
    trace = trainer.run_episode()
    assert trace.success
    mains = [t for t in trainer.buffer1._episodes[0]
             if not t.her and t.reward != trainer.cfg.penalty]
    assert len(mains) == trace.subgoals
    assert all(not t.hindsight_action for t in mains)


def test_trace_counts_match_hand_simulation():
    trainer = _stub_trainer(seed=7)
    trace = trainer.run_episode()
    # independent kinematic walk: 3-unit subgoal chunks, unit steps
    task = trainer.task
    pos = np.array(task.start)
    goal = np.array(task.goal)
    steps = subgoals = 0
    while not envs.goal_reached(pos, goal):
        target = pos + np.clip(goal - pos, -3.0, 3.0)
        subgoals += 1
        inner = 0
        while inner < trainer.cfg.h:
            pos = pos + np.clip(target - pos, -1.0, 1.0)
            steps += 1
            inner += 1
            if envs.goal_reached(pos, target) or envs.goal_reached(pos, goal):
                break
    assert trace.subgoals == subgoals
    assert trace.env_steps == steps
    originals0 = [t for t in trainer.buffer0._episodes[0] if not t.her]
    assert len(originals0) == steps
    originals1 = [t for t in trainer.buffer1._episodes[0]
                  if not t.her and t.reward != trainer.cfg.penalty]
    assert len(originals1) == subgoals


def test_failed_subgoals_are_hindsight_relabeled_and_tested_ones_penalized():
    # unreachable subgoals: chunks of 8 with horizon 2 and sticky dynamics
    task = envs.load_fixture("empty")
    cfg = _cfg(h=2, test_prob=1.0)
    trainer = Trainer(task, envs.POINT_MASS, StepToward(), cfg,
                      np.random.default_rng(3),
                      subgoal_source=ChunkSource(task.grid, reach=8.0),
                      train_planner=False, env_step=kinematic_step)
    trace = trainer.run_episode()
    episode = trainer.buffer1._episodes[0]
    penalties = [t for t in episode if t.reward == cfg.penalty]
    mains = [t for t in episode if not t.her and t.reward != cfg.penalty]
    assert penalties, "tested failing subgoals must deposit penalties"
    assert all(t.gamma_t == 0.0 and t.tested for t in penalties)
    assert all(t.hindsight_action for t in mains if not t.reward == 0.0)
    assert trace.tested == trace.subgoals


def test_untested_failures_get_no_penalty():
    task = envs.load_fixture("empty")
    cfg = _cfg(h=2, test_prob=0.0)
    trainer = Trainer(task, envs.POINT_MASS, StepToward(), cfg,
                      np.random.default_rng(3),
                      subgoal_source=ChunkSource(task.grid, reach=8.0),
                      train_planner=False, env_step=kinematic_step)
    trainer.run_episode()
    assert all(t.reward != cfg.penalty for t in trainer.buffer1._episodes[0])


# ----------------------------------------------------------------- relabeling

def _planner_transition(grid, pos, goal, pixel, reward=-1.0, gamma_t=0.98):
    return PlannerTransition(
        pos=np.array(pos, dtype=float), goal=np.array(goal, dtype=float),
        pixel=pixel, subgoal_rel=(0.0, 0.0), reward=reward, gamma_t=gamma_t,
        next_pos=np.array(pos, dtype=float), image=envs.render_topdown(grid))


def test_hindsight_action_identity_when_subgoal_achieved():
    grid = envs.load_fixture("empty").grid
    issued = envs.proj_inv((3, 4), grid)
    tr = replace(_planner_transition(grid, (6.0, 6.0), (34.0, 34.0), (3, 4)),
                 subgoal_rel=(issued[0] - 6.0, issued[1] - 6.0))
    out = hindsight_action_relabel(tr, issued, grid)
    assert out.pixel == tr.pixel
    assert out.subgoal_rel == tr.subgoal_rel
    assert out.reward == tr.reward and out.gamma_t == tr.gamma_t


def test_hindsight_action_achieved_start_gives_zero_displacement():
    grid = envs.load_fixture("empty").grid
    tr = _planner_transition(grid, (6.0, 6.0), (34.0, 34.0), (5, 5))
    out = hindsight_action_relabel(tr, (6.0, 6.0), grid)
    assert out.subgoal_rel == (0.0, 0.0)
    assert out.pixel == envs.proj((6.0, 6.0), grid)


def test_hindsight_action_inside_goal_threshold():
    grid = envs.load_fixture("empty").grid
    tr = _planner_transition(grid, (6.0, 6.0), (34.0, 34.0), (5, 5))
    out = hindsight_action_relabel(tr, (33.5, 34.4), grid)
    assert out.reward == 0.0 and out.gamma_t == 0.0


def test_subgoal_penalty_fields():
    grid = envs.load_fixture("empty").grid
    tr = _planner_transition(grid, (6.0, 6.0), (34.0, 34.0), (5, 5))
    out = subgoal_penalty(tr, _cfg())
    assert out.reward == -10.0 and out.gamma_t == 0.0
    assert out.pixel == tr.pixel  # original action kept


# ------------------------------------------------------------------------ HER

def _control_episode(positions, goal):
    """Chain of control transitions visiting the given positions."""
    eps = []
    for a, b in zip(positions[:-1], positions[1:]):
        reached = envs.goal_reached(b, goal)
        eps.append(ControlTransition(
            internal=np.zeros(2), pos=np.array(a, dtype=float),
            goal=np.array(goal, dtype=float), action=np.zeros(2),
            reward=0.0 if reached else -1.0,
            gamma_t=0.0 if reached else 0.98,
            next_internal=np.zeros(2), next_pos=np.array(b, dtype=float)))
    return eps


def test_her_last_transition_goal_is_own_next_state():
    episode = _control_episode([(6, 6), (8, 6), (10, 6)], (30, 30))
    out = her_relabel(episode, 1, np.random.default_rng(0), 0.98)
    last = out[-1]
    assert np.array_equal(last.goal, episode[-1].next_pos)
    assert last.reward == 0.0 and last.gamma_t == 0.0 and last.her


def test_her_matches_enumerated_oracle():
    episode = _control_episode([(6, 6), (8, 6), (10, 8), (12, 10)], (30, 30))
    out = her_relabel(episode, 2, np.random.default_rng(55), 0.98)
    mirror_rng = np.random.default_rng(55)
    expected = []
    for t, tr in enumerate(episode):
        for _ in range(2):
            u = int(mirror_rng.integers(t + 1, len(episode) + 1))
            goal = episode[u - 1].next_pos
            reached = max(abs(tr.next_pos[0] - goal[0]),
                          abs(tr.next_pos[1] - goal[1])) < 1.0
            expected.append((t, tuple(goal), 0.0 if reached else -1.0,
                             0.0 if reached else 0.98))
    assert len(out) == len(expected)
    for got, (t, goal, reward, gamma_t) in zip(out, expected):
        assert tuple(got.goal) == goal
        assert got.reward == reward and got.gamma_t == gamma_t
        assert np.array_equal(got.pos, episode[t].pos)


def test_her_future_only_property():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        pts = [(6 + 2 * i, 6) for i in range(n + 1)]
        episode = _control_episode(pts, (38, 38))
        out = her_relabel(episode, 2, rng, 0.98)
        assert len(out) == 2 * n
        for idx, got in enumerate(out):
            t = idx // 2
            future_positions = [tuple(tr.next_pos) for tr in episode[t:]]
            assert tuple(got.goal) in future_positions


def test_her_empty_episode_raises():
    with pytest.raises(ValueError):
        her_relabel([], 2, np.random.default_rng(0), 0.98)


# --------------------------------------------------------------------- buffer

def test_buffer_capacity_and_fifo():
    buf = ReplayBuffer(capacity_episodes=3)
    for i in range(5):
        buf.add_episode([i] * (i + 1))
    assert buf.episode_count == 3
    assert len(buf) == 3 + 4 + 5
    assert list(buf._episodes[0]) == [2, 2, 2]


def test_buffer_uniform_sampling_chi2():
    buf = ReplayBuffer()
    items = list(range(10))
    buf.add_episode(items[:3])
    buf.add_episode(items[3:4])
    buf.add_episode(items[4:])
    rng = np.random.default_rng(11)
    n = 10_000
    counts = np.zeros(10)
    for s in buf.sample(rng, n):
        counts[s] += 1
    expected = n / 10.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 21.67  # chi-square critical value, 9 dof, p=0.01


def test_buffer_empty_sample_raises():
    with pytest.raises(ValueError):
        ReplayBuffer().sample(np.random.default_rng(0), 4)


# -------------------------------------------------------------------- updates

def _real_trainer(seed=0, cfg=None, task=None):
    task = task or envs.load_fixture("simple")
    cfg = cfg or _cfg()
    rng = np.random.default_rng(seed)
    planner = PlanningLayer(task.grid, rng)
    controller = ControlLayer(4, 2, 1.0, rng)
    return Trainer(task, envs.POINT_MASS, controller, cfg, rng, planner=planner)


def test_run_updates_respects_warmup():
    trainer = _real_trainer(cfg=_cfg(warmup=10_000))
    trainer.run_episode()
    assert len(trainer.buffer0) < 10_000
    critic_before = trainer.controller.critic.flat_values()
    planner_before = trainer.planner.live.flat_values()
    losses = trainer.run_updates()
    assert np.array_equal(trainer.controller.critic.flat_values(), critic_before)
    assert np.array_equal(trainer.planner.live.flat_values(), planner_before)
    assert np.isnan(losses["critic"]) and np.isnan(losses["planner"])


def test_run_updates_counts_when_warm():
    trainer = _real_trainer(cfg=_cfg(warmup=20, batch=8, updates_per_epoch=5))
    while len(trainer.buffer0) < 20 or len(trainer.buffer1) < 20:
        trainer.run_episode()
    losses = trainer.run_updates()
    assert trainer.controller.critic.entry("critic.l1.w").adam_t == 5
    assert trainer.controller.actor.entry("actor.l1.w").adam_t == 5
    assert trainer.planner.live.entry("prop.conv1.k").adam_t == 5
    assert np.isfinite(losses["critic"]) and np.isfinite(losses["planner"])


def test_smoke_losses_finite_over_epochs():
    trainer = _real_trainer(seed=3, cfg=_cfg(warmup=30, batch=16, updates_per_epoch=2))
    for _ in range(12):
        trainer.run_episode()
        losses = trainer.run_updates()
        for v in losses.values():
            assert v is None or not np.isinf(v)


def test_stored_transitions_satisfy_reward_goal_coupling():
    trainer = _real_trainer(seed=5, cfg=_cfg(test_prob=0.5))
    for _ in range(3):
        trainer.run_episode()
    for buf in (trainer.buffer0, trainer.buffer1):
        for episode in buf._episodes:
            for t in episode:
                is_penalty = t.reward == trainer.cfg.penalty
                if not is_penalty:
                    assert (t.reward == 0.0) == envs.goal_reached(t.next_pos, t.goal)
                assert (t.gamma_t == 0.0) == (t.reward == 0.0 or is_penalty)


def test_her_stays_within_episode():
    trainer = _real_trainer(seed=6)
    trainer.run_episode()
    trainer.run_episode()
    for buf in (trainer.buffer0, trainer.buffer1):
        for episode in buf._episodes:
            positions = {tuple(np.round(t.next_pos, 9)) for t in episode}
            for t in episode:
                if t.her:
                    assert tuple(np.round(t.goal, 9)) in positions


def test_training_bitwise_deterministic():
    def run():
        cfg = _cfg(test_prob=0.0, eps_plan=1e-9, noise_ctrl=1e-12, warmup=30,
                   batch=8, updates_per_epoch=2)
        trainer = _real_trainer(seed=11, cfg=cfg)
        for _ in range(4):
            trainer.run_episode()
            trainer.run_updates()
        return (trainer.planner.live.flat_values(),
                trainer.controller.actor.flat_values(),
                trainer.controller.critic.flat_values())

    a, b = run(), run()
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


# ------------------------------------------------------------------- evaluate

class FakeTrainer:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def run_episode(self, task, rng, explore, collect):
        success = self.outcomes[self.calls % len(self.outcomes)]
        self.calls += 1
        return hrl.EpisodeTrace(success, 10, 1, 0, 0, 0)


def test_evaluate_ratio():
    table = hrl.evaluate(FakeTrainer([True, True, True, False]),
                         {"training": envs.load_fixture("empty")}, 4, seed=0)
    assert table == {"training": 0.75}


def test_evaluate_scripted_expert_in_empty_maze():
    task = envs.load_fixture("empty")
    trainer = Trainer(task, envs.POINT_MASS, StepToward(), _cfg(h=40),
                      np.random.default_rng(0),
                      subgoal_source=ChunkSource(task.grid, reach=4.0),
                      train_planner=False)
    table = hrl.evaluate(trainer, {"training": task}, 5, seed=3)
    assert table["training"] == 1.0


def test_evaluate_deterministic():
    task = envs.load_fixture("empty")
    trainer = Trainer(task, envs.POINT_MASS, StepToward(), _cfg(),
                      np.random.default_rng(0),
                      subgoal_source=ChunkSource(task.grid),
                      train_planner=False)
    tasks = {"training": task, "backward": envs.swap(task)}
    t1 = hrl.evaluate(trainer, tasks, 6, seed=9)
    t2 = hrl.evaluate(trainer, tasks, 6, seed=9)
    assert t1 == t2
