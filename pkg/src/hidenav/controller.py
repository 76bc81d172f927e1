"""Goal-conditioned control layer: deterministic actor with a Q critic.

Observations are (proprioceptive state, goal encoding) concatenated by the
caller; the actor maps them through two hidden layers to a tanh output scaled
to the action range, the critic scores (observation, action) pairs. Training
is the usual deterministic policy gradient pair of steps: critic regression
on bootstrapped targets from the target copies, then an actor step ascending
the critic (critic parameters are read but not stepped).
"""
import numpy as np

from . import diffcore as dc

HIDDEN = 64


def _mlp_params(rng, prefix, dims):
    ps = dc.ParameterSet()
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        ps.add(f"{prefix}.l{i}.w", dc.he_uniform(rng, (fan_in, fan_out), fan_in))
        ps.add(f"{prefix}.l{i}.b", np.zeros(fan_out))
    return ps


def _forward_np(ps, prefix, x, final):
    h = np.maximum(x @ ps.value(f"{prefix}.l1.w") + ps.value(f"{prefix}.l1.b"), 0.0)
    h = np.maximum(h @ ps.value(f"{prefix}.l2.w") + ps.value(f"{prefix}.l2.b"), 0.0)
    out = h @ ps.value(f"{prefix}.l3.w") + ps.value(f"{prefix}.l3.b")
    return np.tanh(out) if final == "tanh" else out


def _forward_tape(tape, ps, prefix, x, final):
    h = dc.relu(dc.linear(x, tape.param(ps, f"{prefix}.l1.w"),
                          tape.param(ps, f"{prefix}.l1.b")))
    h = dc.relu(dc.linear(h, tape.param(ps, f"{prefix}.l2.w"),
                          tape.param(ps, f"{prefix}.l2.b")))
    out = dc.linear(h, tape.param(ps, f"{prefix}.l3.w"),
                    tape.param(ps, f"{prefix}.l3.b"))
    return dc.tanh(out) if final == "tanh" else out


class ControlLayer:
    def __init__(self, obs_dim, action_dim, action_bound, rng, hidden=HIDDEN):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.action_bound = float(action_bound)
        self.actor = _mlp_params(rng, "actor", (obs_dim, hidden, hidden, action_dim))
        self.critic = _mlp_params(rng, "critic",
                                  (obs_dim + action_dim, hidden, hidden, 1))
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()

    # ------------------------------------------------------------- inference

    def act(self, obs, noise_std=0.0, rng=None):
        """Actor output scaled to bounds, plus optional Gaussian noise, clipped."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise dc.ShapeError(f"act: observation {obs.shape}, expected ({self.obs_dim},)")
        a = _forward_np(self.actor, "actor", obs, "tanh") * self.action_bound
        if noise_std > 0.0:
            a = a + rng.normal(0.0, noise_std, size=a.shape)
        return np.clip(a, -self.action_bound, self.action_bound)

    def q_value(self, obs, action, which="live"):
        ps = self.critic if which == "live" else self.critic_target
        x = np.concatenate([obs, action])
        return float(_forward_np(ps, "critic", x, "linear")[0])

    # -------------------------------------------------------------- training

    def update(self, obs, actions, rewards, gamma_t, next_obs, lr):
        """One critic regression step and one actor ascent step.

        Arrays: obs (B, obs_dim), actions (B, action_dim), rewards (B,),
        gamma_t (B,) with zeros on terminal transitions, next_obs like obs.
        Returns (critic_loss, actor_objective).
        """
        obs = np.asarray(obs, dtype=np.float64)
        if obs.size == 0:
            raise ValueError("empty control batch")
        next_a = _forward_np(self.actor_target, "actor", next_obs, "tanh") \
            * self.action_bound
        q_next = _forward_np(self.critic_target, "critic",
                             np.concatenate([next_obs, next_a], axis=1), "linear")
        y = rewards + gamma_t * q_next[:, 0]

        tape = dc.Tape()
        x = tape.const(np.concatenate([obs, actions], axis=1))
        q = _forward_tape(tape, self.critic, "critic", x, "linear")
        critic_loss = dc.mse_loss(q, y[:, None])
        dc.backward(tape, critic_loss)
        dc.adam_step(self.critic, lr)

        tape = dc.Tape()
        a = dc.mul(_forward_tape(tape, self.actor, "actor", tape.const(obs), "tanh"),
                   self.action_bound)
        q = _forward_tape(tape, self.critic, "critic",
                          dc.concat_cols(tape.const(obs), a), "linear")
        actor_obj = dc.mean(q)
        dc.backward(tape, dc.mul(actor_obj, -1.0))
        dc.adam_step(self.actor, lr)  # critic gradients are discarded, not applied
        return float(critic_loss.value), float(actor_obj.value)

    def soft_update(self, tau):
        dc.soft_update(self.actor_target, self.actor, tau)
        dc.soft_update(self.critic_target, self.critic, tau)
