"""TD3 and DDPG (optional baselines): deterministic actors with target nets."""

from __future__ import annotations

import numpy as np

from ..nn import Adam, Mlp
from .base import AgentConfig, BaseAgent


class Td3Agent(BaseAgent):
    algo = "td3"
    _n_critics = 2

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig,
                 rng: np.random.Generator):
        super().__init__(obs_dim, act_dim, config)
        dtype = config.np_dtype
        self.actor = Mlp([obs_dim, *config.hidden, act_dim], rng,
                         out_scale=config.actor_out_scale, dtype=dtype)
        self.actor_target = self.actor.clone()
        self.critics = Mlp([obs_dim + act_dim, *config.hidden, 1], rng,
                           ensemble=self._n_critics, dtype=dtype)
        self.critic_targets = self.critics.clone()
        beta1 = config.resolved_beta1
        self.actor_opt = Adam(self.actor.params(), lr=config.resolved_lr, beta1=beta1)
        self.critic_opt = Adam(self.critics.params(), lr=config.resolved_lr, beta1=beta1)

    def act(self, obs, deterministic: bool, rng: np.random.Generator) -> np.ndarray:
        obs = self._check_obs(obs)
        single = obs.ndim == 1
        action = np.tanh(self.actor(np.atleast_2d(obs))[0])
        if not deterministic:
            noise = rng.normal(0.0, self.config.exploration_noise, size=action.shape)
            action = np.clip(action + noise, -1.0, 1.0)
        return action[0] if single else action

    def _next_actions(self, s2, rng):
        a2 = np.tanh(self.actor_target(s2)[0])
        if self.algo == "td3":
            noise = np.clip(rng.normal(0.0, self.config.target_policy_noise, size=a2.shape),
                            -self.config.target_noise_clip, self.config.target_noise_clip)
            a2 = np.clip(a2 + noise, -1.0, 1.0)
        return a2

    def update(self, buffer, rng: np.random.Generator):
        if len(buffer) == 0:
            return None
        cfg = self.config
        s, a, r, s2, term = buffer.sample(cfg.batch_size, rng)
        batch = len(r)

        a2 = self._next_actions(s2, rng)
        q2 = self.critic_targets(np.concatenate([s2, a2], axis=1))[:, :, 0].min(axis=0)
        y = r + cfg.gamma * (1.0 - term) * q2

        q, caches = self.critics.forward(np.concatenate([s, a], axis=1))
        err = q - y[None, :, None]
        self.critics.zero_grads()
        self.critics.backward(err / batch, caches)
        self.critic_opt.step(self.critics.params(), self.critics.grads())
        critic_loss = 0.5 * float((err[:, :, 0] ** 2).mean(axis=1).sum())

        report = {"critic_loss": critic_loss, "actor_loss": float("nan"),
                  "alpha": 0.0, "mean_q": float(q.mean())}
        self.updates_done += 1
        if self.updates_done % cfg.resolved_policy_delay == 0:
            report["actor_loss"] = self._actor_update(s)
            self.actor_target.copy_params_from(self.actor, cfg.tau)
            self.critic_targets.copy_params_from(self.critics, cfg.tau)
        return report

    def _actor_update(self, s) -> float:
        batch = len(s)
        raw, actor_caches = self.actor.forward(s)
        a_pi = np.tanh(raw[0])
        q_pi, caches = self.critics.forward(np.concatenate([s, a_pi], axis=1))
        # Deterministic policy gradient through the first critic only.
        d_q = np.zeros_like(q_pi)
        d_q[0, :, 0] = -1.0 / batch
        d_input = self.critics.backward(d_q, caches, need_input_grad=True, param_grads=False)
        d_action = d_input[:, self.obs_dim:]
        self.actor.zero_grads()
        self.actor.backward((d_action * (1.0 - a_pi * a_pi))[None, :, :], actor_caches)
        self.actor_opt.step(self.actor.params(), self.actor.grads())
        return -float(q_pi[0, :, 0].mean())

    def _nets(self):
        return {"actor": self.actor, "actor_target": self.actor_target,
                "critics": self.critics, "critic_targets": self.critic_targets}

    def _optimizers(self):
        return {"actor": self.actor_opt, "critics": self.critic_opt}


class DdpgAgent(Td3Agent):
    """TD3 minus the tricks: one critic, no smoothing, policy updated every step."""

    algo = "ddpg"
    _n_critics = 1
