"""Soft actor-critic with twin critics, target networks, and tuned entropy."""

from __future__ import annotations

import numpy as np

from ..nn import Adam, Mlp
from .base import AgentConfig, BaseAgent, EntropyTuner, SquashedGaussianActor


class SacAgent(BaseAgent):
    algo = "sac"

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig,
                 rng: np.random.Generator):
        super().__init__(obs_dim, act_dim, config)
        dtype = config.np_dtype
        self.actor = SquashedGaussianActor(obs_dim, act_dim, config, rng)
        self.critics = Mlp([obs_dim + act_dim, *config.hidden, 1], rng,
                           ensemble=config.n_critics, dtype=dtype)
        self.critic_targets = self.critics.clone()
        beta1 = config.resolved_beta1
        self.actor_opt = Adam(self.actor.net.params(), lr=config.resolved_lr, beta1=beta1)
        self.critic_opt = Adam(self.critics.params(), lr=config.resolved_lr, beta1=beta1)
        self.entropy = EntropyTuner(config, act_dim)

    def act(self, obs, deterministic: bool, rng: np.random.Generator) -> np.ndarray:
        obs = self._check_obs(obs)
        single = obs.ndim == 1
        if deterministic:
            action = self.actor.mean_action(obs)
        else:
            action, _, _ = self.actor.sample(obs, rng)
        return action[0] if single else action

    def _targets(self, r, s2, term, rng):
        """y = r + gamma * (1 - terminal) * (min_i Q_i(s', a') - alpha * log pi)."""
        cfg = self.config
        a2, logp2, _ = self.actor.sample(s2, rng)
        q2 = self.critic_targets(np.concatenate([s2, a2], axis=1))[:, :, 0]
        q2_min = q2.min(axis=0)
        return r + cfg.gamma * (1.0 - term) * (q2_min - self.entropy.alpha * logp2)

    def _critic_update(self, s, a, y):
        batch = len(y)
        q, caches = self.critics.forward(np.concatenate([s, a], axis=1))
        err = q - y[None, :, None]
        self.critics.zero_grads()
        self.critics.backward(err / batch, caches)
        self.critic_opt.step(self.critics.params(), self.critics.grads())
        per_critic_mse = (err[:, :, 0] ** 2).mean(axis=1)
        return 0.5 * float(per_critic_mse.sum()), float(q.mean())

    def _actor_update(self, s, rng):
        """Maximize min-Q of the sampled action minus the entropy penalty."""
        batch = len(s)
        alpha = self.entropy.alpha
        a_new, logp, ctx = self.actor.sample(s, rng)
        q_pi, caches = self.critics.forward(np.concatenate([s, a_new], axis=1))
        q_pi = q_pi[:, :, 0]
        argmin = q_pi.argmin(axis=0)
        q_min = q_pi[argmin, np.arange(batch)]

        d_q = np.zeros((self.config.n_critics, batch, 1), dtype=q_pi.dtype)
        d_q[argmin, np.arange(batch), 0] = -1.0 / batch
        d_input = self.critics.backward(d_q, caches, need_input_grad=True, param_grads=False)
        d_action = d_input[:, self.obs_dim:]

        self.actor.net.zero_grads()
        self.actor.backward_from(ctx, d_action, alpha / batch)
        self.actor_opt.step(self.actor.net.params(), self.actor.net.grads())

        actor_loss = float(np.mean(alpha * logp - q_min))
        return actor_loss, logp

    def update(self, buffer, rng: np.random.Generator):
        if len(buffer) == 0:
            return None
        cfg = self.config
        s, a, r, s2, term = buffer.sample(cfg.batch_size, rng)
        y = self._targets(r, s2, term, rng)
        critic_loss, mean_q = self._critic_update(s, a, y)
        actor_loss, logp = self._actor_update(s, rng)
        self.entropy.update(logp)
        self.critic_targets.copy_params_from(self.critics, cfg.tau)
        self.updates_done += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss,
                "alpha": self.entropy.alpha, "mean_q": mean_q}

    def _nets(self):
        return {"actor": self.actor.net, "critics": self.critics,
                "critic_targets": self.critic_targets}

    def _optimizers(self):
        return {"actor": self.actor_opt, "critics": self.critic_opt}

    def _extra_state(self):
        return {"entropy": self.entropy.state()}

    def _load_extra_state(self, state):
        if "entropy" in state:
            self.entropy.load_state(state["entropy"])
