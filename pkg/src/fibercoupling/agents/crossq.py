"""CrossQ-style agent: batch-renormalized critics, no target networks.

Current and next state-action pairs go through the critics in one train-mode
forward pass, so both halves share the same normalization statistics; the
next-half outputs feed the TD targets without any gradient flow.
"""

from __future__ import annotations

import numpy as np

from ..nn import Adam, Mlp
from .base import AgentConfig, BaseAgent, EntropyTuner, SquashedGaussianActor


class CrossQAgent(BaseAgent):
    algo = "crossq"

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig,
                 rng: np.random.Generator):
        super().__init__(obs_dim, act_dim, config)
        dtype = config.np_dtype
        self.actor = SquashedGaussianActor(obs_dim, act_dim, config, rng)
        self.critics = Mlp([obs_dim + act_dim, *config.hidden, 1], rng,
                           ensemble=config.n_critics, batch_renorm=True, dtype=dtype,
                           renorm_kwargs={"momentum": config.renorm_momentum,
                                          "warmup": config.renorm_warmup})
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

    def update(self, buffer, rng: np.random.Generator):
        if len(buffer) == 0:
            return None
        cfg = self.config
        s, a, r, s2, term = buffer.sample(cfg.batch_size, rng)
        batch = len(r)

        a2, logp2, _ = self.actor.sample(s2, rng)
        joint = np.concatenate([np.concatenate([s, a], axis=1),
                                np.concatenate([s2, a2], axis=1)], axis=0)
        q_all, caches = self.critics.forward(joint, train=True)
        q = q_all[:, :batch, 0]
        q_next = q_all[:, batch:, 0]
        y = r + cfg.gamma * (1.0 - term) * (q_next.min(axis=0) - self.entropy.alpha * logp2)

        # Zero gradient on the next-half keeps the targets fixed while the
        # shared batch statistics still see both halves.
        err = q - y[None, :]
        d_q = np.zeros_like(q_all)
        d_q[:, :batch, 0] = err / batch
        self.critics.zero_grads()
        self.critics.backward(d_q, caches)
        self.critic_opt.step(self.critics.params(), self.critics.grads())
        critic_loss = 0.5 * float((err ** 2).mean(axis=1).sum())

        report = {"critic_loss": critic_loss, "actor_loss": float("nan"),
                  "alpha": self.entropy.alpha, "mean_q": float(q.mean())}

        self.updates_done += 1
        if self.updates_done % cfg.resolved_policy_delay == 0:
            report["actor_loss"] = self._actor_update(s, rng)
        return report

    def _actor_update(self, s, rng: np.random.Generator) -> float:
        batch = len(s)
        alpha = self.entropy.alpha
        a_new, logp, ctx = self.actor.sample(s, rng)
        # Eval-mode critics: running statistics only, no stats pollution.
        q_pi, caches = self.critics.forward(np.concatenate([s, a_new], axis=1), train=False)
        q_pi = q_pi[:, :, 0]
        argmin = q_pi.argmin(axis=0)
        q_min = q_pi[argmin, np.arange(batch)]

        d_q = np.zeros((self.config.n_critics, batch, 1), dtype=q_pi.dtype)
        d_q[argmin, np.arange(batch), 0] = -1.0 / batch
        d_input = self.critics.backward(d_q, caches, need_input_grad=True, param_grads=False)

        self.actor.net.zero_grads()
        self.actor.backward_from(ctx, d_input[:, self.obs_dim:], alpha / batch)
        self.actor_opt.step(self.actor.net.params(), self.actor.net.grads())
        self.entropy.update(logp)
        return float(np.mean(alpha * logp - q_min))

    def _nets(self):
        return {"actor": self.actor.net, "critics": self.critics}

    def _optimizers(self):
        return {"actor": self.actor_opt, "critics": self.critic_opt}

    def _extra_state(self):
        return {"entropy": self.entropy.state()}

    def _load_extra_state(self, state):
        if "entropy" in state:
            self.entropy.load_state(state["entropy"])
