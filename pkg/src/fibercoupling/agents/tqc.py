"""Truncated quantile critics: distributional twin critics with top-quantile drop."""

from __future__ import annotations

import numpy as np

from ..nn import Adam, Mlp
from ..nn_kernels import quantile_huber
from .base import AgentConfig, BaseAgent, EntropyTuner, SquashedGaussianActor


def truncate_pooled_quantiles(quantiles: np.ndarray, drop_per_net: int) -> np.ndarray:
    """Pool critics' quantiles, sort ascending, drop the top drop_per_net * n_nets.

    `quantiles` is (n_nets, batch, n_quantiles); returns (batch, kept).
    """
    n_nets, batch, n_q = quantiles.shape
    pooled = np.sort(quantiles.transpose(1, 0, 2).reshape(batch, n_nets * n_q), axis=1)
    drop = drop_per_net * n_nets
    if drop == 0:
        return pooled
    return pooled[:, :-drop]


def quantile_huber_grad(current: np.ndarray, target: np.ndarray, taus: np.ndarray):
    """Loss and dL/dcurrent for the kappa=1 quantile Huber regression.

    The loss sums over the predicted-quantile axis and averages over batch,
    target, and critic axes.  current: (E, B, N); target: (B, M).
    """
    return quantile_huber(current, target, taus)


class TqcAgent(BaseAgent):
    algo = "tqc"

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig,
                 rng: np.random.Generator):
        super().__init__(obs_dim, act_dim, config)
        dtype = config.np_dtype
        self.actor = SquashedGaussianActor(obs_dim, act_dim, config, rng)
        self.critics = Mlp([obs_dim + act_dim, *config.hidden, config.n_quantiles], rng,
                           ensemble=config.n_critics, dtype=dtype)
        self.critic_targets = self.critics.clone()
        beta1 = config.resolved_beta1
        self.actor_opt = Adam(self.actor.net.params(), lr=config.resolved_lr, beta1=beta1)
        self.critic_opt = Adam(self.critics.params(), lr=config.resolved_lr, beta1=beta1)
        self.entropy = EntropyTuner(config, act_dim)
        n_q = config.n_quantiles
        self.taus = ((2 * np.arange(n_q) + 1) / (2 * n_q)).astype(dtype)

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

        # Truncated distributional targets.
        a2, logp2, _ = self.actor.sample(s2, rng)
        z2 = self.critic_targets(np.concatenate([s2, a2], axis=1))
        kept = truncate_pooled_quantiles(z2, cfg.top_quantiles_to_drop_per_net)
        y = (r[:, None] + cfg.gamma * (1.0 - term[:, None])
             * (kept - self.entropy.alpha * logp2[:, None]))

        # Critic regression with the quantile Huber loss.
        q, caches = self.critics.forward(np.concatenate([s, a], axis=1))
        critic_loss, d_q = quantile_huber_grad(q, y, self.taus)
        self.critics.zero_grads()
        self.critics.backward(d_q, caches)
        self.critic_opt.step(self.critics.params(), self.critics.grads())

        # Actor maximizes the mean over every (non-truncated) quantile.
        alpha = self.entropy.alpha
        a_new, logp, ctx = self.actor.sample(s, rng)
        q_pi, pi_caches = self.critics.forward(np.concatenate([s, a_new], axis=1))
        n_all = cfg.n_critics * cfg.n_quantiles
        d_qpi = np.full_like(q_pi, -1.0 / (batch * n_all))
        d_input = self.critics.backward(d_qpi, pi_caches, need_input_grad=True,
                                        param_grads=False)
        self.actor.net.zero_grads()
        self.actor.backward_from(ctx, d_input[:, self.obs_dim:], alpha / batch)
        self.actor_opt.step(self.actor.net.params(), self.actor.net.grads())
        actor_loss = float(np.mean(alpha * logp - q_pi.mean(axis=(0, 2))))

        self.entropy.update(logp)
        self.critic_targets.copy_params_from(self.critics, cfg.tau)
        self.updates_done += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss,
                "alpha": self.entropy.alpha, "mean_q": float(q.mean())}

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
