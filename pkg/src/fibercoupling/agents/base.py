"""Shared agent machinery: config, squashed-Gaussian actor, checkpoints."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import Adam, Mlp

logger = logging.getLogger(__name__)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
CHECKPOINT_FORMAT_VERSION = 1

# Plain-float constants: numpy float64 scalars would silently upcast float32
# activations under NEP 50 promotion rules.
_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))

ALGOS = ("sac", "tqc", "crossq", "td3", "ddpg", "random")


@dataclass
class AgentConfig:
    """Off-policy agent hyperparameters; defaults follow the referenced library."""

    algo: str = "sac"
    gamma: float = 0.99
    tau: float = 0.005
    lr: float | None = None              # None: 3e-4 (1e-3 for td3/ddpg)
    batch_size: int = 256
    learning_starts: int = 100
    train_freq: int = 1
    gradient_steps: int = 1
    buffer_size: int = 1_000_000
    hidden: tuple = (256, 256)
    actor_out_scale: float = 1e-2
    # float32 matches the reference implementations and doubles single-core
    # GEMM throughput; switch to float64 when chasing numerics.
    dtype: str = "float32"
    # entropy auto-tuning (sac/tqc/crossq)
    target_entropy: float | None = None  # None: -action_dim
    init_alpha: float = 1.0
    # tqc
    n_critics: int = 2
    n_quantiles: int = 25
    top_quantiles_to_drop_per_net: int = 2
    # crossq
    policy_delay: int | None = None      # None: 1 (3 for crossq, 2 for td3)
    adam_beta1: float | None = None      # None: 0.9 (0.5 for crossq)
    renorm_momentum: float = 0.99
    renorm_warmup: int = 10_000
    # td3/ddpg
    exploration_noise: float = 0.1
    target_policy_noise: float = 0.2
    target_noise_clip: float = 0.5

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}")
        if isinstance(self.hidden, list):
            self.hidden = tuple(self.hidden)

    @property
    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-3 if self.algo in ("td3", "ddpg") else 3e-4

    @property
    def resolved_policy_delay(self) -> int:
        if self.policy_delay is not None:
            return self.policy_delay
        return {"crossq": 3, "td3": 2}.get(self.algo, 1)

    @property
    def resolved_beta1(self) -> float:
        if self.adam_beta1 is not None:
            return self.adam_beta1
        return 0.5 if self.algo == "crossq" else 0.9

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


class SquashedGaussianActor:
    """tanh-squashed diagonal Gaussian policy over [-1, 1]^act_dim."""

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig, rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = Mlp([obs_dim, *config.hidden, 2 * act_dim], rng,
                       out_scale=config.actor_out_scale, dtype=config.np_dtype)

    def _heads(self, obs: np.ndarray, train: bool = False):
        out, caches = self.net.forward(obs, train=train)
        out = out[0]  # single-member ensemble
        mean = out[:, :self.act_dim]
        log_std_raw = out[:, self.act_dim:]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        clip_mask = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
        return mean, log_std, clip_mask, caches

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        mean, _, _, _ = self._heads(np.atleast_2d(obs))
        return np.tanh(mean)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Reparameterized sample; returns (action, log_prob, ctx) with the
        context needed to push gradients back through the heads."""
        obs = np.atleast_2d(obs)
        mean, log_std, clip_mask, caches = self._heads(obs)
        std = np.exp(log_std)
        eps = rng.standard_normal(mean.shape).astype(mean.dtype)
        u = mean + std * eps
        action = np.tanh(u)
        # log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)), evaluated stably.
        softplus = np.logaddexp(0.0, -2.0 * u)
        log_prob = (-0.5 * eps * eps - log_std - 0.5 * _LOG_2PI
                    - 2.0 * (_LOG_2 - u - softplus)).sum(axis=1)
        ctx = {"caches": caches, "action": action, "std_eps": std * eps, "clip_mask": clip_mask}
        return action, log_prob, ctx

    def backward_from(self, ctx, d_action: np.ndarray, d_logp_coeff: float) -> None:
        """Accumulate actor gradients for L = d_logp_coeff * sum_b logp_b + <d_action, a>.

        `d_action` is dL/da holding u's dependence through tanh; the log-prob
        path enters through the closed-form derivatives w.r.t. mean/log_std.
        """
        a = ctx["action"]
        std_eps = ctx["std_eps"]
        d_tanh = 1.0 - a * a
        du = d_action * d_tanh + d_logp_coeff * 2.0 * a
        d_mean = du
        d_log_std = du * std_eps - d_logp_coeff
        d_log_std = d_log_std * ctx["clip_mask"]
        d_out = np.concatenate([d_mean, d_log_std], axis=1)[None, :, :]
        self.net.backward(d_out, ctx["caches"])


class BaseAgent:
    """Common surface: act / update / checkpoint state."""

    algo = "base"

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig):
        if config.algo != self.algo:
            raise ValueError(f"config.algo={config.algo!r} does not match {self.algo!r}")
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.config = config
        self.updates_done = 0

    def _check_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=self.config.np_dtype)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation length {obs.shape[-1]} != expected {self.obs_dim}")
        return obs

    def act(self, obs, deterministic: bool, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def update(self, buffer, rng: np.random.Generator):
        raise NotImplementedError

    # -- checkpointing ----------------------------------------------------

    def _nets(self) -> dict[str, Mlp]:
        raise NotImplementedError

    def _optimizers(self) -> dict[str, Adam]:
        return {}

    def _extra_state(self) -> dict:
        return {}

    def _load_extra_state(self, state: dict) -> None:
        pass

    def state_dict(self) -> dict:
        nets = self._nets()
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "algo": self.algo,
            "config": asdict(self.config),
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "updates_done": self.updates_done,
            "params": {name: {k: v.tolist() for k, v in net.params().items()}
                       for name, net in nets.items()},
            "net_state": {name: {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                 for k, v in net.state().items()}
                          for name, net in nets.items()},
            "optimizers": {name: {"t": opt.t,
                                  "m": {k: v.tolist() for k, v in opt.m.items()},
                                  "v": {k: v.tolist() for k, v in opt.v.items()}}
                           for name, opt in self._optimizers().items()},
            "extra": self._extra_state(),
        }

    def load_state_dict(self, state: dict) -> None:
        if state["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {state['format_version']}")
        if state["algo"] != self.algo:
            raise ValueError(f"checkpoint algo {state['algo']!r} != agent {self.algo!r}")
        self.updates_done = int(state["updates_done"])
        for name, net in self._nets().items():
            params = net.params()
            for key, value in state["params"][name].items():
                params[key][:] = np.asarray(value, dtype=params[key].dtype)
            net.load_state(state["net_state"].get(name, {}))
        for name, opt in self._optimizers().items():
            opt.load_state(state["optimizers"][name])
        self._load_extra_state(state.get("extra", {}))


class RandomAgent(BaseAgent):
    """Uniform random policy baseline; update is a no-op."""

    algo = "random"

    def act(self, obs, deterministic: bool, rng: np.random.Generator) -> np.ndarray:
        self._check_obs(obs)
        return rng.uniform(-1.0, 1.0, size=self.act_dim)

    def update(self, buffer, rng: np.random.Generator):
        return None

    def _nets(self):
        return {}


class EntropyTuner:
    """Gradient-tuned temperature, stored as log(alpha) so alpha stays > 0."""

    def __init__(self, config: AgentConfig, act_dim: int):
        self.target_entropy = (config.target_entropy if config.target_entropy is not None
                               else -float(act_dim))
        self.log_alpha = np.array([np.log(config.init_alpha)], dtype=np.float64)
        self.opt = Adam({"log_alpha": self.log_alpha}, lr=config.resolved_lr,
                        beta1=config.resolved_beta1)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def update(self, log_prob: np.ndarray) -> float:
        grad = -float(np.mean(log_prob + self.target_entropy))
        self.opt.step({"log_alpha": self.log_alpha}, {"log_alpha": np.array([grad])})
        return grad

    def state(self) -> dict:
        return {"log_alpha": float(self.log_alpha[0]),
                "opt": {"t": self.opt.t, "m": float(self.opt.m["log_alpha"][0]),
                        "v": float(self.opt.v["log_alpha"][0])}}

    def load_state(self, state: dict) -> None:
        self.log_alpha[0] = state["log_alpha"]
        self.opt.t = int(state["opt"]["t"])
        self.opt.m["log_alpha"][0] = state["opt"]["m"]
        self.opt.v["log_alpha"][0] = state["opt"]["v"]


def make_agent(obs_dim: int, act_dim: int, config: AgentConfig,
               rng: np.random.Generator) -> BaseAgent:
    from .crossq import CrossQAgent
    from .sac import SacAgent
    from .td3 import DdpgAgent, Td3Agent
    from .tqc import TqcAgent

    cls = {"sac": SacAgent, "tqc": TqcAgent, "crossq": CrossQAgent,
           "td3": Td3Agent, "ddpg": DdpgAgent, "random": RandomAgent}[config.algo]
    if config.algo == "random":
        return cls(obs_dim, act_dim, config)
    return cls(obs_dim, act_dim, config, rng)
