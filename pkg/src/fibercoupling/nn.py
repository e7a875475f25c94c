"""Minimal neural substrate: MLPs with reverse-mode gradients, Adam, batch renorm.

Weights carry a leading ensemble axis so twin critics (or quantile critic
stacks) run as one batched GEMM per layer.  A plain network is an ensemble
of one.  All randomness flows through an explicit numpy Generator; there is
no global state, which keeps training runs bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from . import nn_kernels


class Linear:
    def __init__(self, fan_in: int, fan_out: int, ensemble: int, rng: np.random.Generator,
                 dtype=np.float64, out_scale: float | None = None):
        bound = 1.0 / np.sqrt(fan_in)
        self.W = rng.uniform(-bound, bound, size=(ensemble, fan_in, fan_out)).astype(dtype)
        self.b = rng.uniform(-bound, bound, size=(ensemble, 1, fan_out)).astype(dtype)
        if out_scale is not None:
            # Near-zero head: small weights, zero bias.
            self.W *= out_scale
            self.b[:] = 0.0
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray, train: bool):
        return np.matmul(x, self.W) + self.b, x

    def backward(self, dy: np.ndarray, cache, need_input_grad: bool, param_grads: bool):
        x = cache
        if param_grads:
            if x.ndim == 2:
                self.dW += np.matmul(x.T, dy)
            else:
                self.dW += np.matmul(x.transpose(0, 2, 1), dy)
            self.db += dy.sum(axis=1, keepdims=True)
        if not need_input_grad:
            return None
        dx = np.matmul(dy, self.W.transpose(0, 2, 1))
        if x.ndim == 2:
            dx = dx.sum(axis=0)  # input was shared across the ensemble
        return dx

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}

    def state(self):
        return {}


class Relu:
    def forward(self, x: np.ndarray, train: bool):
        y = np.maximum(x, 0.0)
        return y, (x > 0.0)

    def backward(self, dy: np.ndarray, cache, need_input_grad: bool, param_grads: bool):
        return dy * cache

    def params(self):
        return {}

    def grads(self):
        return {}

    def state(self):
        return {}


class BatchRenorm:
    """Batch renormalization over the batch axis, per ensemble member.

    Train mode normalizes with batch statistics corrected toward the running
    ones through the clamped (r, d) factors; eval mode is the deterministic
    affine map using running statistics only.  The clamps ramp from plain
    batch norm (r_max=1, d_max=0) to their final values over `warmup` updates.
    """

    def __init__(self, features: int, ensemble: int, dtype=np.float64, momentum: float = 0.99,
                 r_max: float = 3.0, d_max: float = 5.0, warmup: int = 10_000,
                 eps: float = 1e-5):
        shape = (ensemble, 1, features)
        self.gamma = np.ones(shape, dtype=dtype)
        self.beta = np.zeros(shape, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(shape, dtype=dtype)
        self.running_var = np.ones(shape, dtype=dtype)
        self.momentum = momentum
        self.r_max_final = r_max
        self.d_max_final = d_max
        self.warmup = warmup
        self.eps = eps
        self.updates = 0
        self.freeze_stats = False  # finite-difference checks need a pure forward

    def _clamps(self) -> tuple[float, float]:
        frac = min(1.0, self.updates / max(1, self.warmup))
        return 1.0 + frac * (self.r_max_final - 1.0), frac * self.d_max_final

    def forward(self, x: np.ndarray, train: bool):
        if x.ndim == 2:
            x = x[None, :, :]
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv
            return self.gamma * xhat + self.beta, ("eval", inv, xhat)

        r_max, d_max = self._clamps()
        y, xhat0, sigma, r, d, mean, var = nn_kernels.brn_forward(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.eps, r_max, d_max)

        if not self.freeze_stats:
            keep = self.momentum
            self.running_mean += (1.0 - keep) * (mean - self.running_mean)
            self.running_var += (1.0 - keep) * (var - self.running_var)
            self.updates += 1
        return y, ("train", xhat0, sigma, r, d)

    def backward(self, dy: np.ndarray, cache, need_input_grad: bool, param_grads: bool):
        if cache[0] == "eval":
            _, inv, xhat = cache
            if param_grads:
                self.dbeta += dy.sum(axis=1, keepdims=True)
                self.dgamma += (dy * xhat).sum(axis=1, keepdims=True)
            return dy * (self.gamma * inv) if need_input_grad else None

        _, xhat0, sigma, r, d = cache
        return nn_kernels.brn_backward(dy, self.gamma, xhat0, sigma, r, d,
                                       self.dgamma, self.dbeta,
                                       param_grads, need_input_grad)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var,
                "updates": self.updates}

    @property
    def batch_moments_shape(self):
        return self.running_mean.shape


class Mlp:
    """Fully connected ReLU network, optionally with batch renorm hidden blocks."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, ensemble: int = 1,
                 batch_renorm: bool = False, out_scale: float | None = None,
                 dtype=np.float64, renorm_kwargs: dict | None = None):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output width")
        self.sizes = list(sizes)
        self.ensemble = ensemble
        self.dtype = dtype
        self.layers: list = []
        renorm_kwargs = renorm_kwargs or {}
        for i in range(len(sizes) - 2):
            self.layers.append(Linear(sizes[i], sizes[i + 1], ensemble, rng, dtype))
            if batch_renorm:
                self.layers.append(BatchRenorm(sizes[i + 1], ensemble, dtype, **renorm_kwargs))
            self.layers.append(Relu())
        self.layers.append(Linear(sizes[-2], sizes[-1], ensemble, rng, dtype, out_scale=out_scale))

    def forward(self, x: np.ndarray, train: bool = False):
        """Returns (outputs, cache); outputs shaped (ensemble, batch, out)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, :]
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train)
            caches.append(cache)
        return x, caches

    def __call__(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return self.forward(x, train)[0]

    def backward(self, dy: np.ndarray, caches, need_input_grad: bool = False,
                 param_grads: bool = True):
        """Accumulate parameter gradients; optionally return dL/dinput."""
        dx = np.asarray(dy, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            need = need_input_grad or i > 0
            dx = self.layers[i].backward(dx, caches[i], need, param_grads)
        return dx

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[:] = 0.0

    def _named(self, getter):
        out = {}
        for i, layer in enumerate(self.layers):
            for key, value in getter(layer).items():
                out[f"l{i}.{key}"] = value
        return out

    def params(self) -> dict[str, np.ndarray]:
        return self._named(lambda l: l.params())

    def grads(self) -> dict[str, np.ndarray]:
        return self._named(lambda l: l.grads())

    def state(self) -> dict:
        """Non-trainable state (batch-renorm running statistics)."""
        return self._named(lambda l: l.state())

    def load_state(self, state: dict) -> None:
        own = self.state()
        for key, value in state.items():
            if key.endswith(".updates"):
                idx = int(key[1:].split(".", 1)[0])
                self.layers[idx].updates = int(value)
            else:
                own[key][:] = np.asarray(value)

    def copy_params_from(self, other: "Mlp", tau: float = 1.0) -> None:
        """Polyak update: self <- (1 - tau) * self + tau * other."""
        mine, theirs = self.params(), other.params()
        for key in mine:
            if tau >= 1.0:
                mine[key][:] = theirs[key]
            else:
                mine[key] *= 1.0 - tau
                mine[key] += tau * theirs[key]

    def clone(self) -> "Mlp":
        """Deep copy with identical parameters and running statistics."""
        new = Mlp.__new__(Mlp)
        new.sizes = list(self.sizes)
        new.ensemble = self.ensemble
        new.dtype = self.dtype
        new.layers = []
        for layer in self.layers:
            if isinstance(layer, Linear):
                twin = Linear.__new__(Linear)
                twin.W = layer.W.copy()
                twin.b = layer.b.copy()
                twin.dW = np.zeros_like(layer.W)
                twin.db = np.zeros_like(layer.b)
                new.layers.append(twin)
            elif isinstance(layer, BatchRenorm):
                twin = BatchRenorm(layer.gamma.shape[-1], layer.gamma.shape[0], layer.gamma.dtype,
                                   layer.momentum, layer.r_max_final, layer.d_max_final,
                                   layer.warmup, layer.eps)
                twin.gamma = layer.gamma.copy()
                twin.beta = layer.beta.copy()
                twin.running_mean = layer.running_mean.copy()
                twin.running_var = layer.running_var.copy()
                twin.updates = layer.updates
                new.layers.append(twin)
            else:
                new.layers.append(Relu())
        return new


class Adam:
    """Bias-corrected Adam over a named parameter dict, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._scratch = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        step_scale = self.lr / (1.0 - self.beta1 ** self.t)
        inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - self.beta2 ** self.t)
        for key, p in params.items():
            g = grads[key]
            m, v = self.m[key], self.v[key]
            if nn_kernels.adam_update(p, g, m, v, self.beta1, self.beta2, self.eps,
                                      step_scale, inv_sqrt_c2):
                continue
            s = self._scratch[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v += s
            np.sqrt(v, out=s)
            s *= inv_sqrt_c2
            s += self.eps
            np.divide(m, s, out=s)
            s *= step_scale
            p -= s

    def state(self) -> dict:
        return {"t": self.t,
                "m": {k: v for k, v in self.m.items()},
                "v": {k: v for k, v in self.v.items()}}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k][:] = np.asarray(state["m"][k])
            self.v[k][:] = np.asarray(state["v"][k])
