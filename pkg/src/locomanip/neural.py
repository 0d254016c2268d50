"""Dense network core: MLP with hand-written reverse mode, Gaussian policy
head, Adam, and the running observation normalizer.

Everything is float64 numpy.  Gradients are exact (checked against central
finite differences in the test suite), deterministic, and there is no
graph machinery: forward passes return an explicit cache that backward
consumes.

Checkpoint format (little-endian, see save_arrays/load_arrays):

    magic   8 bytes  b"LMWBCKP1"
    u32     number of named arrays
    per array:
        u16     name length, then UTF-8 name
        u8      ndim
        u64[k]  shape
        f64[]   row-major data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"LMWBCKP1"

_ACTIVATIONS = ("elu", "relu")


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "elu":
        # expm1 of the negative part only; positives pass through
        return np.maximum(x, 0.0) + np.expm1(np.minimum(x, 0.0))
    return np.maximum(x, 0.0)


def _act_grad_from_output(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    # ELU output is negative exactly on the negative branch, where the
    # derivative is output + 1; elsewhere it is 1.  No fresh exp needed.
    if name == "elu":
        return np.minimum(out, 0.0) + 1.0
    return (pre > 0.0).astype(np.float64)


class Mlp:
    """Fully connected network; hidden layers share one activation, the
    output layer is linear."""

    def __init__(self, sizes, activation: str = "elu",
                 rng: np.random.Generator | None = None, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / (n_in + n_out))
            if k == len(self.sizes) - 2:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Returns (output, cache); cache feeds backward()."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {h.shape[1]} != {self.sizes[0]}")
        pre_acts = []
        acts = [h]
        n_layers = len(self.weights)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k < n_layers - 1:
                pre_acts.append(z)
                h = _act(self.activation, z)
                acts.append(h)
            else:
                h = z
        out = h[0] if squeeze else h
        return out, (acts, pre_acts, squeeze)

    def backward(self, cache, grad_out: np.ndarray):
        """Exact reverse-mode pass.

        Returns (grads, grad_input) where grads interleaves [dW0, db0, ...]
        matching parameters().
        """
        acts, pre_acts, squeeze = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            g = g[None, :]
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            a_in = acts[k]
            grads[2 * k] = a_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g *= _act_grad_from_output(self.activation, pre_acts[k - 1], acts[k])
        return grads, (g[0] if squeeze else g)

    def state_arrays(self, prefix: str) -> dict:
        out = {f"{prefix}.sizes": np.asarray(self.sizes, dtype=np.float64),
               f"{prefix}.activation": np.asarray(
                   [float(_ACTIVATIONS.index(self.activation))])}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{k}"] = w
            out[f"{prefix}.b{k}"] = b
        return out

    @classmethod
    def from_state(cls, arrays: dict, prefix: str) -> "Mlp":
        sizes = arrays[f"{prefix}.sizes"].astype(int).tolist()
        activation = _ACTIVATIONS[int(arrays[f"{prefix}.activation"][0])]
        net = cls(sizes, activation)
        for k in range(len(sizes) - 1):
            net.weights[k] = arrays[f"{prefix}.w{k}"].copy()
            net.biases[k] = arrays[f"{prefix}.b{k}"].copy()
        return net


class CriticBank:
    """One value MLP per reward group; no parameters are shared between
    critics or with the actor."""

    def __init__(self, num_critics: int, sizes, activation: str = "elu",
                 rng: np.random.Generator | None = None):
        if sizes[-1] != 1:
            raise ValueError("critic networks end in a single value output")
        self.num_critics = num_critics
        self.nets = [Mlp(sizes, activation, rng) for _ in range(num_critics)]

    def parameters(self) -> list:
        out = []
        for net in self.nets:
            out.extend(net.parameters())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(batch, num_critics) value predictions."""
        return np.stack([net.forward(x)[..., 0] for net in self.nets], axis=-1)

    def forward_cached(self, x: np.ndarray):
        outs = []
        caches = []
        for net in self.nets:
            v, cache = net.forward_cached(x)
            outs.append(v[..., 0])
            caches.append(cache)
        return np.stack(outs, axis=-1), caches

    def backward(self, caches, grad_values: np.ndarray) -> list:
        """grad_values is (B, G); returns gradients matching parameters()."""
        grads = []
        for g, net in enumerate(self.nets):
            net_grads, _ = net.backward(caches[g], grad_values[:, g:g + 1])
            grads.extend(net_grads)
        return grads


LOG_2PI = float(np.log(2.0 * np.pi))


class GaussianPolicy:
    """Diagonal Gaussian over actions; the mean comes from an MLP and the
    log standard deviation is a free per-dimension parameter."""

    def __init__(self, obs_size: int, action_size: int, hidden,
                 activation: str = "elu", rng: np.random.Generator | None = None,
                 log_std_init: float = 0.0, log_std_bounds=(-4.0, 1.0)):
        self.mean_net = Mlp([obs_size] + list(hidden) + [action_size],
                            activation, rng, out_scale=0.01)
        self.log_std = np.full(action_size, float(log_std_init))
        self.log_std_bounds = (float(log_std_bounds[0]), float(log_std_bounds[1]))
        self.action_size = action_size

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    def parameters(self) -> list:
        return self.mean_net.parameters() + [self.log_std]

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions; returns (actions, log_probs, mean)."""
        mean = self.mean_net.forward(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mean.shape)
        actions = mean + std * noise
        logp = self._log_prob_given_mean(mean, actions)
        return actions, logp, mean

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_net.forward(obs)

    def _log_prob_given_mean(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        std = np.exp(self.log_std)
        z = (actions - mean) / std
        return -0.5 * (z * z).sum(axis=-1) - self.log_std.sum() \
            - 0.5 * self.action_size * LOG_2PI

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self._log_prob_given_mean(self.mean_net.forward(obs), actions)

    def entropy(self) -> float:
        """Analytic entropy; independent of the observation."""
        return float(self.log_std.sum() + 0.5 * self.action_size * (LOG_2PI + 1.0))

    def state_arrays(self, prefix: str = "actor") -> dict:
        out = self.mean_net.state_arrays(f"{prefix}.mean")
        out[f"{prefix}.log_std"] = self.log_std
        out[f"{prefix}.log_std_bounds"] = np.asarray(self.log_std_bounds)
        return out

    @classmethod
    def from_state(cls, arrays: dict, prefix: str = "actor") -> "GaussianPolicy":
        net = Mlp.from_state(arrays, f"{prefix}.mean")
        policy = cls.__new__(cls)
        policy.mean_net = net
        policy.log_std = arrays[f"{prefix}.log_std"].copy()
        bounds = arrays[f"{prefix}.log_std_bounds"]
        policy.log_std_bounds = (float(bounds[0]), float(bounds[1]))
        policy.action_size = net.sizes[-1]
        return policy


def log_prob_and_entropy(policy: GaussianPolicy, obs: np.ndarray,
                         action: np.ndarray) -> tuple:
    """Diagonal-Gaussian log density of the action and the policy entropy."""
    lp = policy.log_prob(obs, action)
    return lp, policy.entropy()


class RunningNormalizer:
    """Streaming per-dimension whitening with parallel-merge statistics.

    Merging the statistics of two disjoint batches gives exactly the
    statistics of their concatenation, so update order is irrelevant at the
    batch level.
    """

    def __init__(self, dim: int, eps: float = 1e-8, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.eps = eps
        self.clip = clip

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        self._merge(b_mean, b_var, float(n))

    def merge(self, other: "RunningNormalizer") -> None:
        self._merge(other.mean, other.var, other.count)

    def _merge(self, b_mean, b_var, n: float) -> None:
        if self.count == 0.0:
            self.mean = b_mean.copy()
            self.var = b_var.copy()
            self.count = n
            return
        tot = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta * delta * self.count * n / tot
        self.mean = self.mean + delta * n / tot
        self.var = m2 / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state_arrays(self, prefix: str = "normalizer") -> dict:
        return {
            f"{prefix}.mean": self.mean,
            f"{prefix}.var": self.var,
            f"{prefix}.count": np.asarray([self.count]),
        }

    @classmethod
    def from_state(cls, arrays: dict, prefix: str = "normalizer") -> "RunningNormalizer":
        mean = arrays[f"{prefix}.mean"]
        norm = cls(mean.shape[0])
        norm.mean = mean.copy()
        norm.var = arrays[f"{prefix}.var"].copy()
        norm.count = float(arrays[f"{prefix}.count"][0])
        return norm


@dataclass
class AdamState:
    """Adam accumulators for one list of parameter arrays."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = None
    v: list = None


class Adam:
    """Standard Adam with bias correction, updating arrays in place."""

    def __init__(self, params: list, lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                               m=[np.zeros_like(p) for p in params],
                               v=[np.zeros_like(p) for p in params])

    def step(self, grads: list) -> None:
        st = self.state
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        st.step_count += 1
        bc1 = 1.0 - st.beta1 ** st.step_count
        bc2 = 1.0 - st.beta2 ** st.step_count
        for p, g, m, v in zip(self.params, grads, st.m, st.v):
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            p -= st.lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)


def adam_step(params: list, grads: list, opt: Adam) -> list:
    """Functional wrapper over Adam.step for single calls."""
    opt.step(grads)
    return opt.params


def save_arrays(path, arrays: dict) -> None:
    """Write named float64 arrays in the documented binary layout."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for s in arr.shape:
                fh.write(struct.pack("<Q", s))
            fh.write(arr.tobytes())


def load_arrays(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        (count,) = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
            n_items = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8")
            out[name] = data.reshape(shape).copy()
        return out
