"""Small dense networks with hand-written gradients, plus the policy heads.

Everything runs in float64 numpy: the networks are two ReLU hidden layers
of 64 units with a linear output, tiny enough that exactness beats
framework overhead.  Inputs are 2-D (batch, features) throughout; the
forward pass returns a cache consumed by the matching backward pass, which
produces per-tensor gradients in the same order as `Mlp.parameters()`.

Policy heads turn the network output into an action distribution:

  * CategoricalHead: two logits -> softmax over {off, on}.
  * GaussianHead: one mean output plus a learnable state-independent
    log-standard-deviation; samples are used unclipped for the log-density
    (consumers clip to the actuator range afterwards).

Checkpoints are plain text, one parameter per line with full round-trip
precision, so identical training runs produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mlp",
    "CategoricalHead",
    "GaussianHead",
    "Adam",
    "ActorCritic",
    "clip_grad_norm",
    "orthogonal",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

_LOG_2PI = math.log(2.0 * math.pi)
_CHECKPOINT_MAGIC = "buckdgc-checkpoint 1"


class CheckpointError(RuntimeError):
    """Malformed or mismatched checkpoint file."""


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    """Orthogonal weight init (QR of a Gaussian, sign-fixed for determinism)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes, rng=None, out_gain=1.0):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        rng = rng if rng is not None else np.random.default_rng(0)
        for j, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = out_gain if j == len(self.sizes) - 2 else math.sqrt(2.0)
            self.weights.append(orthogonal(rng, (n_out, n_in), gain))
            self.biases.append(np.zeros(n_out))

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray):
        """x is (batch, in); returns (output, cache) with ReLU hidden layers."""
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected (batch, {self.sizes[0]}) input, got {x.shape}")
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = z if j == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, grad_out: np.ndarray):
        """Exact reverse-mode gradients for a batch; grad_out is (batch, out).

        Returns a list matching parameters(): [dW0, db0, dW1, db1, ...].
        """
        acts, pre = cache
        grads = [None] * (2 * len(self.weights))
        delta = grad_out
        for j in range(len(self.weights) - 1, -1, -1):
            grads[2 * j] = delta.T @ acts[j]
            grads[2 * j + 1] = delta.sum(axis=0)
            if j > 0:
                delta = (delta @ self.weights[j]) * (pre[j - 1] > 0.0)
        return grads

    def __call__(self, x):
        return self.forward(x)[0]


class CategoricalHead:
    """Two-logit softmax policy over the binary gate action."""

    n_outputs = 2

    @staticmethod
    def log_softmax(logits: np.ndarray) -> np.ndarray:
        m = logits.max(axis=1, keepdims=True)
        shifted = logits - m
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    @classmethod
    def distribution(cls, logits: np.ndarray):
        """(probs, log_probs) for a batch of logit rows."""
        logp = cls.log_softmax(logits)
        return np.exp(logp), logp

    @classmethod
    def sample_and_logprob(cls, logits: np.ndarray, rng, deterministic=False):
        """One action from one logit row; never draws in deterministic mode."""
        probs, logp = cls.distribution(logits.reshape(1, -1))
        probs, logp = probs[0], logp[0]
        if deterministic:
            a = int(np.argmax(probs))
        else:
            a = 0 if rng.random() < probs[0] else 1
        entropy = float(-(probs * logp).sum())
        return a, float(logp[a]), entropy

    @classmethod
    def logprob_entropy(cls, logits: np.ndarray, actions: np.ndarray):
        """Batched log-probability of taken actions plus entropies."""
        probs, logp = cls.distribution(logits)
        idx = np.arange(len(actions))
        taken = logp[idx, actions.astype(int)]
        entropy = -(probs * logp).sum(axis=1)
        return taken, entropy

    @classmethod
    def backward(cls, logits, actions, d_logprob, d_entropy=None):
        """Gradient of sum(d_logprob * logp(a) [+ d_entropy * H]) w.r.t. logits."""
        probs, logp = cls.distribution(logits)
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(actions)), actions.astype(int)] = 1.0
        grad = d_logprob[:, None] * (onehot - probs)
        if d_entropy is not None:
            ent = -(probs * logp).sum(axis=1, keepdims=True)
            grad += d_entropy[:, None] * (-probs * (logp + ent))
        return grad


class GaussianHead:
    """Scalar Gaussian policy: network mean, learnable global log-std."""

    n_outputs = 1

    def __init__(self, init_log_std=math.log(0.5)):
        self.log_std = np.array([init_log_std])

    def sample_and_logprob(self, mean: np.ndarray, rng, deterministic=False):
        mu = float(mean.reshape(-1)[0])
        std = math.exp(self.log_std[0])
        if deterministic:
            a = mu
        else:
            a = mu + std * rng.standard_normal()
        logp = -0.5 * ((a - mu) / std) ** 2 - self.log_std[0] - 0.5 * _LOG_2PI
        entropy = 0.5 * (1.0 + _LOG_2PI) + self.log_std[0]
        return float(a), float(logp), float(entropy)

    def logprob_entropy(self, mean: np.ndarray, actions: np.ndarray):
        mu = mean.reshape(-1)
        std = math.exp(self.log_std[0])
        z = (actions - mu) / std
        logp = -0.5 * z**2 - self.log_std[0] - 0.5 * _LOG_2PI
        entropy = np.full(len(mu), 0.5 * (1.0 + _LOG_2PI) + self.log_std[0])
        return logp, entropy

    def backward(self, mean, actions, d_logprob, d_entropy=None):
        """Returns (grad wrt mean, grad wrt log_std)."""
        mu = mean.reshape(-1)
        std = math.exp(self.log_std[0])
        z = (actions - mu) / std
        d_mean = (d_logprob * z / std)[:, None]
        d_log_std = float((d_logprob * (z**2 - 1.0)).sum())
        if d_entropy is not None:
            d_log_std += float(d_entropy.sum())
        return d_mean, np.array([d_log_std])


class Adam:
    """Adam with bias correction over a list of parameter arrays (in place)."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def update(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale grads in place so the global l2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class ActorCritic:
    """Policy + value networks sharing an observation layout.

    variant "dgc" uses a categorical gate policy; "pwm" a Gaussian duty
    policy.  The nets are separate [obs, 64, 64, out] stacks; the policy
    output layer starts small (gain 0.01) so early behavior is near-uniform.
    """

    def __init__(self, variant: str, obs_size: int, rng=None, hidden=(64, 64), config_hash=""):
        if variant not in ("dgc", "pwm"):
            raise ValueError(f"unknown variant {variant!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.variant = variant
        self.obs_size = obs_size
        self.hidden = tuple(hidden)
        self.config_hash = config_hash
        n_out = 2 if variant == "dgc" else 1
        self.policy = Mlp([obs_size, *hidden, n_out], rng=rng, out_gain=0.01)
        self.value = Mlp([obs_size, *hidden, 1], rng=rng, out_gain=1.0)
        self.head = CategoricalHead() if variant == "dgc" else GaussianHead()

    def parameters(self):
        params = self.policy.parameters()
        if self.variant == "pwm":
            params.append(self.head.log_std)
        return params + self.value.parameters()

    def act(self, obs: np.ndarray, rng, deterministic=False):
        """Single-observation action; returns (action, log_prob, value)."""
        out = self.policy.forward(obs.reshape(1, -1))[0]
        a, logp, _ = self.head.sample_and_logprob(out, rng, deterministic)
        value = float(self.value.forward(obs.reshape(1, -1))[0][0, 0])
        return a, logp, value

    def act_deterministic(self, obs: np.ndarray):
        """Greedy action only (no value evaluation, no randomness)."""
        out = self.policy.forward(obs.reshape(1, -1))[0]
        a, _, _ = self.head.sample_and_logprob(out, rng=None, deterministic=True)
        return a

    def state_blocks(self):
        """Named tensors in checkpoint order."""
        blocks = []
        for j, (w, b) in enumerate(zip(self.policy.weights, self.policy.biases)):
            blocks.append((f"policy.w{j}", w))
            blocks.append((f"policy.b{j}", b))
        if self.variant == "pwm":
            blocks.append(("policy.log_std", self.head.log_std))
        for j, (w, b) in enumerate(zip(self.value.weights, self.value.biases)):
            blocks.append((f"value.w{j}", w))
            blocks.append((f"value.b{j}", b))
        return blocks


def save_checkpoint(ac: ActorCritic, path, extra: dict | None = None):
    """Write the self-describing text format (see README for the layout)."""
    lines = [
        _CHECKPOINT_MAGIC,
        f"variant {ac.variant}",
        f"obs_size {ac.obs_size}",
        f"hidden {' '.join(str(h) for h in ac.hidden)}",
        f"config_hash {ac.config_hash or '-'}",
    ]
    for key, value in sorted((extra or {}).items()):
        lines.append(f"meta.{key} {value}")
    for name, tensor in ac.state_blocks():
        shape = " ".join(str(n) for n in tensor.shape)
        lines.append(f"tensor {name} {shape}")
        lines.extend(repr(float(x)) for x in tensor.reshape(-1))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ActorCritic:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a recognized checkpoint file")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("tensor "):
        key, _, value = lines[pos].partition(" ")
        header[key] = value
        pos += 1
    try:
        variant = header["variant"]
        obs_size = int(header["obs_size"])
        hidden = tuple(int(h) for h in header["hidden"].split())
    except (KeyError, ValueError) as err:
        raise CheckpointError(f"{path}: bad header ({err})") from err
    ac = ActorCritic(variant, obs_size, hidden=hidden)
    ac.config_hash = header.get("config_hash", "-")
    if ac.config_hash == "-":
        ac.config_hash = ""
    for name, tensor in ac.state_blocks():
        if pos >= len(lines):
            raise CheckpointError(f"{path}: missing tensor {name}")
        fields = lines[pos].split()
        if fields[:2] != ["tensor", name]:
            raise CheckpointError(f"{path}: expected tensor {name}, found {lines[pos]!r}")
        shape = tuple(int(n) for n in fields[2:])
        if shape != tensor.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {shape}, want {tensor.shape}")
        count = int(np.prod(shape)) if shape else 1
        values = lines[pos + 1 : pos + 1 + count]
        if len(values) != count:
            raise CheckpointError(f"{path}: tensor {name} is truncated")
        tensor.reshape(-1)[:] = [float(v) for v in values]
        pos += 1 + count
    if pos != len(lines):
        raise CheckpointError(f"{path}: trailing data after last tensor")
    return ac
