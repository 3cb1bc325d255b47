"""Feed-forward noise-prediction network with LoRA deltas and manual backprop.

Layer ``l`` uses the effective weight ``W_l + a * B_l @ A_l`` and bias
``b_l + a * db_l`` where ``a`` is the LoRA scale.  Base tensors are ``W*``/``b*``,
delta tensors are ``A*``/``B*``/``db*``.  With all deltas zero (or ``a = 0``) the
network is the base network exactly.

Input is the state concatenated with a Fourier embedding of ``t / T``
(``sin(k pi t/T), cos(k pi t/T)`` for ``k = 1..F``).  Hidden activations are
SiLU, ``z * sigmoid(z)``, whose derivative is
``sigmoid(z) * (1 + z * (1 - sigmoid(z)))``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from aiglab.diffusion import ScoreField
from aiglab.errors import NumericalDivergenceError
from aiglab.linalg import SeededRng

SIGMA_FLOOR = 1e-4
CHECKPOINT_MAGIC = "aiglab-mlp-v1"


def silu(z):
    return z * expit(z)


def silu_grad(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    steps: int = 20000
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float = 0.1
    seed: int = 0
    adam_eps: float = 1e-8
    lr_decay: str = "constant"  # or "cosine" (anneal to 0 over `steps`)

    def __post_init__(self):
        if self.lr_decay not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_decay {self.lr_decay!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size >= 1 and steps >= 0 required")


class MlpScoreNet:
    """Predicts the noise ``eps`` that produced ``x_t``; score is ``-eps / sigma_t``."""

    def __init__(self, dim, hidden=(64, 64, 64), time_frequencies=8, rank=4, T=1000,
                 seed=0, zero_output=False, lora_scale=1.0):
        self.dim = int(dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.time_frequencies = int(time_frequencies)
        self.rank = int(rank)
        self.T = int(T)
        self.lora_scale = float(lora_scale)
        self.sizes = [self.dim + 2 * self.time_frequencies, *self.hidden, self.dim]
        rng = SeededRng(seed)
        self.params = {}
        for l, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = l == self.n_layers - 1
            w = rng.normal((n_out, n_in)) / np.sqrt(n_in)
            self.params[f"W{l}"] = np.zeros_like(w) if (last and zero_output) else w
            self.params[f"b{l}"] = np.zeros(n_out)
            self.params[f"A{l}"] = rng.normal((self.rank, n_in)) / np.sqrt(n_in)
            self.params[f"B{l}"] = np.zeros((n_out, self.rank))
            self.params[f"db{l}"] = np.zeros(n_out)

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    @staticmethod
    def is_base(name):
        return name[0] in "Wb"

    def names(self, which="all"):
        if which == "all":
            return list(self.params)
        if which == "base":
            return [k for k in self.params if self.is_base(k)]
        if which == "lora":
            return [k for k in self.params if not self.is_base(k)]
        raise ValueError(f"unknown parameter group {which!r}")

    def copy(self):
        other = object.__new__(MlpScoreNet)
        other.__dict__.update(self.__dict__)
        other.sizes = list(self.sizes)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def with_lora_scale(self, alpha_prime):
        other = self.copy()
        other.lora_scale = float(alpha_prime)
        return other

    def base_net(self):
        """The base network alone (deltas zeroed)."""
        other = self.copy()
        for k in other.names("lora"):
            if k[0] != "A":
                other.params[k][...] = 0.0
        return other

    def reset_lora(self, seed=0):
        rng = SeededRng(seed)
        for l, n_in in enumerate(self.sizes[:-1]):
            self.params[f"A{l}"] = rng.normal((self.rank, n_in)) / np.sqrt(n_in)
            self.params[f"B{l}"][...] = 0.0
            self.params[f"db{l}"][...] = 0.0

    def effective(self, l):
        p, a = self.params, self.lora_scale
        w = p[f"W{l}"] + a * (p[f"B{l}"] @ p[f"A{l}"])
        b = p[f"b{l}"] + a * p[f"db{l}"]
        return w, b

    def embed_time(self, t, n):
        tau = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)) / self.T
        k = np.arange(1, self.time_frequencies + 1) * np.pi
        ang = tau[:, None] * k[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def forward(self, x, t, return_cache=False):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        h = np.concatenate([x, self.embed_time(t, x.shape[0])], axis=1)
        inputs, pre = [h], []
        for l in range(self.n_layers):
            w, b = self.effective(l)
            z = h @ w.T + b
            if l < self.n_layers - 1:
                pre.append(z)
                h = silu(z)
                inputs.append(h)
            else:
                h = z
        if return_cache:
            return h, (inputs, pre)
        return h

    __call__ = forward

    def backward(self, cache, upstream, wrt="lora"):
        """Reverse-mode pass for ``sum(upstream * forward(x, t))``.

        Returns ``(grads, dx)``: gradients for the parameter group ``wrt``
        ('lora', 'base' or 'all'; other tensors are absent) and the gradient
        with respect to the state part of the input.
        """
        inputs, pre = cache
        keep = set(self.names(wrt))
        a = self.lora_scale
        p = self.params
        grads = {}
        g = np.asarray(upstream, dtype=np.float64)
        for l in reversed(range(self.n_layers)):
            if l < self.n_layers - 1:
                g = g * silu_grad(pre[l])
            gw = g.T @ inputs[l]
            gb = g.sum(axis=0)
            if f"W{l}" in keep:
                grads[f"W{l}"] = gw
                grads[f"b{l}"] = gb
            if f"A{l}" in keep:
                grads[f"A{l}"] = a * (p[f"B{l}"].T @ gw)
                grads[f"B{l}"] = a * (gw @ p[f"A{l}"].T)
                grads[f"db{l}"] = a * gb
            w, _ = self.effective(l)
            g = g @ w
        return grads, g[:, : self.dim]

    def input_grad(self, x, t, upstream):
        _, cache = self.forward(x, t, return_cache=True)
        return self._dx(cache, upstream)

    def _dx(self, cache, upstream):
        inputs, pre = cache
        g = np.asarray(upstream, dtype=np.float64)
        for l in reversed(range(self.n_layers)):
            if l < self.n_layers - 1:
                g = g * silu_grad(pre[l])
            w, _ = self.effective(l)
            g = g @ w
        return g[:, : self.dim]

    def score_field(self, schedule, sigma_floor=SIGMA_FLOOR, name="net"):
        def fn(x, t):
            return -self.forward(x, t) / max(schedule.sigma[t], sigma_floor)

        return ScoreField(fn, analytic=False, name=name)

    # checkpoint I/O -------------------------------------------------------

    def save(self, path, schedule=None):
        digest = schedule.digest() if schedule is not None else "none"
        with open(path, "w") as fh:
            fh.write(f"format {CHECKPOINT_MAGIC}\n")
            fh.write(f"dim {self.dim}\n")
            fh.write(f"hidden {','.join(map(str, self.hidden))}\n")
            fh.write(f"time_frequencies {self.time_frequencies}\n")
            fh.write(f"T {self.T}\n")
            fh.write(f"rank {self.rank}\n")
            fh.write(f"lora_scale {self.lora_scale!r}\n")
            fh.write(f"schedule_hash {digest}\n")
            for l in range(self.n_layers):
                for key in (f"W{l}", f"b{l}", f"A{l}", f"B{l}", f"db{l}"):
                    arr = np.atleast_2d(self.params[key]) if key[0] in "WAB" else self.params[key][None, :]
                    fh.write(f"tensor {key} {arr.shape[0]} {arr.shape[1]}\n")
                    fh.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")

    @classmethod
    def load(cls, path, schedule=None):
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        head = {}
        i = 0
        while i < len(lines) and not lines[i].startswith("tensor "):
            key, _, value = lines[i].partition(" ")
            head[key] = value
            i += 1
        if head.get("format") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not an {CHECKPOINT_MAGIC} checkpoint")
        if schedule is not None and head["schedule_hash"] not in ("none", schedule.digest()):
            raise ValueError(f"{path}: checkpoint was trained under a different schedule")
        hidden = tuple(int(v) for v in head["hidden"].split(",") if v)
        net = cls(int(head["dim"]), hidden, int(head["time_frequencies"]), int(head["rank"]),
                  int(head["T"]), lora_scale=float(head["lora_scale"]))
        while i < len(lines):
            _, key, rows, cols = lines[i].split()
            vals = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
            shape = (int(rows), int(cols))
            arr = vals.reshape(shape)
            net.params[key] = arr if key[0] in "WAB" else arr[0]
            i += 2
        return net


class Adam:
    """Adam with global-norm gradient clipping, over a dict of named arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, clip=None, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.clip, self.eps = lr, beta1, beta2, clip, eps
        self.m, self.v, self.t = {}, {}, 0

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.clip, cfg.adam_eps)

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        if self.clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > self.clip:
                grads = {k: g * (self.clip / norm) for k, g in grads.items()}
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if lr:
                params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def dsm_batch(data, schedule, rng, batch_size):
    x0 = data.sample(rng, batch_size).points
    t = rng.choice(schedule.T, size=batch_size) + 1
    eps = rng.normal(x0.shape)
    xt = schedule.sqrt_alpha_bar[t, None] * x0 + schedule.sigma[t, None] * eps
    return xt, t, eps


def train_dsm(net, data, schedule, cfg):
    """Denoising score matching on base weights: minimise ``E |eps_hat - eps|^2``.

    Returns a trained copy and the per-step loss trace.
    """
    net = net.copy()
    rng = SeededRng(cfg.seed)
    opt = Adam.from_config(cfg)
    losses = np.empty(cfg.steps)
    for step in range(cfg.steps):
        xt, t, eps = dsm_batch(data, schedule, rng, cfg.batch_size)
        out, cache = net.forward(xt, t, return_cache=True)
        resid = out - eps
        loss = float(np.mean(np.sum(resid**2, axis=1)))
        if not np.isfinite(loss):
            raise NumericalDivergenceError("non-finite DSM loss", step=step)
        losses[step] = loss
        grads, _ = net.backward(cache, 2.0 * resid / cfg.batch_size, wrt="base")
        lr = cfg.lr
        if cfg.lr_decay == "cosine":
            lr = 0.5 * cfg.lr * (1.0 + np.cos(np.pi * step / cfg.steps))
        opt.step(net.params, grads, lr)
    return net, losses
