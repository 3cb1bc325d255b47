"""Variance-preserving noise schedule, forward noising and reverse samplers.

Step ``t = 0`` is data and ``t = T`` is noise.  States are batched as arrays
of shape ``(n, d)``; score fields map ``(x, t) -> grad log p_t(x)`` for a whole
batch at one integer step.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from aiglab.errors import NumericalDivergenceError


ORIGINS = ("base", "finetuned", "aig", "data")


class NoiseSchedule:
    """Discrete VP schedule with ``beta`` linear in ``t``.

    ``alpha_bar[0] == 1`` exactly and ``alpha_bar[t] = prod_{s<=t} (1 - beta[s])``
    for ``t >= 1``.  ``drift_coeff`` and ``diffusion_coeff`` are the
    discretised ``f(t) = -beta/2`` and ``g(t) = sqrt(beta)`` of the VP SDE.
    """

    def __init__(self, T=1000, beta_start=1e-4, beta_end=0.02):
        if T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < beta_start <= beta_end < 1:
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        self.T = int(T)
        self.beta_start = float(beta_start)
        self.beta_end = float(beta_end)
        beta = np.zeros(self.T + 1)
        beta[1:] = np.linspace(beta_start, beta_end, self.T)
        self.beta = beta
        self.alpha_bar = np.cumprod(1.0 - beta)
        self.sigma = np.sqrt(1.0 - self.alpha_bar)
        self.sqrt_alpha_bar = np.sqrt(self.alpha_bar)
        self.drift_coeff = -0.5 * beta
        self.diffusion_coeff = np.sqrt(beta)

    def check_step(self, t):
        if not 0 <= t <= self.T or int(t) != t:
            raise ValueError(f"step {t} outside [0, {self.T}]")
        return int(t)

    def strided_steps(self, n_steps):
        """Descending steps ``[T, T - stride, ..., 0]`` (``n_steps + 1`` entries)."""
        if n_steps < 1 or self.T % n_steps:
            raise ValueError(f"n_steps={n_steps} must divide T={self.T}")
        return list(range(self.T, -1, -(self.T // n_steps)))

    def digest(self):
        key = f"vp:{self.T}:{self.beta_start!r}:{self.beta_end!r}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def __repr__(self):
        return f"NoiseSchedule(T={self.T}, beta_start={self.beta_start}, beta_end={self.beta_end})"


class ScoreField:
    """Wraps ``fn(x, t) -> score`` with a flag telling analytic from learned."""

    def __init__(self, fn, analytic=False, name=""):
        self.fn = fn
        self.analytic = analytic
        self.name = name

    def __call__(self, x, t):
        return self.fn(x, t)

    def __repr__(self):
        kind = "analytic" if self.analytic else "network"
        return f"ScoreField({self.name or kind!r})"


def standard_normal_score():
    return ScoreField(lambda x, t: -np.asarray(x, dtype=np.float64), analytic=True, name="N(0,I)")


@dataclass
class SampleSet:
    points: np.ndarray
    origin: str = "data"
    seed: int = 0
    n_steps: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.shape[0] == 0:
            raise ValueError("empty sample set")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}, got {self.origin!r}")

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def save(self, path):
        """Write ``dim_0,...,dim_{d-1}`` CSV plus a ``<path>.meta`` key=value sidecar."""
        path = str(path)
        header = ",".join(f"dim_{j}" for j in range(self.dim))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in self.points:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(path + ".meta", "w") as fh:
            fh.write(f"seed={self.seed}\norigin={self.origin}\nn_steps={self.n_steps}\n")
            for k, v in self.meta.items():
                fh.write(f"{k}={v}\n")

    @classmethod
    def load(cls, path):
        path = str(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if not all(h == f"dim_{j}" for j, h in enumerate(header)):
                raise ValueError(f"{path}: bad header {header}")
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        meta = {}
        try:
            with open(path + ".meta") as fh:
                for line in fh:
                    if "=" in line:
                        k, v = line.rstrip("\n").split("=", 1)
                        meta[k.strip()] = v.strip()
        except FileNotFoundError:
            pass
        seed = int(meta.pop("seed", 0))
        origin = meta.pop("origin", "data")
        n_steps = int(meta.pop("n_steps", 0))
        pts = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
        return cls(pts, origin=origin, seed=seed, n_steps=n_steps, meta=meta)


def forward_diffuse(x0, t, schedule, rng):
    """Draw ``x_t = sqrt(alpha_bar_t) x0 + sigma_t eps``."""
    t = schedule.check_step(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.normal(x0.shape)
    return schedule.sqrt_alpha_bar[t] * x0 + schedule.sigma[t] * eps


def ddim_step(x, eps_hat, t, t_next, schedule):
    """Deterministic DDIM move from step ``t`` to ``t_next`` given predicted noise."""
    x0_hat = (x - schedule.sigma[t] * eps_hat) / schedule.sqrt_alpha_bar[t]
    return schedule.sqrt_alpha_bar[t_next] * x0_hat + schedule.sigma[t_next] * eps_hat


def ddim_step_jacobian_eps(t, t_next, schedule):
    """d x_next / d eps_hat for :func:`ddim_step` (a scalar times identity)."""
    return schedule.sigma[t_next] - schedule.sqrt_alpha_bar[t_next] * schedule.sigma[t] / schedule.sqrt_alpha_bar[t]


def initial_noise(rng, n_samples, dim):
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return rng.normal((int(n_samples), int(dim)))


def reverse_sample(score, schedule, n_steps, rng, n_samples, dim=1, x_T=None, origin="base"):
    """Probability-flow (DDIM, eta=0) sampling from ``x_T ~ N(0, I)``.

    Each step converts the score to predicted noise by ``eps = -sigma_t * score``
    and moves along the deterministic DDIM update.  ``x_T`` overrides the
    initial draw (used to share latents between runs).
    """
    steps = schedule.strided_steps(n_steps)
    x = initial_noise(rng, n_samples, dim) if x_T is None else np.array(x_T, dtype=np.float64)
    for t, t_next in zip(steps[:-1], steps[1:]):
        eps_hat = -schedule.sigma[t] * score(x, t)
        x = ddim_step(x, eps_hat, t, t_next, schedule)
        if not np.all(np.isfinite(x)):
            raise NumericalDivergenceError("non-finite state in reverse_sample", step=t)
    return SampleSet(x, origin=origin, seed=getattr(rng, "seed", 0), n_steps=n_steps)


def langevin_transition(x, from_t, to_t, score, schedule, inner_steps=1, step_scale=1.0, rng=None):
    """Annealed Langevin chain from level ``from_t`` down to ``to_t``.

    At each level ``s = from_t - 1, ..., to_t`` runs ``inner_steps`` updates
    ``x <- x + h * score(x, s) + sqrt(2 h) * eps`` with
    ``h = step_scale * 0.5 * sigma_s**2``.
    """
    from_t = schedule.check_step(from_t)
    to_t = schedule.check_step(to_t)
    if to_t >= from_t:
        raise ValueError("to_t must be smaller than from_t")
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    if step_scale <= 0:
        raise ValueError("step_scale must be positive")
    x = np.array(x, dtype=np.float64)
    for s in range(from_t - 1, to_t - 1, -1):
        h = step_scale * 0.5 * schedule.sigma[s] ** 2
        if h == 0.0:
            continue
        noise_scale = np.sqrt(2.0 * h)
        for _ in range(inner_steps):
            x = x + h * score(x, s) + noise_scale * rng.normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise NumericalDivergenceError("non-finite state in langevin_transition", step=s)
    return x
