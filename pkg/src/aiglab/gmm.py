"""Isotropic Gaussian mixtures with closed-form diffused densities and scores.

Forward-diffusing ``sum_i w_i N(mu_i, s_i^2 I)`` to step ``t`` gives another
mixture, ``sum_i w_i N(sqrt(abar_t) mu_i, (abar_t s_i^2 + sigma_t^2) I)``, so
``q_t`` and its score are available exactly at every ``t``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from aiglab.diffusion import SampleSet, ScoreField


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


@dataclass(frozen=True)
class GmmDistribution:
    weights: np.ndarray
    means: np.ndarray  # (k, d)
    stddevs: np.ndarray  # (k,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        s = np.broadcast_to(np.asarray(self.stddevs, dtype=np.float64), w.shape).copy()
        if mu.shape[0] != w.size:
            raise ValueError("one mean per weight required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(s < 0):
            raise ValueError("stddevs must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stddevs", s)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_modes(self):
        return self.weights.size

    @classmethod
    def from_config(cls, cfg, prefix="gmm."):
        """Build from ``key = value`` entries: ``weights``, ``means`` (flattened,
        row per mode), ``stddevs`` (one value broadcasts) and optional ``dim``."""
        w = _floats(cfg[prefix + "weights"])
        mu = _floats(cfg[prefix + "means"])
        d = int(cfg.get(prefix + "dim", len(mu) // len(w)))
        if len(mu) != d * len(w):
            raise ValueError(f"{prefix}means needs {d * len(w)} values, got {len(mu)}")
        s = _floats(cfg[prefix + "stddevs"])
        if len(s) == 1:
            s = s * len(w)
        return cls(np.array(w), np.array(mu).reshape(len(w), d), np.array(s))

    def to_config(self, prefix="gmm."):
        return {
            prefix + "dim": str(self.dim),
            prefix + "weights": ",".join(repr(float(v)) for v in self.weights),
            prefix + "means": ",".join(repr(float(v)) for v in self.means.ravel()),
            prefix + "stddevs": ",".join(repr(float(v)) for v in self.stddevs),
        }

    def sample(self, rng, n, return_modes=False):
        if n < 1:
            raise ValueError("n must be >= 1")
        modes = rng.choice(self.n_modes, size=int(n), p=self.weights)
        x = self.means[modes] + self.stddevs[modes, None] * rng.normal((int(n), self.dim))
        ss = SampleSet(x, origin="data", seed=rng.seed)
        return (ss, modes) if return_modes else ss

    def diffused(self, t, schedule):
        """Means and per-mode variances of ``q_t``."""
        t = schedule.check_step(t)
        a = schedule.alpha_bar[t]
        return np.sqrt(a) * self.means, a * self.stddevs**2 + schedule.sigma[t] ** 2

    def _log_components(self, x, t, schedule):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        mu_t, var_t = self.diffused(t, schedule)
        if np.any(var_t <= 0):
            raise ValueError("degenerate mode (zero stddev) has no density at t=0")
        diff = x[:, None, :] - mu_t[None, :, :]  # (n, k, d)
        sq = np.sum(diff**2, axis=-1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        logc = logw - 0.5 * sq / var_t - 0.5 * self.dim * np.log(2 * np.pi * var_t)
        return logc, diff, var_t

    def log_density(self, x, t, schedule):
        logc, _, _ = self._log_components(x, t, schedule)
        return logsumexp(logc, axis=1)

    def responsibilities(self, x, t, schedule):
        logc, _, _ = self._log_components(x, t, schedule)
        return np.exp(logc - logsumexp(logc, axis=1, keepdims=True))

    def perturbed_score(self, x, t, schedule):
        """Exact ``grad_x log q_t(x)`` via log-sum-exp responsibilities."""
        logc, diff, var_t = self._log_components(x, t, schedule)
        r = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))
        return -np.einsum("nk,nkd->nd", r / var_t, diff)

    def score_field(self, schedule):
        return ScoreField(lambda x, t: self.perturbed_score(x, t, schedule), analytic=True, name="gmm")

    def mean_mode_distance(self, t, schedule):
        """Average pairwise distance between the diffused means (``i != j``)."""
        if self.n_modes < 2:
            raise ValueError("need at least two modes")
        mu_t, _ = self.diffused(t, schedule)
        d = np.sqrt(np.sum((mu_t[:, None, :] - mu_t[None, :, :]) ** 2, axis=-1))
        k = self.n_modes
        return d.sum() / (k * (k - 1))


def toy_gmm_1d():
    """Two equal modes at -1 and +1, each with variance 0.05."""
    return GmmDistribution(np.array([0.5, 0.5]), np.array([[1.0], [-1.0]]), np.full(2, np.sqrt(0.05)))
