"""Coverage metrics between two feature sets, and reward/diversity Pareto fronts.

Features are the raw sample coordinates (identity feature map), shape
``(n, d)``.  Covariances use the unbiased ``n - 1`` estimator; spectra are
compared in descending order.
"""

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from aiglab.linalg import sqrtm_psd, sym_eigen

LSCD_FLOOR = 1e-12


def as_features(x):
    x = getattr(x, "points", x)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("feature set must be a nonempty (n, d) array")
    if x.shape[0] < x.shape[1] + 1:
        warnings.warn(f"{x.shape[0]} samples cannot give a full-rank {x.shape[1]}-dim covariance")
    return x


def _pair(d1, d2):
    a, b = as_features(d1), as_features(d2)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def mean_cov(x):
    mu = x.mean(axis=0)
    c = x - mu
    denom = max(x.shape[0] - 1, 1)
    return mu, (c.T @ c) / denom


def frechet_distance(mu1, cov1, mu2, cov2):
    """``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2})``.

    ``tr (S1 S2)^{1/2}`` is taken as ``tr sqrt(sqrt(S1) S2 sqrt(S1))``, which has
    the same eigenvalues but stays symmetric.
    """
    r1 = sqrtm_psd(cov1)
    inner = r1 @ cov2 @ r1
    w = sym_eigen(0.5 * (inner + inner.T)).eigenvalues
    tr_cross = np.sum(np.sqrt(np.clip(w, 0.0, None)))
    diff = np.asarray(mu1) - np.asarray(mu2)
    return float(max(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_cross, 0.0))


def fid(d1, d2):
    a, b = _pair(d1, d2)
    return frechet_distance(*mean_cov(a), *mean_cov(b))


def pairwise_distances(a, b, chunk=512):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(0, a.shape[0], chunk):
        diff = a[i : i + chunk, None, :] - b[None, :, :]
        out[i : i + chunk] = np.sqrt(np.sum(diff * diff, axis=-1))
    return out


def knn_radii(x, k):
    """Distance from each point to its k-th nearest neighbour (self excluded)."""
    d = pairwise_distances(x, x)
    return np.partition(d, k, axis=1)[:, k]


def generalized_recall(reference, generated, k=10):
    """Fraction of ``reference`` points inside the k-NN ball manifold of ``generated``."""
    ref, gen = _pair(reference, generated)
    if k < 1 or gen.shape[0] <= k or ref.shape[0] <= k:
        raise ValueError(f"need more than k={k} points in both sets")
    radii = knn_radii(gen, k)
    d = pairwise_distances(ref, gen)
    return float(np.mean(np.any(d <= radii[None, :], axis=1)))


def spectrum(x):
    return sym_eigen(mean_cov(x)[1]).eigenvalues


def scd(d1, d2):
    """Sum of squared differences of the sorted covariance eigenvalues."""
    a, b = _pair(d1, d2)
    return float(np.sum((spectrum(a) - spectrum(b)) ** 2))


def _floored_log(w):
    top = max(w[0], np.finfo(np.float64).tiny)
    return np.log(np.maximum(w, LSCD_FLOOR * top))


def lscd(d1, d2):
    """Sum of squared differences of the sorted log-eigenvalues.

    Eigenvalues are floored at ``1e-12 * max eigenvalue`` of their own spectrum.
    """
    a, b = _pair(d1, d2)
    return float(np.sum((_floored_log(spectrum(a)) - _floored_log(spectrum(b))) ** 2))


@dataclass
class CoverageReport:
    label: str
    mean_reward: float
    fid: float
    recall: float
    scd: float
    lscd: float

    def __post_init__(self):
        vals = [self.mean_reward, self.fid, self.recall, self.scd, self.lscd]
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite metric in report {self.label!r}")

    def as_dict(self):
        return asdict(self)


def coverage_report(label, reference, generated, reward=None, k=10):
    ref, gen = _pair(reference, generated)
    mean_reward = float(np.mean(reward(gen))) if reward is not None else 0.0
    return CoverageReport(label, mean_reward, fid(ref, gen), generalized_recall(ref, gen, k),
                          scd(ref, gen), lscd(ref, gen))


def dominates(a, b):
    """``a`` dominates ``b`` for points ``(reward, cost)``: reward up, cost down."""
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


def pareto_mask(points):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    r, c = pts[:, 0], pts[:, 1]
    ge = (r[:, None] >= r[None, :]) & (c[:, None] <= c[None, :])
    strict = (r[:, None] > r[None, :]) | (c[:, None] < c[None, :])
    dominated = np.any(ge & strict, axis=0)
    return ~dominated


def pareto_front(points):
    """Non-dominated ``(reward, diversity_cost)`` points, by reward descending."""
    if len(points) == 0:
        raise ValueError("no points")
    pts = [tuple(map(float, p)) for p in points]
    keep = pareto_mask(pts)
    front = [p for p, k in zip(pts, keep) if k]
    return sorted(front, key=lambda p: -p[0])
