"""Dense symmetric linear algebra and seeded randomness.

Everything is float64.  Matrices are plain ``numpy.ndarray`` objects; the
eigensolver is a cyclic Jacobi iteration, which is slow asymptotically but
robust and accurate for the small (<= 64) dimensions used here.

Random streams come from numpy's PCG64 bit generator seeded with a 64-bit
integer.  Normal draws use numpy's ziggurat transform
(``Generator.standard_normal``), so a given seed yields the same stream on a
given numpy build.  Parallel workers derive their seed as
``base_seed + worker_index``.
"""

from typing import NamedTuple

import numpy as np

from aiglab.errors import NotPSDError

SYMMETRY_RTOL = 1e-10
PSD_CLAMP = 1e-10
PSD_ERROR = 1e-6


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # sorted descending
    eigenvectors: np.ndarray  # columns are unit eigenvectors

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _check_symmetric(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sym_eigen(a, tol=1e-15, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted in descending order and the matching
    orthonormal eigenvectors as columns.
    """
    a = _check_symmetric(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n > 1:
        fro = np.linalg.norm(a)
        for _ in range(max_sweeps):
            off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
            if off <= tol * fro:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    g = 100.0 * abs(apq)
                    if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                        # negligible next to both diagonal entries
                        a[p, q] = a[q, p] = 0.0
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                    c = 1.0 / np.hypot(t, 1.0)
                    s = t * c
                    # A <- J^T A J with J the (p, q) rotation
                    ap = a[:, p].copy()
                    aq = a[:, q].copy()
                    a[:, p] = c * ap - s * aq
                    a[:, q] = s * ap + c * aq
                    ap = a[p, :].copy()
                    aq = a[q, :].copy()
                    a[p, :] = c * ap - s * aq
                    a[q, :] = s * ap + c * aq
                    a[p, q] = a[q, p] = 0.0
                    vp = v[:, p].copy()
                    vq = v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def sqrtm_psd(a):
    """Symmetric PSD square root via the eigendecomposition.

    Eigenvalues in [-1e-6, 0) are treated as roundoff and clamped to zero;
    anything more negative raises :class:`NotPSDError`.
    """
    w, u = sym_eigen(a)
    scale = max(abs(w[0]), 1.0) if w.size else 1.0
    if w.size and w[-1] < -PSD_ERROR * scale:
        raise NotPSDError(f"smallest eigenvalue {w[-1]:.3e} is below -{PSD_ERROR:g}")
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (u * root) @ u.T
    return 0.5 * (s + s.T)


class SeededRng:
    """Single-owner random stream keyed by a 64-bit seed."""

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(seed))

    def normal(self, size):
        return self.generator.standard_normal(size)

    def uniform(self, size):
        return self.generator.random(size)

    def choice(self, n, size, p=None):
        return self.generator.choice(n, size=size, p=p)

    def derive(self, index):
        """Independent stream for worker/stage ``index``."""
        return SeededRng((self.seed + int(index)) % 2**64)

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


def sample_standard_normal(rng, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.normal(int(n))
