"""
FID vs spectral covariance distance
===================================

FID compares means and covariances, so a rotated and shifted copy of a
distribution looks worse than a shrunken one sitting on the same mean.  The
spectral distances only look at the sorted covariance eigenvalues, i.e. at
spread, and rank the two the other way round.
"""

import numpy as np

from aiglab.metrics import fid, lscd, scd

rng = np.random.default_rng(0)
d1 = rng.normal(size=(5000, 2)) * np.array([2.0, 1.0])
d2 = 0.5 * d1                                    # same centre, tighter
angle = np.pi / 3
rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
d3 = d1 @ rot.T + np.array([1.5, -1.0])          # same spread, moved

for name, d in (("tighter", d2), ("rotated+shifted", d3)):
    print(f"{name:>16}:  FID {fid(d1, d):6.3f}   SCD {scd(d1, d):6.3f}   LSCD {lscd(d1, d):6.3f}")
