"""
Distances and barycenters on Gaussians
======================================

The classifier's two numeric workhorses, on paper-sized examples:

* the Mahalanobis distance of an observation from a Gaussian,
* the 2-Wasserstein distance between Gaussians, and
* the Wasserstein barycenter, which places a new Gaussian exactly
  midway (in the Wasserstein sense) between two others - how the
  exclusion thresholds are built.

Run:  python demos/03_gaussian_distances.py
"""

import numpy as np

from intersect_gp import GaussianDist, mahalanobis, wasserstein, wasserstein_barycenter

# two planar position distributions, e.g. "straight" and "left" at one time
straight = GaussianDist(mean=[0.3, 11.0], cov=np.diag([0.08, 0.9]))
left = GaussianDist(mean=[-3.5, 9.0], cov=np.diag([1.4, 1.1]))

print("Mahalanobis distances of a few observations from 'straight':")
for obs in ([0.3, 11.0], [0.8, 11.0], [-1.8, 10.0]):
    print(f"  x={obs}: D_M = {mahalanobis(obs, straight):.3f}")

print(f"\nWasserstein distance straight <-> left: {wasserstein(straight, left):.3f}")

# the equal-weight barycenter is the Wasserstein midpoint
thr = wasserstein_barycenter([straight, left])
print("\nequal-weight barycenter (the exclusion threshold at this time):")
print(f"  mean = {np.round(thr.mean, 3)}")
print(f"  cov  = {np.round(thr.cov, 3).tolist()}")
print(f"  D_W(thr, straight) = {wasserstein(thr, straight):.6f}")
print(f"  D_W(thr, left)     = {wasserstein(thr, left):.6f}   (equidistant)")

# weights shift the barycenter along the geodesic
for w in (0.25, 0.5, 0.75):
    b = wasserstein_barycenter([straight, left], [1 - w, w])
    print(f"  weight {w:.2f} toward 'left': mean x = {b.mean[0]:+.3f}")
