"""Pure-numpy fallback for the superpixel assignment step.

Used when the compiled extension is unavailable; must produce the exact
same labels as ``_assign_cy.assign_step``.
"""

import numpy as np


def assign_step(lab, centers, window, spatial_weight, labels, dists):
    h, w = lab.shape[:2]
    dists[:, :] = np.inf
    labels[:, :] = -1
    for ci in range(centers.shape[0]):
        cl, ca, cb, cx, cy = centers[ci]
        y0 = int(max(0.0, cy - window))
        y1 = int(min(float(h), cy + window + 1.0))
        x0 = int(max(0.0, cx - window))
        x1 = int(min(float(w), cx + window + 1.0))
        if y1 <= y0 or x1 <= x0:
            continue
        patch = lab[y0:y1, x0:x1]
        dc = patch - np.array([cl, ca, cb])
        ys, xs = np.mgrid[y0:y1, x0:x1]
        d = (dc**2).sum(axis=2) + spatial_weight * ((xs - cx) ** 2 + (ys - cy) ** 2)
        better = d < dists[y0:y1, x0:x1]
        dists[y0:y1, x0:x1][better] = d[better]
        labels[y0:y1, x0:x1][better] = ci
