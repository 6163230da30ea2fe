# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop of the superpixel assignment step.

Semantics must stay identical to the numpy fallback in ``_assign_np``;
the benchmark in benchmarks/bench_slic.py compares both.
"""

import numpy as np

cimport numpy as cnp


def assign_step(
    cnp.float64_t[:, :, ::1] lab,
    cnp.float64_t[:, ::1] centers,
    double window,
    double spatial_weight,
    cnp.int32_t[:, ::1] labels,
    cnp.float64_t[:, ::1] dists,
):
    """One assignment sweep: for every center, scan a 2*window box and
    claim pixels whose weighted 5-D distance improves on the current best.

    centers rows are (L, a, b, x, y); spatial_weight is (m / S)^2.
    """
    cdef Py_ssize_t h = lab.shape[0]
    cdef Py_ssize_t w = lab.shape[1]
    cdef Py_ssize_t k = centers.shape[0]
    cdef Py_ssize_t ci, y, x, y0, y1, x0, x1
    cdef double cl, ca, cb, cx, cy, dl, da, db, dx, dy, d

    dists[:, :] = np.inf
    labels[:, :] = -1

    for ci in range(k):
        cl = centers[ci, 0]
        ca = centers[ci, 1]
        cb = centers[ci, 2]
        cx = centers[ci, 3]
        cy = centers[ci, 4]
        y0 = <Py_ssize_t> max(0.0, cy - window)
        y1 = <Py_ssize_t> min(<double> h, cy + window + 1.0)
        x0 = <Py_ssize_t> max(0.0, cx - window)
        x1 = <Py_ssize_t> min(<double> w, cx + window + 1.0)
        for y in range(y0, y1):
            dy = y - cy
            for x in range(x0, x1):
                dl = lab[y, x, 0] - cl
                da = lab[y, x, 1] - ca
                db = lab[y, x, 2] - cb
                dx = x - cx
                d = dl * dl + da * da + db * db + spatial_weight * (dx * dx + dy * dy)
                if d < dists[y, x]:
                    dists[y, x] = d
                    labels[y, x] = <cnp.int32_t> ci
