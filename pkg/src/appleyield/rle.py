"""Run-length encoding of binary masks for wire transfer and JSON files.

Row-major scan; counts alternate background/foreground and start with a
(possibly zero-length) background run.
"""

import numpy as np

from .errors import ValidationError
from .imaging import BinaryMask


def encode(mask: BinaryMask) -> dict:
    flat = mask.bits.ravel()
    if flat.size == 0:
        return {"size": [mask.height, mask.width], "counts": []}
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": [mask.height, mask.width], "counts": counts}


def decode(rle: dict) -> BinaryMask:
    h, w = rle["size"]
    counts = rle["counts"]
    total = sum(counts)
    if total != h * w and not (total == 0 and h * w == 0):
        raise ValidationError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return BinaryMask(flat.reshape(h, w))
