"""Exactly rounded reductions.

Every floating-point reduction in the package goes through :func:`math.fsum`,
which returns the correctly rounded sum of its inputs. Results are therefore
independent of element order and of how work is split between workers.
"""

import math

import numpy as np


def fsum(values):
    """Correctly rounded sum of a 1-D float array."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0.0
    return math.fsum(arr.tolist())


def grouped_fsum(values, group_index, n_groups):
    """Correctly rounded per-group sums.

    ``group_index`` holds integers in ``[0, n_groups)``.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    group_index = np.asarray(group_index).ravel()
    order = np.argsort(group_index, kind="stable")
    counts = np.bincount(group_index, minlength=n_groups)
    chunks = np.split(values[order], np.cumsum(counts)[:-1])
    return np.array([math.fsum(c.tolist()) for c in chunks], dtype=np.float64)
