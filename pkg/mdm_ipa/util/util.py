"""
Provides general utility functions.
"""

from itertools import combinations

import numpy as np
from joblib import Parallel, delayed

import mdm_ipa

__all__ = [
    "mask_to_parents",
    "parents_to_mask",
    "popcount",
    "subsets_of_size",
    "parallel_map",
    "delta_grid",
]


def parents_to_mask(parents) -> int:
    """Return the bitmask of a collection of 0-based node indices.

    >>> parents_to_mask([0, 2])
    5
    """
    mask = 0
    for this_parent in parents:
        mask |= 1 << int(this_parent)
    return mask


def mask_to_parents(mask: int) -> tuple:
    """Return the sorted 0-based node indices set in a bitmask.

    >>> mask_to_parents(5)
    (0, 2)
    """
    mask = int(mask)
    result = []
    i = 0
    while mask:
        if mask & 1:
            result.append(i)
        mask >>= 1
        i += 1
    return tuple(result)


def popcount(mask):
    """Return the number of set bits of a mask, elementwise for arrays.

    >>> popcount(10)
    2
    >>> popcount(np.arange(4)).tolist()
    [0, 1, 1, 2]
    """
    if np.ndim(mask) == 0:
        return int(np.bitwise_count(np.int64(mask)))
    return np.bitwise_count(np.asarray(mask, dtype=np.int64)).astype(np.int64)


def subsets_of_size(candidates, size: int) -> list:
    """Return every ``size``-subset of ``candidates`` as a bitmask, in
    lexicographic order of the sorted candidates."""
    return [parents_to_mask(these) for these in combinations(sorted(candidates), size)]


def delta_grid(start: float, end: float, step: float) -> np.ndarray:
    """Return the discount factor grid from ``start`` to ``end`` inclusive.

    >>> delta_grid(0.5, 1.0, 0.25)
    array([0.5 , 0.75, 1.  ])
    """
    if step <= 0:
        raise ValueError(f"Grid step must be positive, got {step}.")
    if not (0 < start <= end <= 1):
        raise ValueError(f"Grid must lie within (0, 1], got [{start}, {end}].")
    num = int(np.floor((end - start) / step + 1e-9)) + 1
    return np.round(np.linspace(start, start + (num - 1) * step, num), 12)


def parallel_map(func, items, n_jobs: int = None) -> list:
    """Apply ``func`` to every item, in parallel when more than one worker is
    configured. The output order always matches the input order."""
    items = list(items)
    if n_jobs is None:
        n_jobs = mdm_ipa.num_workers()
    if n_jobs == 1 or len(items) <= 1:
        return [func(this_item) for this_item in items]
    return Parallel(n_jobs=n_jobs)(delayed(func)(this_item) for this_item in items)
