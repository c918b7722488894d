"""Rule-based orifice localizer: largest uninterrupted rise, preceding minimum.

The prior-art rule, transplanted onto the depth profile: scan for maximal
non-decreasing runs, pick the one with the largest total increase (the climb
out of the narrowing into the wide chamber), and return the local-minimum
index immediately before that run starts.  Plateaus of equal depth do not
break a run; run ties resolve to the latest run.  Only interior indices
count as local minima, so a profile that rises from its very first sample
has no answer and raises.
"""

from __future__ import annotations

import numpy as np

from .centerline import Centerline
from .errors import BadInputError, NoLocalMinimumError

__all__ = ["rule_localize", "maximal_runs", "smooth_profile"]


def smooth_profile(depths: np.ndarray) -> np.ndarray:
    """Width-3 moving average; ends average over the two available samples."""
    d = np.asarray(depths, dtype=np.float64)
    out = d.copy()
    out[1:-1] = (d[:-2] + d[1:-1] + d[2:]) / 3.0
    out[0] = (d[0] + d[1]) / 2.0
    out[-1] = (d[-2] + d[-1]) / 2.0
    return out


def maximal_runs(depths: np.ndarray) -> list[tuple[int, int]]:
    """Maximal non-decreasing runs as inclusive (start, end) index pairs."""
    d = np.asarray(depths, dtype=np.float64)
    runs = []
    start = 0
    for i in range(1, len(d)):
        if d[i] < d[i - 1]:
            runs.append((start, i - 1))
            start = i
    runs.append((start, len(d) - 1))
    return runs


def rule_localize(source, smooth: bool = False) -> int:
    """Index of the local minimum closest before the largest-increase run."""
    depths = source.depths if isinstance(source, Centerline) else source
    depths = np.asarray(depths, dtype=np.float64)
    if depths.ndim != 1 or len(depths) < 3:
        raise BadInputError("rule_localize needs a 1D profile of length >= 3")
    d = smooth_profile(depths) if smooth else depths

    best_span: tuple[int, int] | None = None
    best_rise = -np.inf
    for start, end in maximal_runs(d):
        rise = d[end] - d[start]
        if rise >= best_rise:  # >= : ties go to the latest run
            best_rise = rise
            best_span = (start, end)
    assert best_span is not None
    start = best_span[0]

    for i in range(start, 0, -1):
        if i < len(d) - 1 and d[i] <= d[i - 1] and d[i] <= d[i + 1]:
            return i
    raise NoLocalMinimumError(
        "no local minimum exists at or before the largest rise "
        f"(run starts at index {start})"
    )
