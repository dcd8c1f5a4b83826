"""
Summary statistics for experiment tables.
"""

import math
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

def mean_confidence_interval(samples: Sequence[float], confidence: float = 0.95) -> Tuple[float, float]:
    """
    Mean and half-width of a t-distribution confidence interval.

    Args:
        samples: Observations (one per run or instance)
        confidence: Two-sided confidence level

    Returns:
        (mean, half_width); the half-width is 0.0 for fewer than two samples
        and NaN-free for constant samples
    """
    values = np.asarray(list(samples), dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")

    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0

    sem = float(values.std(ddof=1)) / math.sqrt(values.size)
    half_width = float(stats.t.ppf(0.5 + confidence / 2.0, df=values.size - 1)) * sem
    return mean, half_width


def format_interval(mean: float, half_width: float, digits: int = 2) -> str:
    """Render ``mean ± half_width`` the way the result tables print it."""
    if math.isnan(mean):
        return "n/a"
    return f"{mean:.{digits}f} ± {half_width:.{digits}f}"
