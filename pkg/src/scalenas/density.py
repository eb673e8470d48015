"""Kernel-density mode counting for FLOPs samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks


@dataclass
class ModeReport:
    modes: np.ndarray  # mode locations, in the original (linear) units
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    @property
    def count(self) -> int:
        return len(self.modes)


def kde_modes(
    values,
    bandwidth: float | None = None,
    log: bool = True,
    bins: int = 2048,
    min_prominence: float = 0.05,
) -> ModeReport:
    """Local maxima of a binned Gaussian KDE.

    The density is estimated on ``log(values)`` by default, since FLOPs budgets
    are geometric. The default bandwidth is Silverman's rule. Maxima whose
    prominence is below ``min_prominence`` times the global maximum are
    treated as noise.
    """
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if log:
        x = np.log(x)
    if bandwidth is None:
        sd = x.std()
        iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.349
        spread = min(sd, iqr) if iqr > 0 else sd
        bandwidth = 0.9 * spread * x.size ** (-0.2)
    pad = 4 * bandwidth
    lo, hi = x.min() - pad, x.max() + pad
    hist, edges = np.histogram(x, bins=bins, range=(lo, hi))
    width = edges[1] - edges[0]
    density = gaussian_filter1d(hist.astype(float), bandwidth / width, mode="constant")
    density /= density.sum() * width
    centers = 0.5 * (edges[1:] + edges[:-1])
    peaks, _ = find_peaks(density, prominence=min_prominence * density.max())
    modes = centers[peaks]
    grid = centers
    if log:
        modes, grid = np.exp(modes), np.exp(grid)
    return ModeReport(modes, grid, density, float(bandwidth))
