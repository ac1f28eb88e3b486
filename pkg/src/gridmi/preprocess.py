"""Grid-to-grid preprocessing transforms.

Four pure transforms: anomaly computation (per calendar phase mean removal),
marginal Gaussianization (normal scores), seasonal variance normalization,
and linear detrending. Each returns a new grid and preserves the Fortran
column layout so downstream per-node slicing stays contiguous.

Standard deviations use the sample convention (ddof=1) throughout.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DataError
from .grid_io import TimeSeriesGrid

STAGES = ("anomaly", "gaussianize", "varnorm", "detrend")


def remove_annual_cycle(grid: TimeSeriesGrid) -> TimeSeriesGrid:
    """Subtract each node's mean over every calendar phase (anomaly series)."""
    out = np.asfortranarray(grid.values.copy())
    phases = grid.phases()
    for p in range(grid.period):
        sel = phases == p
        cnt = int(sel.sum())
        if cnt < 2:
            raise DataError(f"phase {p + 1}: only {cnt} samples, need at least 2")
        out[sel] -= out[sel].mean(axis=0)
    return replace(grid, values=out)


def _ranks_stable(x: np.ndarray) -> np.ndarray:
    """Ascending 0-based ranks, ties broken by time index."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.int64)
    ranks[order] = np.arange(x.shape[0])
    return ranks


def marginal_gaussianize(grid: TimeSeriesGrid) -> TimeSeriesGrid:
    """Replace each node series by normal scores.

    The value of ascending rank r (0-based, ties broken by time index) maps
    to ndtri((r + 0.5) / T). Rank order, and therefore every rank-based MI
    estimate, is preserved exactly.
    """
    t, n = grid.values.shape
    out = np.empty((t, n), dtype=np.float64, order="F")
    for i in range(n):
        col = grid.values[:, i]
        _, counts = np.unique(col, return_counts=True)
        worst = int(counts.max())
        if worst > t // 2:
            what = "constant" if worst == t else "tie-degenerate"
            raise DataError(
                f"node {i}: {what} series ({worst} of {t} samples share one value)"
            )
        out[:, i] = ndtri((_ranks_stable(col) + 0.5) / t)
    return replace(grid, values=out)


def normalize_seasonal_variance(grid: TimeSeriesGrid) -> TimeSeriesGrid:
    """Divide each node's values by that calendar phase's sample std.

    Input should already be anomaly data. Output per-phase stds are 1.
    """
    out = np.asfortranarray(grid.values.copy())
    phases = grid.phases()
    for p in range(grid.period):
        sel = phases == p
        if int(sel.sum()) < 2:
            raise DataError(f"phase {p + 1}: fewer than 2 samples")
        std = out[sel].std(axis=0, ddof=1)
        dead = np.flatnonzero(std == 0.0)
        if dead.size:
            raise DataError(
                f"node {dead[0]}: zero variance in calendar phase {p + 1}"
            )
        out[sel] /= std
    return replace(grid, values=out)


def detrend_linear(grid: TimeSeriesGrid) -> TimeSeriesGrid:
    """Subtract each node's OLS line over t = 0..T-1."""
    t = grid.n_times
    if t < 3:
        raise DataError(f"detrend needs T >= 3, got {t}")
    tt = np.arange(t, dtype=np.float64)
    tc = tt - tt.mean()
    denom = float(tc @ tc)
    slope = (tc @ grid.values) / denom
    mean = grid.values.mean(axis=0)
    fitted = np.outer(tc, slope) + mean
    return replace(grid, values=np.asfortranarray(grid.values - fitted))


_STAGE_FUNCS = {
    "anomaly": remove_annual_cycle,
    "gaussianize": marginal_gaussianize,
    "varnorm": normalize_seasonal_variance,
    "detrend": detrend_linear,
}


def apply_stages(grid: TimeSeriesGrid, stages) -> TimeSeriesGrid:
    """Run the named stages in the given order, each at most once.

    Canonical full ladder: anomaly, gaussianize, varnorm, detrend.
    """
    seen = set()
    for name in stages:
        if name not in _STAGE_FUNCS:
            raise ConfigError(
                f"unknown preprocessing stage '{name}' (choose from {', '.join(STAGES)})"
            )
        if name in seen:
            raise ConfigError(f"preprocessing stage '{name}' given twice")
        seen.add(name)
        grid = _STAGE_FUNCS[name](grid)
    return grid
