"""Synthetic grids with known dependence structure.

Gaussian null models (iid or AR(1) in time, optional spatially decaying
covariance) plus the confound injections used to reproduce the two spurious
nonlinearity mechanisms: seasonally modulated variance and common linear
trends. quadratic_couple provides the canonical genuinely nonlinear
alternative (strong MI, near-zero correlation).

All generators are deterministic given (spec, seed); seeds are consumed as
Philox keys like everywhere else in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .grid_io import TimeSeriesGrid, make_grid

SYNTH_KINDS = ("gaussian_iid", "gaussian_ar1", "quadratic_coupled",
               "seasonal_variance", "trended")

# pinned confound magnitudes: extreme-phase variance ratio of the seasonal
# profile, and total trend rise over the record in units of the noise std
VARIANCE_RATIO = 3.0
TREND_SIGMAS = 2.0


def _rng(seed: int) -> np.random.Generator:
    if not (0 <= int(seed) < 2 ** 64):
        raise ConfigError(f"seed must fit in 64 bits, got {seed}")
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _mesh_coords(n: int):
    """Synthetic lat/lon on a square-ish mesh, poles avoided."""
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    lats, lons = [], []
    for idx in range(n):
        r, c = divmod(idx, cols)
        lats.append(-85.0 + 170.0 * r / max(rows - 1, 1))
        lons.append(360.0 * c / cols)
    return lats, lons, cols


def gen_gaussian_pair(rho: float, t: int, seed: int):
    """Bivariate normal pair: unit variances, correlation rho, iid in time."""
    rho = float(rho)
    if not (abs(rho) < 1.0):
        raise ConfigError(f"|rho| must be < 1, got {rho}")
    z = _rng(seed).standard_normal((2, t))
    return z[0], rho * z[0] + math.sqrt(1.0 - rho * rho) * z[1]


def gen_gaussian_grid(n_nodes: int, n_times: int, cov_profile: str = "identity",
                      length_scale: float | None = None, ar: float = 0.0,
                      seed: int = 0, period: int = 12,
                      label: str = "synthetic-gaussian") -> TimeSeriesGrid:
    """Gaussian grid with optional spatial covariance and AR(1) memory.

    spatial_decay uses cov(i, j) = exp(-d_ij / length_scale) with d the
    Euclidean distance in mesh steps on the synthetic lat/lon mesh. The
    AR(1) recursion starts at stationarity, so every node is unit variance.
    """
    if not (abs(float(ar)) < 1.0):
        raise ConfigError(f"|ar| must be < 1, got {ar}")
    rng = _rng(seed)
    eta = rng.standard_normal((n_times, n_nodes))
    lats, lons, cols = _mesh_coords(n_nodes)
    if cov_profile == "spatial_decay":
        if length_scale is None or not (length_scale > 0):
            raise ConfigError("spatial_decay needs length_scale > 0")
        pos = np.array([divmod(idx, cols) for idx in range(n_nodes)], dtype=np.float64)
        dist = np.hypot(pos[:, 0][:, None] - pos[:, 0], pos[:, 1][:, None] - pos[:, 1])
        cov = np.exp(-dist / float(length_scale))
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ConfigError(f"requested covariance not positive definite: {exc}") from exc
        eta = eta @ chol.T
    elif cov_profile != "identity":
        raise ConfigError(f"unknown covariance profile '{cov_profile}'")
    ar = float(ar)
    if ar != 0.0:
        damp = math.sqrt(1.0 - ar * ar)
        x = np.empty_like(eta)
        x[0] = eta[0]
        for t in range(1, n_times):
            x[t] = ar * x[t - 1] + damp * eta[t]
    else:
        x = eta
    return make_grid(x, lats, lons, period=period, label=label)


def seasonal_variance_profile(period: int = 12, ratio: float = VARIANCE_RATIO):
    """Block std profile: variance `ratio` for the first half-cycle, 1 after.

    Extreme-phase variance ratio is exactly `ratio`; anti-phase pairs come
    from phase_offset = period // 2.
    """
    if not (ratio > 0):
        raise ConfigError(f"variance ratio must be positive, got {ratio}")
    prof = np.ones(period, dtype=np.float64)
    prof[: period // 2] = math.sqrt(ratio)
    return prof


def apply_seasonal_variance(series, profile, phase_offset: int = 0):
    """Multiply sample t by profile[(t + phase_offset) mod len(profile)]."""
    series = np.asarray(series, dtype=np.float64)
    profile = np.asarray(profile, dtype=np.float64)
    if profile.ndim != 1 or profile.shape[0] < 1:
        raise ConfigError("profile must be a non-empty 1-d sequence")
    if np.any(profile <= 0):
        raise ConfigError("profile factors must be strictly positive")
    t = series.shape[0]
    idx = (np.arange(t) + int(phase_offset)) % profile.shape[0]
    return series * profile[idx]


def apply_trend(series, slope: float):
    """Add slope * t."""
    series = np.asarray(series, dtype=np.float64)
    return series + float(slope) * np.arange(series.shape[0])


def _quadratic_from(x: np.ndarray, noise_scale: float, rng) -> np.ndarray:
    sq = x * x
    spread = sq.std(ddof=1)
    if spread == 0.0:
        raise DataError("quadratic coupling undefined for constant |x|")
    y = (sq - sq.mean()) / spread
    if noise_scale > 0:
        y = y + noise_scale * rng.standard_normal(x.shape[0])
    return y


def quadratic_couple(x, noise_scale: float = 0.2, seed: int = 0):
    """y = standardized(x^2) + noise_scale * N(0,1).

    For x symmetric about 0 the population correlation r(x, y) vanishes
    while the dependence is strong, the regime where MI sees what
    correlation misses.
    """
    if noise_scale < 0:
        raise ConfigError(f"noise_scale must be >= 0, got {noise_scale}")
    x = np.asarray(x, dtype=np.float64)
    return _quadratic_from(x, float(noise_scale), _rng(seed))


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic grid; accepted as JSON by the CLI."""

    kind: str
    n_times: int
    n_nodes: int
    seed: int = 0
    period: int = 12
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ConfigError(
                f"unknown synth kind '{self.kind}' (choose from {', '.join(SYNTH_KINDS)})"
            )


def make_grid_from_spec(spec: SynthSpec) -> TimeSeriesGrid:
    """Instantiate a SynthSpec. Parameter ranges are validated per kind."""
    p = dict(spec.params)
    t, n = spec.n_times, spec.n_nodes
    label = f"synth-{spec.kind}"

    if spec.kind == "gaussian_iid":
        return gen_gaussian_grid(n, t, seed=spec.seed, period=spec.period, label=label)

    if spec.kind == "gaussian_ar1":
        return gen_gaussian_grid(
            n, t,
            cov_profile=p.get("cov_profile", "identity"),
            length_scale=p.get("length_scale"),
            ar=p.get("ar", 0.5),
            seed=spec.seed, period=spec.period, label=label,
        )

    if spec.kind == "quadratic_coupled":
        if n % 2 != 0:
            raise ConfigError("quadratic_coupled needs an even node count")
        noise = float(p.get("noise_scale", 0.2))
        if noise < 0:
            raise ConfigError(f"noise_scale must be >= 0, got {noise}")
        rng = _rng(spec.seed)
        vals = np.empty((t, n), dtype=np.float64)
        for m in range(n // 2):
            x = rng.standard_normal(t)
            vals[:, 2 * m] = x
            vals[:, 2 * m + 1] = _quadratic_from(x, noise, rng)
        lats, lons, _ = _mesh_coords(n)
        return make_grid(vals, lats, lons, period=spec.period, label=label)

    if spec.kind == "seasonal_variance":
        ratio = float(p.get("ratio", VARIANCE_RATIO))
        profile = np.asarray(p["profile"], dtype=np.float64) if "profile" in p \
            else seasonal_variance_profile(spec.period, ratio)
        rng = _rng(spec.seed)
        vals = np.empty((t, n), dtype=np.float64)
        # neighbors alternate anti-phase offsets, so consecutive pairs carry
        # the full confound
        for i in range(n):
            offset = 0 if i % 2 == 0 else spec.period // 2
            vals[:, i] = apply_seasonal_variance(rng.standard_normal(t), profile, offset)
        lats, lons, _ = _mesh_coords(n)
        return make_grid(vals, lats, lons, period=spec.period, label=label)

    if spec.kind == "trended":
        sigmas = float(p.get("sigmas", TREND_SIGMAS))
        slope = sigmas / (t - 1)
        rng = _rng(spec.seed)
        vals = np.empty((t, n), dtype=np.float64)
        for i in range(n):
            vals[:, i] = apply_trend(rng.standard_normal(t), slope)
        lats, lons, _ = _mesh_coords(n)
        return make_grid(vals, lats, lons, period=spec.period, label=label)

    raise ConfigError(f"unhandled synth kind '{spec.kind}'")
