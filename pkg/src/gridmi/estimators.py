"""Pairwise dependence measures.

Pearson correlation, equiquantal-bin mutual information (plug-in, in nats),
the Gaussian MI implied by a correlation, and the Monte Carlo recalibration
map that removes the finite-sample bias of the binned estimator.

Binning is rank-based, so the MI estimate is exactly invariant under
strictly monotone transforms of either series. Single-pair values and the
all-pairs sweeps in the analysis module share the same compiled routines
and agree bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ConfigError, ConsistencyError, DataError, NumericalError

DEFAULT_BINS = 8
DEFAULT_REPLICATES = 1000
# 0.00, 0.05, ..., 0.95
DEFAULT_RHO_GRID = tuple(np.linspace(0.0, 0.95, 20))


@lru_cache(maxsize=8)
def _log_lut(t: int) -> np.ndarray:
    """lut[m] = ln m for m in 1..t; lut[0] unused."""
    lut = np.zeros(t + 1, dtype=np.float64)
    lut[1:] = np.log(np.arange(1, t + 1, dtype=np.float64))
    return lut


def _occupancy(t: int, q: int) -> np.ndarray:
    """Bin occupancy counts for equiquantal labels of a length-t series.

    Identical for every series since labels depend only on ranks 0..t-1.
    """
    return np.bincount((np.arange(t, dtype=np.int64) * q) // t, minlength=q)


@dataclass(frozen=True)
class BinLabels:
    """Equiquantal bin labels of one series. Occupancies differ by <= 1."""

    labels: np.ndarray
    q: int

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels), dtype=np.uint8)
        object.__setattr__(self, "labels", lab)
        if self.q < 2:
            raise ConfigError(f"bin count must be >= 2, got {self.q}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.q):
            raise ConsistencyError("bin labels outside [0, Q)")
        counts = np.bincount(lab, minlength=self.q)
        if counts.max() - counts.min() > 1:
            raise ConsistencyError(
                "bin occupancies differ by more than 1; labels are not equiquantal"
            )

    @property
    def t(self) -> int:
        return int(self.labels.shape[0])


def standardized_rows(values: np.ndarray) -> np.ndarray:
    """(T, N) columns -> (N, T) rows with zero mean and unit L2 norm.

    Shared by the correlation sweep and single-pair extraction so both see
    identical floats.
    """
    values = np.asfortranarray(np.asarray(values, dtype=np.float64))
    mean = values.mean(axis=0)
    dev = values - mean
    norms = np.sqrt((dev * dev).sum(axis=0))
    dead = np.flatnonzero(norms == 0.0)
    if dead.size:
        raise DataError(f"node {dead[0]}: constant series, correlation undefined")
    return (dev / norms).T


def pearson(x, y) -> float:
    """Pearson correlation of two series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ConsistencyError("pearson expects 1-d series")
    if x.shape[0] != y.shape[0]:
        raise ConsistencyError(
            f"length mismatch: {x.shape[0]} vs {y.shape[0]}"
        )
    if x.shape[0] < 2:
        raise DataError("pearson needs at least 2 samples")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("non-finite value in input series")
    z = standardized_rows(np.stack([x, y], axis=1))
    return float(_kernels.corr_pair(z[0], z[1]))


def bin_grid(values: np.ndarray, q: int):
    """Equiquantal labels for every column of a (T, N) matrix.

    Returns (labels, margins): labels is (N, T) uint8 C-contiguous, margins
    is (N, Q) int64. Computed once per grid and shared by all pair sweeps.
    """
    if q < 2:
        raise ConfigError(f"bin count must be >= 2, got {q}")
    if q > 255:
        raise ConfigError(f"bin count above 255 unsupported, got {q}")
    values = np.asarray(values, dtype=np.float64)
    t, n = values.shape
    if t < q:
        raise DataError(f"need at least Q={q} samples, got T={t}")
    order = np.argsort(values, axis=0, kind="stable")
    ranks = np.empty((t, n), dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(t, dtype=np.int64)[:, None], axis=0)
    labels = np.ascontiguousarray(((ranks * q) // t).T).astype(np.uint8)
    margins = np.tile(_occupancy(t, q), (n, 1))
    return labels, margins


def equiquantal_bins(x, q: int = DEFAULT_BINS) -> BinLabels:
    """Rank-based bin labels: sample of ascending rank r gets floor(r*q/t).

    Ties break stably by time index, so labels are deterministic and exactly
    invariant under strictly increasing transforms of x.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConsistencyError("equiquantal_bins expects a 1-d series")
    if not np.isfinite(x).all():
        raise DataError("non-finite value in input series")
    labels, _ = bin_grid(x[:, None], q)
    return BinLabels(labels=labels[0], q=q)


def mutual_information_binned(lx: BinLabels, ly: BinLabels) -> float:
    """Plug-in MI in nats from the Q x Q joint histogram of two label sets.

    Bounded by [0, ln Q]; bitwise symmetric in the arguments.
    """
    if lx.q != ly.q:
        raise ConsistencyError(f"bin count mismatch: {lx.q} vs {ly.q}")
    if lx.t != ly.t:
        raise ConsistencyError(f"length mismatch: {lx.t} vs {ly.t}")
    q, t = lx.q, lx.t
    ma = np.bincount(lx.labels, minlength=q).astype(np.int64)
    mb = np.bincount(ly.labels, minlength=q).astype(np.int64)
    return float(_kernels.mi_pair_nats(lx.labels, ly.labels, ma, mb, q, _log_lut(t)))


def gaussian_mi(rho: float) -> float:
    """MI in nats of a bivariate Gaussian with correlation rho.

    Even in rho, zero at independence, diverges as |rho| -> 1.
    """
    rho = float(rho)
    if not math.isfinite(rho):
        raise NumericalError(f"correlation must be finite, got {rho}")
    if abs(rho) >= 1.0:
        raise NumericalError(f"gaussian MI singular at |rho| >= 1, got {rho}")
    return -0.5 * math.log1p(-(rho * rho))


def extra_normal(mi_data, mi_linear):
    """Information beyond the Gaussian part: plain difference, may be
    negative for finite-sample estimates."""
    a = np.asarray(mi_data, dtype=np.float64)
    b = np.asarray(mi_linear, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("extra_normal requires finite inputs")
    out = a - b
    return float(out) if out.ndim == 0 else out


@dataclass
class CalibrationCurve:
    """Monotone map from raw plug-in MI to bias-corrected MI, keyed to (T, Q).

    Knots come from Monte Carlo means of raw MI on Gaussian pairs with known
    MI. Inputs below the first knot clamp to 0; inputs above the last knot
    extrapolate the final segment.
    """

    n_samples: int
    n_bins: int
    knots: np.ndarray  # (m, 2) columns (raw, true)
    seed: int = 0
    replicates: int = DEFAULT_REPLICATES

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=np.float64).reshape(-1, 2)
        if self.knots.shape[0] < 1:
            raise ConsistencyError("calibration curve needs at least one knot")
        if not np.isfinite(self.knots).all():
            raise ConsistencyError("non-finite calibration knot")
        raw, true = self.knots[:, 0], self.knots[:, 1]
        if np.any(np.diff(raw) <= 0):
            raise ConsistencyError("knot raw values must increase strictly")
        if np.any(np.diff(true) < 0):
            raise ConsistencyError("knot true values must be nondecreasing")
        if true[0] != 0.0:
            raise ConsistencyError(f"first knot must map to 0, got {true[0]}")

    def apply(self, raw_mi):
        """Piecewise-linear calibration; accepts scalars or arrays."""
        raw = np.asarray(raw_mi, dtype=np.float64)
        xs, ys = self.knots[:, 0], self.knots[:, 1]
        out = np.interp(raw, xs, ys)
        if xs.shape[0] >= 2:
            above = raw > xs[-1]
            if np.any(above):
                slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
                out = np.where(above, ys[-1] + (raw - xs[-1]) * slope, out)
        return float(out) if out.ndim == 0 else out

    def to_json(self) -> str:
        doc = {
            "T": self.n_samples,
            "Q": self.n_bins,
            "seed": self.seed,
            "replicates": self.replicates,
            "knots": [[float(r), float(v)] for r, v in self.knots],
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CalibrationCurve":
        doc = json.loads(text)
        try:
            return cls(n_samples=int(doc["T"]), n_bins=int(doc["Q"]),
                       knots=np.asarray(doc["knots"], dtype=np.float64),
                       seed=int(doc["seed"]), replicates=int(doc["replicates"]))
        except KeyError as exc:
            raise ConsistencyError(f"calibration JSON lacks field {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "CalibrationCurve":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _pava_nondecreasing(vals: np.ndarray):
    """Pool adjacent violators; returns (pooled value, start, end) blocks.

    Equal pooled values merge as well, so block means increase strictly.
    """
    blocks = []  # [mean, weight, start, end)
    for idx, v in enumerate(vals):
        blocks.append([float(v), 1, idx, idx + 1])
        while len(blocks) > 1 and blocks[-2][0] >= blocks[-1][0]:
            m2, w2, s2, e2 = blocks.pop()
            m1, w1, s1, e1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, s1, e2])
    return [(m, s, e) for m, _, s, e in blocks]


def _gaussian_pair_sample(rng, rho: float, t: int):
    z = rng.standard_normal((2, t))
    x = z[0]
    y = rho * z[0] + math.sqrt(1.0 - rho * rho) * z[1]
    return x, y


def build_calibration(n_samples: int, n_bins: int = DEFAULT_BINS,
                      rho_grid=None, replicates: int = DEFAULT_REPLICATES,
                      seed: int = 0) -> CalibrationCurve:
    """Build the recalibration curve for series length n_samples and n_bins.

    For each correlation in rho_grid the raw binned MI is averaged over
    `replicates` bivariate Gaussian samples and paired with the closed-form
    Gaussian MI. Knots are monotonized by pooled adjacent violators; pooled
    blocks keep the block's smallest true value, so the first knot still
    maps to 0. Deterministic given the seed.
    """
    if rho_grid is None:
        rho_grid = DEFAULT_RHO_GRID
    rho_grid = np.asarray(rho_grid, dtype=np.float64)
    if replicates < 100:
        raise ConfigError(f"need at least 100 replicates per knot, got {replicates}")
    if rho_grid.ndim != 1 or rho_grid.shape[0] < 1:
        raise ConfigError("rho_grid must be a non-empty 1-d sequence")
    if rho_grid[0] != 0.0:
        raise ConfigError("rho_grid must start at 0")
    if np.any(np.diff(rho_grid) <= 0):
        raise ConfigError("rho_grid must increase strictly")
    if rho_grid[-1] >= 1.0:
        raise ConfigError("rho_grid must stay below 1")
    if n_samples < n_bins:
        raise ConfigError(f"T={n_samples} below Q={n_bins}")
    if not (0 <= int(seed) < 2 ** 64):
        raise ConfigError("seed must fit in 64 bits")

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    lut = _log_lut(n_samples)
    raw_means = np.empty(rho_grid.shape[0])
    for k, rho in enumerate(rho_grid):
        acc = 0.0
        for _ in range(replicates):
            x, y = _gaussian_pair_sample(rng, float(rho), n_samples)
            labels, margins = bin_grid(np.stack([x, y], axis=1), n_bins)
            acc += _kernels.mi_pair_nats(labels[0], labels[1],
                                         margins[0], margins[1], n_bins, lut)
        raw_means[k] = acc / replicates

    true_vals = np.array([gaussian_mi(r) for r in rho_grid])
    knots = [(m, float(true_vals[s])) for m, s, _ in _pava_nondecreasing(raw_means)]
    return CalibrationCurve(n_samples=n_samples, n_bins=n_bins,
                            knots=np.asarray(knots), seed=int(seed),
                            replicates=int(replicates))


def calibrate(raw_mi, curve: CalibrationCurve, n_samples=None, n_bins=None):
    """Apply a calibration curve, optionally checking it matches (T, Q)."""
    if n_samples is not None and curve.n_samples != n_samples:
        raise ConsistencyError(
            f"curve built for T={curve.n_samples}, estimate has T={n_samples}"
        )
    if n_bins is not None and curve.n_bins != n_bins:
        raise ConsistencyError(
            f"curve built for Q={curve.n_bins}, estimate has Q={n_bins}"
        )
    return curve.apply(raw_mi)
