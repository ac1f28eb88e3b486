"""All-pairs dependence analysis.

Computes condensed pair matrices (correlation, calibrated MI) over a grid,
streams a surrogate ensemble to get per-pair surrogate means and exceedance
counts, thresholds them into a significance map, and reduces matrices to
node-level fields. Matrices store float32 in the upper-triangle condensed
layout; all accumulation runs in float64.

The surrogate loop is sequential over indices (parallelism lives inside
each pair sweep), so every statistic is reproducible bit for bit regardless
of worker count.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ConsistencyError, DataError, FormatError
from .estimators import CalibrationCurve, _log_lut, bin_grid, gaussian_mi, standardized_rows
from .grid_io import NodeField, NodeMeta, TimeSeriesGrid
from .surrogates import SurrogateSpec, generate_ensemble

MATRIX_KINDS = ("correlation", "mi_raw", "mi_calibrated", "mi_surr_mean",
                "exceed_count", "significant")
_KIND_CODE = {k: c for c, k in enumerate(MATRIX_KINDS, start=1)}
_CODE_KIND = {c: k for k, c in _KIND_CODE.items()}
_INT_KINDS = ("exceed_count", "significant")
_PMAT_MAGIC = b"PMAT"
_PMAT_VERSION = 1


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def condensed_index(n: int, i: int, j: int) -> int:
    """Slot of pair (i, j) in the condensed upper triangle."""
    if i == j:
        raise ConfigError("self-pairs have no slot")
    if not (0 <= i < n and 0 <= j < n):
        raise ConfigError(f"pair ({i}, {j}) out of range for n={n}")
    if i > j:
        i, j = j, i
    return i * n - (i * (i + 1)) // 2 + (j - i - 1)


@dataclass
class PairMatrix:
    """Condensed upper-triangular pair statistics.

    Value kinds hold float32; exceed_count and significant hold int32.
    """

    n: int
    stat: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ConsistencyError(f"unknown matrix kind '{self.kind}'")
        want = np.int32 if self.kind in _INT_KINDS else np.float32
        self.stat = np.ascontiguousarray(np.asarray(self.stat), dtype=want)
        if self.stat.ndim != 1 or self.stat.shape[0] != n_pairs(self.n):
            raise ConsistencyError(
                f"stat length {self.stat.shape} does not match n={self.n}"
            )

    def get(self, i: int, j: int):
        return self.stat[condensed_index(self.n, i, j)]

    def save(self, path) -> None:
        header = struct.pack("<4sHHQ", _PMAT_MAGIC, _PMAT_VERSION,
                             _KIND_CODE[self.kind], self.n)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.stat.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "PairMatrix":
        with open(path, "rb") as fh:
            header = fh.read(16)
            if len(header) != 16:
                raise FormatError(f"{path}: truncated header")
            magic, version, code, n = struct.unpack("<4sHHQ", header)
            if magic != _PMAT_MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}")
            if version != _PMAT_VERSION:
                raise FormatError(f"{path}: unsupported version {version}")
            if code not in _CODE_KIND:
                raise FormatError(f"{path}: unknown kind code {code}")
            payload = np.frombuffer(fh.read(), dtype="<f4")
        if payload.shape[0] != n_pairs(n):
            raise FormatError(
                f"{path}: payload holds {payload.shape[0]} entries, "
                f"expected {n_pairs(n)} for n={n}"
            )
        kind = _CODE_KIND[code]
        stat = np.rint(payload).astype(np.int32) if kind in _INT_KINDS \
            else payload.astype(np.float32)
        return cls(n=int(n), stat=stat, kind=kind)


@dataclass
class SignificanceSummary:
    alpha: float
    n_surr: int
    significant_pairs: int
    total_pairs: int
    fraction: float


def _raw_mi_condensed(values: np.ndarray, q: int) -> np.ndarray:
    """Condensed float64 raw MI for all pairs; labels built once per node."""
    labels, margins = bin_grid(values, q)
    out = np.empty(n_pairs(labels.shape[0]), dtype=np.float64)
    _kernels.mi_sweep(labels, margins, _log_lut(labels.shape[1]), out)
    return out


def _check_curve(grid: TimeSeriesGrid, q: int, curve: CalibrationCurve) -> None:
    if curve.n_samples != grid.n_times or curve.n_bins != q:
        raise ConsistencyError(
            f"calibration built for (T={curve.n_samples}, Q={curve.n_bins}), "
            f"run has (T={grid.n_times}, Q={q})"
        )


def pairwise_mi(grid: TimeSeriesGrid, q: int, curve: CalibrationCurve) -> PairMatrix:
    """Calibrated MI for every node pair."""
    _check_curve(grid, q, curve)
    cal = curve.apply(_raw_mi_condensed(grid.values, q))
    return PairMatrix(n=grid.n_nodes, stat=cal.astype(np.float32), kind="mi_calibrated")


def pairwise_correlation(grid: TimeSeriesGrid) -> PairMatrix:
    """Pearson correlation for every node pair."""
    z = standardized_rows(grid.values)
    out = np.empty(n_pairs(grid.n_nodes), dtype=np.float64)
    _kernels.corr_sweep(np.ascontiguousarray(z), out)
    return PairMatrix(n=grid.n_nodes, stat=out.astype(np.float32), kind="correlation")


def surrogate_mi_stats(grid: TimeSeriesGrid, spec: SurrogateSpec, q: int,
                       curve: CalibrationCurve, data_mi: PairMatrix,
                       progress=None):
    """Stream the surrogate ensemble, one matrix at a time.

    Returns (mi_surr_mean, exceed_count) where exceed_count(p) is the number
    of surrogates whose calibrated MI at pair p lies strictly below the data
    value; ties do not count. Accumulation order is the surrogate index
    order, so the result is schedule-invariant. `progress`, if given, is
    called as progress(k, n_surr) after surrogate k.
    """
    if data_mi.kind != "mi_calibrated":
        raise ConsistencyError(f"data matrix has kind '{data_mi.kind}', want mi_calibrated")
    if data_mi.n != grid.n_nodes:
        raise ConsistencyError(
            f"data matrix built for n={data_mi.n}, grid has {grid.n_nodes}"
        )
    _check_curve(grid, q, curve)
    m = n_pairs(grid.n_nodes)
    data64 = data_mi.stat.astype(np.float64)
    mean_acc = np.zeros(m, dtype=np.float64)
    exceed = np.zeros(m, dtype=np.int64)
    for k, surr in enumerate(generate_ensemble(grid, spec), start=1):
        cal = curve.apply(_raw_mi_condensed(surr.values, q))
        mean_acc += cal
        exceed += cal < data64
        if progress is not None:
            progress(k, spec.n_surr)
    mean = (mean_acc / spec.n_surr).astype(np.float32)
    return (PairMatrix(n=grid.n_nodes, stat=mean, kind="mi_surr_mean"),
            PairMatrix(n=grid.n_nodes, stat=exceed.astype(np.int32), kind="exceed_count"))


def significance_threshold(alpha: float, n_surr: int) -> int:
    """Smallest exceedance count that rejects at level alpha.

    ceil((1-alpha)(n_surr+1)) with a small nudge against IEEE noise
    (0.95*100 evaluates just below 95, 0.95*20 just above 19).
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    thr = math.ceil((1.0 - alpha) * (n_surr + 1) - 1e-9)
    if thr > n_surr:
        raise ConfigError(
            f"alpha={alpha} needs more than {n_surr} surrogates to test"
        )
    return max(thr, 1)


def significance(exceed: PairMatrix, alpha: float, n_surr: int):
    """Threshold exceedance counts into a boolean matrix plus a summary."""
    if exceed.kind != "exceed_count":
        raise ConsistencyError(f"matrix has kind '{exceed.kind}', want exceed_count")
    if exceed.stat.size and (exceed.stat.min() < 0 or exceed.stat.max() > n_surr):
        raise ConsistencyError(
            f"exceed counts outside [0, {n_surr}]; wrong n_surr?"
        )
    thr = significance_threshold(alpha, n_surr)
    sig = (exceed.stat >= thr)
    total = exceed.stat.shape[0]
    count = int(sig.sum())
    summary = SignificanceSummary(alpha=float(alpha), n_surr=int(n_surr),
                                  significant_pairs=count, total_pairs=total,
                                  fraction=count / total)
    return PairMatrix(n=exceed.n, stat=sig.astype(np.int32), kind="significant"), summary


def node_average(matrix: PairMatrix, nodes: list[NodeMeta]) -> NodeField:
    """Mean of each node's N-1 pair entries (self-pairs excluded).

    Kind maps mi_calibrated -> mi_mean and mi_surr_mean -> mi_surr_mean.
    """
    if matrix.kind not in ("mi_calibrated", "mi_surr_mean"):
        raise ConsistencyError(f"node_average not defined for kind '{matrix.kind}'")
    n = matrix.n
    if len(nodes) != n:
        raise ConsistencyError(f"{len(nodes)} nodes for an n={n} matrix")
    stat = matrix.stat.astype(np.float64)
    sums = np.zeros(n, dtype=np.float64)
    start = 0
    for i in range(n - 1):
        seg = stat[start:start + (n - 1 - i)]
        sums[i] += seg.sum()
        sums[i + 1:] += seg
        start += seg.shape[0]
    kind = "mi_mean" if matrix.kind == "mi_calibrated" else "mi_surr_mean"
    return NodeField(nodes=list(nodes), values=sums / (n - 1), kind=kind)


def extra_normal_fields(mi_field: NodeField, surr_field: NodeField,
                        floor: float = 1e-6):
    """Per-node excess of data MI over surrogate MI, signed and relative.

    The relative field clamps negative excess to 0 and is undefined where
    the data MI mean is at or below `floor` nats.
    """
    if len(mi_field.nodes) != len(surr_field.nodes):
        raise ConsistencyError("field lengths differ")
    for a, b in zip(mi_field.nodes, surr_field.nodes):
        if (a.lat, a.lon) != (b.lat, b.lon):
            raise ConsistencyError(f"fields disagree on node {a.index} location")
    diff = mi_field.values - surr_field.values
    defined = mi_field.defined & surr_field.defined
    extra = NodeField(nodes=list(mi_field.nodes), values=np.where(defined, diff, np.nan),
                      kind="extra_normal", defined=defined)
    rel_ok = defined & (mi_field.values > floor)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(rel_ok, np.maximum(diff, 0.0) / mi_field.values, np.nan)
    relative = NodeField(nodes=list(mi_field.nodes), values=rel,
                         kind="extra_normal_relative", defined=rel_ok)
    return extra, relative


def extract_pair(grid: TimeSeriesGrid, i: int, j: int, q: int = 8,
                 curve: CalibrationCurve | None = None) -> dict:
    """Self-contained dossier for one pair, for external plotting.

    r and the calibrated MI are rounded through float32 so they equal the
    stored matrix entries bit for bit; full-grid standardization and binning
    are reused for the same reason.
    """
    n = grid.n_nodes
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ConfigError(f"invalid pair ({i}, {j}) for n={n}")
    if curve is not None:
        _check_curve(grid, q, curve)
    z = standardized_rows(grid.values)
    r32 = np.float32(_kernels.corr_pair(np.ascontiguousarray(z[i]),
                                        np.ascontiguousarray(z[j])))
    labels, margins = bin_grid(grid.values, q)
    raw = float(_kernels.mi_pair_nats(labels[i], labels[j], margins[i],
                                      margins[j], q, _log_lut(grid.n_times)))
    cal = float(np.float32(curve.apply(raw))) if curve is not None else None
    r = float(r32)
    gauss = gaussian_mi(r) if abs(r) < 1.0 else None

    x = grid.values[:, i]
    y = grid.values[:, j]
    phases = grid.phases()
    std_i, std_j = [], []
    for p in range(grid.period):
        sel = phases == p
        std_i.append(float(x[sel].std(ddof=1)))
        std_j.append(float(y[sel].std(ddof=1)))
    return {
        "i": int(i),
        "j": int(j),
        "node_i": {"lat": grid.nodes[i].lat, "lon": grid.nodes[i].lon},
        "node_j": {"lat": grid.nodes[j].lat, "lon": grid.nodes[j].lon},
        "n_samples": grid.n_times,
        "n_bins": int(q),
        "r": r,
        "mi_raw": raw,
        "mi_calibrated": cal,
        "gaussian_mi_of_r": gauss,
        "phase_std_i": std_i,
        "phase_std_j": std_j,
        "series_i": [float(v) for v in x],
        "series_j": [float(v) for v in y],
        "scatter": [[float(a), float(b)] for a, b in zip(x, y)],
    }


def sample_pairs(n: int, k: int, seed: int) -> list[tuple[int, int]]:
    """k distinct pairs drawn uniformly without replacement, reproducibly."""
    m = n_pairs(n)
    if n < 2:
        raise ConfigError(f"need n >= 2 nodes, got {n}")
    if not (0 <= k <= m):
        raise ConfigError(f"cannot draw {k} distinct pairs from {m}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    if m <= 4 * k or m < 1 << 20:
        picks = rng.permutation(m)[:k]
    else:
        seen = {}
        while len(seen) < k:
            for c in rng.integers(0, m, size=k - len(seen)):
                seen.setdefault(int(c), None)
        picks = np.fromiter(seen.keys(), dtype=np.int64, count=k)
    return [tuple(int(v) for v in _kernels.decode_pair(int(c), n)) for c in picks]
