"""Gridded time-series data model and its two on-disk formats.

A grid holds T samples of N node series as a float64 (T, N) matrix, one
column per node, plus per-node coordinates and the calendar alignment the
seasonal transforms need. Storage is either ``flatbin`` (raw little-endian
float32, time-major) for bulk data or ``csv`` for hand-written fixtures;
both formats carry a JSON sidecar at ``<path>.json``.

Values are kept Fortran-ordered so a node series ``values[:, i]`` is
contiguous; every transform in this package preserves that layout.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConsistencyError, DataError, FormatError

GRID_FORMATS = ("flatbin", "csv")
_FLATBIN_TAG = "flatbin-f32-le"
_CSV_TAG = "csv"


@dataclass(frozen=True)
class NodeMeta:
    """Location of one grid node. ``index`` is the ordinal within its grid."""

    lat: float
    lon: float
    index: int


@dataclass
class TimeSeriesGrid:
    """T x N matrix of node series plus node metadata and calendar alignment.

    time_start is the 1-based calendar phase of the first sample (month for
    period=12); period is the number of samples per seasonal cycle. A loaded
    grid is treated as immutable; transforms return new grids.
    """

    values: np.ndarray
    nodes: list[NodeMeta]
    time_start: int = 1
    period: int = 12
    label: str = ""

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    def phases(self) -> np.ndarray:
        """0-based calendar phase of every sample."""
        return (self.time_start - 1 + np.arange(self.n_times)) % self.period

    def validate(self) -> None:
        v = self.values
        if v.ndim != 2:
            raise ConsistencyError(f"grid values must be 2-d, got shape {v.shape}")
        t, n = v.shape
        if len(self.nodes) != n:
            raise ConsistencyError(
                f"node list length {len(self.nodes)} does not match {n} value columns"
            )
        if n < 2:
            raise DataError(f"grid needs at least 2 nodes, got {n}")
        if self.period < 1 or not (1 <= self.time_start <= self.period):
            raise ConsistencyError(
                f"bad calendar: period={self.period}, time_start={self.time_start}"
            )
        if t < 2 * self.period:
            raise DataError(
                f"grid needs at least 2 full cycles ({2 * self.period} samples), got T={t}"
            )
        if not np.isfinite(v).all():
            bad = np.argwhere(~np.isfinite(v))[0]
            raise DataError(
                f"non-finite value at time index {bad[0]}, node {bad[1]}"
            )
        seen = set()
        for nd in self.nodes:
            if not (-90.0 <= nd.lat <= 90.0):
                raise ConsistencyError(f"node {nd.index}: lat {nd.lat} outside [-90, 90]")
            if not (0.0 <= nd.lon < 360.0):
                raise ConsistencyError(f"node {nd.index}: lon {nd.lon} outside [0, 360)")
            key = (nd.lat, nd.lon)
            if key in seen:
                raise ConsistencyError(f"duplicate node location {key}")
            seen.add(key)


def make_grid(values, lats, lons, time_start=1, period=12, label="") -> TimeSeriesGrid:
    """Assemble and validate a grid from plain arrays."""
    values = np.asfortranarray(np.asarray(values, dtype=np.float64))
    nodes = [NodeMeta(float(la), float(lo), i) for i, (la, lo) in enumerate(zip(lats, lons))]
    g = TimeSeriesGrid(values=values, nodes=nodes, time_start=int(time_start),
                       period=int(period), label=str(label))
    g.validate()
    return g


def _sidecar_path(path):
    return str(path) + ".json"


def _read_sidecar(path):
    sp = _sidecar_path(path)
    if not os.path.exists(sp):
        raise FormatError(f"missing metadata sidecar {sp}")
    try:
        with open(sp, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"sidecar {sp} is not valid JSON: {exc}") from exc
    for key in ("format", "T", "N", "period", "time_start", "label", "nodes"):
        if key not in meta:
            raise FormatError(f"sidecar {sp} lacks required field '{key}'")
    if len(meta["nodes"]) != meta["N"]:
        raise ConsistencyError(
            f"sidecar {sp}: N={meta['N']} but {len(meta['nodes'])} node entries"
        )
    return meta


def save_grid(grid: TimeSeriesGrid, path, format="flatbin", extra_meta=None) -> None:
    """Write a grid and its JSON sidecar.

    flatbin stores raw little-endian float32, time-major (row t contiguous);
    csv stores one row per sample with shortest round-trip decimal prints.
    extra_meta entries (e.g. surrogate provenance) are merged into the sidecar.
    """
    grid.validate()
    if format == "flatbin":
        tag = _FLATBIN_TAG
        payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
        with open(path, "wb") as fh:
            fh.write(payload)
    elif format == "csv":
        tag = _CSV_TAG
        header = "t," + ",".join(f"node{i}" for i in range(grid.n_nodes))
        lines = [header]
        for t in range(grid.n_times):
            row = grid.values[t]
            lines.append(str(t) + "," + ",".join(repr(float(x)) for x in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        raise FormatError(f"unknown grid format '{format}'")
    meta = {
        "format": tag,
        "T": grid.n_times,
        "N": grid.n_nodes,
        "period": grid.period,
        "time_start": grid.time_start,
        "label": grid.label,
        "nodes": [{"lat": nd.lat, "lon": nd.lon} for nd in grid.nodes],
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_grid(path, format="flatbin") -> TimeSeriesGrid:
    """Read a grid written by save_grid, validating shape and content."""
    meta = _read_sidecar(path)
    t, n = int(meta["T"]), int(meta["N"])
    expect_tag = _FLATBIN_TAG if format == "flatbin" else _CSV_TAG if format == "csv" else None
    if expect_tag is None:
        raise FormatError(f"unknown grid format '{format}'")
    if meta["format"] != expect_tag:
        raise FormatError(
            f"{path}: sidecar declares format '{meta['format']}', expected '{expect_tag}'"
        )
    if format == "flatbin":
        size = os.path.getsize(path)
        if size != 4 * t * n:
            raise FormatError(
                f"{path}: file is {size} bytes, expected 4*T*N = {4 * t * n}"
            )
        raw = np.fromfile(path, dtype="<f4").reshape(t, n)
        values = raw.astype(np.float64)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            cols = header.split(",")
            if cols[0] != "t" or len(cols) != n + 1:
                raise FormatError(f"{path}: bad csv header '{header}' for N={n}")
            rows = []
            for lineno, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != n + 1:
                    raise FormatError(
                        f"{path}:{lineno + 2}: expected {n + 1} fields, got {len(parts)}"
                    )
                try:
                    rows.append([float(p) for p in parts[1:]])
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno + 2}: {exc}") from exc
        if len(rows) != t:
            raise ConsistencyError(f"{path}: sidecar T={t} but {len(rows)} data rows")
        values = np.array(rows, dtype=np.float64)
    nodes = [
        NodeMeta(float(nd["lat"]), float(nd["lon"]), i)
        for i, nd in enumerate(meta["nodes"])
    ]
    grid = TimeSeriesGrid(
        values=np.asfortranarray(values),
        nodes=nodes,
        time_start=int(meta["time_start"]),
        period=int(meta["period"]),
        label=str(meta["label"]),
    )
    grid.validate()
    return grid


def drop_poles(grid: TimeSeriesGrid) -> TimeSeriesGrid:
    """Remove nodes sitting exactly at |lat| = 90, keeping order. No-op otherwise."""
    keep = [nd.index for nd in grid.nodes if abs(nd.lat) != 90.0]
    if len(keep) == grid.n_nodes:
        return grid
    nodes = [
        NodeMeta(grid.nodes[old].lat, grid.nodes[old].lon, new)
        for new, old in enumerate(keep)
    ]
    values = np.asfortranarray(grid.values[:, keep])
    return replace(grid, values=values, nodes=nodes)


def concat_time(a: TimeSeriesGrid, b: TimeSeriesGrid) -> TimeSeriesGrid:
    """Stack b after a along time. Node lists must match and b must start
    on the calendar phase right after a's last sample."""
    if a.n_nodes != b.n_nodes or any(
        (x.lat, x.lon) != (y.lat, y.lon) for x, y in zip(a.nodes, b.nodes)
    ):
        raise ConsistencyError("concat_time: node lists differ")
    if a.period != b.period:
        raise ConsistencyError(
            f"concat_time: period mismatch ({a.period} vs {b.period})"
        )
    successor = (a.time_start - 1 + a.n_times) % a.period + 1
    if b.time_start != successor:
        raise ConsistencyError(
            f"concat_time: b starts at phase {b.time_start}, expected {successor}"
        )
    values = np.asfortranarray(np.vstack([a.values, b.values]))
    label = a.label if a.label == b.label else f"{a.label}+{b.label}"
    out = replace(a, values=values, label=label)
    out.validate()
    return out


@dataclass
class NodeField:
    """One scalar per node, with an undefined-entry mask.

    kind names what the scalar is (e.g. "mi_mean", "extra_normal").
    """

    nodes: list[NodeMeta]
    values: np.ndarray
    kind: str = ""
    defined: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.defined is None:
            self.defined = np.ones(self.values.shape, dtype=bool)
        else:
            self.defined = np.asarray(self.defined, dtype=bool)
        if len(self.nodes) != self.values.shape[0] or self.values.shape != self.defined.shape:
            raise ConsistencyError("NodeField: nodes/values/defined lengths differ")
        if np.any(~np.isfinite(self.values[self.defined])):
            raise DataError("NodeField: non-finite value in a defined entry")


def save_field(fld: NodeField, path) -> None:
    """Write a node field as CSV (lat,lon,value), 9 significant digits,
    empty value cell for undefined entries."""
    lines = ["lat,lon,value"]
    for nd, val, ok in zip(fld.nodes, fld.values, fld.defined):
        cell = format(float(val), ".9g") if ok else ""
        lines.append(f"{repr(nd.lat)},{repr(nd.lon)},{cell}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path, kind="") -> NodeField:
    """Read a CSV node field written by save_field."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "lat,lon,value":
            raise FormatError(f"{path}: bad field header '{header}'")
        nodes, vals, defined = [], [], []
        for i, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}:{i + 2}: expected 3 fields")
            nodes.append(NodeMeta(float(parts[0]), float(parts[1]), i))
            if parts[2] == "":
                vals.append(math.nan)
                defined.append(False)
            else:
                vals.append(float(parts[2]))
                defined.append(True)
    return NodeField(nodes=nodes, values=np.array(vals), kind=kind,
                     defined=np.array(defined, dtype=bool))
