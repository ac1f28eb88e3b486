import json
import math

import numpy as np
import pytest

from gridmi.errors import ConsistencyError, DataError, FormatError
from gridmi.grid_io import (NodeField, NodeMeta, TimeSeriesGrid, concat_time,
                            drop_poles, load_field, load_grid, make_grid,
                            save_field, save_grid)

from _helpers import rng_for


def small_grid(t=24, n=3, seed=0, period=12):
    rng = rng_for(100, 0, seed)
    vals = rng.standard_normal((t, n))
    lats = [10.0 * i for i in range(n)]
    lons = [2.5 * i for i in range(n)]
    return make_grid(vals, lats, lons, period=period, label="fixture")


def test_flatbin_roundtrip_bit_exact(tmp_path):
    g = small_grid()
    # storage is f32; quantize first so the roundtrip is bit-for-bit
    g32 = make_grid(g.values.astype(np.float32).astype(np.float64),
                    [nd.lat for nd in g.nodes], [nd.lon for nd in g.nodes],
                    label=g.label)
    p = tmp_path / "grid.bin"
    save_grid(g32, p)
    back = load_grid(p)
    assert np.array_equal(back.values, g32.values)
    assert back.values.flags.f_contiguous
    assert [(_n.lat, _n.lon, _n.index) for _n in back.nodes] == \
        [(_n.lat, _n.lon, _n.index) for _n in g32.nodes]
    assert (back.time_start, back.period, back.label) == (1, 12, "fixture")
    # and save(load(p)) reproduces the data file byte for byte
    p2 = tmp_path / "grid2.bin"
    save_grid(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_csv_roundtrip_value_exact(tmp_path):
    g = small_grid()
    p = tmp_path / "grid.csv"
    save_grid(g, p, format="csv")
    back = load_grid(p, format="csv")
    assert np.array_equal(back.values, g.values)


def test_format_mismatch_rejected(tmp_path):
    g = small_grid()
    p = tmp_path / "grid.bin"
    save_grid(g, p)
    with pytest.raises(FormatError):
        load_grid(p, format="csv")


def test_missing_sidecar(tmp_path):
    p = tmp_path / "orphan.bin"
    p.write_bytes(b"\x00" * 16)
    with pytest.raises(FormatError):
        load_grid(p)


def test_truncated_payload(tmp_path):
    g = small_grid()
    p = tmp_path / "grid.bin"
    save_grid(g, p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        load_grid(p)


def test_nan_load_names_position(tmp_path):
    g = small_grid(n=5)
    vals = g.values.copy()
    vals[5, 3] = np.nan
    bad = TimeSeriesGrid(values=vals, nodes=g.nodes)
    p = tmp_path / "bad.bin"
    with open(p, "wb") as fh:
        fh.write(np.ascontiguousarray(vals, dtype="<f4").tobytes())
    meta = {"format": "flatbin-f32-le", "T": 24, "N": 5, "period": 12,
            "time_start": 1, "label": "",
            "nodes": [{"lat": nd.lat, "lon": nd.lon} for nd in bad.nodes]}
    with open(str(p) + ".json", "w") as fh:
        json.dump(meta, fh)
    with pytest.raises(DataError, match=r"time index 5, node 3"):
        load_grid(p)


def test_validate_bounds():
    vals = np.zeros((24, 2))
    vals[:, 0] = np.arange(24)
    vals[:, 1] = np.arange(24) ** 2
    with pytest.raises(DataError):
        make_grid(vals[:, :1], [0.0], [0.0])  # N < 2
    with pytest.raises(DataError):
        make_grid(vals[:12], [0.0, 1.0], [0.0, 1.0])  # T < 2 * period
    with pytest.raises(ConsistencyError):
        make_grid(vals, [95.0, 0.0], [0.0, 1.0])  # lat out of range
    with pytest.raises(ConsistencyError):
        make_grid(vals, [0.0, 1.0], [360.0, 1.0])  # lon out of range
    with pytest.raises(ConsistencyError):
        make_grid(vals, [0.0, 0.0], [1.0, 1.0])  # duplicate location
    with pytest.raises(ConsistencyError):
        TimeSeriesGrid(values=vals, nodes=[NodeMeta(0.0, 0.0, 0)]).validate()


def test_drop_poles_regular_mesh():
    # 73 x 144 mesh at 2.5 degrees includes both pole rows
    lats = np.repeat(np.linspace(90.0, -90.0, 73), 144)
    lons = np.tile(np.arange(144) * 2.5, 73)
    n = lats.shape[0]
    assert n == 10512
    vals = rng_for(100, 1, 0).standard_normal((24, n))
    g = make_grid(vals, lats, lons)
    out = drop_poles(g)
    assert out.n_nodes == 10224
    assert out.n_times == g.n_times
    kept = [nd for nd in g.nodes if abs(nd.lat) != 90.0]
    assert [(_n.lat, _n.lon) for _n in out.nodes] == \
        [(_n.lat, _n.lon) for _n in kept]
    assert [nd.index for nd in out.nodes] == list(range(10224))
    # surviving columns are untouched
    assert np.array_equal(out.values[:, 0], g.values[:, 144])


def test_drop_poles_noop_returns_same_grid():
    g = small_grid()
    assert drop_poles(g) is g


def test_drop_poles_all_pole_nodes():
    vals = rng_for(100, 2, 0).standard_normal((24, 2))
    g = make_grid(vals, [90.0, -90.0], [0.0, 0.0])
    out = drop_poles(g)
    assert out.n_nodes == 0
    with pytest.raises(DataError):
        out.validate()


def test_concat_time_year_pair():
    rng = rng_for(100, 3, 0)
    nodes = [NodeMeta(0.0, 0.0, 0), NodeMeta(0.0, 1.0, 1)]
    a = TimeSeriesGrid(values=rng.standard_normal((12, 2)), nodes=nodes,
                       time_start=1)
    b = TimeSeriesGrid(values=rng.standard_normal((12, 2)), nodes=nodes,
                       time_start=1)
    out = concat_time(a, b)
    assert out.n_times == 24
    assert out.time_start == a.time_start
    assert np.array_equal(out.values[:12], a.values)
    assert np.array_equal(out.values[12:], b.values)


def test_concat_time_rejects_node_mismatch():
    rng = rng_for(100, 4, 0)
    a = TimeSeriesGrid(values=rng.standard_normal((12, 2)),
                       nodes=[NodeMeta(0.0, 0.0, 0), NodeMeta(0.0, 1.0, 1)])
    b = TimeSeriesGrid(values=rng.standard_normal((12, 2)),
                       nodes=[NodeMeta(0.0, 0.0, 0), NodeMeta(0.0, 2.0, 1)])
    with pytest.raises(ConsistencyError):
        concat_time(a, b)


def test_concat_time_rejects_bad_season():
    rng = rng_for(100, 5, 0)
    nodes = [NodeMeta(0.0, 0.0, 0), NodeMeta(0.0, 1.0, 1)]
    a = TimeSeriesGrid(values=rng.standard_normal((12, 2)), nodes=nodes,
                       time_start=1)
    b = TimeSeriesGrid(values=rng.standard_normal((12, 2)), nodes=nodes,
                       time_start=12)
    with pytest.raises(ConsistencyError):
        concat_time(a, b)


def test_concat_time_mid_year_seam():
    rng = rng_for(100, 6, 0)
    nodes = [NodeMeta(0.0, 0.0, 0), NodeMeta(0.0, 1.0, 1)]
    a = TimeSeriesGrid(values=rng.standard_normal((7, 2)), nodes=nodes,
                       time_start=3)  # Mar..Sep
    b = TimeSeriesGrid(values=rng.standard_normal((17, 2)), nodes=nodes,
                       time_start=10)  # Oct onward
    out = concat_time(a, b)
    assert out.n_times == 24
    assert out.time_start == 3


def test_phases():
    g = small_grid()
    assert np.array_equal(g.phases()[:13],
                          np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0]))
    shifted = TimeSeriesGrid(values=g.values, nodes=g.nodes, time_start=11)
    assert list(shifted.phases()[:3]) == [10, 11, 0]


def field_nodes(n):
    return [NodeMeta(float(i), 0.0, i) for i in range(n)]


def test_field_zero_rows(tmp_path):
    fld = NodeField(nodes=field_nodes(4), values=np.zeros(4), kind="mi_mean")
    p = tmp_path / "f.csv"
    save_field(fld, p)
    lines = p.read_text().strip().split("\n")
    assert lines[0] == "lat,lon,value"
    assert len(lines) == 5
    assert all(line.endswith(",0") for line in lines[1:])


def test_field_undefined_entry(tmp_path):
    fld = NodeField(nodes=field_nodes(3), values=np.array([0.5, np.nan, 1.5]),
                    defined=np.array([True, False, True]), kind="extra_normal")
    p = tmp_path / "f.csv"
    save_field(fld, p)
    lines = p.read_text().strip().split("\n")
    assert lines[2].endswith(",")
    back = load_field(p, kind="extra_normal")
    assert list(back.defined) == [True, False, True]
    assert math.isnan(back.values[1])


def test_field_roundtrip_print_ulp(tmp_path):
    vals = rng_for(100, 7, 0).standard_normal(40) * 0.37
    fld = NodeField(nodes=field_nodes(40), values=vals, kind="mi_mean")
    p = tmp_path / "f.csv"
    save_field(fld, p)
    back = load_field(p)
    # 9 significant digits survive within one print ULP
    assert np.allclose(back.values, vals, rtol=1e-8, atol=1e-12)


def test_field_length_mismatch():
    with pytest.raises(ConsistencyError):
        NodeField(nodes=field_nodes(3), values=np.zeros(2))


def test_field_nonfinite_defined_rejected():
    with pytest.raises(DataError):
        NodeField(nodes=field_nodes(2), values=np.array([1.0, np.inf]))
