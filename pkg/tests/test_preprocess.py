import numpy as np
import pytest

from gridmi.errors import ConfigError, DataError
from gridmi.grid_io import NodeMeta, TimeSeriesGrid, make_grid
from gridmi.preprocess import (STAGES, apply_stages, detrend_linear,
                               marginal_gaussianize,
                               normalize_seasonal_variance,
                               remove_annual_cycle)

from _helpers import rng_for

NDTRI_QUARTER = 0.6744897501960817  # Phi^-1(0.75)


def bare_grid(values, period=1, time_start=1):
    """Unvalidated grid for short hand-built fixtures."""
    values = np.asfortranarray(np.asarray(values, dtype=np.float64))
    nodes = [NodeMeta(float(i), 0.0, i) for i in range(values.shape[1])]
    return TimeSeriesGrid(values=values, nodes=nodes,
                          time_start=time_start, period=period)


def random_grid(t=48, n=4, channel=0, period=12):
    vals = rng_for(101, channel, 0).standard_normal((t, n))
    return make_grid(vals, [float(i) for i in range(n)], [0.0] * n,
                     period=period)


def test_anomaly_two_sample_phase_oracle():
    # per phase {a, b} -> {(a-b)/2, (b-a)/2}
    vals = np.zeros((24, 2))
    vals[0, 0], vals[12, 0] = 1.0, 3.0
    vals[:, 1] = np.arange(24)
    g = bare_grid(vals, period=12)
    out = remove_annual_cycle(g)
    assert out.values[0, 0] == -1.0 and out.values[12, 0] == 1.0
    # node 1: every phase pair is {p, p+12} -> {-6, 6}
    assert np.array_equal(out.values[:12, 1], np.full(12, -6.0))
    assert np.array_equal(out.values[12:, 1], np.full(12, 6.0))


def test_anomaly_zeroes_phase_means():
    g = random_grid(t=60, channel=1)
    out = remove_annual_cycle(g)
    for p in range(12):
        sel = out.phases() == p
        assert np.abs(out.values[sel].mean(axis=0)).max() < 1e-13
    assert out.values.flags.f_contiguous
    assert out is not g and g.values[0, 0] != out.values[0, 0]


def test_anomaly_needs_two_per_phase():
    g = bare_grid(rng_for(101, 2, 0).standard_normal((13, 2)), period=12)
    with pytest.raises(DataError, match="phase"):
        remove_annual_cycle(g)


def test_gaussianize_two_sample_oracle():
    g = bare_grid([[7.0, 1.0], [3.0, 2.0]])
    out = marginal_gaussianize(g)
    assert out.values[0, 0] == NDTRI_QUARTER
    assert out.values[1, 0] == -NDTRI_QUARTER
    assert out.values[0, 1] == -NDTRI_QUARTER
    assert out.values[1, 1] == NDTRI_QUARTER


def test_gaussianize_tie_broken_by_time():
    g = bare_grid(np.column_stack([[5.0, 5.0, 1.0, 2.0], np.arange(4.0)]))
    out = marginal_gaussianize(g)
    # the t=0 copy of the tied value ranks below the t=1 copy
    assert out.values[0, 0] < out.values[1, 0]
    assert np.array_equal(np.argsort(out.values[:, 0]), [2, 3, 0, 1])


def test_gaussianize_preserves_rank_order():
    g = random_grid(channel=3)
    out = marginal_gaussianize(g)
    for i in range(g.n_nodes):
        assert np.array_equal(np.argsort(g.values[:, i], kind="stable"),
                              np.argsort(out.values[:, i], kind="stable"))


def test_gaussianize_idempotent_bitwise():
    g = random_grid(channel=4)
    once = marginal_gaussianize(g)
    twice = marginal_gaussianize(once)
    assert np.array_equal(once.values, twice.values)


def test_gaussianize_rejects_degenerate_ties():
    col = np.zeros(8)
    col[:3] = [1.0, 2.0, 3.0]  # five zeros out of eight
    g = bare_grid(np.column_stack([col, np.arange(8.0)]))
    with pytest.raises(DataError, match="tie-degenerate"):
        marginal_gaussianize(g)
    const = bare_grid(np.column_stack([np.ones(8), np.arange(8.0)]))
    with pytest.raises(DataError, match="constant"):
        marginal_gaussianize(const)
    # exactly half tied is still allowed
    half = bare_grid(np.column_stack(
        [[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0], np.arange(8.0)]))
    marginal_gaussianize(half)


def test_varnorm_two_sample_oracle():
    vals = rng_for(101, 5, 0).standard_normal((24, 2))
    vals[0, 0], vals[12, 0] = 1.0, 3.0  # phase 1 of node 0: std = sqrt(2)
    g = bare_grid(vals, period=12)
    out = normalize_seasonal_variance(g)
    assert out.values[0, 0] == 1.0 / np.sqrt(2.0)
    assert out.values[12, 0] == 3.0 / np.sqrt(2.0)


def test_varnorm_unit_phase_std_no_centering():
    g = random_grid(t=120, channel=6)
    shifted = TimeSeriesGrid(values=g.values + 5.0, nodes=g.nodes,
                             time_start=g.time_start, period=g.period)
    out = normalize_seasonal_variance(shifted)
    for p in range(12):
        sel = out.phases() == p
        assert np.abs(out.values[sel].std(axis=0, ddof=1) - 1.0).max() < 1e-12
    # scaling only: the offset is still there
    assert out.values.min() > 0.0


def test_varnorm_zero_variance_phase():
    vals = rng_for(101, 7, 0).standard_normal((24, 2))
    vals[1, 1] = vals[13, 1]  # phase 2 of node 1 degenerate
    g = bare_grid(vals, period=12)
    with pytest.raises(DataError, match="node 1: zero variance in calendar phase 2"):
        normalize_seasonal_variance(g)


def test_detrend_three_point_oracle():
    g = bare_grid(np.column_stack([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]))
    out = detrend_linear(g)
    expected = np.array([0.0, 1.0, 0.0]) - 1.0 / 3.0
    assert np.array_equal(out.values[:, 0], expected)
    assert np.array_equal(out.values[:, 1], np.zeros(3))


def test_detrend_removes_exact_line():
    t = np.arange(48, dtype=np.float64)
    g = bare_grid(np.column_stack([2.0 + 0.25 * t, -1.0 - 3.0 * t]))
    out = detrend_linear(g)
    assert np.abs(out.values).max() < 1e-10


def test_detrend_residual_orthogonality():
    g = random_grid(channel=8)
    out = detrend_linear(g)
    tc = np.arange(g.n_times) - (g.n_times - 1) / 2.0
    assert np.abs(out.values.sum(axis=0)).max() < 1e-10
    assert np.abs(tc @ out.values).max() < 1e-9


def test_detrend_needs_three_samples():
    g = bare_grid(np.zeros((2, 2)))
    with pytest.raises(DataError):
        detrend_linear(g)


def test_apply_stages_validation():
    g = random_grid(channel=9)
    with pytest.raises(ConfigError, match="unknown preprocessing stage"):
        apply_stages(g, ["anomaly", "whiten"])
    with pytest.raises(ConfigError, match="twice"):
        apply_stages(g, ["anomaly", "anomaly"])
    assert apply_stages(g, []) is g


def test_apply_stages_order_matters():
    t = np.arange(48, dtype=np.float64)
    vals = rng_for(101, 10, 0).standard_normal((48, 2))
    vals[:, 0] += 0.3 * t
    vals[:, 1] += np.sin(2 * np.pi * t / 12.0)
    g = bare_grid(vals, period=12)
    ab = apply_stages(g, ["detrend", "anomaly"])
    ba = apply_stages(g, ["anomaly", "detrend"])
    # removing the cycle changes the fitted slope, so the orders differ
    assert not np.allclose(ab.values, ba.values)


def test_full_ladder_runs():
    g = random_grid(t=96, channel=11)
    out = apply_stages(g, list(STAGES))
    assert out.values.shape == g.values.shape
    assert np.isfinite(out.values).all()
    assert out.values.flags.f_contiguous
