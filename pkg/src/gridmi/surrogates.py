"""Multivariate Fourier-transform surrogates.

A surrogate keeps every node's amplitude spectrum and adds the SAME random
phase to all nodes at each frequency, which preserves cross-spectra (hence
every pairwise correlation and autocorrelation) while destroying any
dependence beyond the linear Gaussian structure. DC and, for even T, the
Nyquist bin are never rotated, so the output is real and each node's mean
and variance survive exactly.

Seeding is counter-based: surrogate k of a run uses the 128-bit Philox key
master_seed * 2^64 + k, so streams never collide and any surrogate can be
regenerated in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .grid_io import TimeSeriesGrid, save_grid

DERIVATION = "philox128(key = master_seed * 2**64 + surrogate_index)"


@dataclass(frozen=True)
class SurrogateSpec:
    """Ensemble size and seeding rule for one surrogate run."""

    master_seed: int
    n_surr: int = 99

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ConfigError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if self.n_surr < 1:
            raise ConfigError(f"ensemble size must be >= 1, got {self.n_surr}")

    @property
    def derivation(self) -> str:
        return DERIVATION

    def stream_seed(self, index: int) -> int:
        """Philox key of surrogate `index`; distinct for every index."""
        if not (0 <= int(index) < 2 ** 64):
            raise ConfigError(f"surrogate index must fit in 64 bits, got {index}")
        return (int(self.master_seed) << 64) + int(index)


def _stream_rng(stream_seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(stream_seed)))


def _rotated(coeffs: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
    """Apply one shared random phase per positive frequency and invert."""
    nf = coeffs.shape[0]
    # rotate bins 1..nf-1, minus the Nyquist bin when t is even
    last = nf - 1 if t % 2 == 0 else nf
    rot = np.ones(nf, dtype=np.complex128)
    rot[1:last] = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, last - 1))
    return np.fft.irfft(coeffs * rot[:, None], n=t, axis=0)


def ft_surrogate(grid: TimeSeriesGrid, stream_seed: int) -> TimeSeriesGrid:
    """One multivariate FT surrogate of the grid, from the given stream seed."""
    t = grid.n_times
    if t < 4:
        raise DataError(f"surrogates need T >= 4, got {t}")
    coeffs = np.fft.rfft(grid.values, axis=0)
    vals = _rotated(coeffs, t, _stream_rng(stream_seed))
    return replace(grid, values=np.asfortranarray(vals))


def generate_ensemble(grid: TimeSeriesGrid, spec: SurrogateSpec):
    """Yield the spec's surrogates in index order, one at a time.

    Surrogate k depends only on (grid, master_seed, k); the forward FFT is
    computed once and shared. Element k is bit-identical to
    ft_surrogate(grid, spec.stream_seed(k)).
    """
    t = grid.n_times
    if t < 4:
        raise DataError(f"surrogates need T >= 4, got {t}")
    coeffs = np.fft.rfft(grid.values, axis=0)
    for k in range(spec.n_surr):
        rng = _stream_rng(spec.stream_seed(k))
        yield replace(grid, values=np.asfortranarray(_rotated(coeffs, t, rng)))


def dump_surrogate(grid: TimeSeriesGrid, spec: SurrogateSpec, index: int,
                   path, format: str = "flatbin") -> TimeSeriesGrid:
    """Write surrogate `index` to disk with provenance in the sidecar."""
    if not (0 <= index < spec.n_surr):
        raise ConfigError(f"surrogate index {index} outside [0, {spec.n_surr})")
    surr = ft_surrogate(grid, spec.stream_seed(index))
    save_grid(surr, path, format=format, extra_meta={
        "surrogate": {
            "master_seed": spec.master_seed,
            "index": index,
            "n_surr": spec.n_surr,
            "derivation": spec.derivation,
        }
    })
    return surr
