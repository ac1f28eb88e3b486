"""Nonlinear dependence screening for gridded multivariate time series.

Quantifies, tests, and localizes the non-Gaussian part of pairwise
dependence: binned mutual information against Pearson correlation, with
multivariate Fourier-transform surrogates as the linear null model.

Keep this import first among numba users in a process: it raises the numba
thread ceiling (see _kernels) before numba initializes.
"""

from . import _kernels  # noqa: F401  (sets the numba thread ceiling first)
from .analysis import (NodeField, PairMatrix, SignificanceSummary,
                       condensed_index, extra_normal_fields, extract_pair,
                       n_pairs, node_average, pairwise_correlation,
                       pairwise_mi, sample_pairs, significance,
                       significance_threshold, surrogate_mi_stats)
from .errors import (ConfigError, ConsistencyError, DataError, FormatError,
                     GridmiError, NumericalError)
from .estimators import (BinLabels, CalibrationCurve, build_calibration,
                         calibrate, equiquantal_bins, extra_normal,
                         gaussian_mi, mutual_information_binned, pearson)
from .grid_io import (NodeMeta, TimeSeriesGrid, concat_time, drop_poles,
                      load_field, load_grid, make_grid, save_field, save_grid)
from .preprocess import (apply_stages, detrend_linear, marginal_gaussianize,
                         normalize_seasonal_variance, remove_annual_cycle)
from .surrogates import (SurrogateSpec, dump_surrogate, ft_surrogate,
                         generate_ensemble)
from .synth import (SynthSpec, apply_seasonal_variance, apply_trend,
                    gen_gaussian_grid, gen_gaussian_pair, make_grid_from_spec,
                    quadratic_couple, seasonal_variance_profile)

__version__ = "0.1.0"
