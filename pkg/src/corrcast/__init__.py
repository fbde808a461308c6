"""Multivariate probabilistic forecasting with cross-correlated Gaussian errors."""

from .calibration import (
    ConditionalGaussian,
    ResidualBuffer,
    conditional_error_distribution,
    rolling_forecast,
)
from .covariance import (
    BatchCovariance,
    TemporalCorrelation,
    batch_nll,
    nll_gradients,
    sample,
    structured_logdet,
    structured_solve,
)
from .errors import ConfigError, NumericalError, SingularCovarianceError
from .kernels import (
    ArCorrelation,
    KernelBank,
    MixWeights,
    build_kernel_bank,
    mix,
    softmax_weights,
    yule_walker_correlation,
)
from .metrics import (
    EvaluationReport,
    ForecastSamples,
    crps,
    crps_sum,
    energy_score,
    evaluate_instance,
    quantile_loss,
    rrmse,
)
from .model import ForecastModel, ModelConfig, init_model, sample_series_subset

__version__ = "0.1.0"

__all__ = [
    "ArCorrelation",
    "BatchCovariance",
    "ConditionalGaussian",
    "ConfigError",
    "EvaluationReport",
    "ForecastModel",
    "ForecastSamples",
    "KernelBank",
    "MixWeights",
    "ModelConfig",
    "NumericalError",
    "ResidualBuffer",
    "SingularCovarianceError",
    "TemporalCorrelation",
    "batch_nll",
    "build_kernel_bank",
    "conditional_error_distribution",
    "crps",
    "crps_sum",
    "energy_score",
    "evaluate_instance",
    "init_model",
    "mix",
    "nll_gradients",
    "quantile_loss",
    "rolling_forecast",
    "rrmse",
    "sample",
    "sample_series_subset",
    "softmax_weights",
    "structured_logdet",
    "structured_solve",
    "yule_walker_correlation",
]
