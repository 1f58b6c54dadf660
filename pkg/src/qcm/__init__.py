"""Quantiled conditional moments: conditional variance, skewness and kurtosis
recovered from a pool of estimated conditional quantiles."""
from .cornish_fisher import QuantilePool, ThetaEstimate, constrained_ls_fit, ols_fit, qcm_from_theta
from .pipeline import PipelineConfig, QCMSeries, compute_qcms, run

__version__ = "0.1.0"

__all__ = ["QuantilePool", "ThetaEstimate", "constrained_ls_fit", "ols_fit", "qcm_from_theta",
           "PipelineConfig", "QCMSeries", "compute_qcms", "run"]
