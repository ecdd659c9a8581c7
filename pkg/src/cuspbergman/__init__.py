"""Bergman kernel densities on model cusps ``D x punctured disc`` and their
large-``m`` asymptotics."""

__version__ = "0.1.0"

from .errors import ConvergenceError
from .numkernel import (LogReal, hermitian_sqrt, log_regularized_lower_gamma,
                        log_regularized_upper_gamma, logsumexp_signed, logsumexp_sorted,
                        regularized_upper_gamma)
from .basekernel import (BaseKernel, BasePoint, base_density, base_dimension,
                         density_bound, kernel_from_config, load_unitaries)
from .cusp import (CuspPoint, SeriesResult, TruncationSpec, mode_norm, product_rho,
                   quad_norm_check, rho_cusp, rho_truncated, truncation_deviation)
from .asymptotics import (AdmissiblePair, ExpansionPoly, LocalizationReport, RateFit,
                          SupResult, G, admissible, alpha, b_approximant, b_approx_sup,
                          b_scaled, expansion_error, f_pow, lambda_polys,
                          localization_report, rate_fit, sup_rho)

__all__ = [
    "ConvergenceError", "LogReal", "hermitian_sqrt", "log_regularized_lower_gamma",
    "log_regularized_upper_gamma", "logsumexp_signed", "logsumexp_sorted",
    "regularized_upper_gamma", "BaseKernel", "BasePoint", "base_density", "base_dimension",
    "density_bound", "kernel_from_config", "load_unitaries", "CuspPoint", "SeriesResult",
    "TruncationSpec", "mode_norm", "product_rho", "quad_norm_check", "rho_cusp",
    "rho_truncated", "truncation_deviation", "AdmissiblePair", "ExpansionPoly",
    "LocalizationReport", "RateFit", "SupResult", "G", "admissible", "alpha",
    "b_approximant", "b_approx_sup", "b_scaled", "expansion_error", "f_pow", "lambda_polys",
    "localization_report", "rate_fit", "sup_rho",
]
