"""Outage probability and average bit error rate of a downlink MIMO-NOMA
system with transmit antenna selection and equal-gain combining over
i.i.d. Weibull fading, with a Monte-Carlo link simulator for validation."""

from .exceptions import DomainError, EvaluationError, SeriesConvergenceError
from .metrics import (
    AberEvaluation,
    AberQuery,
    AsymptoteReport,
    OutageQuery,
    aber_floor,
    aber_quadrature,
    aber_user1_asymptotic,
    aber_user1_exact,
    aber_user_u,
    evaluate_aber,
    evaluate_aber_user_u,
    outage_asymptotic,
    outage_exact,
)
from .montecarlo import SimulationPlan, SimulationResult, run, sample_weibull, snr_realization, tas_select
from .series import CoefficientTable, DiversityConfig, WeibullParams, build_table, delta_coeffs, xi_coeffs
from .specfun import EvalResult, erfc, gauss_2f1, ln_gamma
from .statistics import (
    LinkContext,
    NomaAllocation,
    cdf_chi_1,
    cdf_chi_u,
    cdf_psi,
    pdf_chi_1,
    pdf_chi_u,
    pdf_psi,
)

__version__ = "0.1.0"
