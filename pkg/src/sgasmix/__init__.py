"""Mixtures of sub-Gaussian alpha-stable distributions fitted by stochastic ECM."""

from .em import FitConfig, FitResult, bic, e_step, fit, initialize, select_k
from .metrics import adjusted_rand_index, confusion_table
from .sgas import (MixtureModel, SgasComponent, cond_inv_p, mahalanobis, mixture_sample,
                   sgas_pdf, sgas_sample)
from .stable import (PositiveStableLaw, positive_stable_pdf, positive_stable_sample,
                     weibull_quotient_check)

__version__ = "0.1.0"
