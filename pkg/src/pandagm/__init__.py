"""Adaptive noise augmentation (PANDA) for graphical models and GLMs."""

from .errors import FitDivergenceError, NumericalRankError, PandaRegularityWarning, ValidationError
from .glm_core import AugmentedDesign, NodeFamily, fit_glm, fit_ols, neg_log_likelihood
from .ngd import (AdaptiveLasso, Bridge, ElasticNet, FusedRidge, GroupLasso, NoiseSpec, Scad,
                  expected_penalty, noise_variance, parse_noise, sample_noise)
from .engine import (Convergence, Dataset, FitTrace, GlmFit, GraphEstimate, PandaConfig,
                     check_convergence, hard_threshold, moving_average, run_panda_glm, run_panda_ns,
                     standardize, symmetrize)
from .ggm_variants import (LdlEstimate, PrecisionEstimate, SpaceEstimate, run_panda_cd, run_panda_gridge,
                           run_panda_scio, run_panda_space)
from .inference import (InferenceReport, confidence_intervals, fisher_augmented, infer_glm, linear_sigma2,
                        sandwich_covariance)

__version__ = "0.1.0"
