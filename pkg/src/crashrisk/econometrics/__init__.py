"""Pooled regressions, logit, dynamic panel GMM and the model suites."""
from .design import LINEAR, LOGIT, DesignMatrix, RegressionSpec, build_design, from_arrays
from .gmm import AbGmmSpec, InstrumentRankError, arellano_bond
from .linear import ols_fit
from .logit import gradient_check, logit_fit
from .models import ModelConfig, assemble_panel, run_paper_models, size_quartiles
from .results import RegressionResult, format_table, long_rows, stars

__all__ = [
    "LINEAR", "LOGIT", "DesignMatrix", "RegressionSpec", "build_design", "from_arrays",
    "AbGmmSpec", "InstrumentRankError", "arellano_bond", "ols_fit", "gradient_check",
    "logit_fit", "ModelConfig", "assemble_panel", "run_paper_models", "size_quartiles",
    "RegressionResult", "format_table", "long_rows", "stars",
]
