"""Translation-invariant scattering features and voxel encoding models for texture fMRI."""
from .filterbank import FilterParams, build_filter_bank, littlewood_paley, make_mother_morlet
from .scattering import ScatteringConfig, batch_scatter, energy_profile, feature_paths, scatter
from .encoding import compare_models, nested_cv_encode, r2_score, ridge_fit
from .stats import wilcoxon_signed_rank
from .decoding import block_cv_decode, logistic_ovr_fit

__all__ = [
    "FilterParams", "build_filter_bank", "littlewood_paley", "make_mother_morlet",
    "ScatteringConfig", "batch_scatter", "energy_profile", "feature_paths", "scatter",
    "compare_models", "nested_cv_encode", "r2_score", "ridge_fit", "wilcoxon_signed_rank",
    "block_cv_decode", "logistic_ovr_fit",
]

__version__ = "0.1.0"
