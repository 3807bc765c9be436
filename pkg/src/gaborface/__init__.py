"""Masked log-Gabor + PCA face recognition pipeline.

Frequency-domain log-Gabor filtering, sliding-window feature selection,
expression masking, whitened PCA matching and a CMC/ROC/EER evaluation
harness, orchestrated by a deterministic file-based CLI.
"""

from .errors import (
    FormatError,
    GaborFaceError,
    InvalidInputError,
    InvalidParameterError,
    NormalizationError,
    ProvenanceError,
    ShapeError,
    UnattainableTargetError,
)
from .expressmask import ExpressionMaskSet, build_expression_masks, variance_image
from .features import (
    FeatureLocationSet,
    FeatureStore,
    extract_features,
    filter_magnitudes,
    read_feature_store,
    select_locations,
    window_origins,
    write_feature_store,
)
from .filterbank import (
    FilterBank,
    FilterParams,
    build_filter_bank,
    filter_value,
    sigma_f,
)
from .matcher import Gallery, distance, identify, verify
from .metrics import (
    EvalReport,
    RocCurve,
    TrialSet,
    cmc_curve,
    cmca,
    cum_at,
    evaluate,
    first_one,
    roc_and_eer,
)
from .normalize import (
    Landmarks,
    NormalizedFace,
    elliptical_mask,
    equalize_unmasked,
    gaussian_denoise,
    normalize_face,
)
from .pca import PcaModel, project, train
from .pipeline import ExperimentConfig, make_config, run_pipeline
from .synth import synth_dataset

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "ExperimentConfig", "ExpressionMaskSet", "FeatureLocationSet",
    "FeatureStore", "FilterBank", "FilterParams", "FormatError",
    "GaborFaceError", "Gallery", "InvalidInputError", "InvalidParameterError",
    "Landmarks", "NormalizationError", "NormalizedFace", "PcaModel",
    "ProvenanceError", "RocCurve", "ShapeError", "TrialSet",
    "UnattainableTargetError", "build_expression_masks", "build_filter_bank",
    "cmc_curve", "cmca", "cum_at", "distance", "elliptical_mask",
    "equalize_unmasked", "evaluate", "extract_features", "filter_magnitudes",
    "filter_value", "first_one", "gaussian_denoise", "identify", "make_config",
    "normalize_face", "project", "read_feature_store", "roc_and_eer",
    "run_pipeline", "select_locations", "sigma_f", "synth_dataset", "train",
    "variance_image", "verify", "window_origins", "write_feature_store",
]
