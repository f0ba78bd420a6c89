"""Combine several out-of-distribution detector scores into one decision rule."""

__version__ = "0.1.0"

from .center_outward import CenterOutwardCombiner, center_outward_fit
from .combiners import (
    DetectorFamily,
    EcdfCombiner,
    LevelDetector,
    NotFittedError,
    VoteCombiner,
    VoteRule,
    model_from_dict,
)
from .copulas import CopulaCombiner, CopulaFit, copula_cdf, fit_copula
from .metrics import RocCurve, auroc_family, auroc_scalar, family_roc, fpr_at_tpr, tpr_at_fpr
from .scores import ScoreFileError, ScoreMatrix, SplitSpec, load_scores, split_id, split_ood, write_scores
from .search import CandidateSet, EvalRecord, beam_search, best_pairs, proxy_select, sensitivity_search

__all__ = [
    "CandidateSet",
    "CenterOutwardCombiner",
    "CopulaCombiner",
    "CopulaFit",
    "DetectorFamily",
    "EcdfCombiner",
    "EvalRecord",
    "LevelDetector",
    "NotFittedError",
    "RocCurve",
    "ScoreFileError",
    "ScoreMatrix",
    "SplitSpec",
    "VoteCombiner",
    "VoteRule",
    "auroc_family",
    "auroc_scalar",
    "beam_search",
    "best_pairs",
    "center_outward_fit",
    "copula_cdf",
    "family_roc",
    "fit_copula",
    "fpr_at_tpr",
    "load_scores",
    "model_from_dict",
    "proxy_select",
    "sensitivity_search",
    "split_id",
    "split_ood",
    "tpr_at_fpr",
    "write_scores",
]
