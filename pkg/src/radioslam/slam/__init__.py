"""Particle BP-SLAM engine with joint bias estimation."""
from .association import AssociationMarginals, ContractViolation, associate, da_prior_coefficient
from .beliefs import (AgentBelief, DegenerateUpdateError, FeatureBelief, KeyCounter, LegacySet, Priors,
                      SlamParams, init_beliefs)
from .engine import (AnchorEvaluation, FeatureEstimate, SlamAgent, SlotResult, UpdateReport, estimate_agent,
                     estimate_features, evaluate_anchor, manage_features, predict, resample_joint, update)
from .factors import legacy_factor_g, new_factor_h, sample_birth
from .resampling import effective_sample_size, resample, systematic_resample

__all__ = [
    "AgentBelief", "AnchorEvaluation", "AssociationMarginals", "ContractViolation", "DegenerateUpdateError",
    "FeatureBelief", "FeatureEstimate", "KeyCounter", "LegacySet", "Priors", "SlamAgent", "SlamParams",
    "SlotResult", "UpdateReport", "associate", "da_prior_coefficient", "effective_sample_size",
    "estimate_agent", "estimate_features", "evaluate_anchor", "init_beliefs", "legacy_factor_g",
    "manage_features", "new_factor_h", "predict", "resample", "resample_joint", "sample_birth",
    "systematic_resample", "update",
]
