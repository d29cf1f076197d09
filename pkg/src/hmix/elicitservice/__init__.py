"""Elicitation session scheduling, stimulus pools, and the HTTP API."""

from .api import create_app
from .pool import (
    EndpointImage,
    PairSpec,
    PoolFormatError,
    StimulusPool,
    build_pool,
    build_procedural_pool,
)
from .sessions import (
    API_VERSION,
    INFERENCE_REPEATED_TRIALS,
    INFERENCE_TRIAL_RANGE,
    SELECTION_TRIALS,
    ElicitationService,
    PoolTooSmallError,
    ResponseError,
    SessionKind,
    SessionNotFoundError,
    SessionPlan,
    TrialSpec,
)

__all__ = [
    "API_VERSION",
    "ElicitationService",
    "EndpointImage",
    "INFERENCE_REPEATED_TRIALS",
    "INFERENCE_TRIAL_RANGE",
    "PairSpec",
    "PoolFormatError",
    "PoolTooSmallError",
    "ResponseError",
    "SELECTION_TRIALS",
    "SessionKind",
    "SessionNotFoundError",
    "SessionPlan",
    "StimulusPool",
    "TrialSpec",
    "build_pool",
    "build_procedural_pool",
    "create_app",
]
