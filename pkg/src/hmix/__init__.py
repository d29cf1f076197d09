"""hmix: human-in-the-loop mixing toolkit.

Convex image/label mixing, elicitation of human coefficient judgments with
uncertainty, aggregation and logistic boundary fitting of those judgments,
and a desk-scale training harness comparing label policies on soft-label
cross-entropy, adversarial robustness, and calibration.
"""

__version__ = "0.1.0"

from .boundaryfit import (
    BoundaryFit,
    InsufficientDataError,
    apply_boundary,
    fit_all_pairs,
    fit_boundary,
)
from .hmixdata import (
    InterfaceKind,
    Judgment,
    JudgmentStore,
    LabelFrequencyTable,
    SoftLabelJudgment,
    StimulusRef,
    aggregate_relabelings,
    confidence_by_extremity,
    entropy_bucket_analysis,
    export_hmix,
    flag_high_relabel,
    import_hmix,
    label_entropy,
    repeat_consistency,
)
from .labelpolicy import (
    PolicyKind,
    SmoothingSpec,
    build_training_label,
    clamp_soft_label,
    mixup_label,
    smooth_with_confidence,
)
from .mixcore import (
    INFERENCE_COEFFICIENTS,
    SELECTION_GRID,
    BetaSpec,
    DiscreteSpec,
    ImageTensor,
    LabelDistribution,
    MixedStimulus,
    data_mix,
    label_mix,
    sample_lambda,
    sweep_stimuli,
)

__all__ = [
    "BetaSpec",
    "BoundaryFit",
    "DiscreteSpec",
    "INFERENCE_COEFFICIENTS",
    "ImageTensor",
    "InsufficientDataError",
    "InterfaceKind",
    "Judgment",
    "JudgmentStore",
    "LabelDistribution",
    "LabelFrequencyTable",
    "MixedStimulus",
    "PolicyKind",
    "SELECTION_GRID",
    "SmoothingSpec",
    "SoftLabelJudgment",
    "StimulusRef",
    "aggregate_relabelings",
    "apply_boundary",
    "build_training_label",
    "clamp_soft_label",
    "confidence_by_extremity",
    "data_mix",
    "entropy_bucket_analysis",
    "export_hmix",
    "fit_all_pairs",
    "fit_boundary",
    "flag_high_relabel",
    "import_hmix",
    "label_entropy",
    "label_mix",
    "mixup_label",
    "repeat_consistency",
    "sample_lambda",
    "smooth_with_confidence",
    "sweep_stimuli",
]
