"""Conclusive single-rule local explanations for random forest models.

The package trains or imports soft-voting tree ensembles, reduces the set
of decision paths behind one prediction while provably keeping that
prediction stable, composes the surviving feature ranges into a single
rule, and can audit any rule (its own or a third party's) for the
conclusiveness property via exhaustive single-feature probing.
"""

__version__ = "0.1.0"

from .model import (
    DecisionPath,
    FeatureSpec,
    ForestModel,
    ModelFormatError,
    PathCondition,
    Prediction,
    TreeNode,
    TreeStats,
    extract_paths,
    load_model,
    path_interval,
    predict,
    predict_batch,
    serialize_model,
)
from .trainer import TrainConfig, TrainingError, train
from .quorum import (
    ErrorBudget,
    RetentionRequirement,
    TieError,
    VoteTally,
    default_allowed_error,
    local_error,
    quorum_size,
    requirement_binary,
    requirement_for,
    requirement_multiclass,
)
from .reducers import (
    ReductionOutcome,
    dissimilarity_matrix,
    path_similarity,
    reduce_association_rules,
    reduce_clustering,
    reduce_distribution,
    reduce_random,
    run_pipeline,
)
from .explanation import (
    CategoricalEquality,
    ExplanationRule,
    FeatureRange,
    compose_rule,
    explain_instance,
    intersect_ranges,
    permutation_importance,
    render,
    resolve_categoricals,
    rule_from_dict,
    rule_to_dict,
)
from .conclusiveness import (
    AuditReport,
    ConsequentMismatchError,
    Violation,
    audit,
    breakpoints,
)
from .evaluation import (
    LFGrid,
    RFGrid,
    ZeroCoverageError,
    coverage,
    precision,
    reduction_ratios,
    rule_length,
    sensitivity_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
