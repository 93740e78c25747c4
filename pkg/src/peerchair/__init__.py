"""Hierarchical LLM evaluation: peer reviewers score, an area chair decides."""

from .errors import PeerChairError
from .gateway import ChatRequest, Gateway, MockBackend, ModelHandle, RetryPolicy
from .metrics import (
    accuracy,
    error_partition,
    kendall_tau_b,
    paired_ttest,
    relative_costs,
    spearman,
)
from .models import AnswerSpace, Dataset, DatasetKind, Sample, ScoreScale
from .orchestrator import (
    Hyperparameters,
    RunConfig,
    Variant,
    evaluate_sample,
    run_dataset,
    run_reasoning,
)
from .parsing import parse_answer, parse_rating
from .prompts import CommunicationStrategy, PromptSchema, Role, render_prompt
from .records import RunRecord, SampleVerdict

__version__ = "0.1.0"

__all__ = [
    "AnswerSpace",
    "ChatRequest",
    "CommunicationStrategy",
    "Dataset",
    "DatasetKind",
    "Gateway",
    "Hyperparameters",
    "MockBackend",
    "ModelHandle",
    "PeerChairError",
    "PromptSchema",
    "RetryPolicy",
    "Role",
    "RunConfig",
    "RunRecord",
    "Sample",
    "SampleVerdict",
    "ScoreScale",
    "Variant",
    "accuracy",
    "error_partition",
    "evaluate_sample",
    "kendall_tau_b",
    "paired_ttest",
    "parse_answer",
    "parse_rating",
    "relative_costs",
    "render_prompt",
    "run_dataset",
    "run_reasoning",
    "spearman",
]
