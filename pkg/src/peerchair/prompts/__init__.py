"""Prompt schema, rendering, schema files and guideline generation."""

from .autoprompt import build_autoprompt, extract_guidelines, generate_guidelines
from .render import fill_slots, ordinal, render_area_chair_skeleton, render_prompt
from .schema import (
    AnnotatedExample,
    CommunicationStrategy,
    PromptSchema,
    Role,
    RoleSchemas,
    SchemaIssue,
    StepsStyle,
    TaskKind,
    validate_schema,
)
from .store import (
    bundled_schema_dir,
    dump_schema,
    load_metric_schemas,
    load_schema,
    load_schema_set,
)

__all__ = [
    "AnnotatedExample",
    "CommunicationStrategy",
    "PromptSchema",
    "Role",
    "RoleSchemas",
    "SchemaIssue",
    "StepsStyle",
    "TaskKind",
    "build_autoprompt",
    "bundled_schema_dir",
    "dump_schema",
    "extract_guidelines",
    "fill_slots",
    "generate_guidelines",
    "load_metric_schemas",
    "load_schema",
    "load_schema_set",
    "ordinal",
    "render_area_chair_skeleton",
    "render_prompt",
    "validate_schema",
]
