"""Policy generation: values schema, variants, rendering and validators."""

from __future__ import annotations

from dataclasses import dataclass

from .merge import join, merge_manifests, schema_from_node
from .validator import (
    SERVER_FIELDS,
    WIDEN,
    Validator,
    apply_locks,
    build_validator,
    consolidate,
    dump_validator,
    widen,
    equivalent,
    load_validator_text,
)
from .values_schema import dump_values_schema, generate_values_schema
from .variants import ValuesVariant, explore_variants, policy_context, render_variants, variant_document

__all__ = [
    "join", "merge_manifests", "schema_from_node", "SERVER_FIELDS", "WIDEN", "Validator",
    "apply_locks", "build_validator", "consolidate", "dump_validator", "equivalent",
    "load_validator_text", "widen", "dump_values_schema", "generate_values_schema", "ValuesVariant",
    "explore_variants", "policy_context", "render_variants", "variant_document",
    "Generation", "generate",
]


@dataclass
class Generation:
    """Everything one run of the pipeline produced."""

    schema: object
    variants: list
    manifests: list  # (variant index, manifest)
    validator: Validator


def generate(chart, *, strict: bool = False, renderer=None, workers: int | None = None,
             now=None) -> Generation:
    schema = generate_values_schema(chart)
    variants = explore_variants(schema)
    manifests = render_variants(chart, variants, renderer=renderer, workers=workers)
    validator = build_validator([m for _, m in manifests], chart.locks, chart=chart.name,
                                strict=strict, now=now)
    return Generation(schema, variants, manifests, validator)
