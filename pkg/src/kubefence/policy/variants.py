"""Phases 2 and 3: enum variants of a values schema, and their manifests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..model.nodes import Mapping, Scalar, Sequence
from ..model.schema import Const, EnumSet, LockedConstant, MappingSchema, Placeholder, SequenceSchema
from ..template import Ph, RenderContext, render_outcomes, split_manifests


@dataclass(frozen=True)
class ValuesVariant:
    index: int  # 1-based
    values: object


def _enum_lengths(schema) -> list[int]:
    if isinstance(schema, EnumSet):
        return [len(schema)]
    if isinstance(schema, MappingSchema):
        return [n for child in schema.entries.values() for n in _enum_lengths(child)]
    if isinstance(schema, SequenceSchema) and schema.element is not None:
        return _enum_lengths(schema.element)
    return []


def _select(schema, i: int):
    if isinstance(schema, EnumSet):
        return schema.options[min(i, len(schema) - 1)]
    if isinstance(schema, MappingSchema):
        return MappingSchema({k: _select(v, i) for k, v in schema.items()}, schema.optional, schema.required)
    if isinstance(schema, SequenceSchema) and schema.element is not None:
        return SequenceSchema(_select(schema.element, i))
    return schema


def explore_variants(schema) -> list[ValuesVariant]:
    """Variant i takes every enum's i-th option, or its last when shorter."""
    count = max(_enum_lengths(schema), default=1)
    return [ValuesVariant(i + 1, _select(schema, i)) for i in range(count)]


def variant_document(schema):
    """A plain values document for an external renderer.

    Scalar placeholders become their token text. Open containers become
    empty, since an external renderer cannot branch over them.
    """
    if isinstance(schema, MappingSchema):
        return Mapping({k: variant_document(v) for k, v in schema.items()})
    if isinstance(schema, SequenceSchema):
        return Sequence(() if schema.element is None else (variant_document(schema.element),))
    if schema is Placeholder.DICT:
        return Mapping({})
    if schema is Placeholder.LIST:
        return Sequence(())
    if isinstance(schema, Placeholder):
        return Scalar.of(schema.value)
    if isinstance(schema, (Const, LockedConstant)):
        return schema.scalar
    raise TypeError(f"variant still holds {schema!r}")


def policy_context(values) -> RenderContext:
    """Render context with installation-specific names left open."""
    return RenderContext(values, release_name=Ph("string", "Release.Name"),
                         namespace=Ph("string", "Release.Namespace"))


def _render_one(chart, variant: ValuesVariant, renderer, max_outcomes: int) -> list[tuple[int, object]]:
    if renderer is not None:
        texts = list(renderer.render(chart, variant_document(variant.values)).values())
    else:
        per_file = render_outcomes(chart, policy_context(variant.values), max_outcomes=max_outcomes)
        texts = [t for rel, _ in chart.templates for t in per_file[rel]]
    return [(variant.index, doc) for text in texts for doc in split_manifests(text)]


def render_variants(chart, variants, *, renderer=None, workers: int | None = None,
                    max_outcomes: int = 1024) -> list[tuple[int, object]]:
    """Render every variant; returns (variant index, manifest) pairs in variant order."""
    if workers and workers > 1 and len(variants) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda v: _render_one(chart, v, renderer, max_outcomes), variants))
    else:
        chunks = [_render_one(chart, v, renderer, max_outcomes) for v in variants]
    return [pair for chunk in chunks for pair in chunk]
