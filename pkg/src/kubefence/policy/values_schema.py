"""Generalize a chart's default values into a values schema."""

from __future__ import annotations

import logging

from ..chart import DEFAULT_SENTINEL, REQUIRE, Chart, LockRule
from ..errors import LockConflict
from ..model.emit import dump_document
from ..model.nodes import NULL, STRING, Mapping, Scalar, Sequence
from ..model.paths import FieldPath
from ..model.schema import (
    Const,
    EnumSet,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SequenceSchema,
    infer_placeholder,
)

log = logging.getLogger(__name__)


def _generalize(node, path: FieldPath, enums: dict):
    if path in enums:
        return EnumSet.of(enums[path])
    if isinstance(node, Mapping):
        if len(node) == 0:
            return Placeholder.DICT
        return MappingSchema({k: _generalize(v, path.key(k), enums) for k, v in node.items()})
    return infer_placeholder(node)


def _walk(schema: MappingSchema, path: FieldPath = FieldPath()):
    """Yield (path, parent, key) for every entry, depth first."""
    for key, child in schema.items():
        sub = path.key(key)
        yield sub, schema, key
        if isinstance(child, MappingSchema):
            yield from _walk(child, sub)


def _replace(root: MappingSchema, path: FieldPath, value) -> MappingSchema:
    """Copy of ``root`` with the entry at ``path`` set (created when missing)."""
    key = path.segments[0]
    entries = dict(root.entries)
    if len(path.segments) == 1:
        entries[key] = value
    else:
        child = entries.get(key)
        if not isinstance(child, MappingSchema):
            child = MappingSchema({})
        entries[key] = _replace(child, FieldPath(path.segments[1:]), value)
    return MappingSchema(entries, root.optional, root.required)


def _lock_node(rule: LockRule, current, path: FieldPath):
    if rule.mode == REQUIRE:
        return rule.value
    value = rule.value
    if value == DEFAULT_SENTINEL:
        if not isinstance(current, Scalar) or current.kind == NULL:
            log.warning("%s: no scalar default to keep, lock skipped", path)
            return None
        return LockedConstant(current, rule.mode)
    return LockedConstant.of(value, rule.mode)


def _default_at(values, path: FieldPath):
    node = values
    for key in path.segments:
        if not isinstance(node, Mapping) or key not in node:
            return None
        node = node[key]
    return node


def generate_values_schema(chart: Chart):
    """Placeholders for plain defaults, option lists for annotated enums,
    constants for locked fields (inserting required ones that are missing).
    """
    enums = {a.target: a.options for a in chart.enums}
    schema = _generalize(chart.values, FieldPath(), enums)
    if not isinstance(schema, MappingSchema):
        schema = MappingSchema({})
    rules = [r for r in chart.locks if r.scope == "values"]

    for rule in rules:
        for path, parent, key in list(_walk(schema)):
            if not rule.target.matches(path):
                continue
            current = parent[key]
            if isinstance(current, (MappingSchema, SequenceSchema)) or current in (Placeholder.LIST, Placeholder.DICT):
                if rule.mode != REQUIRE:
                    log.warning("%s: lock on a non-scalar value skipped", path)
                continue
            if isinstance(current, EnumSet):
                if rule.value == DEFAULT_SENTINEL or rule.mode == REQUIRE:
                    continue
                if Const.of(rule.value) not in current:
                    raise LockConflict(str(path))
            node = _lock_node(rule, _default_at(chart.values, path), path)
            if node is not None:
                schema = _replace(schema, path, node)

    for rule in rules:
        if not rule.requires_presence:
            continue
        anchor, rest = rule.target.anchor_split()
        if anchor.path.segments:
            anchors = [p for p, _, _ in _walk(schema) if anchor.matches(p)]
        else:
            anchors = [FieldPath()]
        for base in anchors:
            target = base.join(rest)
            if _default_at_schema(schema, target) is not None:
                continue
            node = _lock_node(rule, None, target)
            if node is None:
                continue
            log.info("inserting required %s", target)
            schema = _replace_under(schema, base, rest, node)
    return schema


def _default_at_schema(schema, path: FieldPath):
    node = schema
    for key in path.segments:
        if not isinstance(node, MappingSchema) or key not in node:
            return None
        node = node[key]
    return node


def _replace_under(schema: MappingSchema, base: FieldPath, rest: FieldPath, node) -> MappingSchema:
    # An open {dict} anchor becomes a mapping holding only the inserted field.
    anchor = _default_at_schema(schema, base)
    if anchor is Placeholder.DICT:
        schema = _replace(schema, base, MappingSchema({}))
    elif not isinstance(anchor, MappingSchema):
        return schema
    return _replace(schema, base.join(rest), node)


# -- canonical text ------------------------------------------------------------

def _raw(text: str) -> Scalar:
    return Scalar(text, STRING, "raw")


def _as_document(schema):
    if isinstance(schema, MappingSchema):
        return Mapping({k: _as_document(v) for k, v in schema.items()})
    if isinstance(schema, Placeholder):
        return _raw(schema.value)
    if isinstance(schema, EnumSet):
        return _raw(", ".join(Scalar.of(v).text for v in schema.values()))
    if isinstance(schema, (Const, LockedConstant)):
        return schema.scalar
    if isinstance(schema, SequenceSchema):
        return Sequence(() if schema.element is None else (_as_document(schema.element),))
    raise TypeError(f"not a values schema node: {schema!r}")


def dump_values_schema(schema) -> str:
    """Values-file style text: tokens bare, enums comma-joined, locks as values."""
    return dump_document(_as_document(schema))
