"""Manifest generalization and the join used to consolidate manifests.

Scalars join into constants, enums or placeholders; mappings join key-wise
(keys missing on one side become optional); sequences join all their
elements into one element schema. Mixing a mapping with a scalar or a
sequence at the same path is a ShapeConflict.
"""

from __future__ import annotations

import re

from ..errors import LockConflict, ShapeConflict
from ..model.nodes import STRING, Mapping, Sequence
from ..model.paths import FieldPath
from ..model.schema import (
    Const,
    EnumSet,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SequenceSchema,
    placeholder_admits,
    is_token,
)

_EMBEDDED = re.compile(r"(?<![A-Za-z0-9_])(?:bool|int|string|IP)(?![A-Za-z0-9_])|\[list\]|\{dict\}")


def schema_from_node(node, path: FieldPath = FieldPath()):
    """Generalize one rendered manifest node.

    Bare placeholder tokens become placeholders. Quoted tokens and strings
    built around one (``--port=int``) become ``string``. A mapping keyed by
    a placeholder (from ranging over an open dict) becomes ``{dict}``.
    """
    if isinstance(node, Mapping):
        if is_token(node, Placeholder.DICT.value) or "string" in node:
            return Placeholder.DICT
        return MappingSchema({k: schema_from_node(v, path.key(k)) for k, v in node.items()})
    if isinstance(node, Sequence):
        if is_token(node, Placeholder.LIST.value):
            return Placeholder.LIST
        element = None
        for item in node.items:
            child = schema_from_node(item, path.elem())
            element = child if element is None else join(element, child, path.elem())
        return SequenceSchema(element)
    if node.kind == STRING:
        text = node.value
        for ph in Placeholder:
            if ph.scalar and is_token(node, ph.value):
                return ph
        if _EMBEDDED.search(text):
            return Placeholder.STRING
    return Const(node)


def _shape(schema) -> str:
    if isinstance(schema, MappingSchema) or schema is Placeholder.DICT:
        return "mapping"
    if isinstance(schema, SequenceSchema) or schema is Placeholder.LIST:
        return "sequence"
    return "scalar"


def _constants(schema) -> tuple:
    return schema.options if isinstance(schema, EnumSet) else (schema,)


def _widen(ph: Placeholder, consts: tuple) -> Placeholder:
    if all(placeholder_admits(c.scalar, ph) for c in consts):
        return ph
    return Placeholder.STRING


def join(a, b, path: FieldPath = FieldPath(), *, strict: bool = False):
    """Least schema admitting everything ``a`` or ``b`` admits.

    In ``strict`` mode a constant (or enum) met by a placeholder wins.
    """
    if a is None:
        return b
    if b is None:
        return a
    sa, sb = _shape(a), _shape(b)
    if sa != sb:
        raise ShapeConflict(str(path), sa, sb)

    if isinstance(a, LockedConstant) or isinstance(b, LockedConstant):
        if isinstance(a, LockedConstant) and isinstance(b, LockedConstant) and a != b:
            raise LockConflict(str(path))
        return a if isinstance(a, LockedConstant) else b

    if sa == "mapping":
        if isinstance(a, Placeholder) or isinstance(b, Placeholder):
            if strict and not (isinstance(a, Placeholder) and isinstance(b, Placeholder)):
                return b if isinstance(a, Placeholder) else a
            return Placeholder.DICT
        entries = {}
        optional = set(a.optional | b.optional)
        for key in list(a.entries) + [k for k in b.entries if k not in a.entries]:
            if key in a.entries and key in b.entries:
                entries[key] = join(a[key], b[key], path.key(key), strict=strict)
            else:
                entries[key] = a[key] if key in a.entries else b[key]
                optional.add(key)
        return MappingSchema(entries, frozenset(optional), (a.required & b.required) - optional)

    if sa == "sequence":
        if isinstance(a, Placeholder) or isinstance(b, Placeholder):
            if strict and not (isinstance(a, Placeholder) and isinstance(b, Placeholder)):
                return b if isinstance(a, Placeholder) else a
            return Placeholder.LIST
        return SequenceSchema(join(a.element, b.element, path.elem(), strict=strict))

    if isinstance(a, Placeholder) and isinstance(b, Placeholder):
        return a if a is b else Placeholder.STRING
    if isinstance(a, Placeholder) or isinstance(b, Placeholder):
        ph, other = (a, b) if isinstance(a, Placeholder) else (b, a)
        return other if strict else _widen(ph, _constants(other))
    options = _constants(a) + tuple(c for c in _constants(b) if c not in _constants(a))
    return options[0] if len(options) == 1 else EnumSet(options)


def merge_manifests(nodes, *, strict: bool = False):
    """Join the generalized schemas of ``nodes`` (any order gives the same result)."""
    merged = None
    for node in nodes:
        merged = join(merged, schema_from_node(node), strict=strict)
    return merged
