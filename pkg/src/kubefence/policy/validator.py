"""Per-kind validators: consolidation, lock application and the file format.

File layout::

    meta:
      chart: mlflow-mini
      generated: "2026-01-01T00:00:00Z"
      locks: sha256:...
    kinds:
      Deployment:
        apiVersion: apps/v1
        spec:
          replicas: int
          strategy?: {dict}
          ...
            securityContext+:
              runAsNonRoot+: !lock {value: true, mode: require-and-pin}

Leaves are bare placeholder tokens (``string``, ``int``, ``bool``, ``IP``,
``[list]``, ``{dict}``), constants (strings spelling a token are quoted),
flow sequences of constants for enums, or ``!lock`` mappings. A block
sequence holds exactly one element schema; ``[]`` admits only empty
sequences. A key suffix marks its flag: ``?`` optional, ``+`` required,
``!`` none (used when the key itself ends in one of these characters).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..chart import REQUIRE
from ..errors import DocumentError, LockConflict, UnknownPlaceholder, ValidatorFormatError
from ..model.emit import dump_document
from ..model.nodes import NULL, STRING, Mapping, Scalar, Sequence, to_python
from ..model.parse import parse_yaml
from ..model.paths import FieldPath, PathPattern
from ..model.schema import (
    LOCK_MODES,
    TOKENS,
    Const,
    EnumSet,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SequenceSchema,
    placeholder_admits,
)
from .merge import join, schema_from_node

log = logging.getLogger(__name__)

# Values derived from the release (names, labels) differ per installation.
WIDEN = (
    (PathPattern.parse("...metadata.name"), Placeholder.STRING),
    (PathPattern.parse("...metadata.labels"), Placeholder.DICT),
    (PathPattern.parse("...containers[].name"), Placeholder.STRING),
    (PathPattern.parse("...containers[].image"), Placeholder.STRING),
    (PathPattern.parse("...initContainers[].name"), Placeholder.STRING),
    (PathPattern.parse("...initContainers[].image"), Placeholder.STRING),
)

# Fields the API server fills in and clients echo back on updates.
SERVER_FIELDS = {
    "managedFields": Placeholder.LIST,
    "uid": Placeholder.STRING,
    "resourceVersion": Placeholder.STRING,
    "creationTimestamp": Placeholder.STRING,
    "generation": Placeholder.INT,
}

LOCK_TAG = "!lock"


@dataclass(frozen=True)
class Validator:
    kinds: dict
    meta: dict = field(default_factory=dict)

    def __contains__(self, kind) -> bool:
        return kind in self.kinds

    def get(self, kind):
        return self.kinds.get(kind)

    def to_text(self) -> str:
        return dump_validator(self)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text) -> "Validator":
        return load_validator_text(text)

    @classmethod
    def load(cls, path) -> "Validator":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ValidatorFormatError(f"cannot read validator {path}: {exc}") from None
        return load_validator_text(data)


# -- tree rewriting ------------------------------------------------------------

def _rewrite(schema, path: FieldPath, pattern: PathPattern, fn):
    """Apply ``fn(path, node)`` to every node whose path matches ``pattern``."""
    if pattern.matches(path) and (path.segments or not pattern.anywhere or pattern.path.segments):
        return fn(path, schema)
    if isinstance(schema, MappingSchema):
        entries = {k: _rewrite(v, path.key(k), pattern, fn) for k, v in schema.items()}
        return MappingSchema(entries, schema.optional, schema.required)
    if isinstance(schema, SequenceSchema) and schema.element is not None:
        return SequenceSchema(_rewrite(schema.element, path.elem(), pattern, fn))
    return schema


def widen(schema):
    """Apply the WIDEN table to an existing schema tree."""
    for pattern, ph in WIDEN:
        def fn(path, node, ph=ph):
            if isinstance(node, LockedConstant):
                return node
            if ph is Placeholder.DICT:
                return ph if isinstance(node, MappingSchema) or node is ph else node
            scalar = isinstance(node, (Const, EnumSet)) or (isinstance(node, Placeholder) and node.scalar)
            return ph if scalar else node
        schema = _rewrite(schema, FieldPath(), pattern, fn)
    return schema


def _server_fields(schema):
    if not isinstance(schema, MappingSchema):
        return schema
    entries = dict(schema.entries)
    optional = set(schema.optional)
    meta = entries.get("metadata")
    if isinstance(meta, MappingSchema):
        m_entries = dict(meta.entries)
        m_optional = set(meta.optional)
        for key, ph in SERVER_FIELDS.items():
            if key not in m_entries:
                m_entries[key] = ph
                m_optional.add(key)
        entries["metadata"] = MappingSchema(m_entries, frozenset(m_optional), meta.required)
    if "status" not in entries:
        entries["status"] = Placeholder.DICT
        optional.add("status")
    return MappingSchema(entries, frozenset(optional), schema.required)


def _scalar_schema(node) -> bool:
    return isinstance(node, (Const, EnumSet, LockedConstant)) or (isinstance(node, Placeholder) and node.scalar)


def _admits_value(node, scalar: Scalar) -> bool:
    if isinstance(node, Placeholder):
        return placeholder_admits(scalar, node)
    if isinstance(node, EnumSet):
        return Const(scalar) in node
    return Const(node.scalar) == Const(scalar)


def _pin(rule):
    lock = LockedConstant.of(rule.value, rule.mode)

    def fn(path, node):
        if not _scalar_schema(node):
            raise LockConflict(str(path))
        if not _admits_value(node, lock.scalar):
            log.warning("%s: lock %r overrides rendered %r", path, lock.value, node)
        return lock
    return fn


def _require(rule, rest: FieldPath):
    leaf = rule.value if rule.mode == REQUIRE else LockedConstant.of(rule.value, rule.mode)

    def ensure(path, node, segments):
        if not segments:
            if node is None:
                return leaf
            if rule.mode == REQUIRE and join_shape_ok(node, leaf):
                return node
            if rule.mode != REQUIRE and isinstance(node, LockedConstant):
                return node
            raise LockConflict(str(path))
        if node is None:
            node = MappingSchema({})
        if not isinstance(node, MappingSchema):
            log.warning("%s: cannot require fields below %r", path, node)
            return node
        key = segments[0]
        child = ensure(path.key(key), node.get(key), segments[1:])
        entries = dict(node.entries)
        entries[key] = child
        return MappingSchema(entries, node.optional - {key}, node.required | {key})

    return lambda path, node: ensure(path, node, rest.segments)


def join_shape_ok(node, ph: Placeholder) -> bool:
    if ph is Placeholder.DICT:
        return isinstance(node, MappingSchema) or node is ph
    if ph is Placeholder.LIST:
        return isinstance(node, SequenceSchema) or node is ph
    return _scalar_schema(node)


def apply_locks(schema, rules):
    """Pin locked fields and insert required ones below their anchors."""
    rules = [r for r in rules if r.scope == "manifest"]
    for rule in rules:
        if rule.mode != REQUIRE:
            schema = _rewrite(schema, FieldPath(), rule.target, _pin(rule))
    for rule in rules:
        if not rule.requires_presence:
            continue
        anchor, rest = rule.target.anchor_split()
        if not rest.segments:
            continue
        if not anchor.path.segments:
            anchor = PathPattern(FieldPath(), False)
        schema = _rewrite(schema, FieldPath(), anchor, _require(rule, rest))
    return schema


# -- building ------------------------------------------------------------------

def lock_digest(rules) -> str:
    rows = sorted((str(r.target), repr(r.value), r.mode, r.scope) for r in rules)
    return "sha256:" + hashlib.sha256(json.dumps(rows).encode("utf-8")).hexdigest()


def consolidate(manifests, *, strict: bool = False) -> dict:
    """Group manifests by ``kind`` and join each group."""
    groups: dict = {}
    for node in manifests:
        kind = node.get("kind") if isinstance(node, Mapping) else None
        if not isinstance(kind, Scalar) or kind.kind != STRING:
            raise ValidatorFormatError("every manifest needs a string kind")
        groups[kind.value] = join(groups.get(kind.value), schema_from_node(node), strict=strict)
    return groups


def build_validator(manifests, locks=(), *, chart: str = "", strict: bool = False,
                    widen_release: bool = True, server_fields: bool = True,
                    now: datetime | None = None) -> Validator:
    kinds = {}
    for kind, schema in consolidate(manifests, strict=strict).items():
        if widen_release:
            schema = widen(schema)
        if server_fields:
            schema = _server_fields(schema)
        kinds[kind] = apply_locks(schema, locks)
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y-%m-%dT%H:%M:%SZ")
    meta = {"chart": chart, "generated": stamp, "locks": lock_digest(locks)}
    return Validator(dict(sorted(kinds.items())), meta)


# -- file format ---------------------------------------------------------------

_FLAGS = "?+!"


def _raw(text: str) -> Scalar:
    return Scalar(text, STRING, "raw")


def _key(key: str, schema: MappingSchema) -> str:
    if key in schema.optional:
        return key + "?"
    if key in schema.required:
        return key + "+"
    return key + "!" if key and key[-1] in _FLAGS else key


def schema_document(schema):
    if isinstance(schema, Placeholder):
        return _raw(schema.value)
    if isinstance(schema, Const):
        return schema.scalar
    if isinstance(schema, LockedConstant):
        body = {"value": schema.scalar, "mode": Scalar(schema.mode, STRING)}
        return Mapping(body, flow=True, tag=LOCK_TAG)
    if isinstance(schema, EnumSet):
        return Sequence(tuple(o.scalar for o in schema.options), flow=True)
    if isinstance(schema, MappingSchema):
        return Mapping({_key(k, schema): schema_document(v) for k, v in schema.items()})
    if isinstance(schema, SequenceSchema):
        if schema.element is None:
            return Sequence((), flow=True)
        return Sequence((schema_document(schema.element),))
    raise TypeError(f"not a schema node: {schema!r}")


def dump_validator(validator: Validator) -> str:
    meta = Mapping({k: Scalar.of(v) for k, v in validator.meta.items()})
    kinds = Mapping({k: schema_document(v) for k, v in validator.kinds.items()})
    return dump_document(Mapping({"meta": meta, "kinds": kinds}), quote_tokens=True)


def _fail(node, message: str):
    where = f" (line {node.line + 1})" if getattr(node, "line", None) is not None else ""
    raise ValidatorFormatError(message + where)


def schema_from_document(node):
    """Inverse of :func:`schema_document`."""
    if isinstance(node, Mapping):
        if node.tag == LOCK_TAG:
            if set(node.keys()) != {"value", "mode"} or not isinstance(node["value"], Scalar):
                _fail(node, "a lock needs a scalar value and a mode")
            mode = node["mode"].value if isinstance(node["mode"], Scalar) else None
            if mode not in LOCK_MODES:
                _fail(node, f"unknown lock mode {mode!r}")
            return LockedConstant(node["value"], mode)
        if node.tag is not None:
            _fail(node, f"unknown tag {node.tag}")
        if node.flow and len(node) == 1:
            (key, value), = node.items()
            if isinstance(value, Scalar) and value.kind == NULL:
                if key == "dict":
                    return Placeholder.DICT
                raise UnknownPlaceholder(f"unknown placeholder token {{{key}}}")
        entries, optional, required = {}, set(), set()
        for key, value in node.items():
            name, flag = key, ""
            if key and key[-1] in _FLAGS:
                name, flag = key[:-1], key[-1]
            if name in entries:
                _fail(node, f"duplicate key {name!r}")
            entries[name] = schema_from_document(value)
            if flag == "?":
                optional.add(name)
            elif flag == "+":
                required.add(name)
        return MappingSchema(entries, frozenset(optional), frozenset(required))
    if isinstance(node, Sequence):
        if node.tag is not None:
            _fail(node, f"unknown tag {node.tag}")
        if node.flow:
            items = node.items
            if not items:
                return SequenceSchema(None)
            if not all(isinstance(i, Scalar) for i in items):
                _fail(node, "enum options must be scalars")
            if len(items) == 1:
                only = items[0]
                if only.kind == STRING and not only.quoted:
                    if only.value == "list":
                        return Placeholder.LIST
                    raise UnknownPlaceholder(f"unknown placeholder token [{only.value}]")
                _fail(node, "an enum needs at least two options")
            try:
                return EnumSet(tuple(Const(i) for i in items))
            except ValueError as exc:
                _fail(node, str(exc))
        if len(node) != 1:
            _fail(node, "a sequence schema holds exactly one element schema")
        return SequenceSchema(schema_from_document(node[0]))
    if node.tag is not None:
        _fail(node, f"unknown tag {node.tag}")
    if node.kind == STRING and not node.quoted and node.value in TOKENS:
        return Placeholder.from_token(node.value)
    return Const(node)


def load_validator_text(text) -> Validator:
    try:
        doc = parse_yaml(text, allowed_tags=(LOCK_TAG,))
    except DocumentError as exc:
        raise ValidatorFormatError(f"validator is not valid YAML: {exc}") from None
    if not isinstance(doc, Mapping) or not isinstance(doc.get("kinds"), Mapping):
        raise ValidatorFormatError("validator needs a top-level kinds mapping")
    extra = set(doc.keys()) - {"meta", "kinds"}
    if extra:
        raise ValidatorFormatError(f"unknown top-level keys {sorted(extra)}")
    meta = doc.get("meta")
    if meta is not None and not isinstance(meta, Mapping):
        raise ValidatorFormatError("meta must be a mapping")
    kinds = {kind: schema_from_document(tree) for kind, tree in doc["kinds"].items()}
    return Validator(kinds, to_python(meta) if meta is not None else {})


def equivalent(a, b) -> bool:
    """Structural equality treating enum options as sets."""
    if isinstance(a, EnumSet) and isinstance(b, EnumSet):
        return a.as_set() == b.as_set()
    if isinstance(a, MappingSchema) and isinstance(b, MappingSchema):
        return (
            set(a.entries) == set(b.entries)
            and a.optional == b.optional
            and a.required == b.required
            and all(equivalent(a[k], b[k]) for k in a.entries)
        )
    if isinstance(a, SequenceSchema) and isinstance(b, SequenceSchema):
        if a.element is None or b.element is None:
            return a.element is None and b.element is None
        return equivalent(a.element, b.element)
    return a == b
