"""Schema nodes, placeholder tokens and the single-node matching kernel."""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from ..errors import UnknownPlaceholder
from .nodes import BOOLEAN, FLOAT, INTEGER, NULL, STRING, DocNode, Mapping, Scalar, Sequence
from .paths import FieldPath, concrete_path, generalize

_IPV4 = re.compile(r"^(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])(?:\.(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])){3}$")


def is_ipv4(text: str) -> bool:
    return bool(_IPV4.match(text))


class Placeholder(enum.Enum):
    BOOL = "bool"
    INT = "int"
    STRING = "string"
    IP = "IP"
    LIST = "[list]"
    DICT = "{dict}"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, text: str) -> "Placeholder":
        try:
            return cls(text)
        except ValueError:
            raise UnknownPlaceholder(f"unknown placeholder token {text!r}") from None

    @property
    def scalar(self) -> bool:
        return self not in (Placeholder.LIST, Placeholder.DICT)

    def __repr__(self) -> str:
        return self.value


SCALAR_TOKENS = frozenset(p.value for p in Placeholder if p.scalar)
TOKENS = frozenset(p.value for p in Placeholder)

# Sentinels left by ``toYaml`` of open placeholders: a mapping holding this
# key, or a sequence holding this item, stands for {dict} / [list].
OPEN_DICT_KEY = "{dict}"
OPEN_LIST_ITEM = "[list]"

PIN = "pin"
REQUIRE_AND_PIN = "require-and-pin"
LOCK_MODES = (PIN, REQUIRE_AND_PIN)


def _same_value(a: Scalar, b: Scalar) -> bool:
    if a.kind != b.kind:
        return False
    if a.kind == FLOAT and math.isnan(a.value) and math.isnan(b.value):
        return True
    return a.value == b.value


@dataclass(frozen=True)
class Const:
    """A plain scalar constant."""

    scalar: Scalar

    @classmethod
    def of(cls, value) -> "Const":
        return cls(Scalar.of(value))

    @property
    def value(self):
        return self.scalar.value

    def __eq__(self, other) -> bool:
        return isinstance(other, Const) and _same_value(self.scalar, other.scalar)

    def __hash__(self) -> int:
        return hash(("const", self.scalar))

    def __repr__(self) -> str:
        return f"Const({self.scalar.value!r})"


@dataclass(frozen=True)
class LockedConstant:
    scalar: Scalar
    mode: str = PIN

    def __post_init__(self):
        if self.mode not in LOCK_MODES:
            raise ValueError(f"unknown lock mode {self.mode!r}")

    @classmethod
    def of(cls, value, mode: str = PIN) -> "LockedConstant":
        return cls(Scalar.of(value), mode)

    @property
    def value(self):
        return self.scalar.value

    @property
    def required(self) -> bool:
        return self.mode == REQUIRE_AND_PIN

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LockedConstant)
            and self.mode == other.mode
            and _same_value(self.scalar, other.scalar)
        )

    def __hash__(self) -> int:
        return hash(("lock", self.scalar, self.mode))

    def __repr__(self) -> str:
        return f"LockedConstant({self.scalar.value!r}, {self.mode})"


@dataclass(frozen=True)
class EnumSet:
    """Ordered set of at least two distinct scalar constants."""

    options: tuple

    def __post_init__(self):
        seen: list[Const] = []
        for opt in self.options:
            if not isinstance(opt, Const):
                raise TypeError(f"enum options must be Const, got {opt!r}")
            if opt not in seen:
                seen.append(opt)
        if len(seen) < 2:
            raise ValueError("an enum needs at least two distinct options")
        object.__setattr__(self, "options", tuple(seen))

    @classmethod
    def of(cls, values) -> "EnumSet":
        return cls(tuple(v if isinstance(v, Const) else Const.of(v) for v in values))

    def as_set(self) -> frozenset:
        return frozenset(self.options)

    def __contains__(self, item) -> bool:
        return item in self.options

    def __len__(self) -> int:
        return len(self.options)

    def values(self) -> list:
        return [opt.value for opt in self.options]


@dataclass(frozen=True)
class MappingSchema:
    entries: dict = field(default_factory=dict)
    optional: frozenset = frozenset()
    required: frozenset = frozenset()

    __hash__ = None  # type: ignore[assignment]

    def __post_init__(self):
        extra = (self.optional | self.required) - set(self.entries)
        if extra:
            raise ValueError(f"flags for unknown keys: {sorted(extra)}")
        both = self.optional & self.required
        if both:
            raise ValueError(f"keys both optional and required: {sorted(both)}")

    def __getitem__(self, key: str) -> "SchemaNode":
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def get(self, key, default=None):
        return self.entries.get(key, default)


@dataclass(frozen=True)
class SequenceSchema:
    """Uniform element schema; ``element=None`` admits only empty sequences."""

    element: "SchemaNode | None" = None

    __hash__ = None  # type: ignore[assignment]


SchemaNode = Union[Placeholder, Const, LockedConstant, EnumSet, MappingSchema, SequenceSchema]
SCALAR_SCHEMAS = (Const, LockedConstant, EnumSet)


def infer_placeholder(node: DocNode) -> Placeholder:
    if isinstance(node, Mapping):
        return Placeholder.DICT
    if isinstance(node, Sequence):
        return Placeholder.LIST
    if node.kind == BOOLEAN:
        return Placeholder.BOOL
    if node.kind == INTEGER:
        return Placeholder.INT
    if node.kind == STRING and is_ipv4(node.value):
        return Placeholder.IP
    return Placeholder.STRING


def is_token(node: DocNode, token: str) -> bool:
    """True when ``node`` is placeholder ``token`` as it appears in rendered output."""
    if token == Placeholder.LIST.value:
        if not isinstance(node, Sequence):
            return False
        if len(node) == 1 and isinstance(node[0], Scalar) and node[0].value == "list" and not node[0].quoted:
            return True
        return any(isinstance(i, Scalar) and i.kind == STRING and i.value == OPEN_LIST_ITEM for i in node)
    if token == Placeholder.DICT.value:
        if not isinstance(node, Mapping):
            return False
        if OPEN_DICT_KEY in node:
            return True
        return (
            list(node.keys()) == ["dict"]
            and isinstance(node["dict"], Scalar) and node["dict"].kind == NULL
        )
    return isinstance(node, Scalar) and node.kind == STRING and not node.quoted and node.value == token


def placeholder_admits(node: DocNode, ph: Placeholder) -> bool:
    if ph is Placeholder.DICT:
        return isinstance(node, Mapping)
    if ph is Placeholder.LIST:
        return isinstance(node, Sequence)
    if not isinstance(node, Scalar):
        return False
    if is_token(node, ph.value):
        return True
    if ph is Placeholder.STRING:
        return True
    if ph is Placeholder.BOOL:
        return node.kind == BOOLEAN
    if ph is Placeholder.INT:
        return node.kind == INTEGER
    return node.kind == STRING and is_ipv4(node.value)


# -- check kernel -----------------------------------------------------------

UNKNOWN_KIND = "UnknownKind"
UNKNOWN_FIELD = "UnknownField"
TYPE_MISMATCH = "TypeMismatch"
ENUM_VIOLATION = "EnumViolation"
LOCK_VIOLATION = "LockViolation"
MISSING_REQUIRED = "MissingRequired"
SHAPE_MISMATCH = "ShapeMismatch"
REASONS = (UNKNOWN_KIND, UNKNOWN_FIELD, TYPE_MISMATCH, ENUM_VIOLATION, LOCK_VIOLATION,
           MISSING_REQUIRED, SHAPE_MISMATCH)


@dataclass(frozen=True)
class Violation:
    parts: tuple  # concrete keys and integer indices
    reason: str
    message: str

    @property
    def path(self) -> str:
        return concrete_path(self.parts)


def _show(value) -> str:
    return json.dumps(value)


def describe(schema) -> str:
    if isinstance(schema, Placeholder):
        return schema.value
    if isinstance(schema, Const):
        return _show(schema.value)
    if isinstance(schema, LockedConstant):
        return f"locked {_show(schema.value)}"
    if isinstance(schema, EnumSet):
        return "one of " + ", ".join(_show(v) for v in schema.values())
    if isinstance(schema, MappingSchema):
        return "mapping"
    return "sequence"


def _node_desc(node: DocNode) -> str:
    if isinstance(node, Mapping):
        return "a mapping"
    if isinstance(node, Sequence):
        return "a sequence"
    return _show(node.value)


class Checker:
    """Depth-first comparison of a document against a schema tree.

    ``partial`` skips presence requirements (patch bodies). ``collect``
    gathers every violation instead of stopping at the first.
    """

    def __init__(self, *, partial: bool = False, collect: bool = False):
        self.partial = partial
        self.collect = collect
        self.found: list[Violation] = []

    def _add(self, parts, reason, message) -> bool:
        self.found.append(Violation(tuple(parts), reason, message))
        return not self.collect

    def run(self, node: DocNode, schema, parts=()) -> list[Violation]:
        self.visit(node, schema, list(parts))
        return self.found

    def visit(self, node: DocNode, schema, parts: list) -> bool:
        """Returns True when checking should stop."""
        if isinstance(schema, Placeholder):
            if placeholder_admits(node, schema):
                return False
            structural = not schema.scalar or not isinstance(node, Scalar)
            reason = SHAPE_MISMATCH if structural else TYPE_MISMATCH
            return self._add(parts, reason, f"expected {schema.value}, got {_node_desc(node)}")
        if isinstance(schema, LockedConstant):
            if isinstance(node, Scalar) and _same_value(node, schema.scalar):
                return False
            return self._add(parts, LOCK_VIOLATION, f"field is locked to {_show(schema.value)}, got {_node_desc(node)}")
        if isinstance(schema, Const):
            if isinstance(node, Scalar) and _same_value(node, schema.scalar):
                return False
            if not isinstance(node, Scalar):
                return self._add(parts, SHAPE_MISMATCH, f"expected a scalar, got {_node_desc(node)}")
            return self._add(parts, ENUM_VIOLATION, f"expected {_show(schema.value)}, got {_show(node.value)}")
        if isinstance(schema, EnumSet):
            if isinstance(node, Scalar) and any(_same_value(node, o.scalar) for o in schema.options):
                return False
            if not isinstance(node, Scalar):
                return self._add(parts, SHAPE_MISMATCH, f"expected a scalar, got {_node_desc(node)}")
            return self._add(parts, ENUM_VIOLATION, f"{_show(node.value)} is not {describe(schema)}")
        if isinstance(schema, MappingSchema):
            if not isinstance(node, Mapping):
                return self._add(parts, SHAPE_MISMATCH, f"expected a mapping, got {_node_desc(node)}")
            for key, child in node.items():
                parts.append(key)
                try:
                    if key not in schema:
                        if self._add(parts, UNKNOWN_FIELD, f"field {key!r} is not allowed"):
                            return True
                    elif self.visit(child, schema[key], parts):
                        return True
                finally:
                    parts.pop()
            if not self.partial:
                for key in schema.required:
                    if key not in node:
                        parts.append(key)
                        stop = self._add(parts, MISSING_REQUIRED, f"required field {key!r} is missing")
                        parts.pop()
                        if stop:
                            return True
            return False
        if isinstance(schema, SequenceSchema):
            if not isinstance(node, Sequence):
                return self._add(parts, SHAPE_MISMATCH, f"expected a sequence, got {_node_desc(node)}")
            for i, item in enumerate(node.items):
                parts.append(i)
                try:
                    if schema.element is None:
                        if self._add(parts, UNKNOWN_FIELD, "sequence must be empty"):
                            return True
                    elif self.visit(item, schema.element, parts):
                        return True
                finally:
                    parts.pop()
            return False
        raise TypeError(f"not a schema node: {schema!r}")


def value_matches(node: DocNode, schema) -> tuple[bool, FieldPath | None]:
    """Whether ``schema`` admits ``node``; on failure also the mismatch path.

    The path is the first violation found depth-first in document order.
    """
    found = Checker().run(node, schema)
    if not found:
        return True, None
    return False, generalize(found[0].parts)


def check(node: DocNode, schema, *, partial: bool = False, collect: bool = False, parts=()) -> list[Violation]:
    return Checker(partial=partial, collect=collect).run(node, schema, parts)
