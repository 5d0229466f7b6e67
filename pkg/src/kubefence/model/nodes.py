"""In-memory document tree: scalars, sequences and mappings with positions.

Nodes are immutable. Equality is structural: positions, quoting style and
flow/block layout are carried for diagnostics and emission but never take
part in comparisons.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Union

BOOLEAN = "boolean"
INTEGER = "integer"
FLOAT = "float"
STRING = "string"
NULL = "null"

SCALAR_KINDS = (BOOLEAN, INTEGER, FLOAT, STRING, NULL)


@dataclass(frozen=True)
class Scalar:
    value: Any
    kind: str
    style: str = field(default="plain", compare=False)
    line: int | None = field(default=None, compare=False, repr=False)
    column: int | None = field(default=None, compare=False, repr=False)
    tag: str | None = None

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown scalar kind {self.kind!r}")

    @classmethod
    def of(cls, value: Any, style: str | None = None) -> "Scalar":
        if value is None:
            kind = NULL
        elif isinstance(value, bool):
            kind = BOOLEAN
        elif isinstance(value, int):
            kind = INTEGER
        elif isinstance(value, float):
            kind = FLOAT
        elif isinstance(value, str):
            kind = STRING
        else:
            raise TypeError(f"not a scalar: {value!r}")
        if style is None:
            style = "quoted" if kind == STRING and resolve_plain(value)[1] != STRING else "plain"
        return cls(value, kind, style)

    @property
    def quoted(self) -> bool:
        return self.style != "plain"

    @property
    def text(self) -> str:
        return scalar_text(self.value)

    def __hash__(self):
        if self.kind == FLOAT and math.isnan(self.value):
            return hash((self.kind, "nan"))
        return hash((self.kind, self.value, self.tag))


@dataclass(frozen=True)
class Sequence:
    items: tuple = ()
    flow: bool = field(default=False, compare=False)
    line: int | None = field(default=None, compare=False, repr=False)
    column: int | None = field(default=None, compare=False, repr=False)
    tag: str | None = None

    def __iter__(self) -> Iterator["DocNode"]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> "DocNode":
        return self.items[index]


@dataclass(frozen=True)
class Mapping:
    entries: dict = field(default_factory=dict)
    flow: bool = field(default=False, compare=False)
    line: int | None = field(default=None, compare=False, repr=False)
    column: int | None = field(default=None, compare=False, repr=False)
    tag: str | None = None

    __hash__ = None  # type: ignore[assignment]

    def __getitem__(self, key: str) -> "DocNode":
        return self.entries[key]

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def items(self):
        return self.entries.items()

    def keys(self):
        return self.entries.keys()


DocNode = Union[Scalar, Sequence, Mapping]


def is_scalar(node) -> bool:
    return isinstance(node, Scalar)


def node_type(node) -> str:
    if isinstance(node, Mapping):
        return "mapping"
    if isinstance(node, Sequence):
        return "sequence"
    return "scalar"


# -- YAML 1.2 core schema ----------------------------------------------------

_NULL_RE = re.compile(r"^(?:~|null|Null|NULL|)$")
_BOOL_RE = re.compile(r"^(?:true|True|TRUE|false|False|FALSE)$")
_INT10_RE = re.compile(r"^[-+]?[0-9]+$")
_INT8_RE = re.compile(r"^0o[0-7]+$")
_INT16_RE = re.compile(r"^0x[0-9a-fA-F]+$")
_FLOAT_RE = re.compile(r"^[-+]?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?)(?:[eE][-+]?[0-9]+)?$")
_INF_RE = re.compile(r"^[-+]?\.(?:inf|Inf|INF)$")
_NAN_RE = re.compile(r"^\.(?:nan|NaN|NAN)$")


def resolve_plain(text: str) -> tuple[Any, str]:
    """Resolve an untagged plain scalar per the YAML 1.2 core schema."""
    if _NULL_RE.match(text):
        return None, NULL
    if _BOOL_RE.match(text):
        return text[0] in "tT", BOOLEAN
    if _INT10_RE.match(text):
        return int(text), INTEGER
    if _INT8_RE.match(text):
        return int(text[2:], 8), INTEGER
    if _INT16_RE.match(text):
        return int(text[2:], 16), INTEGER
    if _FLOAT_RE.match(text):
        return float(text), FLOAT
    if _INF_RE.match(text):
        return (-math.inf if text.startswith("-") else math.inf), FLOAT
    if _NAN_RE.match(text):
        return math.nan, FLOAT
    return text, STRING


def scalar_text(value: Any) -> str:
    """Canonical plain text of a Python scalar value."""
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ".nan"
        if math.isinf(value):
            return ".inf" if value > 0 else "-.inf"
        text = repr(value)
        return text
    return str(value)


# -- conversion from/to plain Python ----------------------------------------

def from_python(obj: Any) -> DocNode:
    """Build a document tree from JSON-like Python data (dict/list/scalars)."""
    if isinstance(obj, (Scalar, Sequence, Mapping)):
        return obj
    if isinstance(obj, dict):
        entries = {}
        for key, value in obj.items():
            if not isinstance(key, str):
                key = scalar_text(key)
            entries[key] = from_python(value)
        return Mapping(entries)
    if isinstance(obj, (list, tuple)):
        return Sequence(tuple(from_python(v) for v in obj))
    return Scalar.of(obj)


def to_python(node: DocNode) -> Any:
    if isinstance(node, Mapping):
        return {k: to_python(v) for k, v in node.entries.items()}
    if isinstance(node, Sequence):
        return [to_python(v) for v in node.items]
    return node.value


def get_path(node: DocNode, keys) -> DocNode | None:
    """Follow mapping keys from ``node``; None when any step is missing."""
    for key in keys:
        if not isinstance(node, Mapping) or key not in node:
            return None
        node = node[key]
    return node
