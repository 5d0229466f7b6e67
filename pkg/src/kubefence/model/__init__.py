"""Document trees, field paths, placeholders and schema matching."""

from .emit import dump_document
from .nodes import (
    BOOLEAN,
    FLOAT,
    INTEGER,
    NULL,
    STRING,
    DocNode,
    Mapping,
    Scalar,
    Sequence,
    from_python,
    get_path,
    resolve_plain,
    to_python,
)
from .parse import parse_document, parse_json, parse_yaml, parse_yaml_stream
from .paths import ELEM, FieldPath, PathPattern, concrete_path, generalize
from .schema import (
    PIN,
    REQUIRE_AND_PIN,
    Const,
    EnumSet,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SchemaNode,
    SequenceSchema,
    Violation,
    check,
    infer_placeholder,
    is_ipv4,
    value_matches,
)

__all__ = [
    "BOOLEAN", "FLOAT", "INTEGER", "NULL", "STRING",
    "DocNode", "Mapping", "Scalar", "Sequence",
    "from_python", "get_path", "resolve_plain", "to_python",
    "parse_document", "parse_json", "parse_yaml", "parse_yaml_stream", "dump_document",
    "ELEM", "FieldPath", "PathPattern", "concrete_path", "generalize",
    "PIN", "REQUIRE_AND_PIN", "Const", "EnumSet", "LockedConstant", "MappingSchema",
    "Placeholder", "SchemaNode", "SequenceSchema", "Violation",
    "check", "infer_placeholder", "is_ipv4", "value_matches",
]
