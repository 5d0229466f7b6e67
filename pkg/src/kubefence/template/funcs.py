"""Go/Sprig value semantics: printing, truthiness, quoting and ``toYaml``."""

from __future__ import annotations

import math
from decimal import Decimal

from ..errors import RenderError
from ..model.emit import dump_document
from ..model.nodes import INTEGER, NULL, STRING, Mapping, Scalar, Sequence
from ..model.schema import OPEN_DICT_KEY, OPEN_LIST_ITEM


class Ph:
    """A placeholder leaf flowing through rendering.

    ``token`` is one of the six placeholder tokens, or ``any`` for an element
    of a ``[list]``/``{dict}`` placeholder whose shape is unknown. ``path``
    identifies the origin so repeated conditions on it agree.
    """

    __slots__ = ("token", "path")

    def __init__(self, token: str, path: str):
        self.token = token
        self.path = path

    def __repr__(self) -> str:
        return f"Ph({self.token}, {self.path})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Ph) and other.token == self.token and other.path == self.path

    def __hash__(self) -> int:
        return hash((self.token, self.path))

    @property
    def text(self) -> str:
        return "string" if self.token == "any" else self.token

    @property
    def container(self) -> bool:
        return self.token in ("[list]", "{dict}", "any")


class _Missing:
    """A key absent from its map; falsy, prints as an error."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __bool__(self) -> bool:
        return False


MISSING = _Missing()


def go_float(value: float) -> str:
    """Format like Go's ``strconv.FormatFloat(v, 'g', -1, 64)``."""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "+Inf" if value > 0 else "-Inf"
    if value == 0:
        return "-0" if math.copysign(1.0, value) < 0 else "0"
    sign, digits, exponent = Decimal(repr(value)).as_tuple()
    text = "".join(map(str, digits))
    exp10 = exponent + len(text) - 1
    text = text.rstrip("0") or "0"
    prefix = "-" if sign else ""
    if exp10 < -4 or exp10 >= 6:
        mant = text[0] + ("." + text[1:] if len(text) > 1 else "")
        return f"{prefix}{mant}e{'+' if exp10 >= 0 else '-'}{abs(exp10):02d}"
    if exp10 >= 0:
        whole = text[: exp10 + 1].ljust(exp10 + 1, "0")
        frac = text[exp10 + 1:]
    else:
        whole = "0"
        frac = "0" * (-exp10 - 1) + text
    return prefix + whole + ("." + frac if frac else "")


def go_print(value) -> str:
    """Text produced by ``{{ value }}`` (``fmt`` %v, nil printed empty)."""
    if value is None or value is MISSING:
        return ""
    if isinstance(value, Ph):
        return value.text
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, float):
        return go_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        inner = " ".join(f"{k}:{_nested(v)}" for k, v in sorted(value.items()))
        return f"map[{inner}]"
    if isinstance(value, list):
        return "[" + " ".join(_nested(v) for v in value) + "]"
    return str(value)


def _nested(value) -> str:
    return "<nil>" if value is None else go_print(value)


def truthy(value) -> bool:
    """Go template truth for concrete values (placeholders are decided elsewhere)."""
    if value is None or value is MISSING:
        return False
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value != 0
    if isinstance(value, (str, list, dict)):
        return len(value) > 0
    return True


def go_quote(text: str) -> str:
    """Go ``%q`` / ``strconv.Quote``."""
    out = ['"']
    for ch in text:
        o = ord(ch)
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch in "\a\b\f\n\r\t\v":
            out.append({"\a": "\\a", "\b": "\\b", "\f": "\\f", "\n": "\\n", "\r": "\\r", "\t": "\\t", "\v": "\\v"}[ch])
        elif o < 0x20 or o == 0x7F:
            out.append(f"\\x{o:02x}")
        elif ch == " " or ch.isprintable():
            out.append(ch)
        elif o < 0x10000:
            out.append(f"\\u{o:04x}")
        else:
            out.append(f"\\U{o:08x}")
    out.append('"')
    return "".join(out)


# -- toYaml ----------------------------------------------------------------------

def _raw(text: str) -> Scalar:
    return Scalar(text, STRING, "raw")


def to_node(value):
    """Convert a render value to a tree the way Helm's JSON round trip sees it."""
    if isinstance(value, Ph):
        # Open containers become a sentinel entry so the output stays valid
        # YAML when spliced into an enclosing mapping or list.
        if value.token in ("{dict}", "any"):
            return Mapping({OPEN_DICT_KEY: Scalar(None, NULL)})
        if value.token == "[list]":
            return Sequence((Scalar(OPEN_LIST_ITEM, STRING),))
        return _raw(value.token)
    if value is None or value is MISSING:
        return Scalar(None, NULL)
    if isinstance(value, bool):
        return Scalar.of(value)
    if isinstance(value, int):
        return Scalar(value, INTEGER)
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value) and abs(value) < 1e21:
            return Scalar(int(value), INTEGER)
        return _raw(go_float(value))
    if isinstance(value, str):
        return Scalar(value, STRING)
    if isinstance(value, dict):
        return Mapping({str(k): to_node(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return Sequence(tuple(to_node(v) for v in value))
    raise RenderError(f"toYaml cannot encode {type(value).__name__}")


def to_yaml(value) -> str:
    text = dump_document(to_node(value), sort_keys=True, go_compat=True)
    return text[:-1] if text.endswith("\n") else text


# -- typed argument helpers ---------------------------------------------------------

def as_string(value, fn: str) -> str | Ph:
    if isinstance(value, (str, Ph)):
        return value
    raise RenderError(f"{fn}: expected string, got {type_name(value)}")


def as_int(value, fn: str) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    raise RenderError(f"{fn}: expected int, got {type_name(value)}")


def type_name(value) -> str:
    if value is None or value is MISSING:
        return "nil"
    if isinstance(value, Ph):
        return "placeholder"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float64"
    if isinstance(value, str):
        return "string"
    if isinstance(value, dict):
        return "map"
    if isinstance(value, list):
        return "slice"
    return type(value).__name__


def go_basic_kind(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if value is None or value is MISSING:
        return "nil"
    return "other"


def go_eq(a, b) -> bool:
    ka, kb = go_basic_kind(a), go_basic_kind(b)
    if ka == "nil" or kb == "nil":
        return ka == kb
    if ka == "other" or kb == "other":
        raise RenderError(f"eq: invalid type for comparison ({type_name(a)}, {type_name(b)})")
    if ka != kb:
        raise RenderError(f"eq: incompatible types for comparison ({type_name(a)}, {type_name(b)})")
    return a == b


def trunc(count: int, text: str) -> str:
    if count < 0 and len(text) + count > 0:
        return text[len(text) + count:]
    if count >= 0 and len(text) > count:
        return text[:count]
    return text


def indent(spaces: int, text: str) -> str:
    pad = " " * spaces
    return pad + text.replace("\n", "\n" + pad)
