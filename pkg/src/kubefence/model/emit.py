"""Block-style YAML emitter.

Scalar quoting follows the rules of the Go ``yaml.v2`` encoder (the library
behind Helm's ``toYaml``): strings that would resolve to another type are
double-quoted, strings that cannot be plain are single-quoted, multi-line
strings use literal blocks, and sequences nested in mappings are not
indented. Matching those rules keeps built-in rendering byte-compatible with
``helm template``.
"""

from __future__ import annotations

import functools
import re

from .nodes import FLOAT, STRING, DocNode, Mapping, Scalar, Sequence, resolve_plain, scalar_text

PLACEHOLDER_TOKENS = frozenset({"bool", "int", "string", "IP", "[list]", "{dict}"})

# -- yaml.v2 plain-scalar resolution ---------------------------------------

_V2_SPECIAL = frozenset(
    "y Y yes Yes YES n N no No NO true True TRUE false False FALSE on On ON off Off OFF "
    "~ null Null NULL .nan .NaN .NAN .inf .Inf .INF +.inf +.Inf +.INF -.inf -.Inf -.INF <<".split()
) | {""}
_V2_INT = re.compile(r"^[-+]?(?:0[xX][0-9a-fA-F]+|0[oO]?[0-7]+|0[bB][01]+|[1-9][0-9]*|0)$")
_V2_FLOAT = re.compile(r"^[-+]?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?)(?:[eE][-+]?[0-9]+)?$")
_V2_BASE60 = re.compile(r"^[-+]?[0-9][0-9_]*(?::[0-5]?[0-9])+(?:\.[0-9_]*)?$")
_V2_TIMESTAMP = re.compile(r"^[0-9]{4}-[0-9]{1,2}-[0-9]{1,2}(?:(?:[Tt]|[ \t]+)[0-9]{1,2}:[0-9]{2}:[0-9]{2}(?:\.[0-9]*)?(?:[ \t]*(?:Z|[-+][0-9]{1,2}(?::[0-9]{2})?))?)?$")


def v2_resolves_nonstring(text: str) -> bool:
    if text in _V2_SPECIAL:
        return True
    if text and text[0] in "+-.0123456789":
        plain = text.replace("_", "")
        if _V2_INT.match(plain) or _V2_FLOAT.match(plain):
            return True
        if text[0].isdigit() and _V2_TIMESTAMP.match(text):
            return True
    return bool(_V2_BASE60.match(text))


def core_resolves_nonstring(text: str) -> bool:
    return resolve_plain(text)[1] != STRING


# -- libyaml scalar analysis ----------------------------------------------

def _printable(ch: str) -> bool:
    o = ord(ch)
    return (
        o == 0x0A
        or 0x20 <= o <= 0x7E
        or o == 0x85
        or 0xA0 <= o <= 0xD7FF
        or (0xE000 <= o <= 0xFFFD and o != 0xFEFF)
        or 0x10000 <= o <= 0x10FFFF
    )


_BREAKS = "\n\r\x85  "


class _Analysis:
    __slots__ = ("multiline", "flow_plain", "block_plain", "single", "block")

    def __init__(self, text: str):
        self.multiline = False
        if not text:
            self.flow_plain = self.block_plain = False
            self.single = self.block = True
            return
        flow_ind = block_ind = False
        if text.startswith("---") or text.startswith("..."):
            flow_ind = block_ind = True
        special = line_breaks = False
        leading_space = leading_break = trailing_space = trailing_break = False
        space_break = break_space = False
        prev_space = prev_break = False
        preceded_by_ws = True
        n = len(text)
        for i, ch in enumerate(text):
            followed_by_ws = i + 1 >= n or text[i + 1] in " \t" + _BREAKS
            if i == 0:
                if ch in "#,[]{}&*!|>'\"%@`":
                    flow_ind = block_ind = True
                if ch in "?:":
                    flow_ind = True
                    if followed_by_ws:
                        block_ind = True
                if ch == "-" and followed_by_ws:
                    flow_ind = block_ind = True
            else:
                if ch in ",?[]{}":
                    flow_ind = True
                if ch == ":":
                    flow_ind = True
                    if followed_by_ws:
                        block_ind = True
                if ch == "#" and preceded_by_ws:
                    flow_ind = block_ind = True
            if not _printable(ch) or ch == "﻿":
                special = True
            if ch in _BREAKS:
                line_breaks = True
            if ch == " ":
                if i == 0:
                    leading_space = True
                if i == n - 1:
                    trailing_space = True
                if prev_break:
                    break_space = True
                prev_space, prev_break = True, False
            elif ch in _BREAKS:
                if i == 0:
                    leading_break = True
                if i == n - 1:
                    trailing_break = True
                if prev_space:
                    space_break = True
                prev_space, prev_break = False, True
            else:
                prev_space = prev_break = False
            preceded_by_ws = ch in " \t" + _BREAKS
        self.multiline = line_breaks
        self.flow_plain = self.block_plain = self.single = self.block = True
        if leading_space or leading_break or trailing_space or trailing_break:
            self.flow_plain = self.block_plain = False
        if trailing_space:
            self.block = False
        if break_space:
            self.flow_plain = self.block_plain = self.single = False
        if space_break or special:
            self.flow_plain = self.block_plain = self.single = self.block = False
        if line_breaks:
            self.flow_plain = self.block_plain = False
        if flow_ind:
            self.flow_plain = False
        if block_ind:
            self.block_plain = False


_ESCAPES = {
    "\0": "0", "\a": "a", "\b": "b", "\t": "t", "\n": "n", "\v": "v", "\f": "f",
    "\r": "r", "\x1b": "e", '"': '"', "\\": "\\", "\x85": "N", "\xa0": "_",
    " ": "L", " ": "P",
}


def double_quote(text: str) -> str:
    out = ['"']
    for ch in text:
        if ch in _ESCAPES:
            out.append("\\" + _ESCAPES[ch])
        elif _printable(ch) and ch != "﻿":
            out.append(ch)
        elif ord(ch) <= 0xFF:
            out.append(f"\\x{ord(ch):02X}")
        elif ord(ch) <= 0xFFFF:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(f"\\U{ord(ch):08X}")
    out.append('"')
    return "".join(out)


def single_quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


# -- yaml.v2 map key order --------------------------------------------------

def _v2_key_cmp(a: str, b: str) -> int:
    ar, br = a, b
    digits = False
    i = 0
    while i < len(ar) and i < len(br):
        if ar[i] == br[i]:
            digits = ar[i].isdigit()
            i += 1
            continue
        al, bl = ar[i].isalpha(), br[i].isalpha()
        if al and bl:
            return -1 if ar[i] < br[i] else 1
        if al or bl:
            if digits:
                return -1 if al else 1
            return -1 if bl else 1
        an = bn = 0
        if ar[i] == "0" or br[i] == "0":
            j = i - 1
            while j >= 0 and ar[j].isdigit():
                if ar[j] != "0":
                    an = bn = 1
                    break
                j -= 1
        ai = i
        while ai < len(ar) and ar[ai].isdigit():
            an = an * 10 + int(ar[ai])
            ai += 1
        bi = i
        while bi < len(br) and br[bi].isdigit():
            bn = bn * 10 + int(br[bi])
            bi += 1
        if an != bn:
            return -1 if an < bn else 1
        if ai != bi:
            return -1 if ai < bi else 1
        return -1 if ar[i] < br[i] else 1
    if len(ar) == len(br):
        return 0
    return -1 if len(ar) < len(br) else 1


v2_key = functools.cmp_to_key(_v2_key_cmp)


# -- emitter ----------------------------------------------------------------

class Emitter:
    """Serialize document trees as block YAML.

    ``go_compat`` restricts type-ambiguity checks to the yaml.v2 resolver so
    output matches Helm exactly; otherwise strings ambiguous under either
    resolver are quoted. ``quote_tokens`` forces quotes around strings that
    spell a placeholder token, keeping them distinct from real placeholders
    (which are emitted from ``style="raw"`` scalars).
    """

    def __init__(self, *, sort_keys: bool = False, go_compat: bool = False, quote_tokens: bool = False):
        self.sort_keys = sort_keys
        self.go_compat = go_compat
        self.quote_tokens = quote_tokens

    def dump(self, node: DocNode) -> str:
        if isinstance(node, Scalar) and node.kind == STRING and self._is_literal(node, key=False):
            return "\n".join(self._literal(node.value, "", 2)) + "\n"
        return "\n".join(self._lines(node, 0)) + "\n"

    # scalars
    def _ambiguous(self, text: str) -> bool:
        if v2_resolves_nonstring(text):
            return True
        return not self.go_compat and core_resolves_nonstring(text)

    def _is_literal(self, node: Scalar, key: bool) -> bool:
        if node.style == "raw" or key or node.kind != STRING:
            return False
        if any(ch in node.value for ch in _BREAKS[1:]):
            return False  # readers fold these breaks inside block scalars
        a = _Analysis(node.value)
        return a.multiline and a.block

    def scalar(self, node: Scalar, *, flow: bool = False, key: bool = False) -> str:
        if node.style == "raw":
            return node.value
        if node.kind != STRING:
            return scalar_text(node.value) if node.kind != FLOAT or not self.go_compat else node.text
        text = node.value
        if self.quote_tokens and text in PLACEHOLDER_TOKENS:
            return double_quote(text)
        if self._ambiguous(text):
            return double_quote(text)
        a = _Analysis(text)
        if a.multiline:
            return double_quote(text)
        plain_ok = a.flow_plain if flow else a.block_plain
        if plain_ok:
            return text
        if not text and not flow and not key:
            return double_quote(text)
        if a.single:
            return single_quote(text)
        return double_quote(text)

    def _literal(self, text: str, head: str, indent: int) -> list[str]:
        if text.endswith("\n\n") or text == "\n":
            chomp = "+"
        elif text.endswith("\n"):
            chomp = ""
        else:
            chomp = "-"
        indicator = "2" if text[:1] in (" ", "\n") else ""
        body = text[:-1] if text.endswith("\n") else text
        lines = [f"{head}|{indicator}{chomp}"]
        pad = " " * indent
        for line in body.split("\n"):
            lines.append(pad + line if line else "")
        return lines

    # collections
    def _keys(self, mapping: Mapping):
        keys = list(mapping.keys())
        if self.sort_keys:
            keys.sort(key=v2_key)
        return keys

    def _key(self, key: str) -> str:
        return self.scalar(Scalar(key, STRING), key=True)

    def flow(self, node: DocNode) -> str:
        tag = f"{node.tag} " if node.tag else ""
        if isinstance(node, Scalar):
            return tag + self.scalar(node, flow=True)
        if isinstance(node, Sequence):
            return tag + "[" + ", ".join(self.flow(item) for item in node.items) + "]"
        parts = []
        for key in self._keys(node):
            value = node[key]
            k = self.scalar(Scalar(key, STRING), flow=True, key=True)
            if isinstance(value, Scalar) and value.value is None and value.style != "raw":
                parts.append(k)
            else:
                parts.append(f"{k}: {self.flow(value)}")
        return tag + "{" + ", ".join(parts) + "}"

    def _inline(self, node: DocNode) -> str | None:
        """Text for nodes that fit on the current line, else None."""
        if isinstance(node, Scalar):
            return None if self._is_literal(node, key=False) else self.scalar(node)
        if node.flow:
            return self.flow(node)
        if len(node) == 0:
            return "{}" if isinstance(node, Mapping) else "[]"
        return None

    def _lines(self, node: DocNode, indent: int) -> list[str]:
        pad = " " * indent
        inline = self._inline(node)
        if inline is not None:
            flowed = isinstance(node, (Mapping, Sequence)) and node.flow
            tag = f"{node.tag} " if node.tag and not flowed else ""
            return [pad + tag + inline]
        if isinstance(node, Scalar):
            return self._literal(node.value, pad, indent)
        if isinstance(node, Mapping):
            return self._mapping_lines(node, indent)
        return self._sequence_lines(node, indent)

    def _mapping_lines(self, node: Mapping, indent: int) -> list[str]:
        pad = " " * indent
        out: list[str] = []
        for key in self._keys(node):
            value = node[key]
            head = f"{pad}{self._key(key)}:"
            tag = f" {value.tag}" if value.tag else ""
            inline = self._inline(value)
            if inline is not None:
                if isinstance(value, (Mapping, Sequence)) and value.flow:
                    tag = ""
                out.append(f"{head}{tag} {inline}")
            elif isinstance(value, Scalar):
                out.extend(self._literal(value.value, head + tag + " ", indent + 2))
            elif isinstance(value, Mapping):
                out.append(head + tag)
                out.extend(self._mapping_lines(value, indent + 2))
            else:
                out.append(head + tag)
                out.extend(self._sequence_lines(value, indent))
        return out

    def _sequence_lines(self, node: Sequence, indent: int) -> list[str]:
        pad = " " * indent
        out: list[str] = []
        for item in node.items:
            inline = self._inline(item)
            if inline is not None:
                tag = f"{item.tag} " if item.tag and not (isinstance(item, (Mapping, Sequence)) and item.flow) else ""
                out.append(f"{pad}- {tag}{inline}")
                continue
            if isinstance(item, Scalar):
                out.extend(self._literal(item.value, pad + "- ", indent + 2))
                continue
            if item.tag:
                out.append(f"{pad}- {item.tag}")
                out.extend(self._lines(item, indent + 2))
                continue
            lines = self._lines(item, indent + 2)
            lines[0] = pad + "- " + lines[0][indent + 2:]
            out.extend(lines)
        return out


def dump_document(node: DocNode, *, sort_keys: bool = False, go_compat: bool = False,
                  quote_tokens: bool = False) -> str:
    """Serialize ``node`` as block YAML ending in a newline."""
    return Emitter(sort_keys=sort_keys, go_compat=go_compat, quote_tokens=quote_tokens).dump(node)
