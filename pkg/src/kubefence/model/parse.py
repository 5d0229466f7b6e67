"""YAML and JSON front ends producing :mod:`kubefence.model.nodes` trees."""

from __future__ import annotations

import json
import math

import yaml
from yaml import events as ev

from ..errors import (
    DocumentSyntaxError,
    DuplicateKey,
    MultipleDocuments,
    UnsupportedYamlFeature,
)
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
    resolve_plain,
)

try:
    _Loader = yaml.CSafeLoader
except AttributeError:  # pragma: no cover - libyaml missing
    _Loader = yaml.SafeLoader

_STD = "tag:yaml.org,2002:"


def _decode(text) -> str:
    if isinstance(text, (bytes, bytearray, memoryview)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentSyntaxError(f"invalid UTF-8: {exc.reason}") from None
    return text


def _mark(event):
    mark = event.start_mark
    return (mark.line + 1, mark.column + 1) if mark is not None else (None, None)


class _Composer:
    def __init__(self, events, allowed_tags):
        self._events = events
        self._allowed = frozenset(allowed_tags)

    def next(self):
        try:
            return next(self._events)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
            raise DocumentSyntaxError(exc.problem or str(exc), line, col) from None
        except yaml.YAMLError as exc:
            raise DocumentSyntaxError(str(exc)) from None

    def documents(self):
        event = self.next()
        assert isinstance(event, ev.StreamStartEvent)
        while True:
            event = self.next()
            if isinstance(event, ev.StreamEndEvent):
                return
            assert isinstance(event, ev.DocumentStartEvent)
            first = self.next()
            if isinstance(first, ev.DocumentEndEvent):
                yield Scalar(None, NULL)
                continue
            node = self.node(first)
            end = self.next()
            assert isinstance(end, ev.DocumentEndEvent)
            yield node

    def _check(self, event):
        line, col = _mark(event)
        if isinstance(event, ev.AliasEvent):
            raise UnsupportedYamlFeature(f"aliases are not supported (line {line}, column {col})")
        if getattr(event, "anchor", None) is not None:
            raise UnsupportedYamlFeature(f"anchors are not supported (line {line}, column {col})")
        tag = getattr(event, "tag", None)
        if tag is None or tag == "!" or tag.startswith(_STD) or tag in self._allowed:
            return tag if tag not in (None, "!") else None
        raise UnsupportedYamlFeature(f"custom tag {tag!r} is not supported (line {line}, column {col})")

    def node(self, event) -> DocNode:
        tag = self._check(event)
        line, col = _mark(event)
        if isinstance(event, ev.ScalarEvent):
            return self.scalar(event, tag, line, col)
        if isinstance(event, ev.SequenceStartEvent):
            items = []
            while True:
                child = self.next()
                if isinstance(child, ev.SequenceEndEvent):
                    break
                items.append(self.node(child))
            custom = tag if tag and not tag.startswith(_STD) else None
            return Sequence(tuple(items), bool(event.flow_style), line, col, custom)
        if isinstance(event, ev.MappingStartEvent):
            entries: dict[str, DocNode] = {}
            while True:
                kev = self.next()
                if isinstance(kev, ev.MappingEndEvent):
                    break
                key = self.node(kev)
                if not isinstance(key, Scalar):
                    kl, kc = _mark(kev)
                    raise DocumentSyntaxError("complex mapping keys are not supported", kl, kc)
                ktext = key.value if key.kind == STRING else key.text
                if ktext == "<<" and key.style == "plain":
                    raise UnsupportedYamlFeature("merge keys are not supported")
                if ktext in entries:
                    kl, kc = _mark(kev)
                    raise DuplicateKey(f"duplicate key {ktext!r}", kl, kc)
                entries[ktext] = self.node(self.next())
            custom = tag if tag and not tag.startswith(_STD) else None
            return Mapping(entries, bool(event.flow_style), line, col, custom)
        raise DocumentSyntaxError(f"unexpected {type(event).__name__}", line, col)

    def scalar(self, event, tag, line, col) -> Scalar:
        text = event.value
        style = "plain" if event.style in (None, "") else {
            "'": "single", '"': "double", "|": "literal", ">": "folded",
        }.get(event.style, "quoted")
        custom = None
        if tag is None:
            if style == "plain":
                value, kind = resolve_plain(text)
            else:
                value, kind = text, STRING
        elif tag.startswith(_STD):
            value, kind = _coerce(tag[len(_STD):], text, line, col)
        else:
            value, kind = resolve_plain(text) if style == "plain" else (text, STRING)
            custom = tag
        return Scalar(value, kind, style, line, col, custom)


def _coerce(name, text, line, col):
    if name == "str":
        return text, STRING
    value, kind = resolve_plain(text)
    wanted = {"int": INTEGER, "float": FLOAT, "bool": BOOLEAN, "null": NULL}.get(name)
    if wanted is None:
        raise UnsupportedYamlFeature(f"tag !!{name} is not supported (line {line}, column {col})")
    if wanted == FLOAT and kind == INTEGER:
        return float(value), FLOAT
    if kind != wanted:
        raise DocumentSyntaxError(f"{text!r} is not a valid !!{name}", line, col)
    return value, kind


def _yaml_documents(text, allowed_tags=()):
    composer = _Composer(yaml.parse(text, Loader=_Loader), allowed_tags)
    return composer.documents()


def parse_yaml(text, *, allowed_tags=()) -> DocNode:
    text = _decode(text)
    docs = _yaml_documents(text, allowed_tags)
    first = next(docs, None)
    if first is None:
        return Scalar(None, NULL)
    if next(docs, None) is not None:
        raise MultipleDocuments("multiple YAML documents; split them with split_manifests first")
    return first


def parse_yaml_stream(text, *, allowed_tags=()) -> list[DocNode]:
    return list(_yaml_documents(_decode(text), allowed_tags))


def _pairs(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise DuplicateKey(f"duplicate key {key!r}")
        out[key] = value
    return out


def _const(name):
    raise DocumentSyntaxError(f"invalid JSON constant {name}")


def _from_json(obj) -> DocNode:
    if isinstance(obj, dict):
        return Mapping({k: _from_json(v) for k, v in obj.items()})
    if isinstance(obj, list):
        return Sequence(tuple(_from_json(v) for v in obj))
    if isinstance(obj, str):
        return Scalar(obj, STRING, "double")
    if isinstance(obj, float) and not math.isfinite(obj):
        raise DocumentSyntaxError("non-finite number")
    return Scalar.of(obj)


def parse_json(text) -> DocNode:
    text = _decode(text)
    try:
        data = json.loads(text, object_pairs_hook=_pairs, parse_constant=_const)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return _from_json(data)


def parse_document(text, format: str = "yaml", *, allowed_tags=()) -> DocNode:
    """Parse one YAML or JSON document into a tree.

    YAML anchors, aliases, merge keys and custom tags (other than those in
    ``allowed_tags``) are rejected. Multi-document streams raise
    :class:`MultipleDocuments`.
    """
    if format == "json":
        return parse_json(text)
    if format == "yaml":
        return parse_yaml(text, allowed_tags=allowed_tags)
    raise ValueError(f"unknown format {format!r}")
