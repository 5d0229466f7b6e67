"""Field paths (``spec.containers[].image``) and prefix-wildcard patterns."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union


class _Elem:
    """Sequence-element segment, rendered as ``[]``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ELEM"

    def __reduce__(self):
        return (_Elem, ())


ELEM = _Elem()
Segment = Union[str, _Elem]

_SPECIAL = set(".[]\\")


def _escape(key: str) -> str:
    return "".join("\\" + ch if ch in _SPECIAL else ch for ch in key)


@dataclass(frozen=True)
class FieldPath:
    segments: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "FieldPath":
        if text in ("", "."):
            return cls(())
        segments: list[Segment] = []
        buf: list[str] = []
        have_key = False
        i = 0
        while i < len(text):
            ch = text[i]
            if ch == "\\":
                if i + 1 >= len(text):
                    raise ValueError(f"dangling escape in path {text!r}")
                buf.append(text[i + 1])
                have_key = True
                i += 2
                continue
            if ch == ".":
                if have_key:
                    segments.append("".join(buf))
                elif not segments or segments[-1] is not ELEM:
                    raise ValueError(f"empty segment in path {text!r}")
                buf, have_key = [], False
            elif text.startswith("[]", i):
                if have_key:
                    segments.append("".join(buf))
                    buf, have_key = [], False
                segments.append(ELEM)
                i += 2
                continue
            elif ch in "[]":
                raise ValueError(f"unexpected {ch!r} in path {text!r}")
            else:
                buf.append(ch)
                have_key = True
            i += 1
        if have_key:
            segments.append("".join(buf))
        elif text.endswith("."):
            raise ValueError(f"empty segment in path {text!r}")
        return cls(tuple(segments))

    def __str__(self) -> str:
        if not self.segments:
            return "."
        out: list[str] = []
        for seg in self.segments:
            if seg is ELEM:
                out.append("[]")
            else:
                if out:
                    out.append(".")
                out.append(_escape(seg))
        return "".join(out)

    def __repr__(self) -> str:
        return f"FieldPath({str(self)!r})"

    def __len__(self) -> int:
        return len(self.segments)

    def key(self, name: str) -> "FieldPath":
        return FieldPath(self.segments + (name,))

    def elem(self) -> "FieldPath":
        return FieldPath(self.segments + (ELEM,))

    def join(self, other: "FieldPath") -> "FieldPath":
        return FieldPath(self.segments + other.segments)

    @property
    def parent(self) -> "FieldPath":
        return FieldPath(self.segments[:-1])

    @property
    def last(self) -> Segment | None:
        return self.segments[-1] if self.segments else None

    def startswith(self, prefix: "FieldPath") -> bool:
        return self.segments[: len(prefix.segments)] == prefix.segments

    def keys(self) -> tuple[str, ...]:
        """Mapping keys only, dropping element markers."""
        return tuple(s for s in self.segments if s is not ELEM)


def concrete_path(parts: Iterable) -> str:
    """Render a path with numeric indices, e.g. ``spec.containers[0].name``."""
    out: list[str] = []
    for part in parts:
        if isinstance(part, int):
            out.append(f"[{part}]")
        else:
            if out:
                out.append(".")
            out.append(_escape(part))
    return "".join(out) or "."


def generalize(parts: Iterable) -> FieldPath:
    """Turn concrete parts (keys and integer indices) into a FieldPath."""
    return FieldPath(tuple(ELEM if isinstance(p, int) else p for p in parts))


@dataclass(frozen=True)
class PathPattern:
    """A FieldPath optionally prefixed by ``...`` (any leading segments)."""

    path: FieldPath
    anywhere: bool = False

    @classmethod
    def parse(cls, text: str) -> "PathPattern":
        text = text.strip()
        if text.startswith("..."):
            rest = text[3:]
            if rest.startswith("."):
                rest = rest[1:]
            return cls(FieldPath.parse(rest), True)
        return cls(FieldPath.parse(text), False)

    def __str__(self) -> str:
        body = str(self.path)
        if not self.anywhere:
            return body
        return "..." + body

    def matches(self, path: FieldPath) -> bool:
        n = len(self.path.segments)
        if self.anywhere:
            return n <= len(path.segments) and path.segments[len(path.segments) - n:] == self.path.segments
        return path.segments == self.path.segments

    def anchor_split(self) -> tuple["PathPattern", FieldPath]:
        """Split into the anchor pattern and the relative remainder.

        The anchor runs up to the last element marker, or to the parent when
        the pattern has none. Presence requirements are enforced only below
        an existing anchor.
        """
        segs = self.path.segments
        cut = len(segs) - 1
        for i in range(len(segs) - 1, -1, -1):
            if segs[i] is ELEM:
                cut = i + 1
                break
        return PathPattern(FieldPath(segs[:cut]), self.anywhere), FieldPath(segs[cut:])
