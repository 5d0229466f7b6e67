"""Parser for the supported subset of Go text/template as used by Helm charts."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from ..errors import DuplicateDefine, TemplateSyntaxError, UnsupportedFunction

FUNCTIONS = frozenset({
    "default", "quote", "upper", "lower", "indent", "nindent", "toYaml", "trunc",
    "trimSuffix", "eq", "ne", "not", "and", "or", "include",
})

# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Field:
    """Field chain rooted at ``.`` (base="."), ``$`` or a named variable."""

    base: str
    names: tuple = ()


@dataclass(frozen=True)
class Ident:
    name: str
    pos: tuple = (0, 0)


@dataclass(frozen=True)
class Literal:
    value: object


@dataclass(frozen=True)
class SubPipe:
    pipe: "Pipe"
    names: tuple = ()


Arg = Union[Field, Ident, Literal, SubPipe]


@dataclass(frozen=True)
class Command:
    args: tuple


@dataclass(frozen=True)
class Pipe:
    cmds: tuple
    decl: tuple = ()
    assign: bool = False  # `=` rather than `:=`


@dataclass
class Text:
    text: str


@dataclass
class Output:
    pipe: Pipe
    pos: tuple


@dataclass
class If:
    branches: list  # [(Pipe, body)]
    else_body: list | None
    pos: tuple


@dataclass
class Range:
    pipe: Pipe
    body: list
    else_body: list | None
    pos: tuple


@dataclass
class With:
    pipe: Pipe
    body: list
    else_body: list | None
    pos: tuple


@dataclass
class TemplateCall:
    name: str
    pipe: Pipe | None
    pos: tuple


@dataclass
class Define:
    name: str
    body: list
    pos: tuple


@dataclass
class TemplateAst:
    body: list
    defines: dict = field(default_factory=dict)
    name: str = ""


# -- lexing ---------------------------------------------------------------------

_WS = " \t\r\n"
_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<declare>:=)
  | (?P<pipe>\|)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
  | (?P<assign>=)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<raw>`[^`]*`)
  | (?P<char>'(?:[^'\\]|\\.)+')
  | (?P<number>[-+]?(?:0[xX][0-9a-fA-F_]+|0[oO]?[0-7_]+|0[bB][01_]+|(?:[0-9][0-9_]*)?\.?[0-9_]+(?:[eE][-+]?[0-9]+)?))
  | (?P<field>\.[A-Za-z_][A-Za-z0-9_]*)
  | (?P<dot>\.)
  | (?P<var>\$[A-Za-z0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_GO_ESCAPES = {"a": "\a", "b": "\b", "f": "\f", "n": "\n", "r": "\r", "t": "\t", "v": "\v", "\\": "\\", '"': '"', "'": "'"}


def _unquote(body: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _GO_ESCAPES:
            out.append(_GO_ESCAPES[nxt])
            i += 2
        elif nxt == "x":
            out.append(chr(int(body[i + 2:i + 4], 16)))
            i += 4
        elif nxt == "u":
            out.append(chr(int(body[i + 2:i + 6], 16)))
            i += 6
        elif nxt == "U":
            out.append(chr(int(body[i + 2:i + 10], 16)))
            i += 10
        elif nxt in "01234567":
            out.append(chr(int(body[i + 1:i + 4], 8)))
            i += 4
        else:
            raise ValueError(f"unknown escape \\{nxt}")
    return "".join(out)


def _number(text: str):
    clean = text.replace("_", "")
    try:
        if re.fullmatch(r"[-+]?(?:0[xX][0-9a-fA-F]+|0[oO][0-7]+|0[bB][01]+|[0-9]+)", clean):
            sign = -1 if clean.startswith("-") else 1
            body = clean.lstrip("+-")
            if body.lower().startswith(("0x", "0o", "0b")):
                return sign * int(body, 0)
            if len(body) > 1 and body.startswith("0"):
                return sign * int(body, 8)
            return sign * int(body)
        return float(clean)
    except ValueError:
        return None


@dataclass
class _Tok:
    kind: str
    text: str
    pos: tuple
    spaced: bool  # preceded by whitespace


def _position(source: str, offset: int) -> tuple:
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return (line, col)


class _Lexer:
    """Splits a template into text chunks and tokenized actions."""

    def __init__(self, source: str, name: str):
        self.source = source
        self.name = name

    def error(self, message: str, offset: int):
        raise TemplateSyntaxError(message, _position(self.source, offset), self.name)

    def chunks(self):
        """Yield ("text", str) and ("action", tokens, pos) items."""
        src = self.source
        i = 0
        trim_next = False
        while True:
            j = src.find("{{", i)
            text = src[i:] if j < 0 else src[i:j]
            if trim_next:
                text = text.lstrip(_WS)
            if j < 0:
                if text:
                    yield ("text", text)
                return
            k = j + 2
            trim_left = src.startswith("-", k) and k + 1 < len(src) and src[k + 1] in _WS
            if trim_left:
                text = text.rstrip(_WS)
                k += 1
            if text:
                yield ("text", text)
            start = k
            end, trim_right, inner_end = self._find_close(start, j)
            inner = src[start:inner_end]
            stripped = inner.strip(_WS)
            if stripped.startswith("/*"):
                if not stripped.endswith("*/"):
                    self.error("unterminated comment", j)
                lead = inner[: len(inner) - len(inner.lstrip(_WS))]
                if lead and not trim_left:
                    self.error("comment must follow the delimiter directly", j)
            else:
                yield ("action", self._tokens(inner, start), _position(src, j))
            trim_next = trim_right
            i = end

    def _find_close(self, start: int, open_at: int):
        src = self.source
        k = start
        quote = None
        while k < len(src):
            ch = src[k]
            if quote:
                if ch == "\\" and quote == '"':
                    k += 2
                    continue
                if ch == quote:
                    quote = None
                k += 1
                continue
            if src.startswith("/*", k):
                close = src.find("*/", k + 2)
                if close < 0:
                    self.error("unterminated comment", open_at)
                k = close + 2
                continue
            if ch in "\"`'":
                quote = ch
            elif src.startswith("}}", k):
                if k - 2 >= start and src[k - 1] == "-" and src[k - 2] in _WS:
                    return k + 2, True, k - 1
                return k + 2, False, k
            k += 1
        self.error("unclosed action", open_at)

    def _tokens(self, inner: str, base: int) -> list[_Tok]:
        toks: list[_Tok] = []
        i = 0
        spaced = True
        while i < len(inner):
            m = _TOKEN.match(inner, i)
            if not m:
                self.error(f"unexpected character {inner[i]!r}", base + i)
            kind = m.lastgroup
            text = m.group()
            if kind == "ws":
                spaced = True
            else:
                if kind == "number" and text[0] in "+-" and toks and not spaced:
                    self.error(f"unexpected {text!r}", base + i)
                toks.append(_Tok(kind, text, _position(self.source, base + i), spaced))
                spaced = False
            i = m.end()
        return toks


# -- parsing --------------------------------------------------------------------

_KEYWORDS = {"if", "else", "end", "range", "with", "define", "template", "block", "break", "continue"}


class _ActionParser:
    def __init__(self, toks: list[_Tok], pos: tuple, name: str):
        self.toks = toks
        self.i = 0
        self.pos = pos
        self.name = name

    def error(self, message: str, tok: _Tok | None = None):
        raise TemplateSyntaxError(message, tok.pos if tok else self.pos, self.name)

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.error("unexpected end of action")
        self.i += 1
        return tok

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def expect_end(self):
        if not self.done():
            self.error(f"unexpected {self.peek().text!r}", self.peek())

    def pipeline(self, allow_decl: bool = True) -> Pipe:
        decl: list[str] = []
        assign = False
        if allow_decl and self.peek() and self.peek().kind == "var":
            save = self.i
            names = [self.take().text]
            if self.peek() and self.peek().kind == "comma":
                self.take()
                if not (self.peek() and self.peek().kind == "var"):
                    self.i = save
                    names = []
                else:
                    names.append(self.take().text)
            nxt = self.peek()
            if names and nxt and nxt.kind in ("declare", "assign"):
                self.take()
                decl = names
                assign = nxt.kind == "assign"
            else:
                self.i = save
        cmds = [self.command()]
        while self.peek() and self.peek().kind == "pipe":
            self.take()
            cmds.append(self.command())
        return Pipe(tuple(cmds), tuple(decl), assign)

    def command(self) -> Command:
        args: list = []
        while True:
            tok = self.peek()
            if tok is None or tok.kind in ("pipe", "rparen"):
                break
            if args and not tok.spaced and tok.kind != "field":
                self.error(f"missing space before {tok.text!r}", tok)
            args.append(self.operand())
        if not args:
            self.error("missing value for command", self.peek())
        return Command(tuple(args))

    def _fields(self) -> tuple:
        names: list[str] = []
        while self.peek() and self.peek().kind == "field" and not self.peek().spaced:
            names.append(self.take().text[1:])
        return tuple(names)

    def operand(self):
        tok = self.take()
        kind = tok.kind
        if kind == "field":
            return Field(".", (tok.text[1:],) + self._fields())
        if kind == "dot":
            return Field(".", self._fields())
        if kind == "var":
            return Field(tok.text, self._fields())
        if kind == "string":
            try:
                return Literal(_unquote(tok.text[1:-1]))
            except (ValueError, IndexError):
                self.error(f"bad string literal {tok.text}", tok)
        if kind == "raw":
            return Literal(tok.text[1:-1])
        if kind == "char":
            return Literal(ord(_unquote(tok.text[1:-1])))
        if kind == "number":
            value = _number(tok.text)
            if value is None:
                self.error(f"bad number {tok.text}", tok)
            return Literal(value)
        if kind == "lparen":
            inner = self.pipeline(allow_decl=False)
            close = self.take()
            if close.kind != "rparen":
                self.error("expected ')'", close)
            return SubPipe(inner, self._fields())
        if kind == "ident":
            if tok.text in ("true", "false"):
                return Literal(tok.text == "true")
            if tok.text == "nil":
                return Literal(None)
            if tok.text in _KEYWORDS:
                self.error(f"unexpected keyword {tok.text!r}", tok)
            if tok.text not in FUNCTIONS:
                raise UnsupportedFunction(tok.text, tok.pos, self.name)
            return Ident(tok.text, tok.pos)
        self.error(f"unexpected {tok.text!r}", tok)


class _Parser:
    def __init__(self, source: str, name: str):
        self.name = name
        self.items = list(_Lexer(source, name).chunks())
        self.i = 0
        self.defines: dict[str, Define] = {}

    def error(self, message: str, pos=None):
        raise TemplateSyntaxError(message, pos, self.name)

    def parse(self) -> TemplateAst:
        body, stop = self.block(top=True)
        if stop is not None:
            self.error(f"unexpected {{{{{stop[0]}}}}}", stop[1])
        return TemplateAst(body, self.defines, self.name)

    def block(self, top: bool = False):
        """Parse until end/else; returns (nodes, (keyword, pos, parser)|None)."""
        nodes: list = []
        while self.i < len(self.items):
            item = self.items[self.i]
            self.i += 1
            if item[0] == "text":
                nodes.append(Text(item[1]))
                continue
            toks, pos = item[1], item[2]
            if not toks:
                self.error("missing value for command", pos)
            head = toks[0]
            word = head.text if head.kind == "ident" else None
            ap = _ActionParser(toks, pos, self.name)
            if word in ("end", "else"):
                ap.take()
                return nodes, (word, pos, ap)
            if word == "if":
                ap.take()
                nodes.append(self.parse_if(ap, pos))
            elif word == "range":
                ap.take()
                pipe = ap.pipeline()
                ap.expect_end()
                body, else_body = self.body_with_else(pos, "range")
                nodes.append(Range(pipe, body, else_body, pos))
            elif word == "with":
                ap.take()
                pipe = ap.pipeline()
                ap.expect_end()
                body, else_body = self.body_with_else(pos, "with")
                nodes.append(With(pipe, body, else_body, pos))
            elif word == "define":
                ap.take()
                name_tok = ap.take()
                if name_tok.kind not in ("string", "raw"):
                    self.error("define needs a quoted name", pos)
                ap.expect_end()
                if not top:
                    self.error("define is only allowed at top level", pos)
                name = _unquote(name_tok.text[1:-1]) if name_tok.kind == "string" else name_tok.text[1:-1]
                body, stop = self.block()
                if stop is None or stop[0] != "end":
                    self.error(f"define {name!r} is not closed", pos)
                stop[2].expect_end()
                if name in self.defines:
                    raise DuplicateDefine(name, (self.name, self.name))
                self.defines[name] = Define(name, body, pos)
            elif word == "template":
                ap.take()
                name_tok = ap.take()
                if name_tok.kind not in ("string", "raw"):
                    self.error("template needs a quoted name", pos)
                name = _unquote(name_tok.text[1:-1]) if name_tok.kind == "string" else name_tok.text[1:-1]
                pipe = None if ap.done() else ap.pipeline(allow_decl=False)
                ap.expect_end()
                nodes.append(TemplateCall(name, pipe, pos))
            elif word in ("block", "break", "continue"):
                raise UnsupportedFunction(word, pos, self.name)
            else:
                pipe = ap.pipeline()
                ap.expect_end()
                nodes.append(Output(pipe, pos))
        return nodes, None

    def body_with_else(self, pos, what):
        body, stop = self.block()
        if stop is None:
            self.error(f"{what} is not closed", pos)
        word, _, ap = stop
        if word == "end":
            ap.expect_end()
            return body, None
        ap.expect_end()
        else_body, stop = self.block()
        if stop is None or stop[0] != "end":
            self.error(f"{what} is not closed", pos)
        stop[2].expect_end()
        return body, else_body

    def parse_if(self, ap: _ActionParser, pos) -> If:
        pipe = ap.pipeline()
        ap.expect_end()
        branches = []
        body, stop = self.block()
        branches.append((pipe, body))
        while True:
            if stop is None:
                self.error("if is not closed", pos)
            word, spos, sap = stop
            if word == "end":
                sap.expect_end()
                return If(branches, None, pos)
            if sap.peek() and sap.peek().kind == "ident" and sap.peek().text == "if":
                sap.take()
                cond = sap.pipeline()
                sap.expect_end()
                body, stop = self.block()
                branches.append((cond, body))
                continue
            sap.expect_end()
            else_body, stop = self.block()
            if stop is None or stop[0] != "end":
                self.error("if is not closed", pos)
            stop[2].expect_end()
            return If(branches, else_body, pos)


def parse_template(text: str, name: str = "") -> TemplateAst:
    """Parse template text into an AST.

    Unsupported functions and directives fail here rather than at render
    time, so a chart using them is rejected when it is loaded.
    """
    return _Parser(text, name).parse()
