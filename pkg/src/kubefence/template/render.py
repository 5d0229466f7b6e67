"""Template execution with placeholder-aware branch exploration.

Concrete values render exactly as Helm would. When a condition depends on a
placeholder (``if .Values.enabled`` where ``enabled: bool``), both outcomes
are legitimate, so the file is rendered once per reachable combination of
such decisions and every distinct result is kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from ..errors import (
    MissingKind,
    RenderError,
    TemplateCallUnknown,
    UnresolvedReference,
)
from ..model.nodes import INTEGER, FLOAT, Mapping, Scalar, Sequence
from ..model.parse import parse_yaml_stream
from ..model.schema import Const, EnumSet, LockedConstant, MappingSchema, Placeholder, SequenceSchema
from . import funcs
from .funcs import MISSING, Ph
from .parser import (
    Define,
    Field,
    Ident,
    If,
    Literal,
    Output,
    Pipe,
    Range,
    SubPipe,
    TemplateAst,
    TemplateCall,
    Text,
    With,
)

log = logging.getLogger(__name__)

MAX_OUTCOMES = 1024
_MAX_DEPTH = 100


@dataclass
class RenderContext:
    values: Any
    release_name: Any = "release-name"
    release_service: str = "Helm"
    namespace: str = "default"
    chart: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.release_name, Ph) and not self.release_name:
            raise ValueError("release name must be non-empty")


# -- value conversion -------------------------------------------------------------

def render_values(obj, path: str = "Values"):
    """Convert a values tree (document or schema variant) to render values.

    Numbers become floats because Helm decodes values numbers as float64,
    which changes how they print.
    """
    if isinstance(obj, Mapping):
        return {k: render_values(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, Sequence):
        return [render_values(v, f"{path}[]") for v in obj.items]
    if isinstance(obj, Scalar):
        return _scalar_value(obj)
    if isinstance(obj, MappingSchema):
        return {k: render_values(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, SequenceSchema):
        return [] if obj.element is None else [render_values(obj.element, f"{path}[]")]
    if isinstance(obj, Placeholder):
        return Ph(obj.value, path)
    if isinstance(obj, (Const, LockedConstant)):
        return _scalar_value(obj.scalar)
    if isinstance(obj, EnumSet):
        raise RenderError(f"{path} still holds an enum; render a variant instead")
    if isinstance(obj, dict):
        return {k: render_values(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, list):
        return [render_values(v, f"{path}[]") for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


def _scalar_value(node: Scalar):
    if node.kind in (INTEGER, FLOAT) and not isinstance(node.value, bool):
        return float(node.value)
    return node.value


# -- branch exploration -------------------------------------------------------------

class _Fork:
    def __init__(self, prefix: list[bool]):
        self.prefix = prefix
        self.trace: list[bool] = []
        self.memo: dict = {}

    def choose(self, key) -> bool:
        if key in self.memo:
            return self.memo[key]
        i = len(self.trace)
        choice = self.prefix[i] if i < len(self.prefix) else True
        self.trace.append(choice)
        self.memo[key] = choice
        return choice


def explore(run, limit: int = MAX_OUTCOMES) -> tuple[list, bool]:
    """Run ``run(fork)`` over every decision path; returns (results, truncated)."""
    results = []
    prefix: list[bool] = []
    while True:
        fork = _Fork(prefix)
        results.append(run(fork))
        trace = fork.trace
        while trace and trace[-1] is False:
            trace.pop()
        if not trace:
            return results, False
        if len(results) >= limit:
            return results, True
        trace[-1] = False
        prefix = trace


# -- executor -----------------------------------------------------------------------

class _Scope:
    __slots__ = ("vars", "parent")

    def __init__(self, parent: "_Scope | None" = None):
        self.vars: dict[str, Any] = {}
        self.parent = parent

    def lookup(self, name: str):
        scope = self
        while scope is not None:
            if name in scope.vars:
                return scope.vars[name]
            scope = scope.parent
        raise RenderError(f"undefined variable {name}")

    def set(self, name: str, value) -> None:
        scope = self
        while scope is not None:
            if name in scope.vars:
                scope.vars[name] = value
                return
            scope = scope.parent
        raise RenderError(f"undefined variable {name}")


class _Exec:
    def __init__(self, defines: dict[str, Define], fork: _Fork, template: str):
        self.defines = defines
        self.fork = fork
        self.template = template
        self.depth = 0

    # truth and comparisons, forking on placeholders
    def truth(self, value) -> bool:
        if isinstance(value, Ph):
            return self.fork.choose(("truth", value.path))
        return funcs.truthy(value)

    def eq(self, a, b) -> bool:
        if isinstance(a, Ph) or isinstance(b, Ph):
            if a == b:
                return True
            left = a.path if isinstance(a, Ph) else repr(a)
            right = b.path if isinstance(b, Ph) else repr(b)
            return self.fork.choose(("eq",) + tuple(sorted((left, right))))
        return funcs.go_eq(a, b)

    # evaluation
    def field(self, value, names, label: str, pos):
        for name in names:
            label = f"{label}.{name}"
            if isinstance(value, dict):
                value = value.get(name, MISSING)
            elif isinstance(value, Ph) and value.container:
                value = Ph("any", f"{value.path}.{name}")
            elif value is None or value is MISSING:
                raise UnresolvedReference(label, self.template, pos)
            else:
                raise RenderError(f"{self.template}: can't evaluate field {name} in {funcs.type_name(value)} ({label})")
        return value

    def arg(self, arg, dot, scope: _Scope, pos, final=None):
        if isinstance(arg, Field):
            if arg.base == ".":
                return self.field(dot, arg.names, "", pos) if arg.names else dot
            base = scope.lookup(arg.base)
            return self.field(base, arg.names, arg.base, pos)
        if isinstance(arg, Literal):
            return arg.value
        if isinstance(arg, SubPipe):
            value = self.pipe(arg.pipe, dot, scope, pos)
            return self.field(value, arg.names, "(...)", pos) if arg.names else value
        if isinstance(arg, Ident):
            return self.call(arg.name, [], dot, scope, pos)
        raise RenderError(f"unexpected argument {arg!r}")

    def pipe(self, pipe: Pipe, dot, scope: _Scope, pos):
        value = None
        piped = False
        for cmd in pipe.cmds:
            head = cmd.args[0]
            if isinstance(head, Ident):
                value = self.call(head.name, list(cmd.args[1:]), dot, scope, pos,
                                  final=value if piped else None, has_final=piped)
            else:
                if len(cmd.args) > 1 or piped:
                    raise RenderError(f"{self.template}: can't give argument to non-function")
                value = self.arg(head, dot, scope, pos)
            piped = True
        if pipe.decl:
            if pipe.assign:
                scope.set(pipe.decl[-1], value)
            else:
                scope.vars[pipe.decl[-1]] = value
        return value

    def call(self, name, args, dot, scope, pos, final=None, has_final=False):
        if name in ("and", "or"):
            thunks = [lambda a=a: self.arg(a, dot, scope, pos) for a in args]
            if has_final:
                thunks.append(lambda: final)
            if not thunks:
                raise RenderError(f"{name}: missing arguments")
            value = None
            for thunk in thunks:
                value = thunk()
                if (name == "and") != self.truth(value):
                    return value
            return value
        values = [self.arg(a, dot, scope, pos) for a in args]
        if has_final:
            values.append(final)
        return self.apply(name, values, pos)

    def apply(self, name, values, pos):
        def need(n):
            if len(values) != n:
                raise RenderError(f"{self.template}: wrong number of args for {name}: want {n} got {len(values)}")

        if name == "default":
            if not values:
                raise RenderError("default: missing arguments")
            if len(values) == 1:
                return values[0]
            return values[1] if self.truth(values[1]) else values[0]
        if name == "quote":
            return " ".join(funcs.go_quote(funcs.go_print(v)) for v in values if v is not None and v is not MISSING)
        if name in ("upper", "lower"):
            need(1)
            text = funcs.as_string(values[0], name)
            if isinstance(text, Ph):
                return text
            return text.upper() if name == "upper" else text.lower()
        if name in ("indent", "nindent"):
            need(2)
            spaces = funcs.as_int(values[0], name)
            text = funcs.as_string(values[1], name)
            text = text.text if isinstance(text, Ph) else text
            out = funcs.indent(spaces, text)
            return "\n" + out if name == "nindent" else out
        if name == "toYaml":
            need(1)
            return funcs.to_yaml(values[0])
        if name == "trunc":
            need(2)
            count = funcs.as_int(values[0], name)
            text = funcs.as_string(values[1], name)
            return text if isinstance(text, Ph) else funcs.trunc(count, text)
        if name == "trimSuffix":
            need(2)
            suffix = funcs.as_string(values[0], name)
            text = funcs.as_string(values[1], name)
            if isinstance(text, Ph):
                return text
            suffix = suffix.text if isinstance(suffix, Ph) else suffix
            return text[: -len(suffix)] if suffix and text.endswith(suffix) else text
        if name == "eq":
            if len(values) < 2:
                raise RenderError("eq: missing argument for comparison")
            return any(self.eq(values[0], other) for other in values[1:])
        if name == "ne":
            need(2)
            return not self.eq(values[0], values[1])
        if name == "not":
            need(1)
            return not self.truth(values[0])
        if name == "include":
            if len(values) not in (1, 2):
                raise RenderError(f"include: wrong number of args: {len(values)}")
            target = values[0]
            if not isinstance(target, str):
                raise RenderError("include: template name must be a string")
            out: list[str] = []
            self.invoke(target, values[1] if len(values) == 2 else None, out, pos)
            return "".join(out)
        raise RenderError(f"function {name!r} is not available")

    def invoke(self, name: str, data, out: list[str], pos):
        define = self.defines.get(name)
        if define is None:
            raise TemplateCallUnknown(name)
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise RenderError(f"template {name!r}: exceeded maximum nesting depth")
        try:
            scope = _Scope()
            scope.vars["$"] = data
            self.nodes(define.body, data, scope, out)
        finally:
            self.depth -= 1

    def nodes(self, nodes, dot, scope: _Scope, out: list[str]):
        for node in nodes:
            if isinstance(node, Text):
                out.append(node.text)
            elif isinstance(node, Output):
                value = self.pipe(node.pipe, dot, scope, node.pos)
                if node.pipe.decl:
                    continue
                if value is MISSING:
                    raise UnresolvedReference(self._describe(node.pipe), self.template, node.pos)
                out.append(funcs.go_print(value))
            elif isinstance(node, If):
                for cond, body in node.branches:
                    inner = _Scope(scope)
                    if self.truth(self.pipe(cond, dot, inner, node.pos)):
                        self.nodes(body, dot, inner, out)
                        break
                else:
                    if node.else_body is not None:
                        self.nodes(node.else_body, dot, _Scope(scope), out)
            elif isinstance(node, With):
                inner = _Scope(scope)
                value = self.pipe(node.pipe, dot, inner, node.pos)
                if self.truth(value):
                    self.nodes(node.body, value, inner, out)
                elif node.else_body is not None:
                    self.nodes(node.else_body, dot, _Scope(scope), out)
            elif isinstance(node, Range):
                self.range(node, dot, scope, out)
            elif isinstance(node, TemplateCall):
                data = self.pipe(node.pipe, dot, _Scope(scope), node.pos) if node.pipe else None
                self.invoke(node.name, data, out, node.pos)
            else:
                raise RenderError(f"unexpected node {type(node).__name__}")

    def range(self, node: Range, dot, scope: _Scope, out: list[str]):
        outer = _Scope(scope)
        pipe = node.pipe
        value = self.pipe(Pipe(pipe.cmds), dot, outer, node.pos)
        if isinstance(value, Ph):
            if value.token in ("[list]", "any"):
                items = [(0, Ph("any", f"{value.path}[]"))]
            elif value.token == "{dict}":
                items = [(Ph("string", f"{value.path}.*key"), Ph("any", f"{value.path}.*"))]
            else:
                raise RenderError(f"{self.template}: range can't iterate over {value.token}")
        elif isinstance(value, list):
            items = list(enumerate(value))
        elif isinstance(value, dict):
            items = [(k, value[k]) for k in sorted(value)]
        elif value is None or value is MISSING:
            items = []
        elif isinstance(value, int) and not isinstance(value, bool):
            items = [(i, i) for i in range(value)]
        else:
            raise RenderError(f"{self.template}: range can't iterate over {funcs.type_name(value)}")
        if not items:
            if node.else_body is not None:
                self.nodes(node.else_body, dot, outer, out)
            return
        for key, elem in items:
            inner = _Scope(outer)
            if len(pipe.decl) == 1:
                inner.vars[pipe.decl[0]] = elem
            elif len(pipe.decl) == 2:
                inner.vars[pipe.decl[0]] = key
                inner.vars[pipe.decl[1]] = elem
            self.nodes(node.body, elem, inner, out)

    @staticmethod
    def _describe(pipe: Pipe) -> str:
        head = pipe.cmds[0].args[0]
        if isinstance(head, Field):
            base = "" if head.base == "." else head.base
            return base + "".join("." + n for n in head.names)
        return "value"


class Engine:
    """Executes parsed templates that share one define index."""

    def __init__(self, defines: dict[str, Define], max_outcomes: int = MAX_OUTCOMES):
        self.defines = defines
        self.max_outcomes = max_outcomes

    def outcomes(self, ast: TemplateAst, root: dict) -> list[str]:
        """Every distinct rendering of ``ast`` over placeholder decisions."""

        def run(fork):
            ex = _Exec(self.defines, fork, ast.name)
            scope = _Scope()
            scope.vars["$"] = root
            out: list[str] = []
            ex.nodes(ast.body, root, scope, out)
            return "".join(out)

        results, truncated = explore(run, self.max_outcomes)
        if truncated:
            log.warning("%s: stopped after %d branch combinations", ast.name, self.max_outcomes)
        seen: list[str] = []
        for text in results:
            if text not in seen:
                seen.append(text)
        return seen


def root_context(ctx: RenderContext, template_name: str, chart_name: str) -> dict:
    chart = {"Name": chart_name}
    chart.update(ctx.chart)
    return {
        "Values": render_values(ctx.values),
        "Release": {
            "Name": ctx.release_name,
            "Namespace": ctx.namespace,
            "Service": ctx.release_service,
            "IsInstall": True,
            "IsUpgrade": False,
            "Revision": 1,
        },
        "Chart": chart,
        "Template": {"Name": f"{chart_name}/{template_name}", "BasePath": f"{chart_name}/templates"},
    }


def split_manifests(text: str) -> list:
    """Split a rendered stream into documents, dropping empty ones.

    Every remaining document must be a mapping with ``kind`` and ``apiVersion``.
    """
    docs = []
    for index, doc in enumerate(parse_yaml_stream(text)):
        if isinstance(doc, Scalar) and doc.value is None:
            continue
        if not isinstance(doc, Mapping) or "kind" not in doc or "apiVersion" not in doc:
            raise MissingKind(index)
        docs.append(doc)
    return docs
