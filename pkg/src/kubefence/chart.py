"""Chart loading: values, templates, enum annotations and lock rules."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import (
    AnnotationPathUnresolved,
    ChartError,
    ChartParseError,
    DocumentError,
    DuplicateDefine,
    EmptyTemplate,
    InvalidLockRule,
    MissingTemplates,
    MissingValues,
    TemplateError,
)
from .model.nodes import NULL, DocNode, Mapping, Scalar, Sequence, resolve_plain, to_python
from .model.parse import parse_yaml
from .model.paths import FieldPath, PathPattern
from .model.schema import LOCK_MODES, PIN, REQUIRE_AND_PIN, Placeholder
from .template.parser import Define, TemplateAst, parse_template

REQUIRE = "require"
SCOPES = ("values", "manifest")
DEFAULT_SENTINEL = "@default"
_TEMPLATE_SUFFIXES = (".yaml", ".yml", ".tpl", ".json")


@dataclass(frozen=True)
class EnumAnnotation:
    target: FieldPath
    options: tuple

    def __post_init__(self):
        if len(self.options) < 2:
            raise ValueError("an enum annotation needs at least two options")


@dataclass(frozen=True)
class LockRule:
    """Pin a field to a constant, optionally requiring its presence.

    ``value`` is a scalar, a Placeholder (mode ``require`` only) or
    ``"@default"`` (values scope only: keep the chart's default).
    """

    target: PathPattern
    value: Any
    mode: str = PIN
    scope: str = "manifest"

    def __post_init__(self):
        if self.mode not in LOCK_MODES + (REQUIRE,):
            raise InvalidLockRule(f"{self.target}: unknown mode {self.mode!r}")
        if self.scope not in SCOPES:
            raise InvalidLockRule(f"{self.target}: unknown scope {self.scope!r}")
        if self.mode == REQUIRE:
            if not isinstance(self.value, Placeholder):
                raise InvalidLockRule(f"{self.target}: mode require needs a placeholder value")
        elif isinstance(self.value, Placeholder):
            raise InvalidLockRule(f"{self.target}: a placeholder value needs mode require")
        elif isinstance(self.value, (dict, list)):
            raise InvalidLockRule(f"{self.target}: lock values must be scalars")
        if self.value == DEFAULT_SENTINEL and self.scope != "values":
            raise InvalidLockRule(f"{self.target}: {DEFAULT_SENTINEL} only applies to values")

    @property
    def requires_presence(self) -> bool:
        return self.mode in (REQUIRE, REQUIRE_AND_PIN)


@dataclass(frozen=True)
class Chart:
    name: str
    values: DocNode
    values_text: str
    templates: tuple  # ((relative path, text), ...) rendered files
    partials: tuple = ()  # helper files (``_*.tpl``), never rendered
    enums: tuple = ()
    locks: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False)
    directory: Path | None = field(default=None, compare=False)
    asts: dict = field(default_factory=dict, compare=False, repr=False)
    defines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def chart_context(self) -> dict:
        """The ``.Chart`` object exposed to templates."""
        out = {"Name": self.name}
        for key in ("version", "appVersion", "description", "type", "kubeVersion"):
            if key in self.metadata:
                out[key[0].upper() + key[1:]] = self.metadata[key]
        return out


# -- lock rules ----------------------------------------------------------------------

def _lock_value(raw, mode: str):
    if mode == REQUIRE and isinstance(raw, str):
        return Placeholder.from_token(raw)
    return raw


def parse_lock_rules(data) -> tuple:
    """Build lock rules from a ``{locks: [...]}`` document (or the list itself)."""
    if isinstance(data, (Mapping, Sequence, Scalar)):
        data = to_python(data)
    if isinstance(data, dict):
        data = data.get("locks", [])
    if not isinstance(data, list):
        raise InvalidLockRule("lock table must be a list of rules")
    rules: list[LockRule] = []
    seen: set = set()
    for entry in data:
        if not isinstance(entry, dict) or "target" not in entry:
            raise InvalidLockRule(f"lock rule needs a target: {entry!r}")
        unknown = set(entry) - {"target", "value", "mode", "scope"}
        if unknown:
            raise InvalidLockRule(f"unknown lock rule fields {sorted(unknown)}")
        mode = entry.get("mode", PIN)
        try:
            target = PathPattern.parse(str(entry["target"]))
        except ValueError as exc:
            raise InvalidLockRule(str(exc)) from None
        rule = LockRule(target, _lock_value(entry.get("value"), mode), mode, entry.get("scope", "manifest"))
        key = (str(rule.target), rule.scope)
        if key in seen:
            raise InvalidLockRule(f"two lock rules target {rule.target} ({rule.scope})")
        seen.add(key)
        rules.append(rule)
    return tuple(rules)


def default_lock_rules() -> tuple:
    text = resources.files("kubefence").joinpath("data/locks.yaml").read_text(encoding="utf-8")
    return parse_lock_rules(parse_yaml(text))


def load_lock_rules(path) -> tuple:
    return parse_lock_rules(parse_yaml(Path(path).read_bytes()))


# -- enum annotations -----------------------------------------------------------------

_PATH_LINE = re.compile(r"^\s*#\s*([A-Za-z_][\w-]*(?:\.[A-Za-z_][\w-]*)*)\s*$")
_OPTIONS_LINE = re.compile(r"^\s*#(.*`.*)$")
_KEY_LINE = re.compile(r"^\s*(?:-\s+)?[^\s#-][^#]*?:(?:\s|$)")
_SPLIT = re.compile(r"\s*(?:,|\bor\b)\s*")


def _parse_options(text: str) -> tuple:
    parts = [p.strip() for p in _SPLIT.split(text.replace("`", " ")) if p.strip()]
    return tuple(resolve_plain(p)[0] for p in parts)


def resolve_values_path(values: DocNode, dotted: str) -> FieldPath:
    """Resolve a dotted path against values, falling back to case-insensitive keys."""
    node = values
    keys: list[str] = []
    for part in dotted.split("."):
        if not isinstance(node, Mapping):
            raise AnnotationPathUnresolved(dotted)
        if part in node:
            key = part
        else:
            matches = [k for k in node.keys() if k.lower() == part.lower()]
            if len(matches) != 1:
                raise AnnotationPathUnresolved(dotted)
            key = matches[0]
        keys.append(key)
        node = node[key]
    if not isinstance(node, Scalar):
        raise AnnotationPathUnresolved(dotted)
    return FieldPath(tuple(keys))


def _check_default(values: DocNode, target: FieldPath, options: tuple, written: str) -> None:
    node = values
    for key in target.segments:
        node = node[key]
    if node.kind == NULL:
        return
    if not any(type(o) is type(node.value) and o == node.value for o in options):
        raise ChartError(f"enum annotation for {written}: default {node.value!r} is not among {list(options)}")


def extract_enum_annotations(values_text: str, values: DocNode | None = None) -> list[EnumAnnotation]:
    """Find ``# a.b`` + ``# `x` or `y``` comment pairs sitting right above a key."""
    if values is None:
        values = parse_yaml(values_text)
    lines = values_text.splitlines()
    found: list[EnumAnnotation] = []
    for i in range(len(lines) - 2):
        m = _PATH_LINE.match(lines[i])
        if not m:
            continue
        opt = _OPTIONS_LINE.match(lines[i + 1])
        if not opt or not _KEY_LINE.match(lines[i + 2]):
            continue
        options = _parse_options(opt.group(1))
        if len(options) < 2:
            continue
        target = resolve_values_path(values, m.group(1))
        _check_default(values, target, options, m.group(1))
        found.append(EnumAnnotation(target, options))
    return found


def _sidecar_enums(path: Path, values: DocNode) -> list[EnumAnnotation]:
    data = parse_yaml(path.read_bytes())
    if not isinstance(data, Mapping):
        raise ChartError("enums.yaml must map paths to option lists")
    out: list[EnumAnnotation] = []
    for dotted, opts in data.items():
        if not isinstance(opts, Sequence) or not all(isinstance(o, Scalar) for o in opts):
            raise ChartError(f"enums.yaml: options for {dotted} must be a list of scalars")
        options = tuple(o.value for o in opts)
        target = resolve_values_path(values, dotted)
        _check_default(values, target, options, dotted)
        out.append(EnumAnnotation(target, options))
    return out


# -- loading ------------------------------------------------------------------------

def _read(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ChartParseError(path.name, exc) from None


def load_chart(directory, *, locks=None) -> Chart:
    """Load a chart directory.

    ``locks`` overrides the lock table: a path to a lock file or a sequence of
    LockRule. Otherwise ``locks.yaml`` in the chart directory is used when
    present, else the built-in defaults.
    """
    root = Path(directory)
    values_path = root / "values.yaml"
    if not values_path.is_file():
        raise MissingValues(f"{root}: no values.yaml")
    tdir = root / "templates"
    files = sorted(p for p in tdir.rglob("*") if p.is_file()) if tdir.is_dir() else []
    files = [p for p in files if p.suffix in _TEMPLATE_SUFFIXES]
    if not files:
        raise MissingTemplates(f"{root}: no templates/ directory with template files")

    values_text = _read(values_path)
    try:
        values = parse_yaml(values_text)
    except DocumentError as exc:
        raise ChartParseError("values.yaml", exc) from None
    if isinstance(values, Scalar) and values.kind == NULL:
        values = Mapping({})
    if not isinstance(values, Mapping):
        raise ChartParseError("values.yaml", ChartError("values must be a mapping"))

    metadata: dict = {}
    meta_path = root / "Chart.yaml"
    if meta_path.is_file():
        try:
            meta = parse_yaml(_read(meta_path))
        except DocumentError as exc:
            raise ChartParseError("Chart.yaml", exc) from None
        if isinstance(meta, Mapping):
            metadata = to_python(meta)
    name = str(metadata.get("name") or root.resolve().name)

    templates: list[tuple[str, str]] = []
    partials: list[tuple[str, str]] = []
    asts: dict[str, TemplateAst] = {}
    defines: dict[str, Define] = {}
    define_files: dict[str, str] = {}
    for path in files:
        rel = path.relative_to(tdir).as_posix()
        text = _read(path)
        if not text.strip():
            raise EmptyTemplate(f"templates/{rel} is empty")
        try:
            ast = parse_template(text, f"templates/{rel}")
        except DuplicateDefine:
            raise
        except TemplateError as exc:
            raise ChartParseError(f"templates/{rel}", exc) from None
        for dname, body in ast.defines.items():
            if dname in defines:
                raise DuplicateDefine(dname, (define_files[dname], f"templates/{rel}"))
            defines[dname] = body
            define_files[dname] = f"templates/{rel}"
        asts[rel] = ast
        (partials if path.name.startswith("_") else templates).append((rel, text))
    if not templates:
        raise MissingTemplates(f"{root}: templates/ holds only helper files")

    enums = extract_enum_annotations(values_text, values)
    sidecar = root / "enums.yaml"
    if sidecar.is_file():
        known = {a.target for a in enums}
        enums += [a for a in _sidecar_enums(sidecar, values) if a.target not in known]

    if locks is None:
        local = root / "locks.yaml"
        rules = load_lock_rules(local) if local.is_file() else default_lock_rules()
    elif isinstance(locks, (str, Path)):
        rules = load_lock_rules(locks)
    else:
        rules = tuple(locks)

    return Chart(
        name=name,
        values=values,
        values_text=values_text,
        templates=tuple(templates),
        partials=tuple(partials),
        enums=tuple(enums),
        locks=rules,
        metadata=metadata,
        directory=root,
        asts=asts,
        defines=defines,
    )
