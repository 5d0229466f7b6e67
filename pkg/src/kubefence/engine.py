"""Allow/deny decisions for objects and patches against a validator."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnsupportedPatchType
from .model.nodes import NULL, STRING, Mapping, Scalar, Sequence
from .model.paths import concrete_path
from .model.schema import (
    LOCK_VIOLATION,
    MISSING_REQUIRED,
    SHAPE_MISMATCH,
    UNKNOWN_FIELD,
    UNKNOWN_KIND,
    Checker,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SequenceSchema,
    Violation,
)
from .policy.validator import equivalent

ALLOW = "allow"
DENY = "deny"

MERGE_PATCH = "merge-patch"
STRATEGIC_MERGE = "strategic-merge"
JSON_PATCH = "json-patch"
APPLY_PATCH = "apply"

CONTENT_TYPES = {
    "application/merge-patch+json": MERGE_PATCH,
    "application/strategic-merge-patch+json": STRATEGIC_MERGE,
    "application/json-patch+json": JSON_PATCH,
    "application/apply-patch+yaml": APPLY_PATCH,
    MERGE_PATCH: MERGE_PATCH,
    STRATEGIC_MERGE: STRATEGIC_MERGE,
    JSON_PATCH: JSON_PATCH,
    APPLY_PATCH: APPLY_PATCH,
}


@dataclass(frozen=True)
class Verdict:
    decision: str
    path: str | None = None
    reason: str | None = None
    message: str = ""
    violations: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.decision == DENY and (self.path is None or self.reason is None):
            raise ValueError("a deny verdict needs a path and a reason")

    @property
    def allowed(self) -> bool:
        return self.decision == ALLOW

    @classmethod
    def from_violations(cls, found) -> "Verdict":
        if not found:
            return cls(ALLOW)
        first = found[0]
        return cls(DENY, first.path, first.reason, first.message, tuple(found))

    def to_dict(self) -> dict:
        out: dict = {"decision": self.decision}
        if self.decision == DENY:
            out.update(path=self.path, reason=self.reason, message=self.message)
            if len(self.violations) > 1:
                out["violations"] = [
                    {"path": v.path, "reason": v.reason, "message": v.message} for v in self.violations
                ]
        return out


def _kind_of(obj) -> str | None:
    if not isinstance(obj, Mapping):
        return None
    kind = obj.get("kind")
    if isinstance(kind, Scalar) and kind.kind == STRING:
        return kind.value
    return None


def _unknown_kind(kind) -> Verdict:
    if kind is None:
        return Verdict(DENY, "kind", UNKNOWN_KIND, "request object has no kind")
    return Verdict(DENY, "kind", UNKNOWN_KIND, f"kind {kind!r} is not in the validator")


def validate_object(obj, validator, *, all_violations: bool = False) -> Verdict:
    """Tree-overlap check of a full object against its kind's schema."""
    kind = _kind_of(obj)
    schema = validator.get(kind) if kind is not None else None
    if schema is None:
        return _unknown_kind(kind)
    return Verdict.from_violations(Checker(collect=all_violations).run(obj, schema))


# -- patches -------------------------------------------------------------------

def _removal(parts, schema: MappingSchema, key: str) -> Violation | None:
    if key not in schema.required:
        return None
    target = schema[key]
    if isinstance(target, LockedConstant):
        return Violation(tuple(parts), LOCK_VIOLATION, f"locked field {key!r} cannot be removed")
    return Violation(tuple(parts), MISSING_REQUIRED, f"required field {key!r} cannot be removed")


class _MergeChecker(Checker):
    """Partial check of a merge patch: null deletes, ``$`` keys are directives."""

    def __init__(self, *, strategic: bool, collect: bool = False):
        super().__init__(partial=True, collect=collect)
        self.strategic = strategic

    def visit(self, node, schema, parts):
        if not (isinstance(schema, MappingSchema) and isinstance(node, Mapping)):
            return super().visit(node, schema, parts)
        for key, child in node.items():
            parts.append(key)
            try:
                if self.strategic and key.startswith("$"):
                    continue
                deleting = isinstance(child, Scalar) and child.kind == NULL
                if self.strategic and isinstance(child, Mapping):
                    directive = child.get("$patch")
                    deleting = deleting or (isinstance(directive, Scalar) and directive.value == "delete")
                if deleting:
                    if key in schema:
                        found = _removal(parts, schema, key)
                        if found is not None:
                            self.found.append(found)
                            if not self.collect:
                                return True
                    continue
                if key not in schema:
                    if self._add(parts, UNKNOWN_FIELD, f"field {key!r} is not allowed"):
                        return True
                elif self.visit(child, schema[key], parts):
                    return True
            finally:
                parts.pop()
        return False


def _pointer(text: str) -> list[str]:
    if text == "":
        return []
    if not text.startswith("/"):
        raise ValueError(f"bad JSON pointer {text!r}")
    return [p.replace("~1", "/").replace("~0", "~") for p in text[1:].split("/")]


_OPEN = object()


def _resolve(schema, tokens):
    """Walk pointer tokens; returns (schema, parent mapping, key, parts) or a Violation.

    ``schema`` is ``_OPEN`` when the path runs into an open placeholder.
    """
    parts: list = []
    parent, key = None, None
    for tok in tokens:
        if schema is Placeholder.DICT or schema is Placeholder.LIST:
            return _OPEN, None, None, parts
        if isinstance(schema, MappingSchema):
            parts.append(tok)
            if tok not in schema:
                return Violation(tuple(parts), UNKNOWN_FIELD, f"field {tok!r} is not allowed"), None, None, parts
            parent, key = schema, tok
            schema = schema[tok]
        elif isinstance(schema, SequenceSchema):
            if tok != "-" and not tok.isdigit():
                return Violation(tuple(parts), SHAPE_MISMATCH, f"{tok!r} is not a sequence index"), None, None, parts
            parts.append(int(tok) if tok.isdigit() else tok)
            parent, key = None, None
            if schema.element is None:
                return Violation(tuple(parts), UNKNOWN_FIELD, "sequence must be empty"), None, None, parts
            schema = schema.element
        else:
            return Violation(tuple(parts), SHAPE_MISMATCH, "path goes below a scalar"), None, None, parts
    return schema, parent, key, parts


def _json_patch(ops, schema, collect: bool) -> list[Violation]:
    if not isinstance(ops, Sequence):
        return [Violation((), SHAPE_MISMATCH, "a JSON patch must be a list of operations")]
    found: list[Violation] = []

    def bad(v: Violation) -> bool:
        found.append(v)
        return not collect

    for i, op in enumerate(ops.items):
        name = op.get("op") if isinstance(op, Mapping) else None
        path = op.get("path") if isinstance(op, Mapping) else None
        if not (isinstance(name, Scalar) and isinstance(path, Scalar) and isinstance(path.value, str)):
            if bad(Violation((i,), SHAPE_MISMATCH, "operation needs op and path")):
                break
            continue
        try:
            tokens = _pointer(path.value)
        except ValueError as exc:
            if bad(Violation((i,), SHAPE_MISMATCH, str(exc))):
                break
            continue
        target, parent, key, parts = _resolve(schema, tokens)
        if isinstance(target, Violation):
            if name.value == "remove" or name.value == "test":
                continue  # nothing there to protect
            if bad(target):
                break
            continue
        op_name = name.value
        if op_name in ("add", "replace"):
            value = op.get("value")
            if value is None:
                stop = bad(Violation(tuple(parts), SHAPE_MISMATCH, f"{op_name} needs a value"))
            elif target is _OPEN:
                stop = False
            else:
                sub = Checker(collect=collect).run(value, target, parts)
                found.extend(sub)
                stop = bool(sub) and not collect
        elif op_name == "remove":
            v = _removal(parts, parent, key) if parent is not None else None
            stop = v is not None and bad(v)
        elif op_name in ("move", "copy"):
            source = op.get("from")
            if not (isinstance(source, Scalar) and isinstance(source.value, str)):
                stop = bad(Violation(tuple(parts), SHAPE_MISMATCH, f"{op_name} needs from"))
            else:
                try:
                    src, s_parent, s_key, s_parts = _resolve(schema, _pointer(source.value))
                except ValueError as exc:
                    src, s_parent, s_key, s_parts = Violation((i,), SHAPE_MISMATCH, str(exc)), None, None, []
                if isinstance(src, Violation):
                    stop = bad(src)
                elif op_name == "move" and s_parent is not None and _removal(s_parts, s_parent, s_key):
                    stop = bad(_removal(s_parts, s_parent, s_key))
                elif target is _OPEN or (src is not _OPEN and equivalent(src, target)):
                    stop = False
                else:
                    stop = bad(Violation(tuple(parts), SHAPE_MISMATCH,
                                         f"{op_name} from {source.value} to a field with a different schema"))
        elif op_name == "test":
            stop = False
        else:
            stop = bad(Violation(tuple(parts), SHAPE_MISMATCH, f"unsupported operation {op_name!r}"))
        if stop:
            break
    return found


def validate_patch(body, content_type: str, kind: str, validator, *, all_violations: bool = False) -> Verdict:
    """Check a PATCH body whose target kind comes from the request path."""
    mode = CONTENT_TYPES.get((content_type or "").split(";")[0].strip().lower())
    if mode is None:
        raise UnsupportedPatchType(content_type)
    schema = validator.get(kind)
    if schema is None:
        return _unknown_kind(kind)
    if mode == JSON_PATCH:
        return Verdict.from_violations(_json_patch(body, schema, all_violations))
    if mode == APPLY_PATCH:
        body_kind = _kind_of(body)
        if body_kind is not None and body_kind != kind:
            return _unknown_kind(body_kind)
        return Verdict.from_violations(Checker(partial=True, collect=all_violations).run(body, schema))
    checker = _MergeChecker(strategic=mode == STRATEGIC_MERGE, collect=all_violations)
    return Verdict.from_violations(checker.run(body, schema))


def describe_path(parts) -> str:
    return concrete_path(parts)
