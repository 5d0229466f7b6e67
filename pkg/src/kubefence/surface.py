"""Attack-surface accounting: which configurable fields a policy leaves reachable.

A catalog lists, per kind, every configurable field as a generalized path
(``spec.template.spec.containers[].image``). Under kind-level RBAC a field is
restrictable only if its whole kind is disallowed. A validator additionally
restricts every field of an allowed kind that it does not whitelist.

Run ``python -m kubefence.surface flatten <openapi.json>`` to build a catalog
from an OpenAPI v2 style document.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import yaml

from .errors import ConfigError, UnknownKindInValidator, ZeroTotal
from .model.paths import ELEM, FieldPath
from .model.schema import Const, EnumSet, LockedConstant, MappingSchema, Placeholder, SequenceSchema


@dataclass(frozen=True)
class FieldCatalog:
    kinds: dict  # kind -> frozenset of FieldPath

    @property
    def total(self) -> int:
        return sum(len(paths) for paths in self.kinds.values())

    @classmethod
    def from_mapping(cls, data: dict) -> "FieldCatalog":
        kinds = {}
        for kind, paths in data.items():
            kinds[str(kind)] = frozenset(FieldPath.parse(str(p)) for p in paths or ())
        return cls(kinds)

    def to_mapping(self) -> dict:
        return {kind: sorted(str(p) for p in paths) for kind, paths in sorted(self.kinds.items())}


def load_catalog(path) -> FieldCatalog:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read catalog {path}: {exc}") from None
    if isinstance(data, dict) and "kinds" in data:
        data = data["kinds"]
    if not isinstance(data, dict):
        raise ConfigError(f"catalog {path} must map kinds to path lists")
    return FieldCatalog.from_mapping(data)


@dataclass(frozen=True)
class RbacPolicy:
    """Kind-level grants: kind -> allowed verbs."""

    grants: dict

    @property
    def kinds(self) -> frozenset:
        return frozenset(self.grants)

    def allows(self, kind: str, verb: str) -> bool:
        verbs = self.grants.get(kind)
        return verbs is not None and ("*" in verbs or verb in verbs)

    @classmethod
    def allow_all(cls, kinds, verbs=("*",)) -> "RbacPolicy":
        return cls({k: frozenset(verbs) for k in kinds})


def load_rbac(path) -> RbacPolicy:
    """Read ``{kinds: {Deployment: [create, ...]}}`` or a plain kind list."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read RBAC policy {path}: {exc}") from None
    if isinstance(data, dict) and "kinds" in data:
        data = data["kinds"]
    if isinstance(data, list):
        return RbacPolicy.allow_all(str(k) for k in data)
    if not isinstance(data, dict):
        raise ConfigError(f"RBAC policy {path} must map kinds to verb lists")
    return RbacPolicy({str(k): frozenset(v or ("*",)) for k, v in data.items()})


def compute_reduction(restrictable: int, total: int) -> float:
    """Percentage of ``total`` that is restrictable, rounded half-up to 2 places."""
    if total <= 0:
        raise ZeroTotal("total field count must be positive")
    if not 0 <= restrictable <= total:
        raise ValueError(f"restrictable count {restrictable} outside 0..{total}")
    pct = Decimal(100 * restrictable) / Decimal(total)
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def lookup(schema, path: FieldPath):
    """Schema node that governs ``path``; an open container covers everything below it."""
    node = schema
    for seg in path.segments:
        if node is Placeholder.DICT or node is Placeholder.LIST:
            return node
        if seg is ELEM:
            if not isinstance(node, SequenceSchema) or node.element is None:
                return None
            node = node.element
        else:
            if not isinstance(node, MappingSchema) or seg not in node:
                return None
            node = node[seg]
    return node


def _value_restricted(node) -> bool:
    return isinstance(node, (Const, EnumSet, LockedConstant))


@dataclass(frozen=True)
class SurfaceReport:
    workload: str
    total: int
    restrictable_rbac: int
    restrictable_kf: int
    value_restricted: int | None = None

    @property
    def reduction_rbac(self) -> float:
        return compute_reduction(self.restrictable_rbac, self.total)

    @property
    def reduction_kf(self) -> float:
        return compute_reduction(self.restrictable_kf, self.total)

    @property
    def improvement(self) -> float:
        return round(self.reduction_kf - self.reduction_rbac, 2)

    def to_dict(self) -> dict:
        out = {
            "workload": self.workload,
            "total": self.total,
            "restrictable_rbac": self.restrictable_rbac,
            "restrictable_kf": self.restrictable_kf,
            "reduction_rbac": self.reduction_rbac,
            "reduction_kf": self.reduction_kf,
            "improvement": self.improvement,
        }
        if self.value_restricted is not None:
            out["value_restricted"] = self.value_restricted
            out["reduction_kf_with_values"] = compute_reduction(
                self.restrictable_kf + self.value_restricted, self.total)
        return out


def restrictable_sets(catalog: FieldCatalog, validator, rbac_kinds) -> tuple[set, set]:
    """Kind-qualified (kind, path) pairs restrictable under RBAC and under the validator."""
    for kind in validator.kinds:
        if kind not in catalog.kinds:
            raise UnknownKindInValidator(kind)
    for kind in rbac_kinds:
        if kind not in catalog.kinds:
            raise ConfigError(f"RBAC policy grants kind {kind!r} missing from the catalog")
    rbac, kf = set(), set()
    for kind, paths in catalog.kinds.items():
        if kind not in rbac_kinds:
            pairs = {(kind, p) for p in paths}
            rbac |= pairs
            kf |= pairs
            continue
        schema = validator.get(kind)
        kf |= {(kind, p) for p in paths if schema is None or lookup(schema, p) is None}
    return rbac, kf


def analyze(catalog: FieldCatalog, validator, rbac_kinds, *, workload: str = "",
            count_value_locks: bool = False) -> SurfaceReport:
    rbac_kinds = frozenset(rbac_kinds)
    rbac, kf = restrictable_sets(catalog, validator, rbac_kinds)
    values = None
    if count_value_locks:
        values = 0
        for kind in rbac_kinds:
            schema = validator.get(kind)
            if schema is None:
                continue
            values += sum(1 for p in catalog.kinds[kind] if _value_restricted(lookup(schema, p)))
    return SurfaceReport(workload, catalog.total, len(rbac), len(kf), values)


def format_table(reports) -> str:
    head = f"{'Workload':<18}{'Total':>7}{'RBAC':>8}{'RBAC %':>9}{'KF':>8}{'KF %':>9}{'Δ pp':>8}"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(f"{r.workload:<18}{r.total:>7}{r.restrictable_rbac:>8}{r.reduction_rbac:>9.2f}"
                     f"{r.restrictable_kf:>8}{r.reduction_kf:>9.2f}{r.improvement:>8.2f}")
    return "\n".join(lines)


# -- OpenAPI flattening ----------------------------------------------------------

def _deref(defs: dict, schema: dict) -> tuple[str | None, dict]:
    ref = schema.get("$ref")
    if ref is None:
        return None, schema
    name = ref.rsplit("/", 1)[-1]
    if name not in defs:
        raise ConfigError(f"dangling reference {ref}")
    return name, defs[name]


def _leaves(defs: dict, schema: dict, path: FieldPath, stack: tuple, out: list, max_depth: int) -> None:
    name, schema = _deref(defs, schema)
    if name is not None and name in stack:
        out.append(path)  # recursive type: stop at the cycle
        return
    stack = stack + (name,) if name else stack
    props = schema.get("properties")
    if props and len(path) < max_depth:
        for key in sorted(props):
            _leaves(defs, props[key], path.key(key), stack, out, max_depth)
    elif schema.get("type") == "array" and "items" in schema and len(path) < max_depth:
        _leaves(defs, schema["items"], path.elem(), stack, out, max_depth)
    else:
        out.append(path)


def flatten_openapi(doc: dict, *, kinds=None, skip=("status",), max_depth: int = 16) -> FieldCatalog:
    """Leaf field paths of every top-level kind in ``doc['definitions']``.

    Top-level kinds carry ``x-kubernetes-group-version-kind``. When a kind
    appears in several definitions the first one listed wins.
    """
    defs = doc.get("definitions") or {}
    catalog: dict = {}
    for name, schema in defs.items():
        for gvk in schema.get("x-kubernetes-group-version-kind") or ():
            kind = gvk.get("kind")
            if kind in catalog or (kinds is not None and kind not in kinds):
                continue
            out: list = []
            for key, sub in sorted((schema.get("properties") or {}).items()):
                if key not in skip:
                    _leaves(defs, sub, FieldPath((key,)), (name,), out, max_depth)
            catalog[kind] = frozenset(out)
    return FieldCatalog(catalog)


def dump_catalog(catalog: FieldCatalog) -> str:
    return yaml.safe_dump({"kinds": catalog.to_mapping()}, sort_keys=False, width=200)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m kubefence.surface")
    sub = parser.add_subparsers(dest="command", required=True)
    flat = sub.add_parser("flatten", help="flatten an OpenAPI document into a field catalog")
    flat.add_argument("openapi")
    flat.add_argument("--kinds", help="comma-separated kinds to keep")
    flat.add_argument("--out")
    args = parser.parse_args(argv)
    doc = json.loads(Path(args.openapi).read_text(encoding="utf-8"))
    kinds = set(args.kinds.split(",")) if args.kinds else None
    text = dump_catalog(flatten_openapi(doc, kinds=kinds))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
