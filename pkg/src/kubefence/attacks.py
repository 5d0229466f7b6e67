"""Malicious-specification catalog, injection and the KubeFence vs RBAC matrix."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .engine import validate_object
from .errors import ConfigError, InapplicableKind
from .model.emit import dump_document
from .model.nodes import STRING, Mapping, Scalar, Sequence, from_python, to_python
from .model.paths import ELEM, FieldPath
from .model.schema import OPEN_DICT_KEY, OPEN_LIST_ITEM, Placeholder, is_token

CVE = "cve"
MISCONFIG = "misconfiguration"

# Where the pod spec lives in each workload kind, most preferred first.
POD_SPEC = {
    "Deployment": "spec.template.spec",
    "StatefulSet": "spec.template.spec",
    "DaemonSet": "spec.template.spec",
    "ReplicaSet": "spec.template.spec",
    "Job": "spec.template.spec",
    "CronJob": "spec.jobTemplate.spec.template.spec",
    "Pod": "spec",
}
POD_KINDS = tuple(POD_SPEC)
SERVICE_KINDS = ("Service",)


@dataclass(frozen=True)
class Mutation:
    op: str  # "set" or "remove"
    target: str  # pre-alias path
    value: object = None

    def to_dict(self) -> dict:
        out = {"op": self.op, "target": self.target}
        if self.op == "set":
            out["value"] = self.value
        return out


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    category: str
    description: str
    targets: tuple  # pre-alias field paths, as catalogued
    mutations: tuple
    kinds: tuple
    reference: str = ""

    def __post_init__(self):
        if not self.targets:
            raise ValueError(f"{self.id} needs at least one target path")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "description": self.description,
            "reference": self.reference,
            "targets": list(self.targets),
            "mutations": [m.to_dict() for m in self.mutations],
            "kinds": list(self.kinds),
        }


def _set(target, value):
    return Mutation("set", target, value)


CATALOG = (
    CatalogEntry("E1", CVE, "Pod shares the host network namespace", ("hostNetwork",),
                 (_set("hostNetwork", True),), POD_KINDS, "CVE-2020-15257"),
    CatalogEntry("E2", CVE, "Service claims arbitrary external IPs", ("externalIPs",),
                 (_set("externalIPs", ["203.0.113.7"]),), SERVICE_KINDS, "CVE-2020-8554"),
    CatalogEntry("E3", CVE, "subPath on a volume mount used for command injection",
                 ("containers.volumeMounts.subPath", "containers.volumes.subPath"),
                 (_set("containers.volumeMounts.subPath", "symlink-door"),
                  _set("containers.volumes.subPath", "symlink-door")), POD_KINDS, "CVE-2023-3676"),
    CatalogEntry("E4", CVE, "subPath mount escaping its volume via a symlink",
                 ("containers.volumeMounts.subPath",),
                 (_set("containers.volumeMounts.subPath", "symlink-door"),), POD_KINDS, "CVE-2017-1002101"),
    CatalogEntry("E5", CVE, "Containers without resource limits", ("containers.resources.limits",),
                 (Mutation("remove", "containers.resources.limits"),), POD_KINDS, "CVE-2019-11253"),
    CatalogEntry("E6", CVE, "Custom command planting a symlink to the host root", ("container.command",),
                 (_set("container.command", ["ln", "-s", "/", "/mnt/x"]),), POD_KINDS, "CVE-2021-25741"),
    CatalogEntry("E7", CVE, "Localhost seccomp profile with a relative escape path",
                 ("containers.securityContext.seccompProfile.localhostProfile",),
                 (_set("containers.securityContext.seccompProfile.type", "Localhost"),
                  _set("containers.securityContext.seccompProfile.localhostProfile", "../../relative/escape")),
                 POD_KINDS, "CVE-2023-2431"),
    CatalogEntry("E8", CVE, "Privileged container", ("containers.securityContext.privileged",),
                 (_set("containers.securityContext.privileged", True),), POD_KINDS, "CVE-2021-21334"),
    CatalogEntry("M1", MISCONFIG, "Pod shares the host IPC namespace", ("hostIPC",),
                 (_set("hostIPC", True),), POD_KINDS),
    CatalogEntry("M2", MISCONFIG, "Pod shares the host PID namespace", ("hostPID",),
                 (_set("hostPID", True),), POD_KINDS),
    CatalogEntry("M3", MISCONFIG, "Writable root filesystem",
                 ("containers.securityContext.readOnlyRootFilesystem",),
                 (_set("containers.securityContext.readOnlyRootFilesystem", False),), POD_KINDS),
    CatalogEntry("M4", MISCONFIG, "Container may run as root",
                 ("containers.securityContext.runAsNonRoot", "containers.securityContext.runAsRootAllowed"),
                 (_set("containers.securityContext.runAsNonRoot", False),), POD_KINDS),
    CatalogEntry("M5", MISCONFIG, "Extra Linux capabilities", ("containers.securityContext.capabilities.add",),
                 (_set("containers.securityContext.capabilities.add", ["SYS_ADMIN"]),), POD_KINDS),
    CatalogEntry("M6", MISCONFIG, "Child processes may gain privileges",
                 ("containers.securityContext.allowPrivilegeEscalation",),
                 (_set("containers.securityContext.allowPrivilegeEscalation", True),), POD_KINDS),
    CatalogEntry("M7", MISCONFIG, "Custom SELinux user and role",
                 ("containers.securityContext.seLinuxOptions.user", "containers.securityContext.seLinuxOptions.role"),
                 (_set("containers.securityContext.seLinuxOptions.user", "system_u"),
                  _set("containers.securityContext.seLinuxOptions.role", "system_r")), POD_KINDS),
)

ENTRIES = {e.id: e for e in CATALOG}


def catalog_yaml() -> str:
    return dump_document(from_python({"entries": [e.to_dict() for e in CATALOG]}))


# Catalogued targets name list fields without element markers.
LIST_FIELDS = frozenset({"containers", "initContainers", "volumeMounts", "volumes", "externalIPs"})


def expand(target: str, kind: str) -> FieldPath:
    """Concrete field path of a catalogued target for ``kind``.

    ``container``/``containers`` become the pod's container list, and
    ``containers.volumes`` (volumes are pod-level) becomes ``volumes[]``.
    """
    parts = target.split(".")
    if kind in SERVICE_KINDS:
        prefix = ["spec"]
    elif kind in POD_SPEC:
        prefix = POD_SPEC[kind].split(".")
    else:
        raise InapplicableKind(target, kind)
    if parts[0] == "container":
        parts[0] = "containers"
    if parts[:2] == ["containers", "volumes"]:
        parts = parts[1:]
    segments: list = []
    for i, part in enumerate(prefix + parts):
        segments.append(part)
        if part in LIST_FIELDS and i < len(prefix) + len(parts) - 1:
            segments.append(ELEM)
    return FieldPath(tuple(segments))


def _apply(node, segments: tuple, op: str, value):
    """Return a copy of ``node`` with the mutation applied below it."""
    if not segments:
        return from_python(value)
    head, rest = segments[0], segments[1:]
    if head is ELEM:
        items = node.items if isinstance(node, Sequence) else ()
        if not items:
            if op == "remove":
                return node
            items = (Mapping({}),)
        flow = node.flow if isinstance(node, Sequence) else False
        return Sequence(tuple(_apply(i, rest, op, value) for i in items), flow)
    if node is None or not isinstance(node, Mapping):
        if op == "remove":
            return node
        node = Mapping({})
    entries = dict(node.entries)
    if not rest and op == "remove":
        entries.pop(head, None)
    elif op == "remove" and head not in entries:
        return node
    else:
        entries[head] = _apply(entries.get(head), rest, op, value)
    return Mapping(entries)


def inject(manifest, entry: CatalogEntry):
    kind = manifest.get("kind") if isinstance(manifest, Mapping) else None
    kind = kind.value if isinstance(kind, Scalar) else None
    if kind not in entry.kinds:
        raise InapplicableKind(entry.id, str(kind))
    out = manifest
    for m in entry.mutations:
        out = _apply(out, expand(m.target, kind).segments, m.op, m.value)
    return out


# -- legitimate manifests --------------------------------------------------------

SAMPLES = {
    Placeholder.STRING: "sample",
    Placeholder.INT: 1,
    Placeholder.BOOL: True,
    Placeholder.IP: "10.0.0.1",
}


def concretize(node):
    """Turn a policy-rendered manifest into a deployable-looking one.

    Scalar tokens get sample values; open containers become empty.
    """
    if isinstance(node, Mapping):
        if is_token(node, Placeholder.DICT.value) or OPEN_DICT_KEY in node or "string" in node:
            return Mapping({})
        return Mapping({k: concretize(v) for k, v in node.items()})
    if isinstance(node, Sequence):
        if is_token(node, Placeholder.LIST.value) or any(
                isinstance(i, Scalar) and i.value == OPEN_LIST_ITEM for i in node.items):
            return Sequence(())
        return Sequence(tuple(concretize(i) for i in node.items))
    if node.kind == STRING and not node.quoted:
        for ph, sample in SAMPLES.items():
            if node.value == ph.value:
                return Scalar.of(sample)
        if node.value == Placeholder.LIST.value:
            return Sequence(())
        if node.value == Placeholder.DICT.value:
            return Mapping({})
    return node


def pick_target(manifests, entry: CatalogEntry):
    """First manifest of the most preferred applicable kind."""
    by_kind: dict = {}
    for m in manifests:
        k = m.get("kind")
        if isinstance(k, Scalar):
            by_kind.setdefault(k.value, m)
    for kind in entry.kinds:
        if kind in by_kind:
            return by_kind[kind]
    return None


# -- matrix ----------------------------------------------------------------------

@dataclass(frozen=True)
class AttackResult:
    workload: str
    entry: str
    category: str
    kind: str
    blocked_rbac: bool
    blocked_kf: bool
    reason: str | None = None
    path: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AttackMatrix:
    results: list = field(default_factory=list)

    def workloads(self) -> list:
        return list(dict.fromkeys(r.workload for r in self.results))

    def counts(self, workload: str) -> dict:
        rows = [r for r in self.results if r.workload == workload]
        count = lambda cat, attr: sum(1 for r in rows if r.category == cat and getattr(r, attr))  # noqa: E731
        return {
            "rbac_cve": count(CVE, "blocked_rbac"),
            "rbac_misconfiguration": count(MISCONFIG, "blocked_rbac"),
            "kf_cve": count(CVE, "blocked_kf"),
            "kf_misconfiguration": count(MISCONFIG, "blocked_kf"),
            "entries": len(rows),
        }

    def to_dict(self) -> dict:
        return {
            "summary": {w: self.counts(w) for w in self.workloads()},
            "results": [r.to_dict() for r in self.results],
        }

    def table(self) -> str:
        head = f"{'Workload':<18}{'RBAC CVE':>10}{'RBAC Mis':>10}{'KF CVE':>8}{'KF Mis':>8}"
        lines = [head, "-" * len(head)]
        for w in self.workloads():
            c = self.counts(w)
            lines.append(f"{w:<18}{c['rbac_cve']:>10}{c['rbac_misconfiguration']:>10}"
                         f"{c['kf_cve']:>8}{c['kf_misconfiguration']:>8}")
        return "\n".join(lines)


def run_entry(workload: str, entry: CatalogEntry, validator, manifests, rbac, verb: str = "create") -> AttackResult:
    source = pick_target(manifests, entry)
    if source is None:
        raise ConfigError(f"{workload}: no manifest of kind {'/'.join(entry.kinds)} for {entry.id}")
    kind = source["kind"].value
    verdict = validate_object(inject(source, entry), validator)
    return AttackResult(workload, entry.id, entry.category, kind,
                        blocked_rbac=not rbac.allows(kind, verb),
                        blocked_kf=not verdict.allowed, reason=verdict.reason, path=verdict.path)


def run_catalog(validators: dict, manifests: dict, rbac: dict, *, catalog=CATALOG,
                workers: int | None = None) -> AttackMatrix:
    """Inject every entry into each workload's manifests and record both verdicts."""
    jobs = [(w, e) for w in validators for e in catalog]
    call = lambda job: run_entry(job[0], job[1], validators[job[0]], manifests[job[0]], rbac[job[0]])  # noqa: E731
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(call, jobs))
    else:
        results = [call(j) for j in jobs]
    return AttackMatrix(results)


def diff_paths(a, b, parts=()) -> set:
    """Generalized paths where two documents differ (used to check minimality)."""
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        out = set()
        for k in set(a.entries) | set(b.entries):
            if k not in a.entries or k not in b.entries:
                out.add(FieldPath(parts + (k,)))
            else:
                out |= diff_paths(a[k], b[k], parts + (k,))
        return out
    if isinstance(a, Sequence) and isinstance(b, Sequence) and len(a) == len(b):
        out = set()
        for x, y in zip(a.items, b.items):
            out |= diff_paths(x, y, parts + (ELEM,))
        return out
    return set() if to_python(a) == to_python(b) else {FieldPath(parts)}
