import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kubefence.cli import _default_catalog
from kubefence.errors import ConfigError, UnknownKindInValidator, ZeroTotal
from kubefence.model.nodes import from_python
from kubefence.model.paths import FieldPath
from kubefence.model.schema import MappingSchema, Placeholder, SequenceSchema
from kubefence.policy import Validator, schema_from_node
from kubefence.surface import (
    FieldCatalog,
    RbacPolicy,
    SurfaceReport,
    analyze,
    compute_reduction,
    dump_catalog,
    flatten_openapi,
    format_table,
    load_catalog,
    load_rbac,
    lookup,
    restrictable_sets,
)

from conftest import CHART_NAMES, FIXTURES, generation

# Published counts per workload: (rbac, kf, rbac %, kf %) out of 4882 fields.
PUBLISHED = {
    "Nginx": (3747, 4751, 76.75, 97.32),
    "Mlflow": (3883, 4826, 79.54, 98.85),
    "PostgreSQL": (2906, 4711, 59.52, 96.50),
    "RabbitMQ": (3676, 4708, 75.30, 96.44),
    "SonarQube": (1012, 4772, 20.73, 97.75),
}


@pytest.mark.parametrize("workload", sorted(PUBLISHED))
def test_published_percentages(workload):
    rbac, kf, rbac_pct, kf_pct = PUBLISHED[workload]
    assert compute_reduction(rbac, 4882) == pytest.approx(rbac_pct, abs=0.01)
    assert compute_reduction(kf, 4882) == pytest.approx(kf_pct, abs=0.01)


def test_reduction_examples():
    assert compute_reduction(3883, 4882) == 79.54
    assert compute_reduction(0, 100) == 0.00
    assert compute_reduction(1012, 4882) == 20.73


def test_half_up_rounding():
    assert compute_reduction(1, 8) == 12.5
    assert compute_reduction(1, 800) == 0.13  # 0.125 rounds up


def test_zero_total():
    with pytest.raises(ZeroTotal):
        compute_reduction(0, 0)


def test_restrictable_out_of_range():
    with pytest.raises(ValueError):
        compute_reduction(5, 4)


def toy_catalog():
    return FieldCatalog({
        "PodX": frozenset(FieldPath.parse(f"spec.f{i}") for i in range(10)),
        "SvcX": frozenset(FieldPath.parse(f"spec.s{i}") for i in range(5)),
    })


def test_toy_example():
    schema = schema_from_node(from_python({"spec": {f"f{i}": "x" for i in range(4)}}))
    report = analyze(toy_catalog(), Validator({"PodX": schema}), {"PodX"}, workload="toy")
    assert (report.restrictable_rbac, report.restrictable_kf, report.total) == (5, 11, 15)
    assert (report.reduction_rbac, report.reduction_kf) == (33.33, 73.33)
    assert report.improvement == 40.0


def test_everything_allowed_and_whitelisted():
    schema = schema_from_node(from_python({"spec": {f"f{i}": "x" for i in range(10)}}))
    svc = schema_from_node(from_python({"spec": {f"s{i}": "x" for i in range(5)}}))
    report = analyze(toy_catalog(), Validator({"PodX": schema, "SvcX": svc}), {"PodX", "SvcX"})
    assert (report.reduction_rbac, report.reduction_kf) == (0.0, 0.0)


def test_unknown_kind_in_validator():
    with pytest.raises(UnknownKindInValidator):
        analyze(toy_catalog(), Validator({"Nope": MappingSchema({})}), {"PodX"})


def test_rbac_kind_missing_from_catalog():
    with pytest.raises(ConfigError):
        analyze(toy_catalog(), Validator({}), {"Nope"})


def test_open_containers_cover_descendants():
    schema = MappingSchema({"spec": MappingSchema({"template": Placeholder.DICT,
                                                   "items": SequenceSchema(Placeholder.LIST)})})
    assert lookup(schema, FieldPath.parse("spec.template.a.b[].c")) is Placeholder.DICT
    assert lookup(schema, FieldPath.parse("spec.items[][].x")) is Placeholder.LIST
    assert lookup(schema, FieldPath.parse("spec.other")) is None
    assert lookup(schema, FieldPath.parse("spec.items.x")) is None


def test_value_locks_reported_separately():
    from kubefence.model.schema import LockedConstant
    schema = MappingSchema({"spec": MappingSchema({"f0": LockedConstant.of(True), "f1": Placeholder.STRING})})
    report = analyze(toy_catalog(), Validator({"PodX": schema}), {"PodX"}, count_value_locks=True)
    assert report.restrictable_kf == 13
    assert report.value_restricted == 1
    assert report.to_dict()["reduction_kf_with_values"] == compute_reduction(14, 15)


# -- bundled catalog -----------------------------------------------------------------

@pytest.fixture(scope="module")
def catalog():
    return load_catalog(_default_catalog())


def test_bundled_catalog_size(catalog):
    assert len(catalog.kinds) == 20
    assert catalog.total == 7064
    assert FieldPath.parse("spec.template.spec.hostNetwork") in catalog.kinds["Deployment"]
    assert FieldPath.parse("spec.externalIPs[]") in catalog.kinds["Service"]


@pytest.mark.parametrize("name", CHART_NAMES)
def test_workload_reports(catalog, name):
    validator = generation(name).validator
    report = analyze(catalog, validator, validator.kinds, workload=name)
    assert report.restrictable_kf > report.restrictable_rbac > 0
    assert report.improvement > 0
    assert report.reduction_kf < 100


def test_bundled_workload_counts(catalog):
    validator = generation("mlflow-mini").validator
    report = analyze(catalog, validator, validator.kinds)
    assert (report.restrictable_rbac, report.restrictable_kf) == (6064, 6994)
    assert (report.reduction_rbac, report.reduction_kf) == (85.84, 99.01)


def test_format_table():
    text = format_table([SurfaceReport("Nginx", 4882, 3747, 4751)])
    assert "76.75" in text and "97.32" in text and "20.57" in text


# -- loaders -------------------------------------------------------------------------

def test_load_rbac_forms(tmp_path):
    (tmp_path / "a.yaml").write_text("kinds:\n  Deployment: [create, get]\n  Service: ['*']\n")
    (tmp_path / "b.yaml").write_text("- Deployment\n- Service\n")
    a, b = load_rbac(tmp_path / "a.yaml"), load_rbac(tmp_path / "b.yaml")
    assert a.allows("Deployment", "create") and not a.allows("Deployment", "delete")
    assert a.allows("Service", "delete") and not a.allows("Pod", "get")
    assert b.kinds == {"Deployment", "Service"} and b.allows("Service", "patch")


def test_catalog_roundtrip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(dump_catalog(toy_catalog()))
    assert load_catalog(path) == toy_catalog()


def test_flatten_openapi():
    doc = json.loads((FIXTURES / "surface" / "openapi-mini.json").read_text())
    catalog = flatten_openapi(doc)
    assert {k: len(v) for k, v in catalog.kinds.items()} == {"ConfigMap": 31, "Service": 53}
    service = {str(p) for p in catalog.kinds["Service"]}
    assert "spec.externalIPs[]" in service
    assert "spec.ports[].port" in service
    assert not any(p.startswith("status") for p in service)
    assert "spec.sessionAffinityConfig.clientIP.timeoutSeconds" in service


def test_flatten_cuts_recursion():
    doc = {"definitions": {
        "Node": {"x-kubernetes-group-version-kind": [{"kind": "Tree"}],
                 "properties": {"kind": {"type": "string"},
                                "child": {"$ref": "#/definitions/Node"}}},
    }}
    assert {str(p) for p in flatten_openapi(doc).kinds["Tree"]} == {"kind", "child"}


# -- properties ----------------------------------------------------------------------

_segments = st.sampled_from(["a", "b", "c", "d"])
_paths = st.lists(_segments, min_size=1, max_size=3).map(lambda s: FieldPath(tuple(s)))


def _prefix_free(paths):
    """Drop paths that are prefixes of others so each is a leaf."""
    ordered = sorted(paths, key=len, reverse=True)
    kept = []
    for p in ordered:
        if not any(q.startswith(p) for q in kept):
            kept.append(p)
    return frozenset(kept)


_catalogs = st.dictionaries(st.sampled_from(["K1", "K2", "K3", "K4"]),
                            st.sets(_paths, min_size=1, max_size=8).map(_prefix_free), min_size=1)


def _schema_for(paths):
    tree = {}
    for p in paths:
        node = tree
        for seg in p.segments[:-1]:
            node = node.setdefault(seg, {})
        node[p.segments[-1]] = "x"
    return schema_from_node(from_python(tree))


@st.composite
def surface_inputs(draw):
    kinds = draw(_catalogs)
    catalog = FieldCatalog(kinds)
    allowed = draw(st.sets(st.sampled_from(sorted(kinds))))
    schemas = {}
    for kind in draw(st.sets(st.sampled_from(sorted(kinds)))):
        whitelisted = draw(st.sets(st.sampled_from(sorted(kinds[kind], key=str))))
        schemas[kind] = _schema_for(whitelisted)
    return catalog, Validator(schemas), allowed


@settings(max_examples=200, deadline=None)
@given(surface_inputs())
def test_superset_law(inputs):
    catalog, validator, allowed = inputs
    rbac, kf = restrictable_sets(catalog, validator, allowed)
    assert rbac <= kf
    report = analyze(catalog, validator, allowed)
    assert report.restrictable_kf >= report.restrictable_rbac
    assert report.reduction_kf >= report.reduction_rbac


@settings(max_examples=100, deadline=None)
@given(surface_inputs(), st.randoms(use_true_random=False))
def test_reorder_invariance(inputs, rng):
    catalog, validator, allowed = inputs
    kinds = list(catalog.kinds.items())
    rng.shuffle(kinds)
    shuffled = FieldCatalog(dict(kinds))
    assert analyze(shuffled, validator, allowed) == analyze(catalog, validator, allowed)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6).flatmap(lambda t: st.tuples(st.integers(0, t), st.just(t))))
def test_reduction_bounds(pair):
    r, t = pair
    pct = compute_reduction(r, t)
    assert 0 <= pct <= 100
    assert abs(pct - 100 * r / t) <= 0.005 + 1e-9


def test_rbac_allow_all():
    policy = RbacPolicy.allow_all(["Pod"])
    assert policy.allows("Pod", "create") and not policy.allows("Service", "create")
