import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kubefence.chart import load_chart, parse_lock_rules
from kubefence.engine import validate_object
from kubefence.errors import LockConflict, ShapeConflict
from kubefence.model.nodes import Mapping, Scalar, Sequence, from_python
from kubefence.model.paths import PathPattern
from kubefence.model.schema import (
    REQUIRE_AND_PIN,
    Const,
    EnumSet,
    LockedConstant,
    MappingSchema,
    Placeholder,
    SequenceSchema,
)
from kubefence.policy import (
    Validator,
    build_validator,
    dump_values_schema,
    equivalent,
    explore_variants,
    generate_values_schema,
    render_variants,
    schema_from_node,
)
from kubefence.surface import lookup

from conftest import CHART_NAMES, CHARTS, FIXTURES, generation, sample

GOLDEN = FIXTURES / "golden" / "values-schema"


def chart_dir(tmp_path, values, templates=None, locks=None):
    (tmp_path / "templates").mkdir()
    (tmp_path / "values.yaml").write_text(values)
    for name, text in (templates or {"cm.yaml": "apiVersion: v1\nkind: ConfigMap\n"}).items():
        (tmp_path / "templates" / name).write_text(text)
    if locks is not None:
        (tmp_path / "locks.yaml").write_text(locks)
    return tmp_path


# -- values schema --------------------------------------------------------------------

def test_values_schema_golden():
    schema = generate_values_schema(load_chart(GOLDEN / "chart"))
    assert dump_values_schema(schema) == (GOLDEN / "expected.yaml").read_text()


def test_values_schema_leaves():
    schema = generate_values_schema(load_chart(GOLDEN / "chart"))
    assert schema["image"]["pullSecrets"] is Placeholder.LIST
    assert schema["tracking"]["enabled"] is Placeholder.BOOL
    assert schema["tracking"]["replicaCount"] is Placeholder.INT
    assert schema["tracking"]["host"] is Placeholder.IP
    assert schema["tracking"]["containerSecurityContext"]["runAsNonRoot"] == LockedConstant.of(True, REQUIRE_AND_PIN)
    assert schema["image"]["registry"].value == "docker.io"
    assert schema["postgreSQL"]["arch"] == EnumSet.of(["standalone", "repl"])


def test_empty_schema(tmp_path):
    chart = load_chart(chart_dir(tmp_path, "", locks="locks: []\n"))
    assert generate_values_schema(chart) == MappingSchema({})


def test_required_lock_inserted(tmp_path):
    values = "tracking:\n  containerSecurityContext:\n    readOnlyRootFilesystem: true\n"
    schema = generate_values_schema(load_chart(chart_dir(tmp_path, values)))
    context = schema["tracking"]["containerSecurityContext"]
    assert context["runAsNonRoot"] == LockedConstant.of(True, REQUIRE_AND_PIN)
    assert context["readOnlyRootFilesystem"].value is True


def test_lock_conflicts_with_enum(tmp_path):
    values = "# net.mode\n# `on` or `auto`\nnet:\n  mode: auto\n"
    locks = "locks:\n  - {target: net.mode, value: off, scope: values}\n"
    with pytest.raises(LockConflict):
        generate_values_schema(load_chart(chart_dir(tmp_path, values, locks=locks)))


# -- variants -------------------------------------------------------------------------

def test_arch_enum_two_variants():
    variants = explore_variants(generate_values_schema(load_chart(GOLDEN / "chart")))
    assert [v.index for v in variants] == [1, 2]
    assert [v.values["postgreSQL"]["arch"].value for v in variants] == ["standalone", "repl"]


def test_no_enums_single_variant():
    schema = MappingSchema({"a": Placeholder.INT, "b": Const.of("x")})
    [variant] = explore_variants(schema)
    assert variant.index == 1 and variant.values == schema


def brute_force_variants(options):
    """Reference for the i-th/last-reused rule over enum option lists."""
    count = max(len(o) for o in options)
    return [tuple(o[min(i, len(o) - 1)] for o in options) for i in range(count)]


def test_mixed_length_enums():
    schema = MappingSchema({"A": EnumSet.of(["a1", "a2"]), "B": EnumSet.of(["b1", "b2", "b3"])})
    got = [(v.values["A"].value, v.values["B"].value) for v in explore_variants(schema)]
    assert got == [("a1", "b1"), ("a2", "b2"), ("a2", "b3")]
    assert got == brute_force_variants([["a1", "a2"], ["b1", "b2", "b3"]])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 50), min_size=2, max_size=5, unique=True), min_size=0, max_size=5))
def test_variants_cover_every_option(options):
    schema = MappingSchema({f"e{i}": EnumSet.of(o) for i, o in enumerate(options)})
    variants = explore_variants(schema)
    assert len(variants) == max((len(o) for o in options), default=1)
    if options:
        got = [tuple(v.values[f"e{i}"].value for i in range(len(options))) for v in variants]
        assert got == brute_force_variants(options)
    for i, opts in enumerate(options):
        assert {v.values[f"e{i}"].value for v in variants} == set(opts)


# -- rendering ------------------------------------------------------------------------

def test_mlflow_render_variants():
    gen = generation("mlflow-mini")
    assert len(gen.variants) == 2
    assert len(gen.manifests) >= 6
    kinds = {(i, m["kind"].value) for i, m in gen.manifests}
    assert kinds == {(i, k) for i in (1, 2) for k in ("Secret", "Deployment", "Service")}


def test_literal_template_repeats(tmp_path):
    text = "apiVersion: v1\nkind: ConfigMap\ndata:\n  a: b\n"
    values = "# mode\n# `x` or `y` or `z`\nmode: x\n"
    chart = load_chart(chart_dir(tmp_path, values, {"cm.yaml": text}))
    rendered = render_variants(chart, explore_variants(generate_values_schema(chart)))
    assert [i for i, _ in rendered] == [1, 2, 3]
    assert all(m == rendered[0][1] for _, m in rendered)


def test_bool_condition_branches_both_rendered():
    secrets = [m for _, m in generation("mlflow-mini").manifests if m["kind"].value == "Secret"]
    assert {"PGUSER" in m["data"] for m in secrets} == {True, False}


def test_render_variants_parallel_matches_serial():
    chart = load_chart(CHARTS / "nginx-mini")
    variants = explore_variants(generate_values_schema(chart))
    assert render_variants(chart, variants, workers=4) == render_variants(chart, variants)


# -- validator ------------------------------------------------------------------------

def test_pod_merge():
    validator = build_validator([sample("pod-nginx-1.yaml"), sample("pod-nginx-2.yaml")],
                                server_fields=False)
    container = validator.kinds["Pod"]["containers"].element
    assert container["name"] is Placeholder.STRING
    assert container["image"] is Placeholder.STRING
    assert container["imagePullPolicy"] == EnumSet.of(["IfNotPresent", "Always"])
    assert "ports" in container.optional
    assert "imagePullPolicy: [IfNotPresent, Always]" in validator.to_text()


def test_single_manifest_identity():
    manifest = from_python({"apiVersion": "v1", "kind": "ConfigMap", "data": {"a": "b", "n": 1}})
    validator = build_validator([manifest], widen_release=False, server_fields=False)
    assert validator.kinds["ConfigMap"] == schema_from_node(manifest)


def test_single_manifest_with_locks():
    manifest = from_python({"kind": "Pod", "spec": {"containers": [
        {"name": "a", "securityContext": {"runAsNonRoot": True}}]}})
    rules = parse_lock_rules({"locks": [
        {"target": "...containers[].securityContext.runAsNonRoot", "value": True, "mode": "require-and-pin"}]})
    schema = build_validator([manifest], rules, server_fields=False).kinds["Pod"]
    context = schema["spec"]["containers"].element["securityContext"]
    assert context["runAsNonRoot"] == LockedConstant.of(True, REQUIRE_AND_PIN)
    assert "runAsNonRoot" in context.required


def test_shape_conflict():
    a = from_python({"kind": "Pod", "ports": {"a": 1}})
    b = from_python({"kind": "Pod", "ports": 5})
    with pytest.raises(ShapeConflict) as err:
        build_validator([a, b])
    assert "ports" in str(err.value)


def test_differing_constants_become_enum():
    docs = [from_python({"kind": "X", "v": v}) for v in ("a", "b", "a", "c")]
    schema = build_validator(docs, server_fields=False).kinds["X"]
    assert schema["v"] == EnumSet.of(["a", "b", "c"])


def test_placeholder_widens_constant():
    docs = [from_python({"kind": "X", "v": 3}), Mapping({"kind": Scalar.of("X"), "v": Scalar.of("int", "plain")})]
    assert build_validator(docs, server_fields=False).kinds["X"]["v"] is Placeholder.INT


def test_strict_merge_keeps_constant():
    docs = [from_python({"kind": "X", "v": 3}), Mapping({"kind": Scalar.of("X"), "v": Scalar.of("int", "plain")})]
    assert build_validator(docs, server_fields=False, strict=True).kinds["X"]["v"] == Const.of(3)


def test_sequences_merge_elementwise():
    docs = [from_python({"kind": "X", "l": [{"a": 1}]}), from_python({"kind": "X", "l": [{"b": "x"}, {"a": 2}]})]
    element = build_validator(docs, server_fields=False).kinds["X"]["l"].element
    assert element["a"] == EnumSet.of([1, 2])
    assert element.optional == {"a", "b"}


def test_server_fields_whitelisted(mlflow):
    meta = mlflow.validator.kinds["Deployment"]["metadata"]
    assert meta["managedFields"] is Placeholder.LIST
    assert meta["resourceVersion"] is Placeholder.STRING
    assert {"uid", "creationTimestamp", "generation"} <= set(meta.optional)


@pytest.mark.parametrize("name", CHART_NAMES)
def test_soundness_closure(name):
    start = time.perf_counter()
    gen = generation(name)
    reloaded = Validator.from_text(gen.validator.to_text())
    for validator in (gen.validator, reloaded):
        denied = [(i, validate_object(m, validator)) for i, m in gen.manifests]
        assert [d for d in denied if not d[1].allowed] == []
    assert len(gen.validator.kinds) >= 3
    assert time.perf_counter() - start < 10


@pytest.mark.parametrize("name", CHART_NAMES)
def test_validator_file_roundtrip(name):
    validator = generation(name).validator
    again = Validator.from_text(validator.to_text())
    assert set(again.kinds) == set(validator.kinds)
    for kind, schema in validator.kinds.items():
        assert equivalent(schema, again.kinds[kind]), kind
    assert again.meta["chart"] == name


@pytest.mark.parametrize("name", CHART_NAMES)
def test_option_coverage(name):
    gen = generation(name)
    chart = load_chart(CHARTS / name)

    def scalars(node):
        if isinstance(node, Mapping):
            for v in node.entries.values():
                yield from scalars(v)
        elif isinstance(node, Sequence):
            for v in node.items:
                yield from scalars(v)
        else:
            yield node.value

    def selected(variant, path):
        node = variant.values
        for key in path.segments:
            node = node[key]
        return node.value

    seen = {v for _, m in gen.manifests for v in scalars(m)}
    for annotation in chart.enums:
        by_option = {}
        for variant in gen.variants:
            rendered = [m for i, m in gen.manifests if i == variant.index]
            by_option.setdefault(selected(variant, annotation.target), []).extend(rendered)
        assert set(by_option) == set(annotation.options)
        for option in annotation.options:
            if option in seen:
                continue
            # options that only steer conditionals never print; they must still change the output
            others = [ms for o, ms in by_option.items() if o != option]
            assert all(by_option[option] != ms for ms in others), (str(annotation.target), option)


@pytest.mark.parametrize("name", CHART_NAMES)
def test_lock_preservation(name):
    rules = [r for r in load_chart(CHARTS / name).locks
             if r.scope == "manifest" and not isinstance(r.value, Placeholder)]
    for kind, schema in generation(name).validator.kinds.items():
        for rule in rules:
            for path in _schema_paths(schema):
                if rule.target.matches(path):
                    node = lookup(schema, path)
                    assert node == LockedConstant.of(rule.value, rule.mode), (kind, str(path))


def _schema_paths(schema, path=None):
    from kubefence.model.paths import FieldPath
    path = path or FieldPath()
    if isinstance(schema, MappingSchema):
        for key, child in schema.items():
            yield path.key(key)
            yield from _schema_paths(child, path.key(key))
    elif isinstance(schema, SequenceSchema) and schema.element is not None:
        yield from _schema_paths(schema.element, path.elem())


def test_runasnonroot_locked_in_every_workload():
    pattern = PathPattern.parse("...containers[].securityContext.runAsNonRoot")
    for name in CHART_NAMES:
        schema = generation(name).validator.kinds.get("Deployment") or generation(name).validator.kinds["StatefulSet"]
        hits = [p for p in _schema_paths(schema) if pattern.matches(p)]
        assert hits, name
        assert all(lookup(schema, p) == LockedConstant.of(True, REQUIRE_AND_PIN) for p in hits)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_merge_order_insensitive(rnd):
    manifests = [m for _, m in generation("mlflow-mini").manifests]
    base = build_validator(manifests)
    shuffled = list(manifests)
    rnd.shuffle(shuffled)
    other = build_validator(shuffled)
    assert set(base.kinds) == set(other.kinds)
    for kind in base.kinds:
        assert equivalent(base.kinds[kind], other.kinds[kind]), kind


@settings(max_examples=50, deadline=None)
@given(st.lists(st.dictionaries(st.sampled_from("abc"), st.one_of(st.integers(0, 3), st.sampled_from("xy")),
                                max_size=3), min_size=1, max_size=5))
def test_random_merge_order_insensitive(docs):
    nodes = [from_python({"kind": "X", **d}) for d in docs]
    a = build_validator(nodes, server_fields=False).kinds["X"]
    b = build_validator(list(reversed(nodes)), server_fields=False).kinds["X"]
    assert equivalent(a, b)
    for node in nodes:
        assert validate_object(node, Validator({"X": a})).allowed
