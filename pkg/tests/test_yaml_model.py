import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kubefence.errors import DocumentSyntaxError, MultipleDocuments, UnknownPlaceholder, UnsupportedYamlFeature
from kubefence.model.emit import dump_document
from kubefence.model.nodes import BOOLEAN, INTEGER, STRING, Mapping, Scalar, Sequence, from_python
from kubefence.model.parse import parse_document
from kubefence.model.paths import FieldPath
from kubefence.model.schema import (
    Const,
    EnumSet,
    LockedConstant,
    Placeholder,
    REQUIRE_AND_PIN,
    infer_placeholder,
    value_matches,
)

from conftest import SAMPLES


def test_minimal_mapping():
    doc = parse_document(b"a: 1")
    assert doc == Mapping({"a": Scalar(1, INTEGER)})


def test_mixed_sequence():
    doc = parse_document(b"[1, two]")
    assert doc == Sequence((Scalar(1, INTEGER), Scalar("two", STRING)))


def test_root_escalation_manifest():
    doc = parse_document((SAMPLES / "root-escalation.yaml").read_bytes())
    assert doc["kind"].value == "Deployment"
    container = doc["spec"]["template"]["spec"]["containers"][0]
    flag = container["securityContext"]["runAsNonRoot"]
    assert flag == Scalar(False, BOOLEAN)


def test_positions_recorded():
    doc = parse_document(b"a:\n  b: x\n")
    assert (doc["a"]["b"].line, doc["a"]["b"].column) == (2, 6)


def test_json_format():
    assert parse_document('{"a": [true, null]}', "json") == from_python({"a": [True, None]})


def test_multiple_documents_rejected():
    with pytest.raises(MultipleDocuments):
        parse_document(b"a: 1\n---\nb: 2\n")


def test_syntax_error_has_position():
    with pytest.raises(DocumentSyntaxError) as err:
        parse_document(b"a: [1, 2\nb: 3\n")
    assert err.value.line is not None


def test_anchors_rejected():
    with pytest.raises(UnsupportedYamlFeature):
        parse_document(b"a: &x 1\nb: *x\n")


def test_unknown_placeholder_token():
    with pytest.raises(UnknownPlaceholder):
        Placeholder.from_token("float")


@pytest.mark.parametrize("text, expected", [
    ("enabled: true", Placeholder.BOOL),
    ('host: "0.0.0.0"', Placeholder.IP),
    ("pullSecrets: [{name: a}, {name: b}]", Placeholder.LIST),
    ("replicaCount: 1", Placeholder.INT),
    ("x: 1.5", Placeholder.STRING),
    ("x: ~", Placeholder.STRING),
    ("x: '::1'", Placeholder.STRING),
    ("x: {a: 1}", Placeholder.DICT),
])
def test_infer_placeholder(text, expected):
    doc = parse_document(text)
    assert infer_placeholder(next(iter(doc.entries.values()))) is expected


def test_value_matches_examples():
    assert value_matches(Scalar.of(5), Placeholder.INT) == (True, None)
    assert value_matches(Scalar.of("Always"), EnumSet.of(["IfNotPresent", "Always"])) == (True, None)
    ok, path = value_matches(Scalar.of(False), LockedConstant.of(True, REQUIRE_AND_PIN))
    assert not ok and str(path) == "."


def test_value_matches_reports_shallowest_path():
    from kubefence.model.schema import MappingSchema, SequenceSchema
    schema = MappingSchema({"a": SequenceSchema(MappingSchema({"b": Placeholder.INT}))})
    ok, path = value_matches(from_python({"a": [{"b": 1}, {"b": "x"}]}), schema)
    assert not ok and str(path) == "a[].b"


def test_enum_needs_two_options():
    with pytest.raises(ValueError):
        EnumSet.of(["a", "a"])


@pytest.mark.parametrize("text", [
    "spec.template.spec.containers[].securityContext.runAsNonRoot",
    "spec.externalIPs[]",
    "a[][].b",
    "metadata.annotations.example\\.com/x",
    ".",
])
def test_fieldpath_canonical_roundtrip(text):
    assert str(FieldPath.parse(text)) == text


@pytest.mark.parametrize("text", ["a..b", "a[b]", "a.", "a\\"])
def test_fieldpath_rejects_malformed(text):
    with pytest.raises(ValueError):
        FieldPath.parse(text)


# -- properties ----------------------------------------------------------------

_keys = st.text(min_size=1, max_size=8)
_scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-10**12, max_value=10**12),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=12),
)
_trees = st.recursive(
    _scalars,
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(_keys, children, max_size=4),
    ),
    max_leaves=20,
)
documents = _trees.map(from_python)


@settings(max_examples=200, deadline=None)
@given(documents)
def test_roundtrip(doc):
    assert parse_document(dump_document(doc).encode()) == doc


@settings(max_examples=200, deadline=None)
@given(documents)
def test_roundtrip_preserves_key_order(doc):
    def order(node):
        if isinstance(node, Mapping):
            return [(k, order(v)) for k, v in node.items()]
        if isinstance(node, Sequence):
            return [order(v) for v in node]
        return None
    assert order(parse_document(dump_document(doc))) == order(doc)


@settings(max_examples=300, deadline=None)
@given(documents)
def test_placeholder_admits_origin(doc):
    assert value_matches(doc, infer_placeholder(doc))[0]


@settings(max_examples=300, deadline=None)
@given(st.lists(_scalars.filter(lambda v: not isinstance(v, float)), min_size=2, max_size=5, unique_by=repr),
       _scalars, _scalars)
def test_enum_widening_monotone(options, probe, extra):
    try:
        narrow = EnumSet.of(options)
    except ValueError:
        return
    wide = EnumSet.of(list(options) + [extra])
    if value_matches(Scalar.of(probe), narrow)[0]:
        assert value_matches(Scalar.of(probe), wide)[0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.text(min_size=1, max_size=5), st.just(None)), min_size=1, max_size=6))
def test_fieldpath_text_roundtrip(parts):
    path = FieldPath(tuple(FieldPath.parse("[]").segments[0] if p is None else p for p in parts))
    assert FieldPath.parse(str(path)) == path


def test_const_equality_distinguishes_types():
    assert Const.of(1) != Const.of("1")
    assert Const.of(True) != Const.of(1)
