"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import contextlib
import http.client
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from hypothesis import given, settings

from kubefence.attacks import CVE, MISCONFIG, concretize, run_catalog
from kubefence.chart import load_chart
from kubefence.engine import validate_object
from kubefence.model.nodes import to_python
from kubefence.model.schema import EnumSet, MappingSchema, Placeholder
from kubefence.policy import build_validator, dump_values_schema, explore_variants, generate_values_schema
from kubefence.proxy import ProxyConfig, start_background
from kubefence.surface import RbacPolicy, analyze, compute_reduction, restrictable_sets
from kubefence.template import ExternalRenderer, RenderContext, render

import oracle
import test_surface
from conftest import CHART_NAMES, CHARTS, FIXTURES, HELM, generation, sample
from test_attacks import WORKLOADS, legit
from test_template_differential import OVERRIDES, documents, with_overrides

GOLDEN = FIXTURES / "golden" / "values-schema"


@contextlib.contextmanager
def criterion(capsys, number, title):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nFAIL criterion {number}: {title}")
        raise
    with capsys.disabled():
        print(f"\nPASS criterion {number}: {title}")


def test_1_values_schema_golden(capsys):
    with criterion(capsys, 1, "values schema golden"):
        start = time.perf_counter()
        schema = generate_values_schema(load_chart(GOLDEN / "chart"))
        assert dump_values_schema(schema) == (GOLDEN / "expected.yaml").read_text()
        assert time.perf_counter() - start < 1


def test_2_variant_count(capsys):
    with criterion(capsys, 2, "variant count"):
        variants = explore_variants(generate_values_schema(load_chart(GOLDEN / "chart")))
        assert [v.values["postgreSQL"]["arch"].value for v in variants] == ["standalone", "repl"]
        mixed = MappingSchema({"A": EnumSet.of(["a1", "a2"]), "B": EnumSet.of(["b1", "b2", "b3"])})
        got = [(v.values["A"].value, v.values["B"].value) for v in explore_variants(mixed)]
        assert got == [("a1", "b1"), ("a2", "b2"), ("a2", "b3")]


def test_3_merge(capsys):
    with criterion(capsys, 3, "two-manifest merge"):
        validator = build_validator([sample("pod-nginx-1.yaml"), sample("pod-nginx-2.yaml")],
                                    server_fields=False)
        container = validator.kinds["Pod"]["containers"].element
        assert container["name"] is Placeholder.STRING
        assert container["image"] is Placeholder.STRING
        assert container["imagePullPolicy"] == EnumSet.of(["IfNotPresent", "Always"])
        assert "imagePullPolicy: [IfNotPresent, Always]" in validator.to_text()


def test_4_soundness_closure(capsys):
    with criterion(capsys, 4, "soundness closure"):
        assert len(CHART_NAMES) >= 2
        start = time.perf_counter()
        for name in CHART_NAMES:
            gen = generation(name)
            assert len(gen.validator.kinds) >= 3
            denied = [i for i, m in gen.manifests if not validate_object(m, gen.validator).allowed]
            assert denied == [], name
        assert time.perf_counter() - start < 10


def test_5_attack_matrix(capsys):
    with criterion(capsys, 5, "attack matrix 8/7 vs 0/0"):
        validators = {w: generation(c).validator for w, c in WORKLOADS.items()}
        manifests = {w: legit(w) for w in WORKLOADS}
        rbac = {w: RbacPolicy.allow_all(validators[w].kinds) for w in WORKLOADS}
        matrix = run_catalog(validators, manifests, rbac)
        for w in WORKLOADS:
            assert matrix.counts(w) == {"rbac_cve": 0, "rbac_misconfiguration": 0,
                                        "kf_cve": 8, "kf_misconfiguration": 7, "entries": 15}
        assert {r.category for r in matrix.results} == {CVE, MISCONFIG}


@settings(max_examples=100, deadline=None)
@given(test_surface.surface_inputs())
def _superset(inputs):
    catalog, validator, allowed = inputs
    rbac, kf = restrictable_sets(catalog, validator, allowed)
    assert rbac <= kf
    assert analyze(catalog, validator, allowed).reduction_kf >= analyze(catalog, validator, allowed).reduction_rbac


def test_6_surface_arithmetic(capsys):
    with criterion(capsys, 6, "surface reduction arithmetic"):
        for rbac, kf, rbac_pct, kf_pct in test_surface.PUBLISHED.values():
            assert abs(compute_reduction(rbac, 4882) - rbac_pct) <= 0.01
            assert abs(compute_reduction(kf, 4882) - kf_pct) <= 0.01
        _superset()


def test_7_oracle_equivalence(capsys):
    with criterion(capsys, 7, "validation oracle equivalence"):
        count, disagreements, _ = oracle.run(1000, seed=20240)
        assert count >= 1000
        assert disagreements == []
        assert oracle.MAX_DEPTH <= 4


@pytest.fixture
def proxy(tmp_path, upstream):
    path = tmp_path / "nginx.kf.yaml"
    generation("nginx-mini").validator.save(path)
    config = ProxyConfig(upstream=f"http://127.0.0.1:{upstream.server_address[1]}", validator=str(path),
                         listen_port=0, audit_log=str(tmp_path / "audit.jsonl"))
    server, _ = start_background(config)
    yield server, upstream, tmp_path / "audit.jsonl"
    server.shutdown()
    server.server_close()


def _post(address, body, conn=None):
    own = conn is None
    conn = conn or http.client.HTTPConnection(*address, timeout=10)
    conn.request("POST", "/apis/apps/v1/namespaces/default/deployments", body=body,
                 headers={"Content-Type": "application/json"})
    resp = conn.getresponse()
    data = resp.read()
    if own:
        conn.close()
    return resp.status, data


def test_8_proxy_end_to_end(capsys, proxy):
    server, upstream, audit_path = proxy
    address = server.server_address[:2]
    with criterion(capsys, 8, "proxy end to end"):
        start = time.perf_counter()
        _, manifest = next((i, m) for i, m in generation("nginx-mini").manifests if m["kind"].value == "Deployment")
        good = json.dumps(to_python(concretize(manifest))).encode()
        bad = json.dumps(to_python(sample("root-escalation.yaml"))).encode()

        status, _ = _post(address, good)
        assert status == 201 and upstream.received[-1][2] == good
        status, data = _post(address, bad)
        assert status == 403 and "runAsNonRoot" in json.loads(data)["message"]

        with ThreadPoolExecutor(max_workers=50) as pool:
            statuses = list(pool.map(lambda i: _post(address, bad if i % 2 else good)[0], range(50)))
        assert sorted(statuses) == [201] * 25 + [403] * 25
        deadline = time.monotonic() + 5
        while len(audit_path.read_text().splitlines()) < 52 and time.monotonic() < deadline:
            time.sleep(0.01)
        records = [json.loads(line) for line in audit_path.read_text().splitlines()]
        assert len(records) == 52
        assert all({"timestamp", "method", "path", "decision"} <= set(r) for r in records)

        doc = json.loads(good)
        doc["metadata"]["annotations"] = {"pad": ""}
        doc["metadata"]["annotations"]["pad"] = "x" * (4096 - len(json.dumps(doc).encode()))
        body = json.dumps(doc).encode()
        conn = http.client.HTTPConnection(*address, timeout=10)
        samples = []
        for _ in range(1000):
            t0 = time.perf_counter()
            _post(address, body, conn)
            samples.append(time.perf_counter() - t0)
        conn.close()
        samples.sort()
        assert statistics.median(samples) < 0.005
        assert samples[989] < 0.050
        assert time.perf_counter() - start < 60


@pytest.mark.skipif(HELM is None, reason="helm binary not installed")
def test_9_template_differential(capsys):
    with criterion(capsys, 9, "template engine differential"):
        renderer = ExternalRenderer()
        for name in CHART_NAMES:
            chart = load_chart(CHARTS / name)
            for changes in [{}] + OVERRIDES[name]:
                values = with_overrides(chart.values, changes)
                ours = render(chart, RenderContext(values))
                theirs = renderer.render(chart, values)
                for rel, text in ours.items():
                    assert documents(text) == documents(theirs.get(rel, "")), (name, rel)
