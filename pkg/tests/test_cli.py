import json
import re

import pytest

from kubefence.cli import main
from kubefence.model.parse import parse_yaml
from kubefence.policy import Validator

from conftest import CHARTS, FIXTURES, SAMPLES


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def validator_file(tmp_path, capsys):
    path = tmp_path / "nginx.kf.yaml"
    code, out, _ = run(capsys, "generate", str(CHARTS / "nginx-mini"), "--out", str(path))
    assert code == 0
    return path


def test_no_arguments(capsys):
    code, _, err = run(capsys)
    assert code == 2
    assert "usage" in err


def test_unknown_flag(capsys):
    assert run(capsys, "generate", "--bogus")[0] == 2


def test_generate_to_stdout(capsys):
    code, out, _ = run(capsys, "generate", str(CHARTS / "mlflow-mini"))
    assert code == 0
    assert set(Validator.from_text(out).kinds) == {"Deployment", "Secret", "Service"}


def test_generate_summary(capsys, tmp_path):
    schema = tmp_path / "values.schema.yaml"
    code, out, err = run(capsys, "generate", str(CHARTS / "postgresql-mini"), "--out", str(tmp_path / "v.yaml"),
                         "--values-schema-out", str(schema), "--pretty")
    summary = json.loads(out)
    assert code == 0 and summary["variants"] == 2
    assert "postgresql-mini" in err
    assert "standalone" in schema.read_text()


def test_generate_missing_chart(capsys, tmp_path):
    code, _, err = run(capsys, "generate", str(tmp_path / "nope"))
    assert code == 2 and "does not exist" in err


def test_generate_bad_chart(capsys, tmp_path):
    (tmp_path / "Chart.yaml").write_text("name: x\n")
    code, _, err = run(capsys, "generate", str(tmp_path))
    assert code == 1 and "Missing" in err


def test_render(capsys):
    code, out, _ = run(capsys, "render", str(CHARTS / "mlflow-mini"), "--variant", "1")
    assert code == 0
    assert out.startswith("# variant: 1\n")
    assert "kind: Deployment" in out


def test_render_concrete(capsys):
    code, out, _ = run(capsys, "render", str(CHARTS / "mlflow-mini"), "--concrete")
    assert code == 0
    # quoted tokens are string literals and stay; bare ones must be replaced
    bare = re.compile(r'(:|-) (string|int|bool|IP|\[list\]|\{dict\})$', re.M)
    assert not bare.findall(out)


def test_render_missing_variant(capsys):
    assert run(capsys, "render", str(CHARTS / "mlflow-mini"), "--variant", "99")[0] == 2


def test_validate_deny(capsys, validator_file):
    code, out, err = run(capsys, "validate", str(SAMPLES / "root-escalation.yaml"),
                         "--validator", str(validator_file), "--pretty")
    verdict = json.loads(out)
    assert code == 1
    assert verdict["reason"] == "LockViolation"
    assert "DENY LockViolation" in err


def test_validate_patch(capsys, validator_file, tmp_path):
    patch = tmp_path / "p.json"
    patch.write_text('{"spec": {"replicas": 4}}')
    code, out, _ = run(capsys, "validate", str(patch), "--validator", str(validator_file),
                       "--patch-type", "application/merge-patch+json", "--kind", "Deployment")
    assert code == 0 and json.loads(out)["decision"] == "allow"
    assert run(capsys, "validate", str(patch), "--validator", str(validator_file),
               "--patch-type", "application/merge-patch+json")[0] == 2


def test_generate_then_validate_closure(capsys, tmp_path, validator_file):
    rendered = tmp_path / "rendered.yaml"
    assert run(capsys, "render", str(CHARTS / "nginx-mini"), "--out", str(rendered))[0] == 0
    code, out, _ = run(capsys, "validate", str(rendered), "--validator", str(validator_file))
    results = json.loads(out)["results"]
    assert code == 0
    assert len(results) > 1 and all(r["decision"] == "allow" for r in results)


def test_analyze(capsys, validator_file):
    code, out, err = run(capsys, "analyze", "--validator", str(validator_file),
                         "--rbac", str(FIXTURES / "attacks" / "nginx" / "rbac.yaml"), "--workload", "nginx",
                         "--count-value-locks", "--pretty")
    report = json.loads(out)
    assert code == 0
    assert report["workload"] == "nginx"
    assert report["reduction_kf"] > report["reduction_rbac"]
    assert "nginx" in err


def test_attack_test(capsys, validator_file):
    code, out, _ = run(capsys, "attack-test", "--validator", str(validator_file),
                       "--manifests", str(FIXTURES / "attacks" / "nginx" / "manifests"),
                       "--rbac", str(FIXTURES / "attacks" / "nginx" / "rbac.yaml"), "--workload", "nginx")
    summary = json.loads(out)["summary"]["nginx"]
    assert code == 0
    assert (summary["kf_cve"], summary["kf_misconfiguration"]) == (8, 7)
    assert (summary["rbac_cve"], summary["rbac_misconfiguration"]) == (0, 0)


def test_catalog(capsys, tmp_path):
    code, out, _ = run(capsys, "catalog")
    entries = parse_yaml(out.encode())["entries"]
    assert code == 0 and len(entries) == 15
    assert run(capsys, "catalog", "--out", str(tmp_path / "c.yaml"))[0] == 0
    assert (tmp_path / "c.yaml").read_text() == out


def test_serve_needs_config(capsys, monkeypatch):
    monkeypatch.delenv("KUBEFENCE_CONFIG", raising=False)
    code, _, err = run(capsys, "serve")
    assert code == 2 and "KUBEFENCE_CONFIG" in err


def test_serve_fail_closed(capsys, tmp_path):
    config = tmp_path / "proxy.yaml"
    config.write_text("upstream: http://127.0.0.1:1\nvalidator: missing.yaml\nlisten: 127.0.0.1:0\n")
    code, _, err = run(capsys, "serve", "--config", str(config))
    assert code == 1 and "refusing to start" in err
