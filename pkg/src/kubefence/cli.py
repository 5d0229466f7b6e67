"""``kubefence`` command line.

Machine output goes to stdout as JSON (or YAML for artifacts); ``--pretty``
adds human tables on stderr. Exit codes: 0 allow/success, 1 deny/failure,
2 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .attacks import AttackMatrix, catalog_yaml, concretize, run_catalog
from .chart import load_chart
from .engine import validate_object, validate_patch
from .errors import KubefenceError
from .model.emit import dump_document
from .model.nodes import STRING, Mapping, Scalar, Sequence
from .model.parse import parse_json, parse_yaml_stream
from .model.schema import SCALAR_TOKENS
from .policy import Validator, dump_values_schema, generate, render_variants, explore_variants
from .policy.values_schema import generate_values_schema
from .surface import analyze, format_table, load_catalog, load_rbac
from .template.external import ExternalRenderer

CONFIG_ENV = "KUBEFENCE_CONFIG"


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _pretty(args, text: str) -> None:
    if getattr(args, "pretty", False):
        sys.stderr.write(text + "\n")


def _existing(path, what: str, *, directory: bool = False) -> Path:
    p = Path(path)
    ok = p.is_dir() if directory else p.is_file()
    if not ok:
        raise UsageError(f"{what} {path} does not exist")
    return p


def _renderer(args):
    return ExternalRenderer.from_string(args.renderer_cmd) if args.renderer_cmd else None


def _read_docs(path: str) -> list:
    data = sys.stdin.buffer.read() if path == "-" else _existing(path, "manifest").read_bytes()
    stripped = data.lstrip()
    if stripped.startswith((b"{", b"[")):
        return [parse_json(data)]
    return [d for d in parse_yaml_stream(data) if not (isinstance(d, Scalar) and d.value is None)]


def _keep_tokens(node):
    """Mark bare placeholder tokens so they stay bare while quoted ones stay quoted."""
    if isinstance(node, Mapping):
        return Mapping({k: _keep_tokens(v) for k, v in node.items()})
    if isinstance(node, Sequence):
        return Sequence(tuple(_keep_tokens(i) for i in node.items))
    if node.kind == STRING and not node.quoted and node.value in SCALAR_TOKENS:
        return Scalar(node.value, STRING, "raw")
    return node


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    chart = load_chart(_existing(args.chart, "chart directory", directory=True), locks=args.locks)
    gen = generate(chart, strict=args.strict_merge, renderer=_renderer(args), workers=args.workers)
    if args.values_schema_out:
        Path(args.values_schema_out).write_text(dump_values_schema(gen.schema), encoding="utf-8")
    summary = {
        "chart": chart.name,
        "variants": len(gen.variants),
        "manifests": len(gen.manifests),
        "kinds": sorted(gen.validator.kinds),
    }
    if args.out:
        gen.validator.save(args.out)
        summary["out"] = str(args.out)
        _emit(summary)
    else:
        sys.stdout.write(gen.validator.to_text())
    _pretty(args, f"{chart.name}: {summary['variants']} variants, {summary['manifests']} manifests, "
                  f"kinds {', '.join(summary['kinds'])}")
    return 0


def cmd_render(args) -> int:
    chart = load_chart(_existing(args.chart, "chart directory", directory=True), locks=args.locks)
    schema = generate_values_schema(chart)
    variants = explore_variants(schema)
    if args.variant is not None:
        variants = [v for v in variants if v.index == args.variant]
        if not variants:
            raise UsageError(f"variant {args.variant} does not exist")
    docs = []
    for index, manifest in render_variants(chart, variants, renderer=_renderer(args), workers=args.workers):
        if args.concrete:
            manifest = concretize(manifest)
        docs.append(f"# variant: {index}\n" + dump_document(_keep_tokens(manifest), quote_tokens=True))
    text = "---\n".join(docs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _emit({"chart": chart.name, "variants": len(variants), "manifests": len(docs), "out": str(args.out)})
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    validator = Validator.load(_existing(args.validator, "validator"))
    docs = _read_docs(args.manifest)
    if args.patch_type:
        if not args.kind:
            raise UsageError("--patch-type needs --kind")
        verdicts = [validate_patch(d, args.patch_type, args.kind, validator, all_violations=args.all_violations)
                    for d in docs]
    else:
        verdicts = [validate_object(d, validator, all_violations=args.all_violations) for d in docs]
    if len(verdicts) == 1:
        _emit(verdicts[0].to_dict())
    else:
        _emit({"results": [v.to_dict() for v in verdicts]})
    for v in verdicts:
        if not v.allowed:
            _pretty(args, f"DENY {v.reason} at {v.path}: {v.message}")
    return 0 if all(v.allowed for v in verdicts) else 1


def cmd_serve(args) -> int:
    from .proxy import ProxyConfig, load_config, serve

    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        raise UsageError(f"serve needs --config or ${CONFIG_ENV}")
    config = load_config(_existing(path, "config"))
    overrides = {}
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        overrides.update(listen_host=host or config.listen_host, listen_port=int(port))
    if args.all_violations:
        overrides["all_violations"] = True
    if overrides:
        config = ProxyConfig(**{**config.__dict__, **overrides})
    serve(config)
    return 0


def _default_catalog():
    return resources.files("kubefence").joinpath("data/catalog.yaml")


def cmd_analyze(args) -> int:
    catalog = load_catalog(args.catalog or _default_catalog())
    validator = Validator.load(_existing(args.validator, "validator"))
    rbac = load_rbac(_existing(args.rbac, "RBAC policy"))
    name = args.workload or validator.meta.get("chart") or Path(args.validator).stem
    report = analyze(catalog, validator, rbac.kinds, workload=name, count_value_locks=args.count_value_locks)
    _emit(report.to_dict())
    _pretty(args, format_table([report]))
    return 0


def _load_manifests(directory: Path) -> list:
    files = sorted(p for p in directory.iterdir() if p.suffix in (".yaml", ".yml", ".json"))
    docs = []
    for path in files:
        docs.extend(_read_docs(str(path)))
    if not docs:
        raise UsageError(f"no manifests in {directory}")
    return [d for d in docs if isinstance(d, Mapping)]


def cmd_attack_test(args) -> int:
    validator = Validator.load(_existing(args.validator, "validator"))
    manifests = _load_manifests(_existing(args.manifests, "manifest directory", directory=True))
    rbac = load_rbac(_existing(args.rbac, "RBAC policy"))
    name = args.workload or validator.meta.get("chart") or "workload"
    matrix: AttackMatrix = run_catalog({name: validator}, {name: manifests}, {name: rbac})
    _emit(matrix.to_dict())
    _pretty(args, matrix.table())
    return 0


def cmd_catalog(args) -> int:
    text = catalog_yaml()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kubefence",
                                     description="Workload-specific Kubernetes API policies from Helm charts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, *, pretty=True):
        if pretty:
            p.add_argument("--pretty", action="store_true", help="human-readable summary on stderr")
        return p

    def chart_args(p):
        p.add_argument("chart", help="chart directory")
        p.add_argument("--locks", help="lock rule file (default: chart locks.yaml or built-in table)")
        p.add_argument("--renderer-cmd", help="external renderer, e.g. 'helm template r {chart_dir} -f {values_file}'")
        p.add_argument("--workers", type=int, default=None, help="render variants in parallel")
        p.add_argument("--out", help="output file")

    p = common(sub.add_parser("generate", help="build a validator from a chart"))
    chart_args(p)
    p.add_argument("--strict-merge", action="store_true", help="constants win over placeholders when merging")
    p.add_argument("--values-schema-out", help="also write the generalized values schema")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("render", help="render every values variant to manifests"))
    chart_args(p)
    p.add_argument("--variant", type=int, help="only this variant (1-based)")
    p.add_argument("--concrete", action="store_true", help="replace placeholders with sample values")
    p.set_defaults(func=cmd_render)

    p = common(sub.add_parser("validate", help="check manifests against a validator"))
    p.add_argument("manifest", help="manifest file (YAML stream or JSON), '-' for stdin")
    p.add_argument("--validator", required=True)
    p.add_argument("--all-violations", action="store_true", help="report every violation, not just the first")
    p.add_argument("--patch-type", help="treat the input as a patch of this content type")
    p.add_argument("--kind", help="target kind for --patch-type")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the enforcement proxy")
    p.add_argument("--config", help=f"proxy config file (default: ${CONFIG_ENV})")
    p.add_argument("--listen", help="host:port override")
    p.add_argument("--all-violations", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = common(sub.add_parser("analyze", help="attack-surface reduction vs kind-level RBAC"))
    p.add_argument("--catalog", help="field catalog (default: bundled Kubernetes v1 catalog)")
    p.add_argument("--validator", required=True)
    p.add_argument("--rbac", required=True, help="allowed kinds and verbs")
    p.add_argument("--workload", help="row label")
    p.add_argument("--count-value-locks", action="store_true", help="also report value-restricted fields")
    p.set_defaults(func=cmd_analyze)

    p = common(sub.add_parser("attack-test", help="inject the malicious catalog and compare with RBAC"))
    p.add_argument("--validator", required=True)
    p.add_argument("--manifests", required=True, help="directory of legitimate manifests")
    p.add_argument("--rbac", required=True)
    p.add_argument("--workload", help="row label")
    p.set_defaults(func=cmd_attack_test)

    p = sub.add_parser("catalog", help="export the malicious specification catalog as YAML")
    p.add_argument("--out")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="kubefence: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kubefence: error: {exc}", file=sys.stderr)
        return 2
    except KubefenceError as exc:
        print(f"kubefence: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
