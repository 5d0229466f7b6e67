"""Filtering reverse proxy in front of the Kubernetes API server.

Writes (POST, PUT, PATCH) are validated against the loaded validator and
either forwarded unchanged or answered with a 403 Status. Everything else
passes through. Each request produces one JSON line in the audit log.
"""

from __future__ import annotations

import http.client
import json
import logging
import signal
import ssl
import sys
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

import yaml

from .engine import DENY, Verdict, validate_object, validate_patch
from .errors import ConfigError, DocumentError, KubefenceError, UnsupportedPatchType
from .model.parse import parse_json, parse_yaml
from .model.schema import UNKNOWN_KIND
from .policy.validator import Validator

log = logging.getLogger(__name__)

DEFAULT_PASSTHROUGH = frozenset({"GET", "HEAD", "OPTIONS", "DELETE"})
VALIDATED = frozenset({"POST", "PUT", "PATCH"})
DEFAULT_BODY_LIMIT = 3 * 1024 * 1024
_DRAIN_LIMIT = 64 * 1024 * 1024

RESOURCE_KINDS = {
    "pods": "Pod",
    "services": "Service",
    "configmaps": "ConfigMap",
    "secrets": "Secret",
    "serviceaccounts": "ServiceAccount",
    "persistentvolumeclaims": "PersistentVolumeClaim",
    "persistentvolumes": "PersistentVolume",
    "namespaces": "Namespace",
    "nodes": "Node",
    "endpoints": "Endpoints",
    "events": "Event",
    "limitranges": "LimitRange",
    "resourcequotas": "ResourceQuota",
    "replicationcontrollers": "ReplicationController",
    "podtemplates": "PodTemplate",
    "deployments": "Deployment",
    "statefulsets": "StatefulSet",
    "daemonsets": "DaemonSet",
    "replicasets": "ReplicaSet",
    "controllerrevisions": "ControllerRevision",
    "jobs": "Job",
    "cronjobs": "CronJob",
    "horizontalpodautoscalers": "HorizontalPodAutoscaler",
    "ingresses": "Ingress",
    "ingressclasses": "IngressClass",
    "networkpolicies": "NetworkPolicy",
    "poddisruptionbudgets": "PodDisruptionBudget",
    "roles": "Role",
    "rolebindings": "RoleBinding",
    "clusterroles": "ClusterRole",
    "clusterrolebindings": "ClusterRoleBinding",
    "storageclasses": "StorageClass",
    "priorityclasses": "PriorityClass",
    "leases": "Lease",
    "customresourcedefinitions": "CustomResourceDefinition",
    "mutatingwebhookconfigurations": "MutatingWebhookConfiguration",
    "validatingwebhookconfigurations": "ValidatingWebhookConfiguration",
}
SUBRESOURCE_KINDS = {"scale": "Scale", "eviction": "Eviction", "binding": "Binding"}

_HOP_BY_HOP = frozenset({
    "connection", "keep-alive", "proxy-authenticate", "proxy-authorization", "proxy-connection",
    "te", "trailer", "transfer-encoding", "upgrade",
})


@dataclass(frozen=True)
class ProxyConfig:
    upstream: str
    validator: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8001
    audit_log: str | None = None
    body_limit: int = DEFAULT_BODY_LIMIT
    passthrough: frozenset = DEFAULT_PASSTHROUGH
    tls_cert: str | None = None
    tls_key: str | None = None
    upstream_cert: str | None = None
    upstream_key: str | None = None
    upstream_ca: str | None = None
    resource_kinds: dict = field(default_factory=dict)
    upstream_timeout: float = 30.0
    all_violations: bool = False

    def __post_init__(self):
        if self.body_limit <= 0:
            raise ConfigError("body_limit must be positive")
        parts = urlsplit(self.upstream)
        if parts.scheme not in ("http", "https") or not parts.hostname:
            raise ConfigError(f"upstream {self.upstream!r} is not an http(s) URL")
        if bool(self.tls_cert) != bool(self.tls_key):
            raise ConfigError("tls_cert and tls_key go together")
        if bool(self.upstream_cert) != bool(self.upstream_key):
            raise ConfigError("upstream_cert and upstream_key go together")

    @classmethod
    def from_mapping(cls, data: dict, base: Path | None = None) -> "ProxyConfig":
        if not isinstance(data, dict):
            raise ConfigError("proxy config must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known - {"listen"}
        if extra:
            raise ConfigError(f"unknown proxy config keys {sorted(extra)}")
        data = dict(data)
        listen = data.pop("listen", None)
        if listen:
            host, _, port = str(listen).rpartition(":")
            data.setdefault("listen_host", host or "127.0.0.1")
            data.setdefault("listen_port", int(port))
        if "passthrough" in data:
            data["passthrough"] = frozenset(str(v).upper() for v in data["passthrough"])
        for key in ("upstream", "validator"):
            if key not in data:
                raise ConfigError(f"proxy config needs {key!r}")
        if base is not None:
            for key in ("validator", "audit_log", "tls_cert", "tls_key", "upstream_cert", "upstream_key", "upstream_ca"):
                if data.get(key):
                    data[key] = str((base / data[key]).resolve()) if not Path(data[key]).is_absolute() else data[key]
        return cls(**data)


def load_config(path) -> ProxyConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read proxy config {path}: {exc}") from None
    return ProxyConfig.from_mapping(data, base=path.parent)


@dataclass(frozen=True)
class Target:
    resource: str | None
    subresource: str | None
    watch: bool


def parse_api_path(path: str) -> Target:
    """Resource and subresource named by an API path, e.g. ``/apis/apps/v1/namespaces/x/deployments/y``."""
    parts = urlsplit(path)
    segs = [s for s in parts.path.split("/") if s]
    watch = parse_qs(parts.query).get("watch", [""])[0] in ("true", "1")
    if segs[:1] == ["api"]:
        rest = segs[2:]
    elif segs[:1] == ["apis"]:
        rest = segs[3:]
    else:
        return Target(None, None, watch)
    if rest[:1] == ["watch"]:
        watch, rest = True, rest[1:]
    if rest[:1] == ["namespaces"] and len(rest) == 3 and rest[2] in ("status", "finalize"):
        return Target("namespaces", rest[2], watch)
    if len(rest) >= 3 and rest[0] == "namespaces":
        rest = rest[2:]
    if not rest:
        return Target(None, None, watch)
    return Target(rest[0], rest[2] if len(rest) > 2 else None, watch)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


class AuditLog:
    """Serialized JSON-lines appender; failures go to stderr, never to the caller."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._fh = None

    def emit(self, record: dict) -> None:
        if self.path is None:
            return
        line = json.dumps(record, separators=(",", ":"), sort_keys=False) + "\n"
        with self._lock:
            try:
                if self._fh is None:
                    self._fh = open(self.path, "a", encoding="utf-8")
                self._fh.write(line)
                self._fh.flush()
            except OSError as exc:
                print(f"kubefence: audit write failed: {exc}", file=sys.stderr)
                self._fh = None

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def status_body(code: int, reason: str, message: str, details: dict | None = None) -> bytes:
    body = {
        "kind": "Status",
        "apiVersion": "v1",
        "metadata": {},
        "status": "Failure",
        "message": message,
        "reason": reason,
        "code": code,
    }
    if details:
        body["details"] = details
    return json.dumps(body).encode("utf-8")


class _Reply(Exception):
    """Short-circuit with an error response."""

    def __init__(self, code: int, reason: str, message: str, decision: str = "error"):
        super().__init__(message)
        self.code, self.reason, self.message, self.decision = code, reason, message, decision


class Proxy:
    def __init__(self, config: ProxyConfig):
        self.config = config
        self.validator = self._load()  # fail closed: no policy, no proxy
        self.audit = AuditLog(config.audit_log)
        self.kinds = {**RESOURCE_KINDS, **config.resource_kinds}
        up = urlsplit(config.upstream)
        self._up_https = up.scheme == "https"
        self._up_host = up.hostname
        self._up_port = up.port or (443 if self._up_https else 80)
        self._up_prefix = up.path.rstrip("/")
        self._up_ctx = self._upstream_context() if self._up_https else None
        self._local = threading.local()

    def _load(self) -> Validator:
        try:
            return Validator.load(self.config.validator)
        except KubefenceError as exc:
            raise ConfigError(f"refusing to start: {exc}") from None

    def reload(self) -> bool:
        """Swap in a freshly loaded validator; keep the old one on failure."""
        try:
            fresh = Validator.load(self.config.validator)
        except KubefenceError as exc:
            log.error("reload failed, keeping current policy: %s", exc)
            return False
        self.validator = fresh
        log.info("validator reloaded from %s", self.config.validator)
        return True

    def _upstream_context(self) -> ssl.SSLContext:
        ctx = ssl.create_default_context(cafile=self.config.upstream_ca)
        if self.config.upstream_cert:
            ctx.load_cert_chain(self.config.upstream_cert, self.config.upstream_key)
        return ctx

    # -- upstream ------------------------------------------------------------

    def _connection(self, fresh: bool = False):
        conn = getattr(self._local, "conn", None)
        if conn is None or fresh:
            if conn is not None:
                conn.close()
            if self._up_https:
                conn = http.client.HTTPSConnection(self._up_host, self._up_port, timeout=self.config.upstream_timeout,
                                                   context=self._up_ctx)
            else:
                conn = http.client.HTTPConnection(self._up_host, self._up_port, timeout=self.config.upstream_timeout)
            self._local.conn = conn
        return conn

    def forward(self, method: str, path: str, headers, body: bytes | None):
        out_headers = {k: v for k, v in headers.items() if k.lower() not in _HOP_BY_HOP and k.lower() != "host"}
        out_headers["Host"] = f"{self._up_host}:{self._up_port}"
        if body is not None:
            out_headers["Content-Length"] = str(len(body))
        for attempt in (0, 1):
            conn = self._connection(fresh=attempt > 0)
            try:
                conn.request(method, self._up_prefix + path, body=body, headers=out_headers)
                return conn.getresponse()
            except (http.client.RemoteDisconnected, BrokenPipeError, ConnectionResetError):
                if attempt:
                    raise
            except Exception:
                conn.close()
                self._local.conn = None
                raise

    # -- decisions -------------------------------------------------------------

    def kind_for(self, target: Target) -> str | None:
        kind = self.kinds.get(target.resource) if target.resource else None
        if target.subresource and target.subresource != "status":
            return SUBRESOURCE_KINDS.get(target.subresource)
        return kind

    def decide(self, method: str, path: str, content_type: str, body: bytes) -> tuple[Verdict, str | None]:
        validator = self.validator  # one policy for the whole request
        media = (content_type or "").split(";")[0].strip().lower()
        target = parse_api_path(path)
        try:
            if method == "PATCH":
                kind = self.kind_for(target)
                doc = parse_yaml(body) if media.endswith("yaml") else parse_json(body)
                if kind is None:
                    return Verdict(DENY, "kind", UNKNOWN_KIND, f"no kind known for {target.resource}"), None
                return validate_patch(doc, media, kind, validator,
                                      all_violations=self.config.all_violations), kind
            doc = parse_json(body) if "json" in media else parse_yaml(body)
        except UnsupportedPatchType as exc:
            raise _Reply(415, "UnsupportedMediaType", str(exc)) from None
        except DocumentError as exc:
            raise _Reply(400, "BadRequest", f"request body does not parse: {exc}") from None
        verdict = validate_object(doc, validator, all_violations=self.config.all_violations)
        kind = doc.get("kind") if hasattr(doc, "get") else None
        return verdict, getattr(kind, "value", None)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "kubefence"
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):  # audit log replaces the access log
        pass

    @property
    def proxy(self) -> Proxy:
        return self.server.proxy

    def _handle(self):
        start = time.perf_counter()
        record = {"timestamp": _now(), "client": f"{self.client_address[0]}:{self.client_address[1]}",
                  "method": self.command, "path": self.path}
        try:
            self._dispatch(record)
        except _Reply as r:
            record["decision"] = r.decision
            record["status"] = r.code
            if r.decision == "error":
                record["error"] = r.message
            self._send(r.code, status_body(r.code, r.reason, r.message))
        except (BrokenPipeError, ConnectionResetError):
            record.setdefault("decision", "error")
            record["error"] = "client went away"
            self.close_connection = True
        finally:
            record["elapsed_us"] = int((time.perf_counter() - start) * 1e6)
            self.proxy.audit.emit(record)

    def _read_body(self) -> bytes | None:
        limit = self.proxy.config.body_limit
        if "chunked" in self.headers.get("Transfer-Encoding", "").lower():
            chunks, size = [], 0
            while True:
                line = self.rfile.readline(1024)
                try:
                    n = int(line.split(b";")[0].strip() or b"0", 16)
                except ValueError:
                    self.close_connection = True
                    raise _Reply(400, "BadRequest", "malformed chunked body") from None
                if n == 0:
                    while self.rfile.readline(1024) not in (b"\r\n", b"\n", b""):
                        pass
                    return b"".join(chunks)
                size += n
                if size > limit:
                    self.close_connection = True
                    raise _Reply(413, "RequestEntityTooLarge", f"body exceeds {limit} bytes")
                chunks.append(self.rfile.read(n))
                self.rfile.readline(8)
        length = self.headers.get("Content-Length")
        if length is None:
            return None
        try:
            n = int(length)
        except ValueError:
            self.close_connection = True
            raise _Reply(400, "BadRequest", "bad Content-Length") from None
        if n > limit:
            self.close_connection = True
            if n <= _DRAIN_LIMIT:  # let the client finish sending so it sees the 413
                while n > 0:
                    got = self.rfile.read(min(n, 65536))
                    if not got:
                        break
                    n -= len(got)
            raise _Reply(413, "RequestEntityTooLarge", f"body of {length} bytes exceeds {limit}")
        return self.rfile.read(n)

    def _dispatch(self, record: dict):
        method = self.command
        body = self._read_body()
        target = parse_api_path(self.path)
        passthrough = method in self.proxy.config.passthrough or target.watch or method not in VALIDATED
        if not passthrough:
            if not body:
                raise _Reply(400, "BadRequest", f"{method} without a body")
            try:
                verdict, kind = self.proxy.decide(method, self.path, self.headers.get("Content-Type", ""), body)
            except _Reply:
                raise
            except Exception as exc:  # fail closed
                log.exception("validation crashed")
                record.update(deny_path=".", deny_reason="InternalError")
                raise _Reply(403, "Forbidden", f"kubefence: request could not be validated ({exc})", "deny") from None
            if kind:
                record["kind"] = kind
            if not verdict.allowed:
                record.update(decision="deny", deny_path=verdict.path, deny_reason=verdict.reason, status=403)
                message = f"kubefence: {verdict.reason} at {verdict.path}: {verdict.message}"
                details = {"kind": kind or "", "causes": [
                    {"reason": v.reason, "field": v.path, "message": v.message} for v in verdict.violations]}
                self._send(403, status_body(403, "Forbidden", message, details))
                return
        record["decision"] = "allow"
        try:
            resp = self.proxy.forward(method, self.path, self.headers, body)
        except (OSError, http.client.HTTPException) as exc:
            raise _Reply(502, "BadGateway", f"upstream unreachable: {exc}") from None
        record["upstream_status"] = resp.status
        self._relay(resp)

    def _relay(self, resp):
        self.send_response(resp.status, resp.reason)
        length = resp.getheader("Content-Length")
        for k, v in resp.getheaders():
            if k.lower() not in _HOP_BY_HOP:
                self.send_header(k, v)
        if self.command == "HEAD" or resp.status in (204, 304):
            self.end_headers()
            resp.read()
            return
        if length is not None:
            self.end_headers()
            remaining = int(length)
            while remaining > 0:
                chunk = resp.read(min(65536, remaining))
                if not chunk:
                    break
                self.wfile.write(chunk)
                remaining -= len(chunk)
            return
        # Unknown length (watch streams): re-chunk as data arrives.
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()
        while True:
            chunk = resp.read1(65536)
            if not chunk:
                break
            self.wfile.write(b"%x\r\n%s\r\n" % (len(chunk), chunk))
            self.wfile.flush()
        self.wfile.write(b"0\r\n\r\n")

    def _send(self, code: int, body: bytes):
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        if self.close_connection:
            self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    do_GET = do_HEAD = do_OPTIONS = do_DELETE = do_POST = do_PUT = do_PATCH = _handle


class ProxyServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128

    def __init__(self, proxy: Proxy):
        self.proxy = proxy
        cfg = proxy.config
        super().__init__((cfg.listen_host, cfg.listen_port), _Handler)
        if cfg.tls_cert:
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.load_cert_chain(cfg.tls_cert, cfg.tls_key)
            self.socket = ctx.wrap_socket(self.socket, server_side=True)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        scheme = "https" if self.proxy.config.tls_cert else "http"
        return f"{scheme}://{host}:{port}"

    def server_close(self):
        super().server_close()
        self.proxy.audit.close()


def serve(config: ProxyConfig, *, install_signals: bool = True) -> None:
    server = ProxyServer(Proxy(config))
    if install_signals and hasattr(signal, "SIGHUP"):
        signal.signal(signal.SIGHUP, lambda *_: server.proxy.reload())
    print(f"kubefence: proxying {server.url} -> {config.upstream}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_background(config: ProxyConfig) -> tuple[ProxyServer, threading.Thread]:
    """Run a proxy on a daemon thread (tests, benchmarks)."""
    server = ProxyServer(Proxy(config))
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    return server, thread
