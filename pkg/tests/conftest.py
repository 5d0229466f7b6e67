import json
import shutil
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from kubefence.chart import load_chart
from kubefence.model.parse import parse_yaml
from kubefence.policy import generate

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
CHARTS = FIXTURES / "charts"
SAMPLES = FIXTURES / "samples"
CHART_NAMES = ("mlflow-mini", "nginx-mini", "postgresql-mini")
HELM = shutil.which("helm")

_generations = {}


def generation(name):
    """Pipeline output for a bundled chart, computed once per session."""
    if name not in _generations:
        _generations[name] = generate(load_chart(CHARTS / name))
    return _generations[name]


def sample(name):
    return parse_yaml((SAMPLES / name).read_bytes())


@pytest.fixture(params=CHART_NAMES)
def chart_name(request):
    return request.param


@pytest.fixture
def mlflow():
    return generation("mlflow-mini")


@pytest.fixture
def nginx():
    return generation("nginx-mini")


needs_helm = pytest.mark.skipif(HELM is None, reason="helm binary not installed")


class _Upstream(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # avoids delayed-ACK stalls on loopback

    def log_message(self, *args):
        pass

    def _answer(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        self.server.received.append((self.command, self.path, body))
        status = 201 if self.command == "POST" else 200
        payload = json.dumps({"kind": "Echo", "method": self.command, "path": self.path}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    do_GET = do_POST = do_PUT = do_PATCH = do_DELETE = _answer


@pytest.fixture
def upstream():
    """Loopback API server stand-in recording every request it receives."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Upstream)
    server.daemon_threads = True
    server.received = []
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()
