"""Delegate rendering to an external command such as ``helm template``."""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from ..errors import RendererError
from ..model.emit import dump_document

DEFAULT_COMMAND = ("helm", "template", "release-name", "{chart_dir}", "-f", "{values_file}")

_SOURCE = re.compile(r"^# Source: [^/\n]+/templates/(.+?)\s*$", re.MULTILINE)
_SEPARATOR = re.compile(r"^---[ \t]*$", re.MULTILINE)


def split_sources(stdout: str) -> dict[str, list[str]]:
    """Group output documents by their ``# Source:`` template file.

    Documents without a source header are grouped under ``""``. Each document
    is stripped of the header and surrounding whitespace.
    """
    grouped: dict[str, list[str]] = {}
    for chunk in _SEPARATOR.split(stdout):
        m = _SOURCE.search(chunk)
        source = ""
        if m:
            source = m.group(1)
            chunk = chunk[: m.start()] + chunk[m.end():]
        chunk = chunk.strip()
        if chunk:
            grouped.setdefault(source, []).append(chunk)
    return grouped


@dataclass(frozen=True)
class ExternalRenderer:
    """Runs ``command`` once per values document.

    ``{chart_dir}`` and ``{values_file}`` in the argument list are replaced
    with the chart directory and a temporary values file.
    """

    command: tuple = DEFAULT_COMMAND
    timeout: float = 60.0

    @classmethod
    def from_string(cls, text: str, timeout: float = 60.0) -> "ExternalRenderer":
        return cls(tuple(shlex.split(text)), timeout)

    def run(self, chart_dir, values) -> str:
        fd, values_file = tempfile.mkstemp(prefix="kubefence-values-", suffix=".yaml")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(dump_document(values))
            argv = [
                arg.replace("{chart_dir}", str(Path(chart_dir))).replace("{values_file}", values_file)
                for arg in self.command
            ]
            try:
                proc = subprocess.run(argv, capture_output=True, timeout=self.timeout, check=False)
            except FileNotFoundError:
                raise RendererError(f"renderer command not found: {argv[0]}") from None
            except subprocess.TimeoutExpired:
                raise RendererError(f"renderer timed out after {self.timeout}s") from None
            if proc.returncode != 0:
                err = proc.stderr.decode("utf-8", "replace").strip()
                raise RendererError(f"renderer exited with {proc.returncode}: {err}")
            return proc.stdout.decode("utf-8")
        finally:
            os.unlink(values_file)

    def render(self, chart, values) -> dict[str, str]:
        """Per-file output text, documents joined by ``---`` lines."""
        if chart.directory is None:
            raise RendererError("the external renderer needs a chart directory")
        grouped = split_sources(self.run(chart.directory, values))
        return {name: "\n---\n".join(docs) + "\n" for name, docs in grouped.items()}
