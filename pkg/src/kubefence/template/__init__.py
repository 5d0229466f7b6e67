"""Helm-dialect template parsing and rendering."""

from __future__ import annotations

from .external import DEFAULT_COMMAND, ExternalRenderer, split_sources
from .funcs import Ph
from .parser import FUNCTIONS, TemplateAst, parse_template
from .render import MAX_OUTCOMES, Engine, RenderContext, render_values, root_context, split_manifests

__all__ = [
    "DEFAULT_COMMAND", "ExternalRenderer", "split_sources", "Ph", "FUNCTIONS", "TemplateAst",
    "parse_template", "MAX_OUTCOMES", "Engine", "RenderContext", "render_values", "root_context",
    "split_manifests", "render", "render_outcomes",
]


def render_outcomes(chart, ctx: RenderContext, *, max_outcomes: int = MAX_OUTCOMES) -> dict[str, list[str]]:
    """Every distinct rendering of each template file, keyed by relative path."""
    engine = Engine(chart.defines, max_outcomes)
    chart_ctx = dict(chart.chart_context)
    chart_ctx.update(ctx.chart)
    out: dict[str, list[str]] = {}
    for rel, _ in chart.templates:
        root = root_context(RenderContext(ctx.values, ctx.release_name, ctx.release_service,
                                          ctx.namespace, chart_ctx), f"templates/{rel}", chart.name)
        out[rel] = engine.outcomes(chart.asts[rel], root)
    return out


def render(chart, ctx: RenderContext, *, max_outcomes: int = MAX_OUTCOMES) -> dict[str, str]:
    """Rendered text per template file.

    With concrete values each file has exactly one rendering. When
    placeholder-dependent conditions produce several, they are emitted as
    separate YAML documents in the same text.
    """
    joined: dict[str, str] = {}
    for rel, texts in render_outcomes(chart, ctx, max_outcomes=max_outcomes).items():
        if len(texts) == 1:
            joined[rel] = texts[0]
        else:
            joined[rel] = "\n---\n".join(t.strip("\n") for t in texts) + "\n"
    return joined
