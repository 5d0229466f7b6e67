"""Workload-specific Kubernetes API policies generated from Helm charts.

Typical use::

    from kubefence import load_chart, generate, validate_object

    gen = generate(load_chart("charts/mlflow"))
    verdict = validate_object(manifest, gen.validator)
"""

__version__ = "0.1.0"

from .chart import load_chart  # noqa: E402
from .engine import Verdict, validate_object, validate_patch  # noqa: E402
from .policy import Validator, build_validator, generate  # noqa: E402

__all__ = ["__version__", "load_chart", "Verdict", "validate_object", "validate_patch",
           "Validator", "build_validator", "generate"]
