"""Exception hierarchy shared by every kubefence module."""

from __future__ import annotations


class KubefenceError(Exception):
    """Base class for all errors raised by kubefence."""


# -- documents ---------------------------------------------------------------

class DocumentError(KubefenceError):
    pass


class DocumentSyntaxError(DocumentError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class MultipleDocuments(DocumentError):
    pass


class UnsupportedYamlFeature(DocumentError):
    """Anchors, aliases and custom tags are rejected."""


class DuplicateKey(DocumentSyntaxError):
    pass


class UnknownPlaceholder(DocumentError):
    pass


class MissingKind(DocumentError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"document {index} has no top-level 'kind' and 'apiVersion'")


# -- charts ------------------------------------------------------------------

class ChartError(KubefenceError):
    pass


class MissingValues(ChartError):
    pass


class MissingTemplates(ChartError):
    pass


class EmptyTemplate(ChartError):
    pass


class DuplicateDefine(ChartError):
    def __init__(self, name: str, files: tuple[str, str]):
        self.name = name
        super().__init__(f"template {name!r} defined in both {files[0]} and {files[1]}")


class ChartParseError(ChartError):
    def __init__(self, file: str, cause: Exception):
        self.file = file
        self.cause = cause
        super().__init__(f"{file}: {cause}")


class AnnotationPathUnresolved(ChartError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"enum annotation targets {path!r}, which is not a scalar in values")


class InvalidLockRule(ChartError):
    pass


# -- templates ---------------------------------------------------------------

class TemplateError(KubefenceError):
    pass


class TemplateSyntaxError(TemplateError):
    def __init__(self, message: str, position: tuple[int, int] | None = None, template: str | None = None):
        self.position = position
        self.template = template
        loc = ""
        if template:
            loc += f"{template}:"
        if position:
            loc += f"{position[0]}:{position[1]}:"
        super().__init__(f"{loc} {message}".strip())


class UnsupportedFunction(TemplateSyntaxError):
    def __init__(self, name: str, position=None, template=None):
        self.name = name
        super().__init__(f"unsupported function {name!r}", position, template)


class UnresolvedReference(TemplateError):
    def __init__(self, path: str, template: str | None = None, position=None):
        self.path = path
        self.template = template
        self.position = position
        where = f" in {template}" if template else ""
        if position:
            where += f" at {position[0]}:{position[1]}"
        super().__init__(f"reference {path} does not resolve{where}")


class TemplateCallUnknown(TemplateError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no template named {name!r}")


class RenderError(TemplateError):
    pass


class RendererError(TemplateError):
    """The external renderer command failed or timed out."""


# -- policy generation ------------------------------------------------------

class PolicyError(KubefenceError):
    pass


class LockConflict(PolicyError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"lock rule conflicts with enum annotation at {path}")


class ShapeConflict(PolicyError):
    def __init__(self, path: str, left: str, right: str):
        self.path = path
        super().__init__(f"{path} is a {left} in one manifest and a {right} in another")


class ValidatorFormatError(PolicyError):
    pass


# -- enforcement --------------------------------------------------------------

class UnsupportedPatchType(KubefenceError):
    def __init__(self, content_type: str):
        self.content_type = content_type
        super().__init__(f"unsupported patch content type {content_type!r}")


class ConfigError(KubefenceError):
    pass


# -- analysis -----------------------------------------------------------------

class InapplicableKind(KubefenceError):
    def __init__(self, entry_id: str, kind: str):
        super().__init__(f"catalog entry {entry_id} does not apply to kind {kind}")


class ZeroTotal(KubefenceError, ZeroDivisionError):
    pass


class UnknownKindInValidator(KubefenceError):
    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"validator references kind {kind!r}, absent from the field catalog")
