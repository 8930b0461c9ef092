class ExportError(Exception):
    """Base class for exporter failures."""


class KeyNotFound(ExportError):
    """No state-dict key matched; carries candidate suggestions."""

    def __init__(self, pattern: str, candidates: list[str]):
        hint = ", ".join(candidates[:8]) if candidates else "none"
        super().__init__(f"no key matching {pattern!r}; embedding-like candidates: {hint}")
        self.pattern = pattern
        self.candidates = candidates


class ShapeUnexpected(ExportError):
    """Matched weight has the wrong rank or width."""
