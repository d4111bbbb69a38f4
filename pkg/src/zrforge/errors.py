"""Exception taxonomy; the CLI maps these onto exit codes."""


class UsageError(Exception):
    """Bad invocation: unknown flags, invalid flag combinations."""


class DataError(Exception):
    """Input data violates a documented contract."""


class ParseError(DataError):
    """Malformed quadruple or sidecar file; carries a line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class FormatError(DataError):
    """Binary container violates its framing (magic, version, truncation)."""


class CoverageError(DataError):
    """An embedding file does not cover the relation vocabulary."""

    def __init__(self, missing_ids):
        self.missing_ids = sorted(missing_ids)
        super().__init__(f"missing text matrices for relation ids {self.missing_ids}")


class NumericError(Exception):
    """Non-finite loss or other numeric failure during training."""
