"""Exception hierarchy. Everything user-triggerable derives from RobobenchError
so the CLI and service can map failures to exit codes / HTTP statuses."""


class RobobenchError(Exception):
    """Base class for all structured toolkit errors."""


class ValidationError(RobobenchError):
    """Invalid user input: bad values, malformed manifests, schema violations."""


class CodecError(RobobenchError):
    """A file could not be decoded or violates its documented byte layout."""


class MetricUndefinedError(RobobenchError):
    """A metric has no defined value for the given inputs (e.g. no present classes)."""


class JournalError(RobobenchError):
    """The submission journal is unusable (bad magic / unreadable header)."""
