"""Exception hierarchy. The CLI maps these onto exit codes (see cli.py)."""


class BtkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BtkitError):
    """Bad usage or invalid/missing configuration (exit code 1)."""


class DataError(BtkitError):
    """Invalid or missing input data (exit code 2)."""


class GuardError(BtkitError):
    """A guarded operation refused to run (e.g. enumeration space too large)."""
