"""Exception types that the command line maps onto exit codes."""


class ValidationError(ValueError):
    """Bad configuration or inconsistent input data (exit code 1)."""


class MissingArtifactError(FileNotFoundError):
    """An upstream file the current step depends on does not exist (exit code 2)."""
