"""Error taxonomy shared by the library, the service, and the CLI.

Each error class carries a stable ``kind`` string plus the process exit code
and HTTP status the outer layers map it to.
"""


class VadkitError(Exception):
    kind = "error"
    exit_code = 3
    http_status = 400


class InvalidArgumentError(VadkitError):
    """A caller-supplied value violates an operation's contract."""

    kind = "invalid-argument"
    exit_code = 2
    http_status = 422


class ConfigError(VadkitError):
    """Checkpoint configuration, backend registry, or manifest/config mismatch."""

    kind = "config-error"
    exit_code = 2
    http_status = 422


class FormatError(VadkitError):
    """A file on disk is malformed (bad magic, truncation, dim mismatch)."""

    kind = "format-error"
    exit_code = 3
    http_status = 400


class InvalidInputError(VadkitError):
    """Input data is structurally valid but unusable (e.g. image smaller than ROI)."""

    kind = "invalid-input"
    exit_code = 3
    http_status = 422


class IoError(VadkitError):
    kind = "io-error"
    exit_code = 3
    http_status = 404


class InsufficientDataError(VadkitError):
    """Fewer samples than the statistics require (K' < 2, empty class, ...)."""

    kind = "insufficient-data"
    exit_code = 4
    http_status = 422


class DegenerateInputError(VadkitError):
    """Evaluation input on which the requested metric is undefined."""

    kind = "degenerate-input"
    exit_code = 3
    http_status = 422
