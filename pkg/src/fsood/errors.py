class FSOODError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FSOODError, ValueError):
    """A matrix, vector or config violates its contract."""


class MatrixFormatError(FSOODError, ValueError):
    """A matrix file is not a well-formed NPY v1.0 container of the expected dtype."""


class BundleError(FSOODError, ValueError):
    """One or more DatasetBundle invariants are violated.

    ``problems`` lists every violation found, each prefixed with its field.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid bundle:\n  " + "\n  ".join(self.problems))


class ConfigError(FSOODError, ValueError):
    """Invalid run, training or synthetic-data configuration."""
