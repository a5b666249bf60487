"""Exception hierarchy shared by every module of the package."""


class DfkdError(Exception):
    """Base class for all errors raised by dfkd_beam."""


class DimensionError(DfkdError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(DfkdError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class ContractError(DfkdError, RuntimeError):
    """A precondition of an operation was violated."""


class FormatError(DfkdError, ValueError):
    """A binary file is malformed or has the wrong magic bytes."""


class VersionError(FormatError):
    """A binary file was written by an incompatible format version."""


class ShapeMismatchError(FormatError):
    """Stored array shapes disagree with the header or the expected model."""


class MetadataMissingError(ContractError):
    """A teacher checkpoint (with feature statistics) was required."""


class ConfigMismatchError(ContractError):
    """Two artifacts were produced under incompatible configurations."""


class ManifestError(DfkdError, ValueError):
    """An experiment manifest could not be parsed or validated."""
