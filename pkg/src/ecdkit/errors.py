"""Exception taxonomy shared by every module.

The CLI maps these onto its exit codes: configuration problems exit 2,
data and artifact problems exit 3, runtime failures exit 4.
"""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


# --- configuration (CLI exit 2) -------------------------------------------

class ConfigError(ToolkitError):
    """Invalid model definition content or component configuration."""


class ParseError(ConfigError):
    """Malformed config document. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ConfigError):
    """Structurally valid document that violates the definition schema."""


# --- data and artifacts (CLI exit 3) ---------------------------------------

class DataError(ToolkitError):
    """Bad dataset content: ragged rows, unparseable cells, unknown columns."""


class MetadataError(DataError):
    """A feature column cannot produce usable metadata (e.g. all missing)."""


class ArtifactError(ToolkitError):
    """A persisted model directory is incomplete or unreadable."""


class CorruptionError(ArtifactError):
    """A binary file failed its integrity check (magic, digest, truncation)."""


class FormatVersionError(ArtifactError):
    """A binary file was written by an incompatible format version."""


# --- runtime (CLI exit 4) ---------------------------------------------------

class ShapeError(ToolkitError):
    """Tensor dimensions incompatible with the requested operation."""


class ContractError(ToolkitError):
    """An internal API precondition was violated by the caller."""


class RegistryError(ToolkitError):
    """Unknown or duplicate component name in a registry."""


class IndexOutOfRangeError(ToolkitError):
    """An integer id fell outside the valid range for a lookup."""


class NonFiniteError(ToolkitError):
    """An operation produced NaN or infinity."""


class TrainingRuntimeError(ToolkitError):
    """Training aborted, e.g. because the loss became non-finite."""
