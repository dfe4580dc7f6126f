"""Exception types shared across the pipeline."""


class DischargeGenError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(DischargeGenError):
    """A corpus file violates the JSON-lines visit schema."""


class LexiconError(DischargeGenError):
    """A lexicon file or entry set is malformed."""


class RemoteProtocolError(DischargeGenError):
    """A remote service answered with a malformed or invalid payload."""


class RemoteUnavailableError(DischargeGenError):
    """A remote service stayed unreachable after bounded retries."""


class TemplateError(DischargeGenError):
    """A prompt template is missing or duplicating a placeholder."""


class UnbuildableInputError(DischargeGenError):
    """The token budget cannot even hold the instruction."""


class BackendConfigError(DischargeGenError):
    """A generation backend is missing required settings."""


class SubmissionFormatError(DischargeGenError):
    """A submission CSV does not follow the documented layout."""


class AggregationError(DischargeGenError):
    """Metric reports cannot be aggregated (inconsistent or empty groups)."""


class ConfigError(DischargeGenError):
    """A pipeline configuration value is invalid."""


class StageError(DischargeGenError):
    """A pipeline stage failed fatally."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
