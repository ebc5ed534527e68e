"""Exception types raised across the package."""


class CBDError(Exception):
    """Base class. ``code`` is the machine-readable name the CLI prints."""

    code = "error"


class EmptySentence(CBDError):
    code = "empty_sentence"


class OverlongSentence(CBDError):
    code = "overlong_sentence"


class EmptyCorpus(CBDError):
    code = "empty_corpus"


class ConfigError(CBDError):
    code = "config_error"


class InsufficientData(CBDError):
    code = "insufficient_data"


class EnsembleMismatch(CBDError):
    code = "ensemble_mismatch"


class MissingDirection(CBDError):
    code = "missing_direction"


class SameAgentError(CBDError):
    code = "same_agent"


class AlignmentError(CBDError):
    code = "alignment_error"


class IncomparableRuns(CBDError):
    code = "incomparable_runs"


class InitDegenerate(UserWarning):
    """Source and target vocabularies differ in size by more than 50%."""
