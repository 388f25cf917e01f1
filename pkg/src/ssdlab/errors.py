"""Exception types shared across the package."""


class SsdlabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SsdlabError, ValueError):
    """An argument violates a documented precondition."""


class MapConfigError(SsdlabError):
    """A map description is internally inconsistent."""


class ConfigError(SsdlabError):
    """A pipeline configuration fails validation."""


class PolicyValidationError(SsdlabError):
    """A candidate policy failed smoke-test validation.

    ``kind`` is one of ``invalid-action``, ``over-budget``,
    ``nondeterministic``, ``unsafe-source``, ``crash``; the message is
    suitable for appending to synthesizer feedback.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class SynthesizerError(SsdlabError):
    """An external or scripted synthesizer failed to produce a candidate."""


class ProposerError(SsdlabError):
    """A configuration proposer failed (timeout, malformed output)."""


class InnerLoopFailedError(SsdlabError):
    """Every inner-loop iteration exhausted its retry budget."""
