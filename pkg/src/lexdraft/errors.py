"""Exception hierarchy shared across the drafting engine.

Every error carries a machine-readable ``code`` (the class name) so the
HTTP layer can map failures to structured problem responses.
"""

from __future__ import annotations


class LexdraftError(Exception):
    """Base class for all engine errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- corpus ---------------------------------------------------------------

class MalformedRecord(LexdraftError):
    """Corpus record cannot be parsed into a letter."""


class MissingSection(MalformedRecord):
    """Explanation or Conclusion section absent from a letter record."""


class UnknownSectionLabel(MalformedRecord):
    """Record carries a section label outside the closed taxonomy."""


# --- embedding / index ----------------------------------------------------

class EmptyInput(LexdraftError):
    """Text is empty after whitespace trim."""

    def __init__(self, message: str = "empty input", index: int | None = None):
        super().__init__(message)
        self.index = index


class InputTooLong(LexdraftError):
    """Text exceeds the backend's input token budget."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class BackendUnavailable(LexdraftError):
    """Remote backend transport failure after bounded retries."""


class MixedBackend(LexdraftError):
    """Vectors from more than one embedding backend in a single index."""


class DimensionMismatch(LexdraftError):
    """Vector length differs from the fixed embedding dimension."""


# --- llm ------------------------------------------------------------------

class ContextOverflow(LexdraftError):
    """Prompt exceeds the model context budget; never transmitted."""


class PiiLeak(LexdraftError):
    """Outbound payload guard found residual identifiers; never transmitted."""


# --- prompts ---------------------------------------------------------------

class BudgetTooSmall(LexdraftError):
    """Mandatory prompt slots alone exceed the token budget."""


class EmptyFeedback(LexdraftError):
    """Refinement requested without any feedback items."""


# --- pipeline ---------------------------------------------------------------

class ConfigurationError(LexdraftError):
    """Domain configuration invalid or referenced artifacts missing."""


class UnknownDomain(LexdraftError):
    """No configured domain under the requested id."""


class UnknownCase(LexdraftError):
    """No case on record under the requested id."""


class RetrievalEmpty(LexdraftError):
    """Retrieval returned no hits and empty retrieval is not allowed."""


class SectionParseFailure(LexdraftError):
    """Model output is missing required section headers.

    The raw output is preserved in the audit trail before this is raised.
    """


class AlreadyApproved(LexdraftError):
    """Case already has an approved draft; no further transitions."""


class IterationLimit(LexdraftError):
    """Refinement iteration cap reached."""


class StaleVersion(LexdraftError):
    """Operation targeted a version that is no longer the latest."""


class AuditChainBroken(LexdraftError):
    """Per-case hash chain does not verify; the log was tampered with."""


# --- metrics ------------------------------------------------------------------

class EmptyReference(LexdraftError):
    """Recall or comparison requested without reference content."""
