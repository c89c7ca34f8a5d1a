"""Exception types shared across the toolkit.

Every error raised by the public API derives from UIRepairError so callers
can catch one base class at pipeline boundaries.
"""


class UIRepairError(Exception):
    """Base class for all toolkit errors."""


# --- page snapshots ---------------------------------------------------------

class EmptyDocument(UIRepairError):
    """No <html> root could be recovered from the input document."""


class MalformedLayoutRow(UIRepairError):
    """A layout sidecar row has the wrong arity or non-integer geometry."""


class MalformedRecord(UIRepairError):
    """A serialized element record is missing fields or cannot be parsed."""


class MissingScreenshot(UIRepairError):
    """Operation requires a screenshot the snapshot does not carry."""


# --- matchers ----------------------------------------------------------------

class EmptyPage(UIRepairError):
    """A snapshot with zero elements was given where candidates are required."""


class ZeroVarianceTemplate(UIRepairError):
    """Template patch has no intensity variance; correlation is undefined."""


class TemplateLargerThanImage(UIRepairError):
    """Template exceeds the search image in at least one dimension."""


class DegenerateTargetRect(UIRepairError):
    """Target rectangle is empty or falls outside the screenshot."""


class MissingGroundTruth(UIRepairError):
    """No ground-truth entry found for a target element."""


# --- chat bridge -------------------------------------------------------------

class EmptyCandidates(UIRepairError):
    """A prompt cannot be built from an empty candidate list."""


class NoInconsistency(UIRepairError):
    """Self-correction prompt requested with no inconsistent attributes."""


class MalformedResponse(UIRepairError):
    """Model response does not contain a recoverable selection."""


class NoRepairFound(UIRepairError):
    """Model response contains no code block and no statement-like line."""


class TransportError(UIRepairError):
    """Network-level failure talking to the chat endpoint."""


class AuthError(UIRepairError):
    """Credential missing or rejected by the chat endpoint."""


class TokenLimitError(UIRepairError):
    """Request exceeded the endpoint's context window."""


# --- explanation validation ----------------------------------------------------

class UnknownAttribute(UIRepairError):
    """Attribute name outside the element vocabulary and its aliases."""


class SelectionNotInCandidates(UIRepairError):
    """Decision selects a numericId absent from the candidate list."""


class EmptyExplanation(UIRepairError):
    """Decision mentions no recognized attributes; consistency is undefined."""


# --- statements ----------------------------------------------------------------

class UnsupportedSyntax(UIRepairError):
    """Statement falls outside the recognized findElement/assertion grammar."""


class UnparseableRepair(UIRepairError):
    """A repaired statement could not be parsed for assessment."""


# --- evolution analysis ---------------------------------------------------------

class NoElementsWithProperty(UIRepairError):
    """Change-ratio denominator is empty for the requested property."""


class MalformedDiff(UIRepairError):
    """Unified diff text lacks hunk headers or is otherwise unreadable."""


# --- numerics --------------------------------------------------------------------

class DegenerateInput(UIRepairError):
    """Correlation input has a single class or zero variance."""
