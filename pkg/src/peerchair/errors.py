"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PeerChairError(Exception):
    """Base class for every error raised by peerchair."""


# prompt engine
class PromptError(PeerChairError):
    pass


class MissingSlot(PromptError):
    def __init__(self, slot: str, sample_id: str | None = None):
        self.slot = slot
        self.sample_id = sample_id
        where = f" in sample {sample_id!r}" if sample_id is not None else ""
        super().__init__(f"missing slot {slot!r}{where}")


class EmptyPeerSet(PromptError):
    pass


class UnparseableCompletion(PromptError):
    pass


class InvalidSchema(PromptError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


# gateway
class GatewayError(PeerChairError):
    pass


class BackendFailure(GatewayError):
    """One failed backend attempt.

    ``retryable`` tells the retry policy whether another attempt makes sense
    (rate limits, timeouts, 5xx) or not (auth errors, bad requests).
    """

    def __init__(self, message: str, *, retryable: bool = True, status: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status = status


class BackendExhausted(GatewayError):
    def __init__(self, attempts: int, last_failure: BaseException | None):
        self.attempts = attempts
        self.last_failure = last_failure
        super().__init__(f"backend failed after {attempts} attempt(s): {last_failure}")


class UnsupportedImage(GatewayError):
    pass


class CacheCorruption(GatewayError):
    pass


class UnscriptedPrompt(GatewayError):
    def __init__(self, model: str, prompt: str):
        self.model = model
        self.prompt = prompt
        head = prompt[:80].replace("\n", " ")
        super().__init__(f"no mock script for model {model!r} matches prompt {head!r}...")


class InvalidRequest(GatewayError):
    pass


# parser
class ParseFailure(PeerChairError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class NoRatingFound(ParseFailure):
    pass


class OutOfScale(ParseFailure):
    def __init__(self, message: str, raw: str = "", value=None):
        super().__init__(message, raw)
        self.value = value


class NoAnswerFound(ParseFailure):
    pass


class LabelOutsideSpace(ParseFailure):
    pass


# orchestrator
class OrchestrationError(PeerChairError):
    pass


class InsufficientPeers(OrchestrationError):
    pass


class ACFailure(OrchestrationError):
    pass


class InvalidConfig(PeerChairError):
    pass


# metrics
class MetricsError(PeerChairError):
    pass


class DegenerateInput(MetricsError):
    pass


class LengthMismatch(MetricsError):
    pass


class MissingScale(MetricsError):
    pass


class DegenerateVariance(MetricsError):
    pass


class AllZeroCosts(MetricsError):
    pass


# dataset io
class DatasetError(PeerChairError):
    pass


class SchemaViolation(DatasetError):
    def __init__(self, line: int, field: str, message: str):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: field {field!r}: {message}")


class MissingDatasetScale(DatasetError, MissingScale):
    pass


class DuplicateId(DatasetError):
    def __init__(self, sample_id: str, line: int):
        self.sample_id = sample_id
        self.line = line
        super().__init__(f"line {line}: duplicate sample id {sample_id!r}")


class IdMismatch(DatasetError):
    """Run verdicts and dataset samples do not line up."""


class UnsupportedFormatVersion(DatasetError):
    pass


class IOFailure(DatasetError):
    pass


class EmptyRun(DatasetError):
    pass
