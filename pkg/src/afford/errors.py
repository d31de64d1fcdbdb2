"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class AffordError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AffordError, ValueError):
    pass


class FormatError(InvalidInputError):
    """A mesh or config file could not be parsed."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None) -> None:
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class IndexOutOfRangeError(FormatError):
    pass


class DegenerateGeometryError(AffordError):
    pass


class NumericBlowupError(AffordError):
    def __init__(self, body_id: int, message: str | None = None) -> None:
        super().__init__(message or f"non-finite state in body {body_id}")
        self.body_id = body_id


class NoStablePoseError(AffordError):
    pass


class ProviderError(AffordError):
    pass


class ProviderUnavailableError(ProviderError):
    pass


class MalformedOutputError(ProviderError):
    def __init__(self, message: str, *, raw_text: str = "") -> None:
        super().__init__(message)
        self.raw_text = raw_text


class FixtureMissError(ProviderError):
    def __init__(self, key: str) -> None:
        super().__init__(f"no replay fixture for request {key}")
        self.key = key


class ProfileError(AffordError):
    """A generated imagination profile violates its invariants."""


class EmptyProfileError(ProfileError):
    pass


class ScoringParseError(AffordError):
    def __init__(self, message: str, *, location: str) -> None:
        super().__init__(f"{location}: {message}")
        self.location = location
