"""Exception types shared across the package."""

from __future__ import annotations


class HostreeError(Exception):
    pass


class UsageError(HostreeError, ValueError):
    """Malformed call: level mismatch, index out of range, bad arity."""


class ParseError(HostreeError, ValueError):
    """Syntax error in a textual or JSON document, with 1-based location."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


def locate(text: str, offset: int) -> tuple[int, int]:
    """1-based (line, column) of a character offset."""
    before = text[:offset]
    line = before.count("\n") + 1
    column = offset - (before.rfind("\n") + 1) + 1
    return line, column
