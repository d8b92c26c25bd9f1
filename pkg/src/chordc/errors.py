"""Exception types shared across the package."""

from __future__ import annotations


class ChordcError(Exception):
    """Base class for all domain errors raised by this package."""


class ModelSyntaxError(ChordcError):
    """The input document is not well-formed JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaError(ChordcError):
    """A well-formed document violates the model/machine schema."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnknownRoleError(SchemaError):
    """A document references a role that was never declared."""

    def __init__(self, path: str, name: str):
        self.name = name
        super().__init__(path, f"unknown role: {name!r}")


class InvalidModelError(ChordcError):
    """An operation's precondition on model validity does not hold."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.path}: {v.message}" for v in self.violations)
        super().__init__(f"invalid model: {lines}")


class UnstructuredError(ChordcError):
    """The activity graph cannot be reduced to a structured term."""

    def __init__(self, node_ids):
        self.node_ids = sorted(node_ids)
        super().__init__(f"unstructured graph, irreducible nodes: {', '.join(self.node_ids)}")


class UnsupportedConstructError(ChordcError):
    """Derivation refused a construct it has no rules for (parallel, loops)."""

    def __init__(self, construct: str, path: str):
        self.construct = construct
        self.path = path
        super().__init__(f"UnsupportedConstruct: {construct} at {path}")


class TooLargeError(ChordcError):
    """An enumeration exceeded the configured resource cap."""

    def __init__(self, cap: int, what: str):
        self.cap = cap
        self.what = what
        super().__init__(f"resource cap exceeded ({what} > {cap})")
