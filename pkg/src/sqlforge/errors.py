"""Exception hierarchy shared by all sqlforge modules."""

from __future__ import annotations


class SqlforgeError(Exception):
    """Base class for all errors raised by this package."""


class GrammarError(SqlforgeError):
    """Invalid grammar text or an invalid rule derivation request.

    ``line`` and ``column`` are 1-based and set when the error points at a
    location in the grammar source.
    """

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SqlParseError(SqlforgeError):
    """SQL text could not be lexed, parsed, or resolved against a schema."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)
        self.position = position


class DerivationError(SqlforgeError):
    """A tree or rule sequence is inconsistent with the rule set."""


class SchemaError(SqlforgeError):
    """Malformed schema file or schema invariant violation."""


class EstimationError(SqlforgeError):
    """Corpus derivations are incompatible with the rule set being estimated."""


class UnproductiveGrammarError(SqlforgeError):
    """A nonterminal reachable from the root has no rule with positive mass."""

    def __init__(self, symbol: str):
        super().__init__(
            f"nonterminal {symbol!r} is reachable from the root but has no "
            f"rule with nonzero probability")
        self.symbol = symbol


class SamplingError(SqlforgeError):
    """Sampling gave up after exhausting the configured attempt budget."""


class ModelError(SqlforgeError):
    """Malformed model file, or a model inconsistent with the rule set."""


class CorpusError(SqlforgeError):
    """Corpus file missing or referencing unknown databases."""


class VerbalizeError(SqlforgeError):
    """Verbalization failure, including a broken request/response exchange."""
