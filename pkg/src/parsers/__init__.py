"""Parsers for expression text and experiment documents."""

from .expression import ExpressionParser, ExprSyntaxError, UnknownIdentifier, parse

__all__ = [
    'ExpressionParser',
    'ExprSyntaxError',
    'UnknownIdentifier',
    'parse',
]
