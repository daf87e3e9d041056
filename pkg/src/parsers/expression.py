"""Parser for the time-expression mini-language.

Grammar (standard precedence, ``^`` right-associative)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC  := sin | cos | exp | ln | sqrt

Exponents must be constant; ``t^t`` is rejected.
"""

import re
from typing import List, NamedTuple, Optional
import logging

from ..expr import (
    Add, Const, Div, EvaluationDomainError, Expr, FUNCTIONS, Func, Mul, Neg,
    Pow, Sub, T, evaluate, is_constant, simplify
)

logger = logging.getLogger(__name__)


class ExprSyntaxError(ValueError):
    """Raised when expression text is not well formed."""

    def __init__(self, message: str, position: int, text: str = ''):
        super().__init__(f"{message} at offset {position}")
        self.position = position
        self.text = text


class UnknownIdentifier(ExprSyntaxError):
    """Raised for an identifier that is neither t nor a known function."""

    def __init__(self, name: str, position: int, text: str = ''):
        super().__init__(f"unknown identifier '{name}'", position, text)
        self.name = name


class Token(NamedTuple):
    kind: str  # number, ident, op, end
    value: str
    position: int


TOKEN_PATTERN = re.compile(
    r'\s*(?:'
    r'(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)'
    r'|(?P<op>[-+*/^()])'
    r')'
)


class ExpressionParser:
    """Recursive-descent parser producing Expr trees."""

    def __init__(self, text: str):
        """
        Initialize parser.

        Args:
            text: Expression source text
        """
        self.text = text
        self.tokens = self._tokenize(text)
        self.index = 0

    def _tokenize(self, text: str) -> List[Token]:
        tokens = []
        position = 0
        while True:
            # Skip trailing whitespace before testing for the end
            while position < len(text) and text[position].isspace():
                position += 1
            if position >= len(text):
                break
            match = TOKEN_PATTERN.match(text, position)
            if not match or match.end() == position:
                raise ExprSyntaxError(
                    f"unexpected character '{text[position]}'", position, text
                )
            kind = match.lastgroup
            tokens.append(Token(kind, match.group(kind), match.start(kind)))
            position = match.end()
        tokens.append(Token('end', '', len(text)))
        return tokens

    @property
    def _current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != 'end':
            self.index += 1
        return token

    def _accept(self, op: str) -> Optional[Token]:
        token = self._current
        if token.kind == 'op' and token.value == op:
            return self._advance()
        return None

    def _expect(self, op: str) -> Token:
        token = self._accept(op)
        if token is None:
            self._fail(f"expected '{op}'")
        return token

    def _fail(self, message: str):
        token = self._current
        if token.kind == 'end':
            raise ExprSyntaxError(f"{message}, found end of input", token.position, self.text)
        raise ExprSyntaxError(f"{message}, found '{token.value}'", token.position, self.text)

    def parse(self) -> Expr:
        """
        Parse the whole text.

        Returns:
            Expression tree (not simplified)

        Raises:
            ExprSyntaxError: Malformed text, with the offending offset
            UnknownIdentifier: Identifier other than t or a known function
        """
        if self._current.kind == 'end':
            self._fail("expected an expression")
        node = self._expr()
        if self._current.kind != 'end':
            self._fail("unexpected token")
        return node

    def _expr(self) -> Expr:
        node = self._term()
        while True:
            if self._accept('+'):
                node = Add(node, self._term())
            elif self._accept('-'):
                node = Sub(node, self._term())
            else:
                return node

    def _term(self) -> Expr:
        node = self._unary()
        while True:
            if self._accept('*'):
                node = Mul(node, self._unary())
            elif self._accept('/'):
                node = Div(node, self._unary())
            else:
                return node

    def _unary(self) -> Expr:
        if self._accept('-'):
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        caret = self._accept('^')
        if caret is None:
            return base
        exponent = simplify(self._unary())
        if not is_constant(exponent):
            raise ExprSyntaxError(
                "exponent must be a constant", caret.position, self.text
            )
        try:
            value = evaluate(exponent, 0.0)
        except EvaluationDomainError as e:
            raise ExprSyntaxError(
                f"invalid exponent: {e}", caret.position, self.text
            ) from e
        return Pow(base, value)

    def _atom(self) -> Expr:
        token = self._current
        if token.kind == 'number':
            self._advance()
            return Const(float(token.value))
        if token.kind == 'ident':
            self._advance()
            if token.value == 't':
                return T
            if token.value in FUNCTIONS:
                self._expect('(')
                operand = self._expr()
                self._expect(')')
                return Func(token.value, operand)
            raise UnknownIdentifier(token.value, token.position, self.text)
        if self._accept('('):
            node = self._expr()
            self._expect(')')
            return node
        self._fail("expected a number, 't', a function or '('")


def parse(text: str) -> Expr:
    """
    Parse expression text into an Expr.

    Args:
        text: Infix expression over numbers, t, + - * / ^, sin, cos, exp,
            ln, sqrt and parentheses

    Returns:
        Expression tree
    """
    node = ExpressionParser(text).parse()
    logger.debug(f"Parsed '{text}' -> {node}")
    return node
