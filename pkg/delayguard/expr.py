"""
Arithmetic expressions in the time variable t.

Scenario files describe every time-dependent coefficient with a small
expression language: numbers, the variable ``t``, the constant ``pi``, the
operators ``+ - * / ^`` (``^`` binds tightest and is right-associative, unary
minus binds between ``*`` and ``^``) and the functions exp, log, sin, cos,
sqrt, abs, min and max. Parsing is precedence climbing over a token stream
that remembers line and column of every token.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from delayguard.errors import ExpressionSyntaxError

# Operator groups in increasing binding power.
BINARY_OPERATORS = {"+": (1, "left"), "-": (1, "left"), "*": (2, "left"), "/": (2, "left"), "^": (4, "right")}
UNARY_MINUS_PRECEDENCE = 3

FUNCTIONS: Dict[str, Tuple[int, Optional[int]]] = {
    "exp": (1, 1),
    "log": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
}
CONSTANTS = {"pi": math.pi}
VARIABLE = "t"

_TOKEN = re.compile(
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r"|(?P<space>[ \t\r\n]+)"
)


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Node", ...]
    line: int = field(default=1, compare=False)
    column: int = field(default=0, compare=False)


Node = Union[Const, Var, Neg, BinOp, Call]


def tokenize(source: str) -> List[Token]:
    """Split ``source`` into tokens with 1-based line/column positions."""
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        match = _TOKEN.match(source, pos)
        if match is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1, source)
        kind = match.lastgroup or ""
        text = match.group()
        if kind == "space":
            for offset, char in enumerate(text):
                if char == "\n":
                    line += 1
                    line_start = pos + offset + 1
        else:
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0
        self.risks: List[str] = []

    def _peek(self) -> Optional[Token]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def _next(self) -> Token:
        token = self._peek()
        if token is None:
            line, column = self._end_position()
            raise ExpressionSyntaxError("unexpected end of expression", line, column, self.source)
        self.index += 1
        return token

    def _end_position(self) -> Tuple[int, int]:
        lines = self.source.split("\n")
        return len(lines), len(lines[-1]) + 1

    def _error(self, message: str, token: Token) -> ExpressionSyntaxError:
        return ExpressionSyntaxError(message, token.line, token.column, self.source)

    def _expect(self, text: str) -> Token:
        token = self._peek()
        if token is None or token.text != text:
            if token is None:
                line, column = self._end_position()
                raise ExpressionSyntaxError(f"expected '{text}'", line, column, self.source)
            raise self._error(f"expected '{text}' but found '{token.text}'", token)
        return self._next()

    def parse(self) -> Node:
        if not self.tokens:
            raise ExpressionSyntaxError("empty expression", 1, 1, self.source)
        node = self._expression(0)
        leftover = self._peek()
        if leftover is not None:
            raise self._error(f"unexpected '{leftover.text}'", leftover)
        return node

    def _expression(self, min_prec: int) -> Node:
        lhs = self._atom()
        while True:
            token = self._peek()
            if token is None or token.kind != "op" or token.text not in BINARY_OPERATORS:
                return lhs
            prec, assoc = BINARY_OPERATORS[token.text]
            if prec < min_prec:
                return lhs
            self._next()
            rhs = self._expression(prec + 1 if assoc == "left" else prec)
            if token.text == "/":
                self.risks.append(f"division at line {token.line}, column {token.column} may divide by zero")
            if token.text == "^" and not (isinstance(rhs, Const) and float(rhs.value).is_integer()):
                self.risks.append(f"power at line {token.line}, column {token.column} needs a positive base")
            lhs = BinOp(token.text, lhs, rhs, token.column)

    def _atom(self) -> Node:
        token = self._next()
        if token.kind == "number":
            value = float(token.text)
            if not math.isfinite(value):
                raise self._error(f"number {token.text} is out of range", token)
            return Const(value)
        if token.text == "-":
            return Neg(self._expression(UNARY_MINUS_PRECEDENCE))
        if token.text == "(":
            node = self._expression(0)
            self._expect(")")
            return node
        if token.kind == "name":
            if token.text == VARIABLE:
                return Var()
            if token.text in CONSTANTS:
                return Const(CONSTANTS[token.text])
            if token.text in FUNCTIONS:
                return self._call(token)
            raise self._error(f"unknown identifier '{token.text}'", token)
        raise self._error(f"unexpected '{token.text}'", token)

    def _call(self, name: Token) -> Node:
        self._expect("(")
        args = [self._expression(0)]
        while self._peek() is not None and self._peek().text == ",":
            self._next()
            args.append(self._expression(0))
        self._expect(")")
        low, high = FUNCTIONS[name.text]
        if len(args) < low or (high is not None and len(args) > high):
            expected = str(low) if high == low else f"at least {low}"
            raise self._error(f"{name.text} takes {expected} argument(s), got {len(args)}", name)
        if name.text in ("log", "sqrt"):
            self.risks.append(f"{name.text} at line {name.line}, column {name.column} has a restricted domain")
        return Call(name.text, tuple(args), name.line, name.column)


_UNARY: Dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "abs": abs,
}


def _compile(node: Node) -> Callable[[float], float]:
    if isinstance(node, Const):
        value = node.value
        return lambda t: value
    if isinstance(node, Var):
        return lambda t: t
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda t: -inner(t)
    if isinstance(node, BinOp):
        left, right = _compile(node.left), _compile(node.right)
        if node.op == "+":
            return lambda t: left(t) + right(t)
        if node.op == "-":
            return lambda t: left(t) - right(t)
        if node.op == "*":
            return lambda t: left(t) * right(t)
        if node.op == "/":
            return lambda t: left(t) / right(t)
        return lambda t: math.pow(left(t), right(t))
    args = [_compile(a) for a in node.args]
    if node.name == "min":
        return lambda t: min(a(t) for a in args)
    if node.name == "max":
        return lambda t: max(a(t) for a in args)
    fn, (arg,) = _UNARY[node.name], args
    return lambda t: fn(arg(t))


def _pretty(node: Node) -> str:
    if isinstance(node, Const):
        return format(node.value, ".17g")
    if isinstance(node, Var):
        return VARIABLE
    if isinstance(node, Neg):
        return f"(-{_pretty(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_pretty(node.left)} {node.op} {_pretty(node.right)})"
    return f"{node.name}(" + ", ".join(_pretty(a) for a in node.args) + ")"


def _has_variable(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Const):
        return False
    if isinstance(node, Neg):
        return _has_variable(node.operand)
    if isinstance(node, BinOp):
        return _has_variable(node.left) or _has_variable(node.right)
    return any(_has_variable(a) for a in node.args)


class ExprAst:
    """A parsed expression: tree, source text and the domain-risk warnings."""

    def __init__(self, root: Node, text: str, warnings: Optional[List[str]] = None):
        self.root = root
        self.text = text
        self.warnings: List[str] = list(warnings or [])
        self._fn = _compile(root)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ExprAst) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)

    def __repr__(self) -> str:
        return f"ExprAst({self.pretty()})"

    def evaluate(self, t: float) -> float:
        return float(self._fn(t))

    __call__ = evaluate

    def is_constant(self) -> bool:
        return not _has_variable(self.root)

    def pretty(self) -> str:
        """Fully parenthesized text that re-parses to an identical tree."""
        return _pretty(self.root)

    def check_domain(self, start: float, stop: float, samples: int = 257) -> None:
        """
        Evaluate at ``samples`` points of [start, stop].

        Raises:
            ExpressionSyntaxError: Located at the expression start, naming the first failing t
        """
        for t in np.linspace(start, stop, samples):
            try:
                value = self._fn(float(t))
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise ExpressionSyntaxError(
                    f"'{self.text}' cannot be evaluated at t={t:.6g} ({exc})", 1, 1, self.text
                ) from exc
            if not math.isfinite(value):
                raise ExpressionSyntaxError(f"'{self.text}' is not finite at t={t:.6g}", 1, 1, self.text)


def parse_expression(text: str) -> ExprAst:
    """
    Parse an expression in t.

    Args:
        text: Expression source, nonempty

    Returns:
        ExprAst carrying a list of domain-risk warnings

    Raises:
        ExpressionSyntaxError: With the 1-based line and column of the offending token
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 1, 1, str(text))
    parser = _Parser(text)
    root = parser.parse()
    return ExprAst(root, text.strip(), parser.risks)
