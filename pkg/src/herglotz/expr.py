"""Arithmetic expression language used to write Lagrangians, constraints and
control systems.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' factor)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base

``^`` binds tighter than unary minus, so ``-2^2 == -4``. Expressions are
immutable trees; :meth:`Expr.compile` turns one into a plain Python callable
for the numerical hot loops.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "FUNCTIONS",
    "ExprError",
    "ParseError",
    "UnknownVariableError",
    "UnknownFunctionError",
    "EvalError",
    "MissingBindingError",
    "DomainError",
    "parse",
    "evaluate",
    "to_source",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownVariableError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown variable {name!r}", offset)
        self.name = name


class UnknownFunctionError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown function {name!r}", offset)
        self.name = name


class EvalError(ExprError):
    """Raised when an expression cannot be evaluated."""


class MissingBindingError(EvalError):
    def __init__(self, name: str):
        super().__init__(f"no value bound for variable {name!r}")
        self.name = name


class DomainError(EvalError):
    """Division by zero, log/sqrt outside the real domain, complex powers."""


def _sqrt(x):
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def _log(x):
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": abs,
}


def _div(a, b):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _pow(a, b):
    if a < 0.0 and b != math.floor(b):
        raise DomainError(f"non-integer power {b!r} of negative base {a!r}")
    if a == 0.0 and b < 0.0:
        raise DomainError("zero raised to a negative power")
    try:
        return math.pow(a, b)
    except OverflowError as exc:
        raise DomainError(f"overflow in {a!r}^{b!r}") from exc


_BINARY = {"+": lambda a, b: a + b, "-": lambda a, b: a - b,
           "*": lambda a, b: a * b, "/": _div, "^": _pow}


class Expr:
    """Base node. Subclasses are frozen dataclasses."""

    __slots__ = ()

    def variables(self) -> frozenset[str]:
        """Names of all variables occurring in the tree."""
        out: set[str] = set()
        self._collect(out)
        return frozenset(out)

    def _collect(self, out: set[str]) -> None:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, float]) -> float:
        return evaluate(self, env)

    def compile(self, args: Sequence[str],
                constants: Mapping[str, float] | None = None) -> Callable[..., float]:
        """Build a positional callable ``f(*values)`` ordered like ``args``.

        Variables listed in ``constants`` are frozen to those values. Domain
        errors raise :class:`DomainError`, exactly like :func:`evaluate`.
        """
        constants = dict(constants or {})
        missing = self.variables() - set(args) - set(constants)
        if missing:
            raise MissingBindingError(sorted(missing)[0])
        names = {}
        for i, a in enumerate(args):
            names[a] = f"_a{i}"
        ns: dict[str, object] = {
            "_div": _div, "_pow": _pow,
            **{f"_f_{k}": v for k, v in FUNCTIONS.items()},
        }
        for i, (k, v) in enumerate(constants.items()):
            if k not in names:
                names[k] = f"_c{i}"
                ns[f"_c{i}"] = float(v)
        body = _codegen(self, names)
        params = ", ".join(f"_a{i}" for i in range(len(args)))
        src = (f"def _compiled({params}):\n"
               f"    try:\n"
               f"        return {body}\n"
               f"    except ZeroDivisionError:\n"
               f"        raise _DomainError('division by zero') from None\n"
               f"    except (ValueError, OverflowError) as exc:\n"
               f"        raise _DomainError(str(exc)) from exc\n")
        ns["_DomainError"] = DomainError
        exec(compile(src, "<expr>", "exec"), ns)
        fn = ns["_compiled"]
        fn.source = src  # type: ignore[attr-defined]
        return fn

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def _collect(self, out):
        pass


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def _collect(self, out):
        out.add(self.name)


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str  # "neg" or a key of FUNCTIONS
    arg: Expr

    def _collect(self, out):
        self.arg._collect(out)


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` with IEEE double arithmetic; raise instead of producing NaN."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise MissingBindingError(e.name) from None
    if isinstance(e, Unary):
        x = evaluate(e.arg, env)
        if e.op == "neg":
            return -x
        try:
            return FUNCTIONS[e.op](x)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{e.op}({x!r}): {exc}") from exc
    if isinstance(e, Binary):
        return _BINARY[e.op](evaluate(e.left, env), evaluate(e.right, env))
    raise TypeError(f"not an expression node: {e!r}")


def _codegen(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Unary):
        inner = _codegen(e.arg, names)
        if e.op == "neg":
            return f"(-{inner})"
        return f"_f_{e.op}({inner})"
    l, r = _codegen(e.left, names), _codegen(e.right, names)
    if e.op == "^":
        if isinstance(e.right, Const) and e.right.value == math.floor(e.right.value):
            # integral exponent: real for any base; 0**-k raises ZeroDivisionError
            return f"({l} ** {r})"
        return f"_pow({l}, {r})"
    # plain '/' raises ZeroDivisionError, translated by the wrapper
    return f"({l} {e.op} {r})"


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_source(e: Expr) -> str:
    """Print ``e`` back into the grammar with minimal parentheses."""
    return _show(e)


def _fmt_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _show(e: Expr) -> str:
    if isinstance(e, Const):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            # negative literals never come out of the parser; keep them atomic
            return f"({_fmt_number(e.value)})"
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = _show(e.arg)
            # unary minus applies to a base; anything looser needs parens
            if _prec(e.arg) < _PREC["^"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({_show(e.arg)})"
    p = _PREC[e.op]
    left, right = _show(e.left), _show(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    # left-associative: equal precedence on the right needs parens
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    return 5


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, source: str, allowed: Iterable[str] | None):
        self.src = source
        self.allowed = None if allowed is None else set(allowed)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        n = len(source)
        while True:
            while pos < n and source[pos].isspace():
                pos += 1
            if pos >= n:
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {source[pos]!r}", _offset(source, pos))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), _offset(source, start)))
            pos = m.end()
        self.tokens.append(("end", "", _offset(source, n)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind != "op":
            what = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        b = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return Binary("^", b, self.factor())
        return b

    def base(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(text, off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if self.allowed is not None and text not in self.allowed:
                raise UnknownVariableError(text, off)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "op" and text == "-":
            inner = self.base()
            # '-' base: exponentiation still binds tighter than the sign
            if self.peek()[1] == "^" and self.peek()[0] == "op":
                self.take()
                inner = Binary("^", inner, self.factor())
            return Unary("neg", inner)
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {what}", off)


def _offset(source: str, index: int) -> int:
    """Byte offset of character ``index`` in the UTF-8 encoding of ``source``."""
    return len(source[:index].encode("utf-8"))


def parse(source: str, allowed_vars: Iterable[str] | None = None) -> Expr:
    """Parse ``source`` into an :class:`Expr`.

    ``allowed_vars`` restricts identifiers; pass ``None`` to accept any name.
    Errors carry the byte offset of the offending token.
    """
    return _Parser(source, allowed_vars).parse()
