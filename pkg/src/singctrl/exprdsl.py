"""Small arithmetic expression language used in problem definition files.

Expressions are scalar formulas over the reserved variables ``t``, ``x``,
``lambda``, ``eps``, plus user-defined named constants.  The grammar is a
closed calculator grammar (no conditionals, no user functions):

    expr   := unary (('+'|'-') unary)*
    unary  := '-' unary | term
    term   := factor (('*'|'/') factor)*
    factor := base ('^' factor)?          # '^' is right-associative
    base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base

Numbers are decimal with an optional exponent.  A leading minus binds a
whole product (``-1/3`` is the negation of ``1/3``), while a minus in
operand position binds a single base (``2*-3``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Const",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "ParseError",
    "EvalError",
    "parse",
    "evaluate",
    "to_source",
    "compile_expr",
    "names_used",
    "gamma",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = ("t", "x", "lambda", "eps")
FUNCTIONS = ("exp", "log", "sqrt", "abs", "sin", "cos", "gamma")


class ParseError(ValueError):
    """Syntax or unknown-identifier error, with byte offset and expectation."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += " (expected " + " or ".join(expected) + ")"
        super().__init__(detail)


class EvalError(ValueError):
    """Unbound name or arithmetic domain violation during evaluation."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Sub:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Mul:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Div:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Pow:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, Add, Sub, Mul, Div, Pow, Call]


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            # only whitespace allowed to remain
            rest = source[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            offset = pos + (len(rest) - len(stripped))
            raise ParseError(f"unexpected character {stripped[0]!r}", offset)
        offset = m.start("num") if m.group("num") else (
            m.start("ident") if m.group("ident") else m.start("op"))
        if m.group("num"):
            yield ("num", m.group("num"), offset)
        elif m.group("ident"):
            yield ("ident", m.group("ident"), offset)
        else:
            yield (m.group("op"), m.group("op"), offset)
        pos = m.end()
    yield ("end", "", n)


class _Parser:
    def __init__(self, source: str):
        self.tokens = list(_tokenize(source))
        self.i = 0

    @property
    def tok(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> tuple[str, str, int]:
        if self.tok[0] != kind:
            raise ParseError(
                f"unexpected token {self.tok[1]!r}" if self.tok[0] != "end"
                else "unexpected end of input",
                self.tok[2],
                expected=(kind,),
            )
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok[0] != "end":
            raise ParseError(
                f"unexpected token {self.tok[1]!r}", self.tok[2],
                expected=("operator", "end of input"),
            )
        return e

    def expr(self) -> Expr:
        node = self.unary()
        while self.tok[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.unary()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def unary(self) -> Expr:
        if self.tok[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.term()

    def term(self) -> Expr:
        node = self.factor()
        while self.tok[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expr:
        node = self.base()
        if self.tok[0] == "^":
            self.advance()
            return Pow(node, self.factor())
        return node

    def base(self) -> Expr:
        kind, text, offset = self.tok
        if kind == "-":
            self.advance()
            return Neg(self.base())
        if kind == "num":
            self.advance()
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {text!r} overflows", offset)
            return Num(value)
        if kind == "ident":
            self.advance()
            if self.tok[0] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", offset,
                                     expected=FUNCTIONS)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            return Const(text)
        if kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(
            f"unexpected token {text!r}" if kind != "end" else "unexpected end of input",
            offset,
            expected=("number", "identifier", "'('", "'-'"),
        )


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# printing

def _is_atom(e: Expr) -> bool:
    return isinstance(e, (Num, Var, Const, Call))


def to_source(e: Expr) -> str:
    """Render an expression tree back to source text.

    The output is conservatively parenthesized so that ``parse(to_source(e))``
    is structurally identical to ``e``.
    """
    if isinstance(e, Num):
        v = e.value
        if v == math.floor(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if isinstance(e.arg, (Add, Sub, Pow)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, (Add, Sub)):
        op = "+" if isinstance(e, Add) else "-"
        lhs = to_source(e.lhs)
        rhs = to_source(e.rhs)
        # right operand re-parses at unary level; bare +/- chains would
        # re-associate to the left, so parenthesize them.
        if isinstance(e.rhs, (Add, Sub)):
            rhs = f"({rhs})"
        return f"{lhs} {op} {rhs}"
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        lhs = to_source(e.lhs)
        if isinstance(e.lhs, (Add, Sub, Neg)):
            lhs = f"({lhs})"
        rhs = to_source(e.rhs)
        if isinstance(e.rhs, (Add, Sub, Mul, Div, Neg)):
            rhs = f"({rhs})"
        return f"{lhs}{op}{rhs}"
    if isinstance(e, Pow):
        lhs = to_source(e.lhs)
        if not _is_atom(e.lhs):
            lhs = f"({lhs})"
        rhs = to_source(e.rhs)
        if not _is_atom(e.rhs):
            rhs = f"({rhs})"
        return f"{lhs}^{rhs}"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Euler Gamma function by the Lanczos approximation (g=7, n=9).

    Relative accuracy is better than 1e-12 on [0.5, 10]; poles at the
    nonpositive integers raise :class:`EvalError`.
    """
    if x != x:
        return x
    if x <= 0.0 and x == math.floor(x):
        raise EvalError(f"gamma pole at {x}")
    if x < 0.5:
        # reflection: gamma(x) * gamma(1-x) = pi / sin(pi x)
        s = math.sin(math.pi * x)
        return math.pi / (s * gamma(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    try:
        return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc
    except OverflowError:
        return math.inf


def _apply_fn(fn: str, v: float) -> float:
    if fn == "exp":
        try:
            return math.exp(v)
        except OverflowError:
            return math.inf
    if fn == "log":
        if v <= 0.0:
            raise EvalError(f"log of nonpositive value {v}")
        return math.log(v)
    if fn == "sqrt":
        if v < 0.0:
            raise EvalError(f"sqrt of negative value {v}")
        return math.sqrt(v)
    if fn == "abs":
        return abs(v)
    if fn == "sin":
        return math.sin(v)
    if fn == "cos":
        return math.cos(v)
    if fn == "gamma":
        return gamma(v)
    raise EvalError(f"unknown function {fn!r}")


def _pow(b: float, e: float) -> float:
    if b == 0.0 and e < 0.0:
        raise EvalError("zero raised to a negative power")
    if b < 0.0 and e != math.floor(e):
        raise EvalError(f"negative base {b} with fractional exponent {e}")
    try:
        return math.pow(b, e)
    except OverflowError:
        return math.inf if (b > 1.0 or b < -1.0 or e < 0) else 0.0


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` with every variable and constant bound in ``env``.

    Raises :class:`EvalError` on unbound names, division by zero, log of a
    nonpositive value, sqrt of a negative value, or a negative base with a
    fractional exponent.  Overflow saturates to infinity.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, (Var, Const)):
        try:
            return float(env[e.name])
        except KeyError:
            raise EvalError(f"unbound name {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Add):
        return evaluate(e.lhs, env) + evaluate(e.rhs, env)
    if isinstance(e, Sub):
        return evaluate(e.lhs, env) - evaluate(e.rhs, env)
    if isinstance(e, Mul):
        return evaluate(e.lhs, env) * evaluate(e.rhs, env)
    if isinstance(e, Div):
        denom = evaluate(e.rhs, env)
        if denom == 0.0:
            raise EvalError("division by zero")
        return evaluate(e.lhs, env) / denom
    if isinstance(e, Pow):
        return _pow(evaluate(e.lhs, env), evaluate(e.rhs, env))
    if isinstance(e, Call):
        return _apply_fn(e.fn, evaluate(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def names_used(e: Expr) -> tuple[set[str], set[str]]:
    """Return (variables, constants) referenced by ``e``."""
    variables: set[str] = set()
    constants: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            variables.add(node.name)
        elif isinstance(node, Const):
            constants.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, Call):
            stack.append(node.arg)
        elif isinstance(node, (Add, Sub, Mul, Div, Pow)):
            stack.append(node.lhs)
            stack.append(node.rhs)
    return variables, constants


def compile_expr(
    e: Expr,
    args: tuple[str, ...],
    bound: Mapping[str, float] | None = None,
) -> Callable[..., float]:
    """Compile ``e`` into a fast positional callable.

    ``args`` names the positional parameters of the returned function;
    ``bound`` supplies fixed values for every other name.  Semantics match
    :func:`evaluate` exactly (same domain errors).  Unbound names are
    rejected at compile time.
    """
    bound = dict(bound or {})

    def build(node: Expr) -> Callable[[tuple[float, ...]], float]:
        if isinstance(node, Num):
            v = node.value
            return lambda a: v
        if isinstance(node, (Var, Const)):
            name = node.name
            if name in args:
                i = args.index(name)
                return lambda a: a[i]
            if name in bound:
                v = float(bound[name])
                return lambda a: v
            raise EvalError(f"unbound name {name!r}")
        if isinstance(node, Neg):
            g = build(node.arg)
            return lambda a: -g(a)
        if isinstance(node, Add):
            f, g = build(node.lhs), build(node.rhs)
            return lambda a: f(a) + g(a)
        if isinstance(node, Sub):
            f, g = build(node.lhs), build(node.rhs)
            return lambda a: f(a) - g(a)
        if isinstance(node, Mul):
            f, g = build(node.lhs), build(node.rhs)
            return lambda a: f(a) * g(a)
        if isinstance(node, Div):
            f, g = build(node.lhs), build(node.rhs)

            def div(a: tuple[float, ...]) -> float:
                d = g(a)
                if d == 0.0:
                    raise EvalError("division by zero")
                return f(a) / d

            return div
        if isinstance(node, Pow):
            f, g = build(node.lhs), build(node.rhs)
            return lambda a: _pow(f(a), g(a))
        if isinstance(node, Call):
            g = build(node.arg)
            fn = node.fn
            if fn == "exp":
                def call_exp(a: tuple[float, ...]) -> float:
                    try:
                        return math.exp(g(a))
                    except OverflowError:
                        return math.inf
                return call_exp
            if fn == "abs":
                return lambda a: abs(g(a))
            if fn == "sin":
                return lambda a: math.sin(g(a))
            if fn == "cos":
                return lambda a: math.cos(g(a))
            return lambda a: _apply_fn(fn, g(a))
        raise TypeError(f"not an expression node: {node!r}")

    root = build(e)

    def fn(*vals: float) -> float:
        return root(vals)

    return fn
