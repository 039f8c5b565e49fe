"""A small expression language for drifts and tube boundaries.

Sources such as ``"1 - abs(x)"`` or ``"t - 1"`` are parsed into immutable
trees that can be evaluated (on floats or numpy arrays), differentiated
symbolically and printed back to text.

Grammar (lowest to highest precedence)::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' exponent)?
    exponent := ['-'] INTEGER | '(' ['-'] INTEGER ')'
    atom     := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Functions: sin, cos, tanh, exp, abs, sign (unary), min, max (binary),
clamp (ternary). ``sign`` is accepted because derivatives of ``abs``,
``min`` and ``max`` are expressed with it.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .exceptions import RfsdeError

__all__ = [
    "Expr",
    "Lit",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "DSLSyntaxError",
    "UnknownIdentifierError",
    "EvalError",
    "FunctionSpec",
    "parse",
    "evaluate",
    "differentiate",
    "to_source",
    "compile_expr",
    "nonsmooth_nodes",
]

FUNCTION_ARITY = {
    "sin": 1,
    "cos": 1,
    "tanh": 1,
    "exp": 1,
    "abs": 1,
    "sign": 1,
    "min": 2,
    "max": 2,
    "clamp": 3,
}
NONSMOOTH_FUNCTIONS = frozenset({"abs", "sign", "min", "max", "clamp"})


class DSLSyntaxError(RfsdeError, ValueError):
    """Raised on malformed source text.

    ``offset`` is the byte offset of the offending token and ``expected``
    the set of tokens that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnknownIdentifierError(DSLSyntaxError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class EvalError(RfsdeError, ArithmeticError):
    """Evaluation failed; ``subexpr`` is the node that could not be computed."""

    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message}: {to_source(subexpr)}")


# ---------------------------------------------------------------------------
# Tree


class Expr:
    """Base class of expression nodes. Nodes are frozen and hashable."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Lit(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]


# ---------------------------------------------------------------------------
# Tokenizer and parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number, name, op, eof
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {source[pos]!r}", byte_pos)
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("eof", "", byte_pos))
    return tokens


_ATOM_START = frozenset({"NUMBER", "NAME", "(", "-"})


class _Parser:
    def __init__(self, source: str, variable: str):
        self.tokens = _tokenize(source)
        self.variable = variable
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _error(self, expected) -> DSLSyntaxError:
        tok = self.tok
        what = "end of input" if tok.kind == "eof" else f"token {tok.text!r}"
        return DSLSyntaxError(f"unexpected {what}", tok.offset, frozenset(expected))

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            raise self._error({text})

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "eof":
            raise self._error({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self._accept("(")
        sign = -1 if self._accept("-") else 1
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            raise self._error({"INTEGER"} | ({"-"} if sign == 1 else set()))
        self.i += 1
        if paren:
            self._expect(")")
        return sign * int(tok.text)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Lit(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTION_ARITY:
                return self.call(tok)
            if tok.text == self.variable:
                return Var(tok.text)
            raise UnknownIdentifierError(tok.text, tok.offset)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        raise self._error(_ATOM_START)

    def call(self, name_tok: _Token) -> Expr:
        self._expect("(")
        args = [self.expr()]
        while self._accept(","):
            args.append(self.expr())
        self._expect(")")
        arity = FUNCTION_ARITY[name_tok.text]
        if len(args) != arity:
            raise DSLSyntaxError(
                f"{name_tok.text}() takes {arity} argument(s), got {len(args)}",
                name_tok.offset,
            )
        return Call(name_tok.text, tuple(args))


def parse(source: str, variable: str) -> Expr:
    """Parse ``source`` into a tree whose only free variable is ``variable``."""
    if not source or not source.strip():
        raise DSLSyntaxError("empty expression", 0, _ATOM_START)
    if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", variable) or variable in FUNCTION_ARITY:
        raise ValueError(f"invalid variable name {variable!r}")
    return _Parser(source, variable).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Lit) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_source(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_source(e: Expr) -> str:
    """Print ``e`` so that ``parse(to_source(e))`` rebuilds the same tree."""
    if isinstance(e, Lit):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC_NEG)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        return f"{_wrap(e.left, p)} {e.op} {_wrap(e.right, p + 1)}"
    if isinstance(e, Pow):
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{_wrap(e.base, _PREC_ATOM)}^{exp}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

Number = Union[float, np.ndarray]

_UNARY_NP = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "abs": np.abs,
    "sign": np.sign,
}


def compile_expr(e: Expr) -> Callable[[Number], Number]:
    """Turn ``e`` into a numpy-vectorised callable.

    Division by zero (including negative powers of zero) raises
    :class:`EvalError`; overflow follows IEEE semantics.
    """
    if isinstance(e, Lit):
        value = float(e.value)
        return lambda v: np.full_like(v, value) if isinstance(v, np.ndarray) else value
    if isinstance(e, Var):
        return lambda v: v
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda v: -f(v)
    if isinstance(e, BinOp):
        fl, fr = compile_expr(e.left), compile_expr(e.right)
        if e.op == "+":
            return lambda v: fl(v) + fr(v)
        if e.op == "-":
            return lambda v: fl(v) - fr(v)
        if e.op == "*":
            return lambda v: fl(v) * fr(v)

        def divide(v):
            den = fr(v)
            if np.any(den == 0):
                raise EvalError("division by zero", e)
            return fl(v) / den

        return divide
    if isinstance(e, Pow):
        fb, n = compile_expr(e.base), e.exponent
        if n >= 0:
            return lambda v: fb(v) ** n

        def neg_power(v):
            base = fb(v)
            if np.any(base == 0):
                raise EvalError("division by zero", e)
            return 1.0 / base ** (-n)

        return neg_power
    if isinstance(e, Call):
        fs = [compile_expr(a) for a in e.args]
        if e.func in _UNARY_NP:
            g = _UNARY_NP[e.func]
            f0 = fs[0]
            return lambda v: g(f0(v))
        if e.func == "min":
            return lambda v: np.minimum(fs[0](v), fs[1](v))
        if e.func == "max":
            return lambda v: np.maximum(fs[0](v), fs[1](v))
        if e.func == "clamp":
            return lambda v: np.minimum(np.maximum(fs[0](v), fs[1](v)), fs[2](v))
    raise TypeError(f"cannot compile {e!r}")


def evaluate(e: Expr, v: Number) -> Number:
    """Evaluate ``e`` at ``v`` in IEEE double precision."""
    if isinstance(v, np.ndarray):
        with np.errstate(over="ignore", invalid="ignore"):
            return compile_expr(e)(v.astype(float, copy=False))
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"evaluation point must be finite, got {v}")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(compile_expr(e)(np.float64(v)))


# ---------------------------------------------------------------------------
# Differentiation

ZERO = Lit(0.0)
ONE = Lit(1.0)


def _is_lit(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Lit) and (value is None or e.value == value)


def _fold(e: Expr) -> Expr:
    """Fold ``e`` to a literal if it has no free variable."""
    if isinstance(e, Lit) or _has_var(e):
        return e
    try:
        return Lit(evaluate(e, 0.0))
    except EvalError:
        return e


def _has_var(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Lit):
        return False
    return any(_has_var(c) for c in _children(e))


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Call):
        return e.args
    return ()


def _add(a: Expr, b: Expr) -> Expr:
    if _is_lit(a, 0.0):
        return b
    if _is_lit(b, 0.0):
        return a
    return _fold(BinOp("+", a, b))


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_lit(b, 0.0):
        return a
    if _is_lit(a, 0.0):
        return _neg(b)
    return _fold(BinOp("-", a, b))


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_lit(a, 0.0) or _is_lit(b, 0.0):
        return ZERO
    if _is_lit(a, 1.0):
        return b
    if _is_lit(b, 1.0):
        return a
    return _fold(BinOp("*", a, b))


def _div(a: Expr, b: Expr) -> Expr:
    if _is_lit(b, 1.0):
        return a
    return _fold(BinOp("/", a, b))


def _neg(a: Expr) -> Expr:
    if isinstance(a, Neg):
        return a.arg
    return _fold(Neg(a))


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return _fold(Pow(a, n))


def _call(func: str, *args: Expr) -> Expr:
    return _fold(Call(func, tuple(args)))


def differentiate(e: Expr) -> Expr:
    """Symbolic derivative with respect to the free variable.

    ``abs`` differentiates to ``sign`` (so the derivative at 0 is 0); at
    ties ``min``/``max`` return the average of both branch derivatives.
    """
    if isinstance(e, Lit):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a), differentiate(b)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2))
    if isinstance(e, Pow):
        n = e.exponent
        if n == 0:
            return ZERO
        return _mul(_mul(Lit(float(n)), _pow(e.base, n - 1)), differentiate(e.base))
    if isinstance(e, Call):
        if e.func == "clamp":
            x, lo, hi = e.args
            return differentiate(Call("min", (Call("max", (x, lo)), hi)))
        if e.func in ("min", "max"):
            a, b = e.args
            da, db = differentiate(a), differentiate(b)
            s = _call("sign", _sub(a, b))
            if e.func == "min":
                wa, wb = _sub(ONE, s), _add(ONE, s)
            else:
                wa, wb = _add(ONE, s), _sub(ONE, s)
            return _mul(Lit(0.5), _add(_mul(wa, da), _mul(wb, db)))
        (a,) = e.args
        da = differentiate(a)
        if e.func == "sign":
            return ZERO
        if e.func == "sin":
            outer = _call("cos", a)
        elif e.func == "cos":
            outer = _neg(_call("sin", a))
        elif e.func == "tanh":
            outer = _sub(ONE, _pow(_call("tanh", a), 2))
        elif e.func == "exp":
            outer = _call("exp", a)
        else:  # abs
            outer = _call("sign", a)
        return _mul(outer, da)
    raise TypeError(f"cannot differentiate {e!r}")


def nonsmooth_nodes(e: Expr) -> list[Call]:
    """Calls to abs/sign/min/max/clamp anywhere in ``e``."""
    found = []
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Call) and node.func in NONSMOOTH_FUNCTIONS:
            found.append(node)
        stack.extend(_children(node))
    return found


def free_variables(e: Expr) -> set[str]:
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        stack.extend(_children(node))
    return out


# ---------------------------------------------------------------------------
# User-facing function wrapper


@dataclass(frozen=True)
class FunctionSpec:
    """A parsed scalar function of one variable.

    ``declared_lipschitz`` is the user's claim that ``|f(0)| + Lip(f) <= L``.
    It is trusted by the solvers and only cross-checked by sampling.
    """

    source: str
    variable: str = "x"
    declared_lipschitz: float | None = None
    parsed: Expr = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.declared_lipschitz is not None and not self.declared_lipschitz > 0:
            raise ValueError("declared_lipschitz must be positive")
        object.__setattr__(self, "parsed", parse(self.source, self.variable))

    @classmethod
    def constant(cls, value: float, variable: str = "x") -> "FunctionSpec":
        return cls(repr(float(value)) if value >= 0 else f"-{-float(value)!r}", variable)

    @cached_property
    def compiled(self) -> Callable[[Number], Number]:
        """Vectorised evaluator; accepts numpy scalars and arrays."""
        return compile_expr(self.parsed)

    @cached_property
    def derivative_expr(self) -> Expr:
        return differentiate(self.parsed)

    @cached_property
    def _dfn(self):
        return compile_expr(self.derivative_expr)

    def __call__(self, v: Number) -> Number:
        if isinstance(v, np.ndarray):
            with np.errstate(over="ignore", invalid="ignore"):
                return self.compiled(v.astype(float, copy=False))
        return evaluate(self.parsed, v)

    def derivative(self, v: Number) -> Number:
        if isinstance(v, np.ndarray):
            with np.errstate(over="ignore", invalid="ignore"):
                return self._dfn(v.astype(float, copy=False))
        return evaluate(self.derivative_expr, v)

    @property
    def is_smooth(self) -> bool:
        return not nonsmooth_nodes(self.parsed)

    def estimate_lipschitz(self, lo: float, hi: float, samples: int = 2001) -> float:
        """Sampled estimate of ``|f(0)| + Lip(f)`` restricted to ``[lo, hi]``."""
        grid = np.linspace(lo, hi, samples)
        vals = self(grid)
        slopes = np.abs(np.diff(vals)) / np.diff(grid)
        return float(abs(self(0.0)) + np.max(slopes))

    def check_lipschitz(self, lo: float, hi: float, samples: int = 2001) -> float:
        """Compare the sampled constant with the declared one; warn on violation."""
        est = self.estimate_lipschitz(lo, hi, samples)
        if self.declared_lipschitz is not None and est > self.declared_lipschitz * (1 + 1e-9):
            warnings.warn(
                f"{self.source!r}: sampled |f(0)| + Lip = {est:.6g} on [{lo}, {hi}] "
                f"exceeds declared {self.declared_lipschitz:.6g}",
                RuntimeWarning,
                stacklevel=2,
            )
        return est
