"""Small arithmetic expression language for user-supplied scalar functions.

All coefficients of a model (growth and mortality fields, boundary maps,
integral weights, initial data) are written as plain strings in this
language, so configurations stay serializable and portable.

Grammar (EBNF, whitespace insignificant)::

    expr   = term { ("+" | "-") term } ;
    term   = factor { ("*" | "/") factor } ;
    factor = "-" factor | power ;
    power  = atom [ "^" factor ] ;
    atom   = NUMBER | NAME | NAME "(" expr { "," expr } ")" | "(" expr ")" ;

``^`` is right-associative and binds tighter than unary minus, so
``-2^2 == -4`` and ``2^3^2 == 512``.  Built-in functions: ``min(a,b)``,
``max(a,b)``, ``exp(a)``, ``abs(a)``, ``sin(a)``, ``cos(a)``.

Every variable name must belong to the declared variable set given at
parse time; anything else is rejected immediately with its 0-based byte
offset.  Evaluation either produces a finite real (or array of finite
reals) or raises :class:`EvalError`; NaN and infinity never propagate as
success values.  Parsed expressions are immutable and safe to share
between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "Expression",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprError",
    "ParseError",
    "UnknownVariableError",
    "EvalError",
    "BoundsReport",
    "parse_expr",
    "eval_expr",
    "eval_array",
    "check_bounds",
    "substitute",
    "pretty",
    "free_vars",
]


class ExprError(Exception):
    """Base class for expression-language errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownVariableError(ParseError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown variable '{name}'", position)
        self.name = name


class EvalError(ExprError):
    """Raised when evaluation cannot produce a finite real."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expression", ...]


Expression = Union[Num, Var, Neg, BinOp, Call]

_FUNCTIONS = {"min": 2, "max": 2, "exp": 1, "abs": 1, "sin": 1, "cos": 1}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            bad = len(src) - len(stripped)
            raise ParseError(f"unexpected character '{src[bad]}'", bad)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, allowed_vars: Iterable[str]):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0
        self.allowed = frozenset(allowed_vars)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected '{op}'", pos)
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token '{val}'", pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                node = BinOp(val, node, self.term())
            else:
                return node

    def term(self) -> Expression:
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                node = BinOp(val, node, self.factor())
            else:
                return node

    def factor(self) -> Expression:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            # right-associative; exponent may carry a unary minus
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expression:
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            nxt_kind, nxt_val, _ = self.peek()
            if nxt_kind == "op" and nxt_val == "(":
                if val not in _FUNCTIONS:
                    raise ParseError(f"unknown function '{val}'", pos)
                self.advance()
                args = [self.expr()]
                while True:
                    k, v, p = self.peek()
                    if k == "op" and v == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) != _FUNCTIONS[val]:
                    raise ParseError(
                        f"function '{val}' takes {_FUNCTIONS[val]} argument(s),"
                        f" got {len(args)}",
                        pos,
                    )
                return Call(val, tuple(args))
            if val not in self.allowed:
                raise UnknownVariableError(val, pos)
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token '{val}'", pos)


def parse_expr(src: str, allowed_vars: Iterable[str]) -> Expression:
    """Parse ``src`` into an AST; only names in ``allowed_vars`` may appear."""
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    return _Parser(src, allowed_vars).parse()


# ---------------------------------------------------------------------------
# Evaluation

Value = Union[float, np.ndarray]


def _eval(node: Expression, bindings: Mapping[str, Value], strict: bool = True) -> Value:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return bindings[node.name]
        except KeyError:
            raise EvalError(f"no binding for variable '{node.name}'") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, bindings, strict)
    if isinstance(node, BinOp):
        a = _eval(node.left, bindings, strict)
        b = _eval(node.right, bindings, strict)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if strict and np.any(b == 0):
                raise EvalError("division by zero")
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.asarray(a, dtype=float) / b
        # power; domain errors (0^negative, negative^fractional) surface as
        # non-finite values and are rejected by the callers' finiteness check
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            return np.power(np.asarray(a, dtype=float), b)
    if isinstance(node, Call):
        vals = [_eval(arg, bindings, strict) for arg in node.args]
        if node.func == "min":
            return np.minimum(vals[0], vals[1])
        if node.func == "max":
            return np.maximum(vals[0], vals[1])
        if node.func == "exp":
            with np.errstate(over="ignore"):
                return np.exp(vals[0])
        if node.func == "abs":
            return np.abs(vals[0])
        if node.func == "sin":
            return np.sin(vals[0])
        if node.func == "cos":
            return np.cos(vals[0])
    raise EvalError(f"cannot evaluate node {node!r}")


def eval_expr(e: Expression, bindings: Mapping[str, float]) -> float:
    """Evaluate at scalar bindings, returning a finite float or raising."""
    try:
        out = _eval(e, bindings)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvalError(str(exc)) from None
    out = float(out)
    if not np.isfinite(out):
        raise EvalError(f"non-finite result {out!r}")
    return out


def eval_array(e: Expression, bindings: Mapping[str, Value]) -> np.ndarray:
    """Vectorized evaluation; bindings may mix scalars and broadcastable arrays."""
    try:
        out = _eval(e, bindings)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvalError(str(exc)) from None
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(out)))
        raise EvalError(f"non-finite result at flat index {bad[0]}")
    return out


def free_vars(e: Expression) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        out: frozenset[str] = frozenset()
        for a in e.args:
            out |= free_vars(a)
        return out
    raise TypeError(type(e))


def substitute(e: Expression, mapping: Mapping[str, Union[float, Expression]]) -> Expression:
    """Replace variables by numbers or sub-expressions (no simplification)."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        if e.name in mapping:
            repl = mapping[e.name]
            if isinstance(repl, (int, float)):
                return Num(float(repl))
            return repl
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.func, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# Pretty-printing (round-trips to a structurally equal AST)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e: Expression) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def pretty(e: Expression) -> str:
    if isinstance(e, Num):
        if e.value < 0:
            # negative literal must re-parse as Neg(Num); emit explicit parens
            return f"(-{_fmt_num(-e.value)})"
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = pretty(e.operand)
        if _prec(e.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        lp, rp = pretty(e.left), pretty(e.right)
        p = _PREC[e.op]
        if e.op == "^":
            # exponent slot accepts any factor (including unary minus)
            if _prec(e.left) <= p:
                lp = f"({lp})"
            if _prec(e.right) < _PREC["neg"]:
                rp = f"({rp})"
            return f"{lp}^{rp}"
        if _prec(e.left) < p:
            lp = f"({lp})"
        # left-associative: parenthesize right child at equal precedence
        if _prec(e.right) <= p:
            rp = f"({rp})"
        return f"{lp}{e.op}{rp}"
    if isinstance(e, Call):
        return f"{e.func}({','.join(pretty(a) for a in e.args)})"
    raise TypeError(type(e))


def _fmt_num(v: float) -> str:
    out = repr(float(v))
    return out


# ---------------------------------------------------------------------------
# Bounds sampling


@dataclass(frozen=True)
class BoundsReport:
    min_seen: float
    max_seen: float
    samples_used: int


def check_bounds(
    e: Expression,
    box: Mapping[str, tuple[float, float]],
    n_samples: int = 4096,
) -> BoundsReport:
    """Empirical min/max of ``e`` over a deterministic lattice on ``box``.

    The lattice has roughly ``n_samples`` points overall and always
    includes the box corners.  Evaluation failures are surfaced together
    with the offending sample point.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    names = sorted(box)
    missing = free_vars(e) - set(names)
    if missing:
        raise EvalError(f"box does not cover variable(s) {sorted(missing)}")
    if not names:
        val = eval_expr(e, {})
        return BoundsReport(val, val, 1)
    dims = len(names)
    per_axis = max(2, int(round(n_samples ** (1.0 / dims))))
    axes = []
    for name in names:
        lo, hi = box[name]
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError(f"box for '{name}' must be finite")
        axes.append(np.linspace(lo, hi, per_axis) if hi > lo else np.full(per_axis, lo))
    grids = np.meshgrid(*axes, indexing="ij")
    bindings = {name: grid.ravel() for name, grid in zip(names, grids)}
    try:
        vals = eval_array(e, bindings)
    except EvalError as exc:
        # locate the first failing point for the report
        raw = _eval_unchecked(e, bindings)
        bad = np.flatnonzero(~np.isfinite(raw))
        if bad.size:
            point = {name: float(bindings[name][bad[0]]) for name in names}
            raise EvalError(f"evaluation failed at {point}: {exc}") from None
        raise
    vals = np.broadcast_to(vals, (per_axis**dims,))
    return BoundsReport(float(vals.min()), float(vals.max()), per_axis**dims)


def _eval_unchecked(e: Expression, bindings: Mapping[str, Value]) -> np.ndarray:
    with np.errstate(all="ignore"):
        return np.asarray(_eval(e, bindings, strict=False), dtype=float)
