"""A small language for scripting distribution arithmetic.

Example::

    iid D[3] = dice(6);
    let Z = sum(D);
    print mean(Z), var(Z), report(Z);

Statements end with ``;``.  ``let`` binds an expression, ``iid NAME[k] = dist``
declares ``k`` independent draws of one distribution (indexed ``NAME[0]`` ..
``NAME[k-1]``), ``print`` runs queries.  A distribution written inside an
expression is a fresh independent draw each time it appears.  Integer
arguments of ``gaussian``, ``uniform`` and ``empirical`` are the number of
points (a power of two).  ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from . import arith, core, mixture, oracle, stats
from .errors import ResourceGuardError
from .core import Registry, TTVariable

KEYWORDS = {"let", "iid", "print"}
QUERIES = {"mean", "var", "moment", "cov", "report"}
BUILTINS = {"sum", "prod"}
DISTS = {"gaussian", "uniform", "discrete", "dice", "rademacher", "empirical"}
RESERVED = KEYWORDS | QUERIES | BUILTINS | DISTS
MAX_MOMENT = 32


class DSLError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, text: str = ""):
        self.message, self.line, self.col, self.text = message, line, col, text
        where = f"line {line}, column {col}"
        if text:
            where += f" at {text!r}"
        super().__init__(f"{where}: {message}")


class LexError(DSLError):
    pass


class ParseError(DSLError):
    pass


class EvalError(Exception):
    def __init__(self, statement: int, message: str):
        self.statement, self.message = statement, message
        super().__init__(f"statement {statement}: {message}")


# ---------------------------------------------------------------------- lexer


@dataclass(frozen=True)
class Token:
    kind: str  # NUM NAME STRING OP EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+) |
    (?P<nl>\n) |
    (?P<comment>\#[^\n]*) |
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?) |
    (?P<name>[A-Za-z_][A-Za-z0-9_]*) |
    (?P<string>"[^"\n]*") |
    (?P<op>[;,()\[\]=+\-*])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise LexError("unexpected character", line, col, text[pos])
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind in ("num", "name", "string", "op"):
            tokens.append(Token(kind.upper(), m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# ------------------------------------------------------------------------ AST

Span = tuple  # (line, col)


@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Index:
    name: str
    index: int
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Builtin:
    func: str
    name: str
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Dist:
    kind: str
    args: tuple
    span: Span = field(default=(0, 0), compare=False)


Expr = Union[Num, Var, Index, Neg, BinOp, Builtin, Dist]


@dataclass(frozen=True)
class Query:
    kind: str
    args: tuple
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Let:
    name: str
    expr: Expr
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Iid:
    name: str
    count: int
    dist: Dist
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Print:
    queries: tuple
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Program:
    statements: tuple


# --------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.scalars: set[str] = set()
        self.arrays: dict[str, int] = {}

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col, tok.text or "end of input")

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("OP", "NAME") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def name(self, what: str = "a name") -> Token:
        tok = self.tok
        if tok.kind != "NAME":
            raise self.error(f"expected {what}")
        if tok.text in RESERVED:
            raise self.error(f"{tok.text!r} is reserved")
        return self.advance()

    def program(self) -> Program:
        stmts = []
        while self.tok.kind != "EOF":
            stmts.append(self.statement())
            self.expect(";")
        return Program(tuple(stmts))

    def statement(self):
        tok = self.tok
        span = (tok.line, tok.col)
        if self.at("let"):
            self.advance()
            name = self.name()
            self.expect("=")
            expr = self.expr()
            if name.text in self.arrays:
                raise self.error(f"{name.text!r} is already an iid array", name)
            self.scalars.add(name.text)
            return Let(name.text, expr, span)
        if self.at("iid"):
            self.advance()
            name = self.name()
            self.expect("[")
            count = self.integer("array length")
            if count < 1:
                raise self.error("array length must be positive", self.tokens[self.pos - 1])
            self.expect("]")
            self.expect("=")
            if not (self.tok.kind == "NAME" and self.tok.text in DISTS):
                raise self.error("expected a distribution")
            dist = self.dist()
            if name.text in self.scalars:
                raise self.error(f"{name.text!r} is already bound by let", name)
            self.arrays[name.text] = count
            return Iid(name.text, count, dist, span)
        if self.at("print"):
            self.advance()
            queries = [self.query()]
            while self.at(","):
                self.advance()
                queries.append(self.query())
            return Print(tuple(queries), span)
        raise self.error("expected 'let', 'iid' or 'print'")

    def number(self) -> float:
        sign = 1.0
        if self.at("-"):
            self.advance()
            sign = -1.0
        tok = self.tok
        if tok.kind != "NUM":
            raise self.error("expected a number")
        self.advance()
        return sign * float(tok.text)

    def integer(self, what: str = "an integer") -> int:
        tok = self.tok
        value = self.number()
        if value != int(value):
            raise self.error(f"{what} must be an integer", tok)
        return int(value)

    def dist(self) -> Dist:
        tok = self.advance()
        kind, span = tok.text, (tok.line, tok.col)
        self.expect("(")
        if kind == "discrete":
            points = self.numlist()
            self.expect(";")
            masses = self.numlist()
            args = (tuple(points), tuple(masses))
        elif kind == "rademacher":
            args = ()
        elif kind == "dice":
            args = (self.integer("number of faces"),)
        elif kind == "empirical":
            if self.tok.kind != "STRING":
                raise self.error("expected a quoted file path")
            path = self.advance().text[1:-1]
            self.expect(",")
            args = (path, self.integer("number of points"))
        else:
            a = self.number()
            self.expect(",")
            b = self.number()
            self.expect(",")
            args = (a, b, self.integer("number of points"))
        if not self.at(")"):
            raise self.error(f"wrong number of arguments to {kind}()")
        self.advance()
        return Dist(kind, args, span)

    def numlist(self) -> list[float]:
        out = [self.number()]
        while self.at(","):
            self.advance()
            out.append(self.number())
        return out

    def expr(self):
        node = self.term()
        while self.at("+") or self.at("-"):
            tok = self.advance()
            node = BinOp(tok.text, node, self.term(), (tok.line, tok.col))
        return node

    def term(self):
        node = self.factor()
        while self.at("*"):
            tok = self.advance()
            node = BinOp("*", node, self.factor(), (tok.line, tok.col))
        return node

    def factor(self):
        tok = self.tok
        span = (tok.line, tok.col)
        if self.at("-"):
            self.advance()
            return Neg(self.factor(), span)
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "NUM":
            self.advance()
            return Num(float(tok.text), span)
        if tok.kind == "NAME" and tok.text in BUILTINS:
            self.advance()
            self.expect("(")
            arg = self.name("an iid array name")
            if arg.text not in self.arrays:
                raise self.error(f"{arg.text!r} is not an iid array", arg)
            self.expect(")")
            return Builtin(tok.text, arg.text, span)
        if tok.kind == "NAME" and tok.text in DISTS:
            return self.dist()
        if tok.kind == "NAME" and tok.text in RESERVED:
            raise self.error(f"{tok.text!r} cannot appear in an expression")
        if tok.kind == "NAME":
            self.advance()
            if self.at("["):
                if tok.text not in self.arrays:
                    raise self.error(f"{tok.text!r} is not an iid array", tok)
                self.advance()
                itok = self.tok
                index = self.integer("index")
                if not 0 <= index < self.arrays[tok.text]:
                    raise self.error(f"index {index} out of range for {tok.text}[{self.arrays[tok.text]}]", itok)
                self.expect("]")
                return Index(tok.text, index, span)
            if tok.text in self.arrays:
                raise self.error(f"{tok.text!r} is an array; index it or use sum()/prod()", tok)
            if tok.text not in self.scalars:
                raise self.error(f"unbound name {tok.text!r}", tok)
            return Var(tok.text, span)
        raise self.error("expected an expression")

    def query(self) -> Query:
        tok = self.tok
        if not (tok.kind == "NAME" and tok.text in QUERIES):
            raise self.error("expected a query: mean, var, moment, cov or report")
        self.advance()
        kind, span = tok.text, (tok.line, tok.col)
        self.expect("(")
        if kind == "report":
            name = self.name()
            if name.text not in self.scalars:
                raise self.error(f"unbound name {name.text!r}", name)
            args = (Var(name.text, (name.line, name.col)),)
        elif kind == "moment":
            e = self.expr()
            self.expect(",")
            mtok = self.tok
            m = self.integer("moment order")
            if not 0 <= m <= MAX_MOMENT:
                raise self.error(f"moment order must be in [0, {MAX_MOMENT}]", mtok)
            args = (e, m)
        elif kind == "cov":
            a = self.expr()
            self.expect(",")
            args = (a, self.expr())
        else:
            args = (self.expr(),)
        if not self.at(")"):
            raise self.error(f"wrong number of arguments to {kind}()")
        self.advance()
        return Query(kind, args, span)


def parse(text: str) -> Program:
    """Parse a script; raises :class:`LexError` / :class:`ParseError` with a position."""
    return _Parser(text).program()


# -------------------------------------------------------------- pretty-print

_PREC = {"+": 1, "-": 1, "*": 2}


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def format_expr(e, prec: int = 0) -> str:
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.name}[{e.index}]"
    if isinstance(e, Builtin):
        return f"{e.func}({e.name})"
    if isinstance(e, Dist):
        return format_dist(e)
    if isinstance(e, Neg):
        return "-" + format_expr(e.operand, 3)
    p = _PREC[e.op]
    # left associative: the right operand needs parentheses at equal precedence
    text = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
    return f"({text})" if p < prec else text


def format_dist(d: Dist) -> str:
    if d.kind == "discrete":
        pts, ms = d.args
        return f"discrete({', '.join(map(_num, pts))}; {', '.join(map(_num, ms))})"
    if d.kind == "empirical":
        return f'empirical("{d.args[0]}", {d.args[1]})'
    return f"{d.kind}({', '.join(_num(a) for a in d.args)})"


def format_query(q: Query) -> str:
    if q.kind == "moment":
        return f"moment({format_expr(q.args[0])}, {q.args[1]})"
    return f"{q.kind}({', '.join(format_expr(a) for a in q.args)})"


def format_program(p: Program) -> str:
    lines = []
    for s in p.statements:
        if isinstance(s, Let):
            lines.append(f"let {s.name} = {format_expr(s.expr)};")
        elif isinstance(s, Iid):
            lines.append(f"iid {s.name}[{s.count}] = {format_dist(s.dist)};")
        else:
            lines.append("print " + ", ".join(format_query(q) for q in s.queries) + ";")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- constant folding


def fold(e):
    """Collapse purely scalar subtrees to literals; TT operands are never reordered."""
    if isinstance(e, Neg):
        inner = fold(e.operand)
        return Num(-inner.value, e.span) if isinstance(inner, Num) else Neg(inner, e.span)
    if isinstance(e, BinOp):
        left, right = fold(e.left), fold(e.right)
        if isinstance(left, Num) and isinstance(right, Num):
            return Num(_scalar_op(e.op, left.value, right.value), e.span)
        return BinOp(e.op, left, right, e.span)
    return e


def _scalar_op(op: str, a: float, b: float) -> float:
    return a + b if op == "+" else a - b if op == "-" else a * b


# ----------------------------------------------------------------- backends


def make_mixture(d: Dist, base_dir: Path | None = None) -> mixture.DiracMixture:
    a = d.args
    if d.kind == "gaussian":
        return mixture.from_gaussian(a[0], a[1], mixture.level_for_points(a[2]))
    if d.kind == "uniform":
        return mixture.from_uniform(a[0], a[1], mixture.level_for_points(a[2]))
    if d.kind == "discrete":
        return mixture.from_discrete(a[0], a[1])
    if d.kind == "dice":
        return mixture.dice(a[0])
    if d.kind == "rademacher":
        return mixture.rademacher()
    path = Path(a[0])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return mixture.from_samples(mixture.read_samples(path), mixture.level_for_points(a[1]))


class TTBackend:
    """Evaluates on sparse tensor trains."""

    name = "tt"

    def __init__(self, registry: Registry | None = None):
        self.registry = registry if registry is not None else Registry()

    def leaves(self, m: mixture.DiracMixture, count: int) -> list:
        return core.iid(self.registry, m, count)

    add, sub, mul = staticmethod(arith.add), staticmethod(arith.subtract), staticmethod(arith.multiply)
    scale, shift = staticmethod(arith.scale), staticmethod(arith.shift)
    sum_all, prod_all = staticmethod(arith.tt_sum), staticmethod(arith.tt_prod)

    def moment(self, x, m):
        return stats.moment(x, m)

    def variance(self, x):
        return stats.variance(x)

    def cov(self, x, y):
        return stats.covariance(x, y)

    def report(self, x):
        return core.stats_report(x)

    def diagnostics(self, x) -> dict:
        return {"history": x.history.value, "d": x.d, "max_rank": max(x.ranks)}


class DenseBackend:
    """Evaluates by explicit enumeration (the independent oracle)."""

    name = "dense"

    def __init__(self, limit: int = oracle.DENSE_LIMIT):
        self.limit = limit
        self._next = 0

    def leaves(self, m, count):
        out = []
        for _ in range(count):
            out.append(oracle.DenseTensorPair.leaf(m, self._next))
            self._next += 1
        return out

    def add(self, x, y):
        return oracle.dense_combine(x, y, "add", self.limit)

    def sub(self, x, y):
        return oracle.dense_combine(x, y, "sub", self.limit)

    def mul(self, x, y):
        return oracle.dense_combine(x, y, "mul", self.limit)

    scale, shift = staticmethod(oracle.dense_scale), staticmethod(oracle.dense_shift)

    def sum_all(self, xs):
        out = xs[0]
        for x in xs[1:]:
            out = self.add(out, x)
        return out

    def prod_all(self, xs):
        out = xs[0]
        for x in xs[1:]:
            out = self.mul(out, x)
        return out

    def moment(self, x, m):
        return oracle.dense_moment(x, m)

    def variance(self, x):
        return oracle.dense_variance(x)

    def cov(self, x, y):
        return oracle.dense_cov(x, y, self.limit)

    def report(self, x):
        return {"outcomes": x.size, "d": len(x.ancestors)}

    def diagnostics(self, x) -> dict:
        return {"outcomes": x.size}


# ------------------------------------------------------------------ evaluator


class Evaluator:
    def __init__(self, backend=None, base_dir: Path | None = None, fold_constants: bool = True):
        self.backend = backend if backend is not None else TTBackend()
        self.base_dir = base_dir
        self.fold_constants = fold_constants
        self.env: dict = {}

    def run(self, program: Program) -> list[dict]:
        records = []
        for k, stmt in enumerate(program.statements):
            try:
                if isinstance(stmt, Let):
                    self.env[stmt.name] = self.eval(stmt.expr)
                elif isinstance(stmt, Iid):
                    m = make_mixture(stmt.dist, self.base_dir)
                    self.env[stmt.name] = self.backend.leaves(m, stmt.count)
                else:
                    records.extend(self.query(q) for q in stmt.queries)
            except (EvalError, ResourceGuardError):
                raise
            except (ValueError, KeyError, IndexError, OSError, TypeError, ZeroDivisionError) as exc:
                raise EvalError(k, str(exc)) from exc
        return records

    def value(self, name: str):
        return self.env[name]

    def eval(self, e):
        if self.fold_constants:
            e = fold(e)
        return self._eval(e)

    def _eval(self, e):
        b = self.backend
        if isinstance(e, Num):
            return float(e.value)
        if isinstance(e, Var):
            return self.env[e.name]
        if isinstance(e, Index):
            return self.env[e.name][e.index]
        if isinstance(e, Builtin):
            items = self.env[e.name]
            return b.sum_all(items) if e.func == "sum" else b.prod_all(items)
        if isinstance(e, Dist):
            return b.leaves(make_mixture(e, self.base_dir), 1)[0]
        if isinstance(e, Neg):
            v = self._eval(e.operand)
            return -v if isinstance(v, float) else b.scale(v, -1.0)
        left, right = self._eval(e.left), self._eval(e.right)
        ls, rs = isinstance(left, float), isinstance(right, float)
        if ls and rs:
            return _scalar_op(e.op, left, right)
        if e.op == "*":
            if ls:
                return b.scale(right, left)
            if rs:
                return b.scale(left, right)
            return b.mul(left, right)
        if e.op == "+":
            if ls:
                return b.shift(right, left)
            if rs:
                return b.shift(left, right)
            return b.add(left, right)
        if ls:
            return b.shift(b.scale(right, -1.0), left)
        if rs:
            return b.shift(left, -right)
        return b.sub(left, right)

    def query(self, q: Query) -> dict:
        b = self.backend
        diagnostics: dict = {"backend": b.name}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if q.kind == "report":
                x = self.eval(q.args[0])
                value = b.report(x) if not isinstance(x, float) else {"constant": x}
            elif q.kind == "cov":
                x, y = self.eval(q.args[0]), self.eval(q.args[1])
                value = 0.0 if isinstance(x, float) or isinstance(y, float) else b.cov(x, y)
            else:
                x = self.eval(q.args[0])
                if isinstance(x, float):
                    value = _constant_query(q, x)
                elif q.kind == "mean":
                    value = b.moment(x, 1)
                elif q.kind == "var":
                    value = b.variance(x)
                else:
                    value = b.moment(x, q.args[1])
                if not isinstance(x, float):
                    diagnostics.update(b.diagnostics(x))
        if caught:
            diagnostics["warnings"] = [str(w.message) for w in caught]
        return {"query": format_query(q), "value": value, "diagnostics": diagnostics}


def _constant_query(q: Query, x: float) -> float:
    if q.kind == "mean":
        return x
    if q.kind == "var":
        return 0.0
    return x ** q.args[1]


def evaluate(program: Program, registry: Registry | None = None, base_dir: Path | None = None, fold_constants: bool = True) -> list[dict]:
    """Run a parsed program on tensor trains; returns JSON-ready query records."""
    return Evaluator(TTBackend(registry), base_dir, fold_constants).run(program)


def evaluate_dense(program: Program, limit: int = oracle.DENSE_LIMIT, base_dir: Path | None = None) -> list[dict]:
    return Evaluator(DenseBackend(limit), base_dir).run(program)


def run_script(text: str, **kwargs) -> list[dict]:
    return evaluate(parse(text), **kwargs)
