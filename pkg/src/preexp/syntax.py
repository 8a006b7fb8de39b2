"""Abstract syntax, parser, desugaring and pretty-printer for PL programs.

Core statements are exactly skip, diverge, assignment, uniform draw, observe,
score, binary sequencing, else-less conditional and while.  The parser also
accepts a small amount of sugar (``if/else``, ``if (flip(p))`` and ``return``)
which :func:`desugar` removes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, BinOp, Call]

BUILTINS = {"gaussian_inv_cdf": 3, "gaussian_pdf": 3, "softeq": 2}
BINOPS = ("+", "-", "*", "/", "^")

# ----------------------------------------------------------------- predicates


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # one of < <= = >= >
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class Or:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class Not:
    arg: "Pred"


Pred = Union[BoolLit, Cmp, And, Or, Not]

CMPOPS = ("<", "<=", "=", ">=", ">")

# ----------------------------------------------------------- core statements


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Diverge:
    pass


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Draw:
    var: str


@dataclass(frozen=True)
class Observe:
    pred: Pred


@dataclass(frozen=True)
class Score:
    expr: Expr


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


@dataclass(frozen=True)
class If:
    pred: Pred
    body: "Stmt"


@dataclass(frozen=True)
class While:
    pred: Pred
    body: "Stmt"


Stmt = Union[Skip, Diverge, Assign, Draw, Observe, Score, Seq, If, While]

# ------------------------------------------------------------ sugared forms


@dataclass(frozen=True)
class IfElse:
    pred: Pred
    then: "SugaredStmt"
    orelse: "SugaredStmt"


@dataclass(frozen=True)
class FlipIf:
    prob: Expr
    then: "SugaredStmt"
    orelse: Optional["SugaredStmt"] = None


@dataclass(frozen=True)
class Return:
    expr: Expr


SUGAR = (IfElse, FlipIf, Return)
SugaredStmt = Union[Stmt, IfElse, FlipIf, Return]

SKIP = Skip()
DIVERGE = Diverge()


def seq(*stmts: Stmt) -> Stmt:
    """Right-nested sequence of ``stmts``; the empty sequence is ``skip``."""
    if not stmts:
        return SKIP
    result = stmts[-1]
    for s in reversed(stmts[:-1]):
        result = Seq(s, result)
    return result


# ----------------------------------------------------------- variable sets


def expr_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= expr_vars(a)
        return out
    raise TypeError(f"not an expression: {e!r}")


def pred_vars(p: Pred) -> frozenset:
    if isinstance(p, BoolLit):
        return frozenset()
    if isinstance(p, Cmp):
        return expr_vars(p.left) | expr_vars(p.right)
    if isinstance(p, (And, Or)):
        return pred_vars(p.left) | pred_vars(p.right)
    if isinstance(p, Not):
        return pred_vars(p.arg)
    raise TypeError(f"not a predicate: {p!r}")


def stmt_vars(s: SugaredStmt) -> frozenset:
    """All variables (read or written) occurring in ``s``."""
    if isinstance(s, (Skip, Diverge)):
        return frozenset()
    if isinstance(s, Assign):
        return expr_vars(s.expr) | {s.var}
    if isinstance(s, Draw):
        return frozenset((s.var,))
    if isinstance(s, Observe):
        return pred_vars(s.pred)
    if isinstance(s, (Score, Return)):
        return expr_vars(s.expr)
    if isinstance(s, Seq):
        return stmt_vars(s.first) | stmt_vars(s.second)
    if isinstance(s, (If, While)):
        return pred_vars(s.pred) | stmt_vars(s.body)
    if isinstance(s, IfElse):
        return pred_vars(s.pred) | stmt_vars(s.then) | stmt_vars(s.orelse)
    if isinstance(s, FlipIf):
        out = expr_vars(s.prob) | stmt_vars(s.then)
        return out | stmt_vars(s.orelse) if s.orelse is not None else out
    raise TypeError(f"not a statement: {s!r}")


def iter_stmts(s: SugaredStmt) -> Iterator[SugaredStmt]:
    """Pre-order traversal over every statement node of ``s``."""
    yield s
    if isinstance(s, Seq):
        yield from iter_stmts(s.first)
        yield from iter_stmts(s.second)
    elif isinstance(s, (If, While)):
        yield from iter_stmts(s.body)
    elif isinstance(s, IfElse):
        yield from iter_stmts(s.then)
        yield from iter_stmts(s.orelse)
    elif isinstance(s, FlipIf):
        yield from iter_stmts(s.then)
        if s.orelse is not None:
            yield from iter_stmts(s.orelse)


def is_core(s: SugaredStmt) -> bool:
    return not any(isinstance(n, SUGAR) for n in iter_stmts(s))


class Fresh:
    """Generator of variable names that avoid a given set of names."""

    def __init__(self, avoid: Iterable[str] = (), prefix: str = "_t"):
        self.avoid = set(avoid)
        self.prefix = prefix
        self.counter = 0

    def __call__(self, prefix: Optional[str] = None) -> str:
        prefix = prefix or self.prefix
        while True:
            name = f"{prefix}{self.counter}"
            self.counter += 1
            if name not in self.avoid:
                self.avoid.add(name)
                return name


# ------------------------------------------------------------------ parsing


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: Iterable[str] = ()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{line}:{col}: {message}{detail}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*|\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|:~|:≈|<=|>=|==|!=|&&|\|\||[-+*/^(){};,<>=!≤≥])
    """,
    re.VERBOSE,
)

KEYWORDS = {"skip", "diverge", "observe", "score", "if", "else", "while", "return",
            "true", "false", "U", "flip"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            text = {"≤": "<=", "≥": ">=", "==": "=", ":≈": ":~"}.get(text, text)
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        newlines = text.count("\n") if kind == "ws" else 0
        if newlines:
            line += newlines
            line_start = pos + m.group().rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text in texts

    def error(self, message: str, *expected: str) -> ParseError:
        t = self.tok
        found = repr(t.text) if t.kind != "eof" else "end of input"
        return ParseError(f"{message}, found {found}", t.line, t.col, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error("syntax error", repr(text))
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "ident":
            raise self.error("syntax error", "identifier")
        name = self.tok.text
        self.i += 1
        return name

    # statements
    def program(self) -> SugaredStmt:
        body = self.stmts(("eof",))
        if self.tok.kind != "eof":
            raise self.error("syntax error", "statement", "end of input")
        return body

    def stmts(self, stop) -> SugaredStmt:
        items = []
        while not (self.tok.kind == "eof" or self.at("}")):
            items.append(self.stmt())
            if self.at(";"):
                while self.at(";"):
                    self.i += 1
            elif not (self.tok.kind == "eof" or self.at("}") or self._after_block()):
                raise self.error("syntax error", "';'", "'}'")
        return seq(*items)

    def _after_block(self) -> bool:
        prev = self.toks[self.i - 1]
        return prev.kind == "op" and prev.text == "}"

    def block(self) -> SugaredStmt:
        self.expect("{")
        body = self.stmts(("}",))
        self.expect("}")
        return body

    def stmt(self) -> SugaredStmt:
        t = self.tok
        if self.at("skip"):
            self.i += 1
            return SKIP
        if self.at("diverge"):
            self.i += 1
            return DIVERGE
        if self.at("{"):
            return self.block()
        if self.at("observe"):
            self.i += 1
            self.expect("(")
            p = self.pred()
            self.expect(")")
            return Observe(p)
        if self.at("score"):
            self.i += 1
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return Score(e)
        if self.at("return"):
            self.i += 1
            return Return(self.expr())
        if self.at("while"):
            self.i += 1
            self.expect("(")
            p = self.pred()
            self.expect(")")
            return While(p, self.block())
        if self.at("if"):
            self.i += 1
            self.expect("(")
            if self.at("flip"):
                self.i += 1
                self.expect("(")
                prob = self.expr()
                self.expect(")")
                self.expect(")")
                then = self.block()
                orelse = self.block() if self._else() else None
                return FlipIf(prob, then, orelse)
            p = self.pred()
            self.expect(")")
            then = self.block()
            if self._else():
                return IfElse(p, then, self.block())
            return If(p, then)
        if t.kind == "ident":
            name = self.ident()
            if self.at(":~"):
                self.i += 1
                self.expect("U")
                return Draw(name)
            if self.at(":="):
                self.i += 1
                if self.at("U"):
                    self.i += 1
                    return Draw(name)
                return Assign(name, self.expr())
            raise self.error("syntax error", "':='", "':~'")
        raise self.error("syntax error", "statement")

    def _else(self) -> bool:
        if self.at("else"):
            self.i += 1
            return True
        return False

    # predicates
    def pred(self) -> Pred:
        p = self.pred_and()
        while self.at("||"):
            self.i += 1
            p = Or(p, self.pred_and())
        return p

    def pred_and(self) -> Pred:
        p = self.pred_not()
        while self.at("&&"):
            self.i += 1
            p = And(p, self.pred_not())
        return p

    def pred_not(self) -> Pred:
        if self.at("!"):
            self.i += 1
            return Not(self.pred_not())
        return self.pred_atom()

    def pred_atom(self) -> Pred:
        if self.at("true"):
            self.i += 1
            return BoolLit(True)
        if self.at("false"):
            self.i += 1
            return BoolLit(False)
        start = self.i
        try:
            left = self.expr()
            if self.at(*CMPOPS, "!="):
                op = self.tok.text
                self.i += 1
                right = self.expr()
                return Not(Cmp("=", left, right)) if op == "!=" else Cmp(op, left, right)
            failure = self.error("syntax error", "comparison operator")
        except ParseError as exc:
            failure = exc
        # fall back to a parenthesised predicate
        self.i = start
        if self.at("("):
            self.i += 1
            try:
                p = self.pred()
                self.expect(")")
                return p
            except ParseError:
                pass
        raise failure

    # expressions
    def expr(self) -> Expr:
        e = self.term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.at("-"):
            self.i += 1
            if self.tok.kind == "num" and not self._followed_by_power():
                value = float(self.tok.text)
                self.i += 1
                return Num(-value)
            return BinOp("-", Num(0.0), self.unary())
        if self.at("+"):
            self.i += 1
            return self.unary()
        return self.power()

    def _followed_by_power(self) -> bool:
        nxt = self.toks[self.i + 1]
        return nxt.kind == "op" and nxt.text == "^"

    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            name = self.ident()
            if self.at("("):
                func = name.lower()
                if func not in BUILTINS:
                    raise ParseError(f"unknown builtin {name!r}", t.line, t.col, sorted(BUILTINS))
                self.i += 1
                args = [self.expr()]
                while self.at(","):
                    self.i += 1
                    args.append(self.expr())
                self.expect(")")
                if len(args) != BUILTINS[func]:
                    raise ParseError(
                        f"{func} takes {BUILTINS[func]} arguments, got {len(args)}", t.line, t.col
                    )
                return Call(func, tuple(args))
            return Var(name)
        raise self.error("syntax error", "expression")


def parse(source: str) -> SugaredStmt:
    """Parse program text into a (possibly sugared) statement."""
    return _Parser(source).program()


def parse_expr(source: str) -> Expr:
    p = _Parser(source)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("syntax error", "end of expression")
    return e


def parse_pred(source: str) -> Pred:
    p = _Parser(source)
    q = p.pred()
    if p.tok.kind != "eof":
        raise p.error("syntax error", "end of predicate")
    return q


# --------------------------------------------------------------- desugaring


def desugar(s: SugaredStmt, fresh: Optional[Fresh] = None) -> Stmt:
    """Eliminate all sugared forms; identity on core statements.

    ``return E`` becomes ``skip`` (or vanishes when sequenced with another
    statement); use :func:`find_return` to recover ``E``.
    """
    if fresh is None:
        fresh = Fresh(stmt_vars(s))
    return _desugar(s, fresh)


def _desugar(s: SugaredStmt, fresh: Fresh) -> Stmt:
    if isinstance(s, Seq):
        # a return inside a sequence leaves no trace, keeping step counts intact
        if isinstance(s.second, Return):
            return _desugar(s.first, fresh)
        if isinstance(s.first, Return):
            return _desugar(s.second, fresh)
        first, second = _desugar(s.first, fresh), _desugar(s.second, fresh)
        if first is s.first and second is s.second:
            return s
        return Seq(first, second)
    if isinstance(s, (If, While)):
        body = _desugar(s.body, fresh)
        return s if body is s.body else type(s)(s.pred, body)
    if isinstance(s, Return):
        return SKIP
    if isinstance(s, FlipIf):
        u = fresh("_u")
        test = Cmp("<", Var(u), s.prob)
        if s.orelse is None:
            return Seq(Draw(u), If(test, _desugar(s.then, fresh)))
        return Seq(Draw(u), _desugar(IfElse(test, s.then, s.orelse), fresh))
    if isinstance(s, IfElse):
        g = fresh("_g")
        flag = Var(g)
        return seq(
            Assign(g, Num(0.0)),
            If(s.pred, Assign(g, Num(1.0))),
            If(Cmp("=", flag, Num(1.0)), _desugar(s.then, fresh)),
            If(Cmp("=", flag, Num(0.0)), _desugar(s.orelse, fresh)),
        )
    return s


def find_return(s: SugaredStmt) -> Optional[Expr]:
    """The expression of the last ``return`` statement in ``s``, if any."""
    found = None
    for node in iter_stmts(s):
        if isinstance(node, Return):
            found = node.expr
    return found


# ----------------------------------------------------------- pretty-printing


def _num(v: float) -> str:
    text = repr(float(v))
    if text in ("inf", "-inf", "nan"):
        raise ValueError(f"literal {text} has no surface form")
    # negative literals are grouped so that `(-2.0) ^ x` keeps its base
    return f"({text})" if text.startswith("-") else text


def pretty_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, BinOp):
        return f"({pretty_expr(e.left)} {e.op} {pretty_expr(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(pretty_expr(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def pretty_pred(p: Pred) -> str:
    if isinstance(p, BoolLit):
        return "true" if p.value else "false"
    if isinstance(p, Cmp):
        return f"{pretty_expr(p.left)} {p.op} {pretty_expr(p.right)}"
    if isinstance(p, And):
        return f"({pretty_pred(p.left)} && {pretty_pred(p.right)})"
    if isinstance(p, Or):
        return f"({pretty_pred(p.left)} || {pretty_pred(p.right)})"
    if isinstance(p, Not):
        return f"!({pretty_pred(p.arg)})"
    raise TypeError(f"not a predicate: {p!r}")


def pretty(s: SugaredStmt, indent: str = "  ") -> str:
    """Render ``s`` as program text that :func:`parse` reads back."""
    return "\n".join(_lines(s, 0, indent))


def _lines(s: SugaredStmt, depth: int, indent: str) -> list[str]:
    pad = indent * depth
    if isinstance(s, Seq):
        # a left-nested sequence is grouped in a bare block to keep its shape
        if isinstance(s.first, Seq):
            head = [pad + "{"] + _lines(s.first, depth + 1, indent) + [pad + "};"]
        else:
            head = _lines(s.first, depth, indent)
            head[-1] += ";"
        return head + _lines(s.second, depth, indent)
    if isinstance(s, Skip):
        return [pad + "skip"]
    if isinstance(s, Diverge):
        return [pad + "diverge"]
    if isinstance(s, Assign):
        return [f"{pad}{s.var} := {pretty_expr(s.expr)}"]
    if isinstance(s, Draw):
        return [f"{pad}{s.var} :~ U"]
    if isinstance(s, Observe):
        return [f"{pad}observe({pretty_pred(s.pred)})"]
    if isinstance(s, Score):
        return [f"{pad}score({pretty_expr(s.expr)})"]
    if isinstance(s, Return):
        return [f"{pad}return {pretty_expr(s.expr)}"]
    if isinstance(s, (If, While)):
        kw = "if" if isinstance(s, If) else "while"
        return ([f"{pad}{kw} ({pretty_pred(s.pred)}) {{"]
                + _lines(s.body, depth + 1, indent) + [pad + "}"])
    if isinstance(s, IfElse):
        return ([f"{pad}if ({pretty_pred(s.pred)}) {{"]
                + _lines(s.then, depth + 1, indent) + [pad + "} else {"]
                + _lines(s.orelse, depth + 1, indent) + [pad + "}"])
    if isinstance(s, FlipIf):
        out = ([f"{pad}if (flip({pretty_expr(s.prob)})) {{"]
               + _lines(s.then, depth + 1, indent))
        if s.orelse is not None:
            out += [pad + "} else {"] + _lines(s.orelse, depth + 1, indent)
        return out + [pad + "}"]
    raise TypeError(f"not a statement: {s!r}")
