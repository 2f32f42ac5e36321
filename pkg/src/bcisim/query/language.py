"""Tokens, syntax tree, recursive-descent parser and printer for cluster queries.

Grammar (``and`` binds tighter than ``or``; ``not`` tighter than both)::

    query    := 'from' devices 'select' 'data' '[' erange ']' '[' trange ']' [ 'where' or ]
    devices  := '*' | INT { ',' INT } | '[' INT { ',' INT } ']'
    erange   := ':' | INT | INT ':' INT | ':' INT | INT ':'
    trange   := texpr ':' texpr
    texpr    := 't' [ ('+' | '-') INT ] | [ '-' ] INT
    or       := and { 'or' and }
    and      := unary { 'and' unary }
    unary    := 'not' unary | atom
    atom     := 'true' | 'false' | '(' or ')' | call | compare
    call     := NAME '(' 'data' [ '[' erange ']' ] '[' trange ']' { ',' arg } ')'
    arg      := INT | NAME | STRING
    compare  := operand OP operand        OP in  < <= > >= == !=
    operand  := texpr | 'node' | 'e'

Times are milliseconds relative to the query's issue time; ``t <= 0`` is
the past. Electrode ranges are half open.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

from ..errors import QuerySyntaxError

KEYWORDS = {"from", "select", "where", "and", "or", "not", "true", "false", "data", "t", "node", "e"}
COMPARATORS = ("<=", ">=", "==", "!=", "<", ">")

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*"|'[^'\n]*')
  | (?P<op><=|>=|==|!=|<|>)
  | (?P<punct>[\[\]():,*+\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str          # int, name, keyword, string, op, punct, end
    text: str
    line: int
    column: int
    index: int         # 1-based position in the token stream


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, len(out) + 1)
        kind, value = m.lastgroup, m.group()
        if kind == "ws":
            for k, ch in enumerate(value):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        else:
            if kind == "name" and value.lower() in KEYWORDS:
                kind, value = "keyword", value.lower()
            out.append(Token(kind, value, line, pos - line_start + 1, len(out) + 1))
        pos = m.end()
    out.append(Token("end", "", line, pos - line_start + 1, len(out) + 1))
    return out


# --------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class TimeExpr:
    offset: int
    relative: bool = False         # True: t + offset

    def at(self, t: float) -> float:
        return t + self.offset if self.relative else float(self.offset)


@dataclass(frozen=True)
class ElectrodeRange:
    lo: int | None = None
    hi: int | None = None
    single: bool = False

    def resolve(self, n: int) -> range:
        if self.single:
            return range(self.lo, self.lo + 1)
        lo = 0 if self.lo is None else self.lo
        hi = n if self.hi is None else self.hi
        return range(max(0, lo), min(n, hi))


@dataclass(frozen=True)
class TimeRange:
    lo: TimeExpr
    hi: TimeExpr

    @property
    def relative(self) -> bool:
        return self.lo.relative or self.hi.relative

    def at(self, t: float) -> tuple[float, float]:
        return self.lo.at(t), self.hi.at(t)


@dataclass(frozen=True)
class DataRef:
    trange: TimeRange
    erange: ElectrodeRange | None = None


@dataclass(frozen=True)
class Name:
    name: str                      # 'node' or 'e'


Operand = Union[TimeExpr, Name]


@dataclass(frozen=True)
class Compare:
    left: Operand
    op: str
    right: Operand


@dataclass(frozen=True)
class Call:
    name: str
    data: DataRef
    args: tuple = ()


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class QueryAst:
    devices: tuple[int, ...] | None         # None: every device
    erange: ElectrodeRange
    trange: TimeRange
    where: object = BoolLit(True)

    def calls(self) -> list[Call]:
        return [n for n in walk(self.where) if isinstance(n, Call)]

    def uses_t(self) -> bool:
        if self.trange.relative:
            return True
        return any(isinstance(n, TimeExpr) and n.relative for n in walk(self.where)) or any(
            c.data.trange.relative for c in self.calls())


def walk(node) -> Iterable:
    yield node
    if isinstance(node, (And, Or)):
        for it in node.items:
            yield from walk(it)
    elif isinstance(node, Not):
        yield from walk(node.item)
    elif isinstance(node, Compare):
        yield node.left
        yield node.right


# --------------------------------------------------------------------------
# parser


class Parser:
    def __init__(self, text: str, predicates: Iterable[str] | None = None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.predicates = None if predicates is None else set(predicates)

    # -- helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def _fail(self, expected: Iterable[str], tok: Token | None = None, message: str | None = None):
        tok = tok or self.tok
        exp = tuple(expected)
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        msg = message or f"expected {' or '.join(exp)} but found {found} at token {tok.index}"
        raise QuerySyntaxError(msg, tok.line, tok.column, tok.index, exp)

    def _is(self, text: str) -> bool:
        return self.tok.kind in ("keyword", "punct", "op") and self.tok.text == text

    def _accept(self, text: str) -> bool:
        if self._is(text):
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> Token:
        if not self._is(text):
            self._fail([repr(text)])
        self.pos += 1
        return self.tokens[self.pos - 1]

    def _int(self) -> int:
        if self.tok.kind != "int":
            self._fail(["integer"])
        self.pos += 1
        return int(self.tokens[self.pos - 1].text)

    # -- grammar
    def parse(self) -> QueryAst:
        self._expect("from")
        devices = self._devices()
        self._expect("select")
        self._expect("data")
        self._expect("[")
        erange = self._erange()
        self._expect("]")
        trange = self._brtrange()
        where = BoolLit(True)
        if self._accept("where"):
            where = self._or()
        if self.tok.kind != "end":
            self._fail(["end of input"] if self.tokens[self.pos - 1].text != "]" else ["'where'", "end of input"])
        return QueryAst(devices, erange, trange, where)

    def _devices(self):
        if self._accept("*"):
            return None
        bracket = self._accept("[")
        if self.tok.kind != "int":
            self._fail(["integer"] if bracket else ["'*'", "'['", "integer"])
        ids = [self._int()]
        while self._accept(","):
            ids.append(self._int())
        if bracket:
            self._expect("]")
        return tuple(ids)

    def _erange(self) -> ElectrodeRange:
        if self._accept(":"):
            hi = self._int() if self.tok.kind == "int" else None
            return ElectrodeRange(None, hi)
        if self.tok.kind != "int":
            self._fail(["':'", "integer"])
        lo = self._int()
        if self._accept(":"):
            hi = self._int() if self.tok.kind == "int" else None
            if hi is not None and hi < lo:
                self._fail([], self.tokens[self.pos - 1], f"electrode range {lo}:{hi} is reversed")
            return ElectrodeRange(lo, hi)
        return ElectrodeRange(lo, None, single=True)

    def _brtrange(self) -> TimeRange:
        start = self._expect("[")
        lo = self._texpr()
        self._expect(":")
        hi = self._texpr()
        self._expect("]")
        if lo.relative == hi.relative and hi.offset < lo.offset:
            self._fail([], start, f"time range ends before it starts at token {start.index}")
        return TimeRange(lo, hi)

    def _texpr(self) -> TimeExpr:
        if self._accept("t"):
            if self._is("+") or self._is("-"):
                sign = 1 if self.tok.text == "+" else -1
                self.pos += 1
                return TimeExpr(sign * self._int(), True)
            return TimeExpr(0, True)
        if self._accept("-"):
            return TimeExpr(-self._int())
        if self.tok.kind == "int":
            return TimeExpr(self._int())
        self._fail(["'t'", "integer"])

    def _or(self):
        items = [self._and()]
        while self._accept("or"):
            items.append(self._and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def _and(self):
        items = [self._unary()]
        while self._accept("and"):
            items.append(self._unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def _unary(self):
        if self._accept("not"):
            return Not(self._unary())
        return self._atom()

    def _atom(self):
        tok = self.tok
        if self._accept("true"):
            return BoolLit(True)
        if self._accept("false"):
            return BoolLit(False)
        if self._accept("("):
            inner = self._or()
            self._expect(")")
            return inner
        if tok.kind == "name" and self.tokens[self.pos + 1].text == "(":
            return self._call()
        if tok.kind == "int" or tok.text in ("t", "-", "node", "e"):
            left = self._operand()
            if self.tok.kind != "op":
                self._fail(list(map(repr, COMPARATORS)))
            op = self.tok.text
            self.pos += 1
            return Compare(left, op, self._operand())
        self._fail(["condition"])

    def _operand(self):
        if self._accept("node"):
            return Name("node")
        if self._accept("e"):
            return Name("e")
        return self._texpr()

    def _call(self) -> Call:
        tok = self.tok
        name = tok.text
        if self.predicates is not None and name not in self.predicates:
            raise QuerySyntaxError(f"unknown predicate {name!r}", tok.line, tok.column, tok.index,
                                   tuple(sorted(self.predicates)))
        self.pos += 1
        self._expect("(")
        self._expect("data")
        erange = None
        # data[erange][trange] or data[trange]: look ahead for a second bracket group
        depth, k = 0, self.pos
        while True:
            t = self.tokens[k]
            if t.text == "[":
                depth += 1
            elif t.text == "]":
                depth -= 1
                if depth == 0:
                    break
            elif t.kind == "end":
                break
            k += 1
        if self.tokens[k + 1].text == "[":
            self._expect("[")
            erange = self._erange()
            self._expect("]")
        trange = self._brtrange()
        args = []
        while self._accept(","):
            a = self.tok
            if a.kind == "int":
                args.append(int(a.text))
            elif a.kind in ("name", "keyword"):
                args.append(a.text)
            elif a.kind == "string":
                args.append(a.text[1:-1])
            else:
                self._fail(["argument"])
            self.pos += 1
        self._expect(")")
        return Call(name, DataRef(trange, erange), tuple(args))


def parse(text: str, predicates: Iterable[str] | None = None) -> QueryAst:
    """Parse query text. With ``predicates`` given, calls to other names are rejected."""
    return Parser(text, predicates).parse()


# --------------------------------------------------------------------------
# printer


def _texpr(t: TimeExpr) -> str:
    if not t.relative:
        return str(t.offset)
    if t.offset == 0:
        return "t"
    return f"t{'+' if t.offset > 0 else '-'}{abs(t.offset)}"


def _erange(r: ElectrodeRange) -> str:
    if r.single:
        return str(r.lo)
    return f"{'' if r.lo is None else r.lo}:{'' if r.hi is None else r.hi}"


def _trange(r: TimeRange) -> str:
    return f"[{_texpr(r.lo)}:{_texpr(r.hi)}]"


def _arg(a) -> str:
    if isinstance(a, int):
        return str(a)
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", a) and a.lower() not in KEYWORDS:
        return a
    return f'"{a}"'


def _cond(node) -> str:
    if isinstance(node, BoolLit):
        return "true" if node.value else "false"
    if isinstance(node, Compare):
        side = lambda o: o.name if isinstance(o, Name) else _texpr(o)
        return f"{side(node.left)} {node.op} {side(node.right)}"
    if isinstance(node, Call):
        data = "data" + (f"[{_erange(node.data.erange)}]" if node.data.erange is not None else "") + _trange(node.data.trange)
        return f"{node.name}({', '.join([data] + [_arg(a) for a in node.args])})"
    if isinstance(node, Not):
        inner = _cond(node.item)
        return "not " + (f"({inner})" if isinstance(node.item, (And, Or)) else inner)
    if isinstance(node, And):
        return " and ".join(f"({_cond(i)})" if isinstance(i, (And, Or)) else _cond(i) for i in node.items)
    if isinstance(node, Or):
        return " or ".join(f"({_cond(i)})" if isinstance(i, Or) else _cond(i) for i in node.items)
    raise TypeError(f"not a condition node: {node!r}")


def to_text(ast: QueryAst) -> str:
    """Canonical text of ``ast``; parsing it gives back an equal tree."""
    dev = "*" if ast.devices is None else ", ".join(map(str, ast.devices))
    return f"from {dev} select data[{_erange(ast.erange)}]{_trange(ast.trange)} where {_cond(ast.where)}"
