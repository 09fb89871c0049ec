"""Tokenizer and recursive-descent parser for the formula subset.

Precedence, loosest first::

    comparison  = <> < <= > >=
    concat      &
    additive    + -
    term        * /
    power       ^          (left associative)
    unary       - +        (binds tighter than ^, so -2^2 = 4)
    postfix     %

See ``docs/formula_grammar.md`` for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from ..address import CellAddress, column_index
from ..errors import MalformedAddress, ParseError
from ..values import ErrorValue
from .nodes import Binary, Call, Literal, Name, Node, RangeRef, Ref, Unary

VOLATILE = frozenset({"TODAY", "NOW", "RAND", "RANDBETWEEN", "OFFSET", "INDIRECT"})

_ERROR_LITERALS = {e.value: e for e in ErrorValue if e is not ErrorValue.CYCLE}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"]|"")*")
  | (?P<sheet>'(?:[^']|'')+'(?=!))
  | (?P<error>\#(?:DIV/0!|N/A|REF!|VALUE!|NAME\?|NUM!))
  | (?P<op><>|<=|>=|[-+*/^&%=<>(),:!])
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_.$]*)
    """,
    re.VERBOSE,
)
_CELL = re.compile(r"^\$?([A-Za-z]{1,3})\$?([0-9]+)$")
_COMPARISON = ("=", "<>", "<", "<=", ">", ">=")

SheetResolver = Callable[[str], str]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", position=pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, sheet: str, resolve_sheet: Optional[SheetResolver]):
        self.text = text
        self.sheet = sheet
        self.resolve_sheet = resolve_sheet
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def expect_op(self, op: str) -> Token:
        if not self.at_op(op):
            self.fail(f"expected {op!r}")
        return self.advance()

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        found = "end of formula" if tok.kind == "end" else repr(tok.text)
        raise ParseError(f"{message}, found {found}", position=tok.pos)

    # grammar

    def parse(self) -> Node:
        node = self.comparison()
        if self.tok.kind != "end":
            self.fail("unexpected token")
        return node

    def comparison(self) -> Node:
        node = self.concat()
        while self.at_op(*_COMPARISON):
            op = self.advance().text
            node = Binary(op, node, self.concat())
        return node

    def concat(self) -> Node:
        node = self.additive()
        while self.at_op("&"):
            self.advance()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.power()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.power())
        return node

    def power(self) -> Node:
        node = self.unary()
        while self.at_op("^"):
            self.advance()
            node = Binary("^", node, self.unary())
        return node

    def unary(self) -> Node:
        if self.at_op("-", "+"):
            op = self.advance().text
            return Unary(op, self.unary())
        return self.postfix()

    def postfix(self) -> Node:
        node = self.primary()
        while self.at_op("%"):
            self.advance()
            node = Unary("%", node)
        return node

    def primary(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Literal(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return Literal(tok.text[1:-1].replace('""', '"'))
        if tok.kind == "error":
            self.advance()
            return Literal(_ERROR_LITERALS[tok.text])
        if self.at_op("("):
            self.advance()
            node = self.comparison()
            self.expect_op(")")
            return node
        if tok.kind == "sheet":
            self.advance()
            return self.qualified(tok.text[1:-1].replace("''", "'"), tok)
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "!":
                self.advance()
                return self.qualified(tok.text, tok)
            if nxt.kind == "op" and nxt.text == "(":
                return self.call()
            upper = tok.text.upper()
            if _CELL.match(tok.text):
                self.advance()
                return self.reference(self.sheet, tok)
            self.advance()
            if upper in ("TRUE", "FALSE"):
                return Literal(upper == "TRUE")
            return Name(upper)
        self.fail("expected an operand")

    def qualified(self, sheet_name: str, tok: Token) -> Node:
        self.expect_op("!")
        sheet = self.resolve(sheet_name, tok)
        cell = self.tok
        if cell.kind != "ident" or not _CELL.match(cell.text):
            self.fail("expected a cell reference after sheet qualifier")
        self.advance()
        return self.reference(sheet, cell)

    def resolve(self, sheet_name: str, tok: Token) -> str:
        if self.resolve_sheet is None:
            return sheet_name
        return self.resolve_sheet(sheet_name)

    def reference(self, sheet: str, tok: Token) -> Node:
        start = self.cell_address(sheet, tok)
        if not self.at_op(":"):
            return Ref(start)
        self.advance()
        end_tok = self.tok
        if end_tok.kind == "sheet" or (
            end_tok.kind == "ident" and self.peek().kind == "op" and self.peek().text == "!"
        ):
            self.fail("a range end may not carry its own sheet qualifier")
        if end_tok.kind != "ident" or not _CELL.match(end_tok.text):
            self.fail("expected a cell reference after ':'")
        self.advance()
        end = self.cell_address(sheet, end_tok)
        return RangeRef(
            CellAddress(sheet, min(start.col, end.col), min(start.row, end.row)),
            CellAddress(sheet, max(start.col, end.col), max(start.row, end.row)),
        )

    def cell_address(self, sheet: str, tok: Token) -> CellAddress:
        m = _CELL.match(tok.text)
        row = int(m.group(2))
        if row == 0:
            raise ParseError(f"row 0 in reference {tok.text!r}", position=tok.pos)
        try:
            return CellAddress(sheet, column_index(m.group(1)), row)
        except MalformedAddress as exc:
            raise ParseError(str(exc), position=tok.pos) from exc

    def call(self) -> Node:
        name_tok = self.advance()
        name = name_tok.text.upper()
        if name in VOLATILE:
            raise ParseError(
                f"volatile function {name} is not supported; validation runs must be deterministic",
                position=name_tok.pos,
            )
        self.expect_op("(")
        args: list[Node] = []
        if self.at_op(")"):
            self.advance()
            return Call(name, ())
        while True:
            if self.at_op(",", ")"):
                args.append(Literal(None))  # omitted argument, e.g. IF(A1,,2)
            else:
                args.append(self.comparison())
            if self.at_op(","):
                self.advance()
                continue
            self.expect_op(")")
            return Call(name, tuple(args))


def parse_formula(text: str, containing_sheet: str, resolve_sheet: Optional[SheetResolver] = None) -> Node:
    """Parse ``=...`` formula text into an expression tree.

    Unqualified references resolve to ``containing_sheet``. When
    ``resolve_sheet`` is given it maps every sheet qualifier to its
    canonical name (or raises).
    """
    if not text.startswith("="):
        raise ParseError("formula must start with '='", position=0)
    body = text[1:]
    if not body.strip():
        raise ParseError("empty formula", position=1)
    try:
        node = _Parser(body, containing_sheet, resolve_sheet).parse()
    except ParseError as exc:
        if exc.position is not None:
            exc.position += 1
            exc.args = (f"[pos {exc.position}] {exc.message}",)
        raise
    return node
