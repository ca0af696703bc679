"""Excel formula tokenizer, recursive-descent parser and AST metrics.

The grammar covers A1-style formulas as stored in OOXML cell ``<f>``
elements (en-US, comma argument separator). Evaluation is never attempted.

    >>> ast = parse(tokenize("IF(A1>0,IF(B1>0,1,2),3)"))
    >>> if_nesting_depth(ast)
    2
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from sheetrisk.errors import SheetRiskError

ERROR_LITERALS = ("#REF!", "#DIV/0!", "#VALUE!", "#NAME?", "#N/A", "#NULL!", "#NUM!")
# accepted by the lexer but not counted among the classic seven
_EXTRA_ERRORS = ("#GETTING_DATA", "#SPILL!", "#CALC!", "#FIELD!", "#BLOCKED!", "#UNKNOWN!")
_ALL_ERRORS = sorted(ERROR_LITERALS + _EXTRA_ERRORS, key=len, reverse=True)

# Nesting guard: keeps recursion well under the interpreter limit.
MAX_NESTING = 200

_CELL_RE = re.compile(r"\$?([A-Za-z]{1,3})\$?([0-9]+)$")
_COL_RANGE_RE = re.compile(r"\$?[A-Za-z]{1,3}:\$?[A-Za-z]{1,3}(?![A-Za-z0-9_.(!])")
_ROW_RANGE_RE = re.compile(r"\$?[0-9]+:\$?[0-9]+(?![0-9A-Za-z_.(!])")
_DIGITS = frozenset("0123456789")  # str.isdigit also accepts non-ASCII digits
_NUMBER_RE = re.compile(r"(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_BOOK_RE = re.compile(r"\[([0-9]+)\]")

_BINARY_BP = {
    "=": 10, "<>": 10, "<": 10, ">": 10, "<=": 10, ">=": 10,
    "&": 20,
    "+": 30, "-": 30,
    "*": 40, "/": 40,
    "^": 50,
}
_PREFIX_BP = 60
_PERCENT_BP = 70


class FormulaError(SheetRiskError):
    def __init__(self, code: str, message: str, offset: int):
        super().__init__(code, f"{message} at offset {offset}")
        self.offset = offset


class LexError(FormulaError):
    def __init__(self, message: str, offset: int):
        super().__init__("lex-error", message, offset)


class ParseError(FormulaError):
    def __init__(self, message: str, offset: int):
        super().__init__("parse-error", message, offset)


@dataclass(frozen=True)
class Token:
    kind: str  # number string bool error ident ref op comma semicolon colon lparen rparen lbrace rbrace
    value: str
    pos: int
    end: int
    sheet: Optional[str] = None
    book: Optional[int] = None
    addr_pos: int = -1  # start of the address part for ref tokens

    def __repr__(self) -> str:
        qual = ""
        if self.book is not None:
            qual += f"[{self.book}]"
        if self.sheet is not None:
            qual += f"{self.sheet}!"
        return f"{self.kind}:{qual}{self.value}"


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    kind: str  # number | text | boolean | error | empty
    value: Union[float, str, bool, None]


@dataclass(frozen=True)
class CellRef:
    address: str
    sheet: Optional[str] = None
    book: Optional[int] = None


@dataclass(frozen=True)
class Range:
    start: "Node"
    end: "Node"


@dataclass(frozen=True)
class NameRef:
    name: str
    sheet: Optional[str] = None
    book: Optional[int] = None


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple["Node", ...] = ()


@dataclass(frozen=True)
class UnaryOp:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Percent:
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class ArrayLiteral:
    rows: tuple[tuple["Node", ...], ...]


@dataclass(frozen=True)
class Paren:
    expr: "Node"


Node = Union[Literal, CellRef, Range, NameRef, FunctionCall, UnaryOp, Percent, BinaryOp, ArrayLiteral, Paren]


@dataclass(frozen=True)
class RefTarget:
    scope: str  # internal | external
    workbook_index: Optional[int]
    sheet: Optional[str]
    range_text: str


# -- lexer -------------------------------------------------------------------


def _is_name_start(ch: str) -> bool:
    return ch.isalpha() or ch in "_\\$"


def _is_name_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_.\\$?"


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.n = len(text)
        self.tokens: list[Token] = []

    def peek_nonspace(self, i: int) -> str:
        while i < self.n and self.text[i] in " \t\r\n":
            i += 1
        return self.text[i] if i < self.n else ""

    def run(self) -> list[Token]:
        text, n = self.text, self.n
        i = 0
        while i < n:
            ch = text[i]
            if ch in " \t\r\n":
                i += 1
            elif ch == '"':
                i = self.lex_string(i)
            elif ch == "#":
                i = self.lex_error(i)
            elif ch == "[":
                i = self.lex_bracket(i)
            elif ch == "'":
                i = self.lex_quoted_sheet(i)
            elif ch in _DIGITS or (ch == "." and i + 1 < n and text[i + 1] in _DIGITS):
                i = self.lex_number(i)
            elif _is_name_start(ch):
                i = self.lex_word(i, None, None, i)
            else:
                i = self.lex_punct(i)
        return self.tokens

    def emit(self, kind, value, start, end, sheet=None, book=None, addr_pos=-1):
        self.tokens.append(Token(kind, value, start, end, sheet, book, addr_pos))

    def lex_string(self, i: int) -> int:
        start = i
        i += 1
        parts = []
        while True:
            j = self.text.find('"', i)
            if j < 0:
                raise LexError("unterminated string", start)
            parts.append(self.text[i:j])
            if j + 1 < self.n and self.text[j + 1] == '"':
                parts.append('"')
                i = j + 2
                continue
            self.emit("string", "".join(parts), start, j + 1)
            return j + 1

    def match_error(self, i: int) -> Optional[str]:
        upper = self.text[i:i + 14].upper()
        for lit in _ALL_ERRORS:
            if upper.startswith(lit):
                return lit
        return None

    def lex_error(self, i: int, start: Optional[int] = None) -> int:
        lit = self.match_error(i)
        if lit is None:
            raise LexError("unknown error literal", i)
        self.emit("error", lit, i if start is None else start, i + len(lit))
        return i + len(lit)

    def lex_number(self, i: int, start: Optional[int] = None, sheet=None, book=None) -> int:
        m = _ROW_RANGE_RE.match(self.text, i)
        if m:
            self.emit("ref", m.group(0), i if start is None else start, m.end(), sheet, book, i)
            return m.end()
        if sheet is not None or book is not None:
            raise LexError("expected reference after sheet qualifier", i)
        m = _NUMBER_RE.match(self.text, i)
        self.emit("number", m.group(0), i, m.end())
        return m.end()

    def lex_bracket(self, i: int) -> int:
        m = _BOOK_RE.match(self.text, i)
        if m:
            book = int(m.group(1)) or None
            j = m.end()
            if j < self.n and self.text[j] == "!":
                return self.lex_qualified(j + 1, None, book, i)
            if j < self.n and self.text[j] == "'":
                raise LexError("misplaced quote after workbook index", j)
            if j < self.n and _is_name_start(self.text[j]):
                k = j
                while k < self.n and _is_name_char(self.text[k]):
                    k += 1
                if k < self.n and self.text[k] == "!":
                    return self.lex_qualified(k + 1, self.text[j:k], book, i)
            raise LexError("workbook index without sheet qualifier", i)
        # structured reference like [@Col] or [[#This Row],[Col]]
        end = self.balanced_bracket(i)
        self.emit("ident", self.text[i:end], i, end)
        return end

    def balanced_bracket(self, i: int) -> int:
        depth = 0
        j = i
        while j < self.n:
            c = self.text[j]
            if c == "'" and j + 1 < self.n:
                j += 2  # escape char inside structured refs
                continue
            if c == "[":
                depth += 1
            elif c == "]":
                depth -= 1
                if depth == 0:
                    return j + 1
            j += 1
        raise LexError("unterminated bracket", i)

    def lex_quoted_sheet(self, i: int) -> int:
        start = i
        j = i + 1
        parts = []
        while True:
            k = self.text.find("'", j)
            if k < 0:
                raise LexError("unterminated sheet name", start)
            parts.append(self.text[j:k])
            if k + 1 < self.n and self.text[k + 1] == "'":
                parts.append("'")
                j = k + 2
                continue
            break
        if k + 1 >= self.n or self.text[k + 1] != "!":
            raise LexError("quoted sheet name must be followed by '!'", k + 1)
        name = "".join(parts)
        book = None
        m = _BOOK_RE.match(name)
        if m:
            book = int(m.group(1)) or None
            name = name[m.end():]
        return self.lex_qualified(k + 2, name or None, book, start)

    def lex_qualified(self, i: int, sheet, book, start: int) -> int:
        if i >= self.n:
            raise LexError("reference expected after '!'", i)
        ch = self.text[i]
        if ch == "#":
            return self.lex_error(i, start)
        if ch in _DIGITS:
            return self.lex_number(i, start, sheet, book)
        if _is_name_start(ch):
            return self.lex_word(i, sheet, book, start)
        raise LexError("reference expected after '!'", i)

    def lex_word(self, i: int, sheet, book, start: int) -> int:
        text, n = self.text, self.n
        m = _COL_RANGE_RE.match(text, i)
        if m:
            self.emit("ref", m.group(0), start, m.end(), sheet, book, i)
            return m.end()
        j = i
        while j < n and _is_name_char(text[j]):
            j += 1
        word = text[i:j]
        if sheet is None and book is None and j < n and text[j] in "!:":
            # unqualified sheet name, possibly a 3D span Sheet1:Sheet3!
            if text[j] == "!":
                return self.lex_qualified(j + 1, word, None, start)
            k = j + 1
            while k < n and _is_name_char(text[k]):
                k += 1
            if k > j + 1 and k < n and text[k] == "!" and not _CELL_RE.match(word):
                return self.lex_qualified(k + 1, text[i:k], None, start)
        nxt = self.peek_nonspace(j)
        if j < n and text[j] == "[":
            end = self.balanced_bracket(j)
            self.emit("ident", text[i:end], start, end, sheet, book)
            return end
        if nxt == "(":
            self.emit("ident", word, start, j, sheet, book)
        elif sheet is None and book is None and word.upper() in ("TRUE", "FALSE"):
            self.emit("bool", word.upper(), start, j)
        elif _CELL_RE.match(word):
            self.emit("ref", word, start, j, sheet, book, i)
        else:
            self.emit("ident", word, start, j, sheet, book)
        return j

    def lex_punct(self, i: int) -> int:
        text = self.text
        two = text[i:i + 2]
        if two in ("<=", ">=", "<>"):
            self.emit("op", two, i, i + 2)
            return i + 2
        ch = text[i]
        if ch in "+-*/^&%=<>":
            self.emit("op", ch, i, i + 1)
        elif ch in _PUNCT:
            self.emit(_PUNCT[ch], ch, i, i + 1)
        else:
            raise LexError(f"illegal character {ch!r}", i)
        return i + 1


_PUNCT = {
    ",": "comma", ";": "semicolon", ":": "colon",
    "(": "lparen", ")": "rparen", "{": "lbrace", "}": "rbrace",
}


def tokenize(text: str) -> list[Token]:
    """Split formula source (leading ``=`` already stripped) into tokens.

    Raises :class:`LexError` on an unterminated string or illegal character.
    """
    return _Lexer(text).run()


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.nesting = 0

    def peek(self) -> Optional[Token]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        if tok is not None:
            return tok.pos
        return self.tokens[-1].end if self.tokens else 0

    def take(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            found = "end of input" if tok is None else repr(tok.value)
            raise ParseError(f"expected {kind}, found {found}", self.offset())
        self.i += 1
        return tok

    def enter(self) -> None:
        self.nesting += 1
        if self.nesting > MAX_NESTING:
            raise ParseError("formula nested too deeply", self.offset())

    def expr(self, min_bp: int = 0) -> Node:
        self.enter()
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok is None or tok.kind != "op":
                break
            if tok.value == "%":
                if _PERCENT_BP < min_bp:
                    break
                self.i += 1
                left = Percent(left)
                continue
            bp = _BINARY_BP.get(tok.value)
            if bp is None or bp < min_bp:
                break
            self.i += 1
            right = self.expr(bp + 1)
            left = BinaryOp(tok.value, left, right)
        self.nesting -= 1
        return left

    def prefix(self) -> Node:
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.value in "+-":
            self.i += 1
            self.enter()
            operand = self.expr(_PREFIX_BP)
            self.nesting -= 1
            return UnaryOp(tok.value, operand)
        node = self.primary()
        while True:
            tok = self.peek()
            if tok is None or tok.kind != "colon":
                return node
            self.i += 1
            node = Range(node, self.primary())

    def primary(self) -> Node:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula", self.offset())
        kind = tok.kind
        if kind == "number":
            self.i += 1
            return Literal("number", float(tok.value))
        if kind == "string":
            self.i += 1
            return Literal("text", tok.value)
        if kind == "bool":
            self.i += 1
            return Literal("boolean", tok.value == "TRUE")
        if kind == "error":
            self.i += 1
            return Literal("error", tok.value)
        if kind == "ref":
            self.i += 1
            return CellRef(tok.value, tok.sheet, tok.book)
        if kind == "ident":
            self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt.kind == "lparen":
                return self.call(tok)
            return NameRef(tok.value, tok.sheet, tok.book)
        if kind == "lparen":
            self.i += 1
            self.enter()
            inner = self.expr(0)
            self.nesting -= 1
            self.take("rparen")
            return Paren(inner)
        if kind == "lbrace":
            return self.array()
        raise ParseError(f"unexpected {tok.value!r}", tok.pos)

    def call(self, name_tok: Token) -> FunctionCall:
        self.take("lparen")
        self.enter()
        args: list[Node] = []
        tok = self.peek()
        if tok is not None and tok.kind == "rparen":
            self.i += 1
            self.nesting -= 1
            return FunctionCall(name_tok.value, ())
        while True:
            tok = self.peek()
            if tok is not None and tok.kind in ("comma", "rparen"):
                args.append(Literal("empty", None))
            else:
                args.append(self.expr(0))
            tok = self.peek()
            if tok is not None and tok.kind == "comma":
                self.i += 1
                continue
            self.take("rparen")
            break
        self.nesting -= 1
        return FunctionCall(name_tok.value, tuple(args))

    def array(self) -> ArrayLiteral:
        self.take("lbrace")
        self.enter()
        rows: list[tuple[Node, ...]] = []
        row: list[Node] = []
        while True:
            row.append(self.expr(0))
            tok = self.peek()
            if tok is not None and tok.kind == "comma":
                self.i += 1
            elif tok is not None and tok.kind == "semicolon":
                self.i += 1
                rows.append(tuple(row))
                row = []
            else:
                self.take("rbrace")
                rows.append(tuple(row))
                break
        self.nesting -= 1
        return ArrayLiteral(tuple(rows))


def parse(tokens: list[Token]) -> Node:
    """Build an AST from :func:`tokenize` output; raises :class:`ParseError`."""
    if not tokens:
        raise ParseError("empty formula", 0)
    p = _Parser(tokens)
    node = p.expr(0)
    if p.peek() is not None:
        raise ParseError(f"unexpected {p.peek().value!r}", p.offset())
    return node


def parse_formula(text: str) -> Node:
    """Tokenize and parse in one step; tolerates a leading ``=``."""
    if text.startswith("="):
        text = text[1:]
    return parse(tokenize(text))


# -- metrics -----------------------------------------------------------------


def children(node: Node) -> Iterator[Node]:
    if isinstance(node, FunctionCall):
        yield from node.args
    elif isinstance(node, (UnaryOp, Percent)):
        yield node.operand
    elif isinstance(node, BinaryOp):
        yield node.left
        yield node.right
    elif isinstance(node, Range):
        yield node.start
        yield node.end
    elif isinstance(node, Paren):
        yield node.expr
    elif isinstance(node, ArrayLiteral):
        for row in node.rows:
            yield from row


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal, left to right."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(list(children(cur))))


def function_name(name: str) -> str:
    upper = name.upper()
    for prefix in ("_XLFN._XLWS.", "_XLFN.", "_XLWS."):
        if upper.startswith(prefix):
            return upper[len(prefix):]
    return upper


def if_nesting_depth(node: Node) -> int:
    """Largest number of IF calls met on any root-to-leaf path."""
    here = 1 if isinstance(node, FunctionCall) and function_name(node.name) == "IF" else 0
    return here + max((if_nesting_depth(c) for c in children(node)), default=0)


def function_census(node: Node) -> dict[str, int]:
    counts = Counter(
        function_name(n.name) for n in walk(node) if isinstance(n, FunctionCall)
    )
    return dict(counts)


def _target(ref: Union[CellRef, NameRef], text: str) -> RefTarget:
    scope = "external" if ref.book is not None else "internal"
    return RefTarget(scope, ref.book, ref.sheet, text)


def extract_refs(node: Node) -> list[RefTarget]:
    """One target per cell-ref or range, in source order.

    Workbook-qualified defined names (``[1]!Rate``) are reported too since
    they are links to another file; plain internal names are not.
    """
    out: list[RefTarget] = []

    def visit(n: Node) -> None:
        if isinstance(n, CellRef):
            out.append(_target(n, n.address))
        elif isinstance(n, Range) and isinstance(n.start, CellRef) and isinstance(n.end, CellRef):
            out.append(_target(n.start, f"{n.start.address}:{n.end.address}"))
        elif isinstance(n, NameRef):
            if n.book is not None:
                out.append(_target(n, n.name))
        else:
            for c in children(n):
                visit(c)

    visit(node)
    return out


@dataclass
class FormulaAnalysis:
    """Per-formula outcome; ``unparsed`` formulas contribute depth 0."""

    depth: int = 0
    census: dict[str, int] = field(default_factory=dict)
    refs: list[RefTarget] = field(default_factory=list)
    unparsed: bool = False
    error: str = ""


def analyze(text: str) -> FormulaAnalysis:
    try:
        ast = parse_formula(text)
    except FormulaError as exc:
        return FormulaAnalysis(unparsed=True, error=str(exc))
    return FormulaAnalysis(if_nesting_depth(ast), function_census(ast), extract_refs(ast))


# -- shared formula translation ---------------------------------------------


def _col_to_num(col: str) -> int:
    num = 0
    for c in col.upper():
        num = num * 26 + ord(c) - 64
    return num


def _num_to_col(num: int) -> str:
    out = ""
    while num > 0:
        num, rem = divmod(num - 1, 26)
        out = chr(65 + rem) + out
    return out


def _shift_part(part: str, drow: int, dcol: int) -> Optional[str]:
    m = re.fullmatch(r"(\$?)([A-Za-z]{1,3})?(\$?)([0-9]+)?", part)
    if not m or not (m.group(2) or m.group(4)):
        return part
    cabs, col, rabs, row = m.groups()
    out = ""
    if col:
        c = _col_to_num(col) + (0 if cabs else dcol)
        if c < 1:
            return None
        out += cabs + _num_to_col(c)
    if row:
        r = int(row) + (0 if rabs else drow)
        if r < 1:
            return None
        out += rabs + str(r)
    return out


def shift_formula(text: str, drow: int, dcol: int) -> str:
    """Translate relative references by a row/column offset.

    Used to materialize the text of shared-formula follower cells from their
    anchor. Absolute (``$``) parts stay put; references pushed off the grid
    become ``#REF!``. Text that does not tokenize is returned unchanged.
    """
    if drow == 0 and dcol == 0:
        return text
    try:
        tokens = tokenize(text)
    except LexError:
        return text
    pieces = []
    last = 0
    for tok in tokens:
        if tok.kind != "ref":
            continue
        shifted_parts = [_shift_part(p, drow, dcol) for p in tok.value.split(":")]
        pieces.append(text[last:tok.addr_pos])
        if any(p is None for p in shifted_parts):
            pieces.append("#REF!")
        else:
            pieces.append(":".join(shifted_parts))
        last = tok.end
    pieces.append(text[last:])
    return "".join(pieces)
