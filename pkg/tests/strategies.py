"""Formula generators that record their own IF-nesting depth while building.

Each generator returns ``(text, depth)``. The depth is computed from the
construction, never by parsing, so it is an independent oracle for the
parser's metric.
"""

from __future__ import annotations

import random

from hypothesis import strategies as st

NAMES = ("Rate", "tax_rate", "Total.Sales", "_hidden", "Budget2024x")
SHEETS = ("Sheet1", "Data", "'P&L Q2'", "'It''s'")
FUNCS = ("SUM", "MAX", "MIN", "AVERAGE", "ROUND", "VLOOKUP", "AND", "OR", "_xlfn.XLOOKUP", "Sum")
IF_SPELLINGS = ("IF", "if", "If")
BINOPS = ("+", "-", "*", "/", "^", "&", "=", "<>", "<", ">", "<=", ">=")


def _col(rng: random.Random) -> str:
    return rng.choice(["A", "B", "Z", "AA", "XFD", "c"])


def _cell(rng: random.Random) -> str:
    addr = f"{'$' if rng.random() < 0.3 else ''}{_col(rng)}{'$' if rng.random() < 0.3 else ''}{rng.randint(1, 1048576)}"
    r = rng.random()
    if r < 0.2:
        return f"{rng.choice(SHEETS)}!{addr}"
    if r < 0.3:
        sheet = rng.choice(SHEETS)
        book = f"[{rng.randint(1, 9)}]"
        # the book prefix sits inside the quotes of a quoted sheet name
        return (f"'{book}{sheet[1:]}" if sheet.startswith("'") else f"{book}{sheet}") + f"!{addr}"
    return addr


def leaf(rng: random.Random) -> str:
    kind = rng.randrange(9)
    if kind == 0:
        return str(rng.randint(0, 10**6))
    if kind == 1:
        return f"{rng.random() * 100:.3f}"
    if kind == 2:
        return '"' + rng.choice(["", "x", 'say ""hi""', "a,b", "IF("]) + '"'
    if kind == 3:
        return rng.choice(["TRUE", "FALSE", "true"])
    if kind == 4:
        return rng.choice(["#REF!", "#DIV/0!", "#N/A", "#VALUE!", "#NAME?", "#NULL!", "#NUM!"])
    if kind == 5:
        return f"{_cell(rng)}:{_col(rng)}{rng.randint(1, 99)}"
    if kind == 6:
        return rng.choice(NAMES)
    if kind == 7:
        return "{1,2;3,4}"
    return _cell(rng)


def random_formula(rng: random.Random, budget: int = 6) -> tuple[str, int]:
    """Random formula over the supported grammar with its true IF depth."""
    if budget <= 0 or rng.random() < 0.2:
        return leaf(rng), 0
    kind = rng.randrange(7)
    sub = budget - 1
    if kind == 0:
        parts = [random_formula(rng, sub) for _ in range(3)]
        name = rng.choice(IF_SPELLINGS)
        return f"{name}({','.join(p[0] for p in parts)})", 1 + max(p[1] for p in parts)
    if kind == 1:
        parts = [random_formula(rng, sub) for _ in range(rng.randint(0, 3))]
        return f"{rng.choice(FUNCS)}({','.join(p[0] for p in parts)})", max((p[1] for p in parts), default=0)
    if kind == 2:
        a, b = random_formula(rng, sub), random_formula(rng, sub)
        return f"{a[0]}{rng.choice(BINOPS)}{b[0]}", max(a[1], b[1])
    if kind == 3:
        a = random_formula(rng, sub)
        return f"({a[0]})", a[1]
    if kind == 4:
        a = random_formula(rng, sub)
        return f"{rng.choice('-+')}{a[0]}", a[1]
    if kind == 5:
        a = random_formula(rng, sub)
        return f"({a[0]})%", a[1]
    # IF with two arguments (no else branch)
    a, b = random_formula(rng, sub), random_formula(rng, sub)
    return f"IF({a[0]},{b[0]})", 1 + max(a[1], b[1])


@st.composite
def formulas(draw, max_budget: int = 6):
    """Hypothesis strategy over :func:`random_formula`."""
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    budget = draw(st.integers(min_value=0, max_value=max_budget))
    return random_formula(random.Random(seed), budget)


def if_chain(depth: int, inner: str = "A1") -> str:
    """``IF(c,IF(c,...,0),0)`` with exactly ``depth`` IFs."""
    text = inner
    for _ in range(depth):
        text = f"IF(A1>0,{text},0)"
    return text
