"""Counterfunction algebra: total functions on arbitrary-precision naturals.

Metastability statements quantify over an adversarial function g: N -> N
("for every g there is n <= Phi(eps, g) such that the window
[n, n+g(n)] is eps-stable").  This module gives g a concrete syntax
tree, the three standard transforms

    tilde_strong(g)(n) = max{g(i) : i <= n} + n
    tilde_max(g)(n)    = max{n, g(n)}
    star(g)(k)         = k + g(k)

and a budgeted evaluator: every node evaluation ticks a step meter and
every produced value is checked against a bit-size cap, so the rate
calculators can degrade to an explicit "budget exceeded" result instead
of diverging on astronomically large bounds.

Trees are parseable from a small prefix syntax used by config files and
the CLI: `const 3`, `id`, `affine 2 1`, `plus id (const 3)`,
`max id (const 5)`, `compose (affine 2 0) id`,
`table 5 2 7 default id`.  Parentheses are optional grouping; every
form is self-delimiting without them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

__all__ = [
    "Counterfunction",
    "Const",
    "Identity",
    "Affine",
    "Table",
    "MaxOf",
    "Compose",
    "Plus",
    "RunningMax",
    "Dynamic",
    "BudgetExhausted",
    "BudgetMeter",
    "evaluate",
    "cf_tilde_strong",
    "cf_tilde_max",
    "cf_star",
    "render",
    "parse_counterfunction",
]


class BudgetExhausted(Exception):
    """Raised mid-evaluation when the step or bit budget runs out."""

    def __init__(self, steps_done: int, reason: str):
        super().__init__(reason)
        self.steps_done = steps_done
        self.reason = reason


class BudgetMeter:
    """Mutable consumption tracker shared across one rate computation."""

    def __init__(self, max_steps: int, max_bits: int):
        if max_steps < 1 or max_bits < 1:
            raise ValueError("budget limits must be positive")
        self.max_steps = max_steps
        self.max_bits = max_bits
        self.steps = 0

    def tick(self, count: int = 1) -> None:
        self.steps += count
        if self.steps > self.max_steps:
            raise BudgetExhausted(self.steps, "step budget exhausted")

    def check_value(self, value: int) -> int:
        if value.bit_length() > self.max_bits:
            raise BudgetExhausted(self.steps, "value exceeds bit budget")
        return value


def _nat(value, what: str) -> int:
    v = int(value)
    if v < 0 or v != value:
        raise ValueError(f"{what} must be a natural number, got {value!r}")
    return v


class Counterfunction:
    """Base node; subclasses implement _eval(n, meter)."""

    def __call__(self, n: int, meter: Optional[BudgetMeter] = None) -> int:
        return evaluate(self, n, meter)

    def _eval(self, n: int, meter: Optional[BudgetMeter]) -> int:
        raise NotImplementedError


def evaluate(g: Counterfunction, n: int, meter: Optional[BudgetMeter] = None) -> int:
    """g(n) under an optional budget (raises BudgetExhausted)."""
    n = _nat(n, "argument")
    if meter is not None:
        meter.tick()
    value = g._eval(n, meter)
    if meter is not None:
        meter.check_value(value)
    return value


@dataclass(frozen=True)
class Const(Counterfunction):
    c: int

    def __post_init__(self):
        object.__setattr__(self, "c", _nat(self.c, "constant"))

    def _eval(self, n, meter):
        return self.c


@dataclass(frozen=True)
class Identity(Counterfunction):
    def _eval(self, n, meter):
        return n


@dataclass(frozen=True)
class Affine(Counterfunction):
    """n -> a*n + b."""

    a: int
    b: int

    def __post_init__(self):
        object.__setattr__(self, "a", _nat(self.a, "slope"))
        object.__setattr__(self, "b", _nat(self.b, "offset"))

    def _eval(self, n, meter):
        return self.a * n + self.b


@dataclass(frozen=True)
class Table(Counterfunction):
    """Explicit values for n < len(entries); the default branch takes over
    beyond the table (applied to n itself)."""

    entries: Tuple[int, ...]
    default: Counterfunction

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple(_nat(e, "table entry") for e in self.entries)
        )

    def _eval(self, n, meter):
        if n < len(self.entries):
            return self.entries[n]
        return evaluate(self.default, n, meter)


@dataclass(frozen=True)
class MaxOf(Counterfunction):
    branches: Tuple[Counterfunction, ...]

    def __post_init__(self):
        branches = tuple(self.branches)
        if not branches:
            raise ValueError("max needs at least one branch")
        object.__setattr__(self, "branches", branches)

    def _eval(self, n, meter):
        return max(evaluate(b, n, meter) for b in self.branches)


@dataclass(frozen=True)
class Compose(Counterfunction):
    """(f . g)(n) = f(g(n))."""

    f: Counterfunction
    g: Counterfunction

    def _eval(self, n, meter):
        return evaluate(self.f, evaluate(self.g, n, meter), meter)


@dataclass(frozen=True)
class Plus(Counterfunction):
    f: Counterfunction
    g: Counterfunction

    def _eval(self, n, meter):
        return evaluate(self.f, n, meter) + evaluate(self.g, n, meter)


@dataclass(frozen=True)
class RunningMax(Counterfunction):
    """n -> max{g(i) : i <= n}; costs n+1 inner evaluations."""

    g: Counterfunction

    def _eval(self, n, meter):
        return max(evaluate(self.g, i, meter) for i in range(n + 1))


@dataclass(frozen=True)
class Dynamic(Counterfunction):
    """Callable-backed node for functions defined by computation rather
    than syntax (e.g. the f* function built inside the relative-rate
    calculator).  The callable must be total on naturals."""

    fn: Callable[[int], int] = field(compare=False)
    name: str = "dynamic"

    def _eval(self, n, meter):
        return _nat(self.fn(n), f"{self.name}({n})")


def cf_tilde_strong(g: Counterfunction) -> Counterfunction:
    """n -> max{g(i) : i <= n} + n."""
    return Plus(RunningMax(g), Identity())


def cf_tilde_max(g: Counterfunction) -> Counterfunction:
    """n -> max{n, g(n)}."""
    return MaxOf((Identity(), g))


def cf_star(g: Counterfunction) -> Counterfunction:
    """k -> k + g(k)."""
    return Plus(Identity(), g)


def render(g: Counterfunction) -> str:
    """Prefix-syntax rendering (parseable back for the public nodes)."""
    if isinstance(g, Const):
        return f"const {g.c}"
    if isinstance(g, Identity):
        return "id"
    if isinstance(g, Affine):
        return f"affine {g.a} {g.b}"
    if isinstance(g, Table):
        body = " ".join(str(e) for e in g.entries)
        return f"table {body} default {render(g.default)}"
    if isinstance(g, MaxOf):
        return "max " + " ".join(f"({render(b)})" for b in g.branches)
    if isinstance(g, Compose):
        return f"compose ({render(g.f)}) ({render(g.g)})"
    if isinstance(g, Plus):
        return f"plus ({render(g.f)}) ({render(g.g)})"
    if isinstance(g, RunningMax):
        return f"running-max ({render(g.g)})"
    if isinstance(g, Dynamic):
        return f"<{g.name}>"
    raise TypeError(f"unknown counterfunction node: {type(g).__name__}")


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


class _Parser:
    def __init__(self, tokens: list[str], source: str):
        self.tokens = tokens
        self.pos = 0
        self.source = source

    def error(self, message: str) -> ValueError:
        return ValueError(f"bad counterfunction {self.source!r}: {message}")

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        self.pos += 1
        return tok

    def nat(self) -> int:
        tok = self.next()
        if not tok.isdigit():
            raise self.error(f"expected a natural number, got {tok!r}")
        return int(tok)

    def expr(self) -> Counterfunction:
        tok = self.next()
        if tok == "(":
            inner = self.expr()
            if self.next() != ")":
                raise self.error("expected ')'")
            return inner
        if tok == "id":
            return Identity()
        if tok == "const":
            return Const(self.nat())
        if tok == "affine":
            return Affine(self.nat(), self.nat())
        if tok == "plus":
            return Plus(self.expr(), self.expr())
        if tok == "compose":
            return Compose(self.expr(), self.expr())
        if tok == "max":
            return MaxOf((self.expr(), self.expr()))
        if tok == "table":
            entries = []
            while self.peek() is not None and self.peek().isdigit():
                entries.append(self.nat())
            if self.next() != "default":
                raise self.error("table needs 'default <expr>' after its entries")
            return Table(tuple(entries), self.expr())
        raise self.error(f"unknown form {tok!r}")


def parse_counterfunction(text: str) -> Counterfunction:
    """Parse the prefix syntax; see the module docstring for the grammar."""
    parser = _Parser(_tokenize(text), text)
    result = parser.expr()
    if parser.peek() is not None:
        raise parser.error(f"trailing tokens starting at {parser.peek()!r}")
    return result
