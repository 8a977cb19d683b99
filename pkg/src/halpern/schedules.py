"""Step-size schedules and their exact convergence moduli.

A schedule is the sequence (alpha_n) steering the anchored iteration
x_{n+1} = alpha_n*u + (1-alpha_n)*S x_n.  The rate calculators consume
four moduli, all exact rationals / naturals:

    R1(eps): alpha_n <= eps for all n >= R1(eps)                (decay)
    R2(eps): prod_{k=start}^{R2(eps)} (1-alpha_k) <= eps        (divergence)
    R3(eps): |alpha_n - alpha_{n-1}| <= eps*alpha_n, n >= R3    (relative step)
    E(k):    0 < E(k) <= prod_{n=start}^{k} (1-alpha_n)         (product floor)

and the derived D(eps, M) = E(R3(eps/(3M))).

Built-in kinds compute everything in closed form (NaturalShifted,
Classic) or by exact integer search (PowerLaw); Custom schedules must
ship their own moduli, which `validate_moduli` checks on a grid instead
of trusting.  Everything is Fraction-valued: the downstream rate
formulas take ceilings and floors, where any float rounding could shift
a golden value by one.

Index conventions differ by kind.  NaturalShifted (alpha_n = 1/(n+2))
supports every modulus from index 0.  Classic (alpha_n = 1/(n+1)) has
alpha_0 = 1, so it starts at 1 and products telescope from k=1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

__all__ = [
    "Schedule",
    "NaturalShifted",
    "Classic",
    "PowerLaw",
    "Custom",
    "alpha",
    "R1",
    "R2",
    "R3",
    "E",
    "D",
    "product_through",
    "load_custom_table",
]

RationalLike = Union[Fraction, int, str]

_SCAN_CAP = 10**6


def _frac(x: RationalLike) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


class Schedule:
    """Base interface; see module docstring for the moduli contracts."""

    start_index: int

    def alpha(self, n: int) -> Fraction:
        raise NotImplementedError

    def R1(self, eps: Fraction) -> int:
        raise NotImplementedError

    def R2(self, eps: Fraction) -> int:
        raise NotImplementedError

    def R3(self, eps: Fraction) -> int:
        raise NotImplementedError

    def E(self, k: int) -> Fraction:
        raise NotImplementedError

    def D(self, eps: RationalLike, M: RationalLike) -> Fraction:
        """Product floor at the relative-step threshold: E(R3(eps/3M))."""
        eps, M = _frac(eps), _frac(M)
        if eps <= 0 or M <= 0:
            raise ValueError("eps and M must be positive")
        return self.E(self.R3(eps / (3 * M)))

    def product_through(self, k: int) -> Fraction:
        """Exact prod_{n=start_index}^{k} (1 - alpha_n); empty product 1."""
        if k < self.start_index:
            return Fraction(1)
        prod = Fraction(1)
        for n in range(self.start_index, k + 1):
            prod *= 1 - self.alpha(n)
        return prod

    def label(self) -> str:
        """Short human-readable identifier used in traces and reports."""
        return type(self).__name__.lower()

    def _check_eps(self, eps: RationalLike) -> Fraction:
        eps = _frac(eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        return eps

    def _check_index(self, n: int) -> None:
        if n < self.start_index:
            raise ValueError(f"index {n} below start_index {self.start_index}")


@dataclass(frozen=True)
class NaturalShifted(Schedule):
    """alpha_n = 1/(n+2) from index 0; products telescope to 1/(k+2)."""

    start_index: int = field(default=0, init=False)

    def alpha(self, n: int) -> Fraction:
        self._check_index(n)
        return Fraction(1, n + 2)

    def R1(self, eps) -> int:
        # least n >= 0 with 1/(n+2) <= eps
        return max(0, _ceil_frac(1 / self._check_eps(eps)) - 2)

    def R2(self, eps) -> int:
        # the product through n telescopes to 1/(n+2), so R2 = R1
        return self.R1(eps)

    def R3(self, eps) -> int:
        # |alpha_n - alpha_{n-1}| = alpha_n/(n+1), so n >= 1/eps - 1 works;
        # the returned max(1, ceil(1/eps)) witness is one past least.
        return max(1, _ceil_frac(1 / self._check_eps(eps)))

    def E(self, k: int) -> Fraction:
        self._check_index(k)
        return Fraction(1, k + 2)


@dataclass(frozen=True)
class Classic(Schedule):
    """alpha_n = 1/(n+1) from index 1; products telescope to 1/(k+1)."""

    start_index: int = field(default=1, init=False)

    def alpha(self, n: int) -> Fraction:
        self._check_index(n)
        return Fraction(1, n + 1)

    def R1(self, eps) -> int:
        return max(1, _ceil_frac(1 / self._check_eps(eps)) - 1)

    def R2(self, eps) -> int:
        return self.R1(eps)

    def R3(self, eps) -> int:
        # |alpha_n - alpha_{n-1}| = alpha_n/n, so n >= 1/eps works
        return max(2, _ceil_frac(1 / self._check_eps(eps)))

    def E(self, k: int) -> Fraction:
        if k < self.start_index:
            return Fraction(1)
        return Fraction(1, k + 1)


def _int_root_ceil(base: int, p: int, q: int) -> int:
    """ceil(base**(p/q)) for positive integers by exact search."""
    if base <= 1:
        return base
    target = base**p
    m = int(float(base) ** (p / q))
    m = max(1, m - 2)
    while m**q < target:
        m += 1
    return m


@dataclass(frozen=True)
class PowerLaw(Schedule):
    """alpha_n = a / ceil((n+1)**gamma), a in (0,1], gamma in (0,1].

    The ceiling keeps every alpha_n rational with an exactly computable
    denominator.  At a = 1, gamma = 1 this is the Classic schedule, and
    like Classic it then starts at index 1 (alpha_0 would equal 1).
    """

    a: Fraction
    gamma: Fraction
    start_index: int = field(init=False)

    def __post_init__(self):
        a, gamma = _frac(self.a), _frac(self.gamma)
        if not (0 < a <= 1):
            raise ValueError("a must lie in (0, 1]")
        if not (0 < gamma <= 1):
            raise ValueError("gamma must lie in (0, 1]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "start_index", 1 if a == 1 else 0)

    def label(self) -> str:
        return f"powerlaw a={self.a} gamma={self.gamma}"

    def _denom(self, n: int) -> int:
        return _int_root_ceil(n + 1, self.gamma.numerator, self.gamma.denominator)

    def alpha(self, n: int) -> Fraction:
        self._check_index(n)
        return self.a / self._denom(n)

    def _least_index(self, pred: Callable[[int], bool]) -> int:
        """Least n >= start_index satisfying a monotone predicate."""
        lo = self.start_index
        if pred(lo):
            return lo
        hi = lo + 1
        for _ in range(200):
            if pred(hi):
                break
            lo, hi = hi, 2 * hi
        else:
            raise RuntimeError("predicate search exceeded cap")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pred(mid):
                hi = mid
            else:
                lo = mid
        return hi

    def R1(self, eps) -> int:
        eps = self._check_eps(eps)
        return self._least_index(lambda n: self.alpha(n) <= eps)

    def R2(self, eps) -> int:
        eps = self._check_eps(eps)
        prod = Fraction(1)
        n = self.start_index
        while n - self.start_index < _SCAN_CAP:
            prod *= 1 - self.alpha(n)
            if prod <= eps:
                return n
            n += 1
        raise RuntimeError("R2 product scan exceeded cap")

    def R3(self, eps) -> int:
        # successive denominators differ by at most 1, so the step
        # condition holds once ceil(n**gamma) >= 1/eps, i.e. once
        # n >= (1/eps)**(1/gamma)
        eps = self._check_eps(eps)
        p, q = self.gamma.numerator, self.gamma.denominator
        # least n >= 1 with n**p >= (1/eps)**q
        target_num = eps.denominator**q
        target_den = eps.numerator**q

        def ok(n: int) -> bool:
            return n**p * target_den >= target_num

        if ok(1):
            least = 1
        else:
            lo, hi = 1, 2
            while not ok(hi):
                lo, hi = hi, 2 * hi
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ok(mid):
                    hi = mid
                else:
                    lo = mid
            least = hi
        return max(self.start_index + 1, least)

    def E(self, k: int) -> Fraction:
        self._check_index(k)
        return self.product_through(k)


@dataclass(frozen=True)
class Custom(Schedule):
    """Finite user table of alpha values plus user-supplied moduli.

    Table entries may sit anywhere in [0, 1] (degenerate constant
    schedules are useful for exercising the recurrence bounds); the
    moduli are trusted only after `validate_moduli`.
    """

    table: Tuple[Tuple[int, Fraction], ...]
    r1: Optional[Callable[[Fraction], int]] = None
    r2: Optional[Callable[[Fraction], int]] = None
    r3: Optional[Callable[[Fraction], int]] = None
    e: Optional[Callable[[int], Fraction]] = None
    start_index: int = field(init=False)

    def __init__(self, table, r1=None, r2=None, r3=None, e=None):
        entries = tuple((int(n), _frac(v)) for n, v in table)
        if not entries:
            raise ValueError("custom schedule needs a nonempty table")
        indices = [n for n, _ in entries]
        if sorted(indices) != list(range(min(indices), min(indices) + len(indices))):
            raise ValueError("table indices must be contiguous and distinct")
        for n, v in entries:
            if not (0 <= v <= 1):
                raise ValueError(f"alpha_{n} = {v} outside [0, 1]")
        entries = tuple(sorted(entries))
        object.__setattr__(self, "table", entries)
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)
        object.__setattr__(self, "r3", r3)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "start_index", entries[0][0])

    @property
    def last_index(self) -> int:
        return self.table[-1][0]

    def label(self) -> str:
        return f"custom[{self.start_index}..{self.last_index}]"

    def alpha(self, n: int) -> Fraction:
        self._check_index(n)
        if n > self.last_index:
            raise ValueError(f"index {n} beyond custom table end {self.last_index}")
        return self.table[n - self.start_index][1]

    def _need(self, modulus, name: str):
        if modulus is None:
            raise ValueError(f"custom schedule has no {name} modulus")
        return modulus

    def R1(self, eps) -> int:
        return int(self._need(self.r1, "R1")(self._check_eps(eps)))

    def R2(self, eps) -> int:
        return int(self._need(self.r2, "R2")(self._check_eps(eps)))

    def R3(self, eps) -> int:
        return int(self._need(self.r3, "R3")(self._check_eps(eps)))

    def E(self, k: int) -> Fraction:
        self._check_index(k)
        value = _frac(self._need(self.e, "E")(k))
        if value <= 0:
            raise ValueError("E must be positive")
        return value

    def validate_moduli(self, eps_grid: Sequence[RationalLike]) -> None:
        """Check each supplied modulus against the table; raise on the
        first violation.  Only indices inside the table are checkable."""
        for raw in eps_grid:
            eps = self._check_eps(raw)
            if self.r1 is not None:
                n0 = self.R1(eps)
                for n in range(max(n0, self.start_index), self.last_index + 1):
                    if self.alpha(n) > eps:
                        raise ValueError(f"R1({eps}) = {n0} violated at n = {n}")
            if self.r2 is not None:
                n0 = self.R2(eps)
                if n0 > self.last_index:
                    raise ValueError(f"R2({eps}) = {n0} beyond table")
                if self.product_through(n0) > eps:
                    raise ValueError(f"R2({eps}) = {n0}: product still above eps")
            if self.r3 is not None:
                n0 = self.R3(eps)
                if n0 < self.start_index + 1:
                    raise ValueError(f"R3({eps}) = {n0} below start_index + 1")
                for n in range(n0, self.last_index + 1):
                    if abs(self.alpha(n) - self.alpha(n - 1)) > eps * self.alpha(n):
                        raise ValueError(f"R3({eps}) = {n0} violated at n = {n}")
        if self.e is not None:
            for k in range(self.start_index, self.last_index + 1):
                if self.E(k) > self.product_through(k):
                    raise ValueError(f"E({k}) exceeds the exact product")


def alpha(s: Schedule, n: int) -> Fraction:
    return s.alpha(n)


def R1(s: Schedule, eps: RationalLike) -> int:
    return s.R1(_frac(eps))


def R2(s: Schedule, eps: RationalLike) -> int:
    return s.R2(_frac(eps))


def R3(s: Schedule, eps: RationalLike) -> int:
    return s.R3(_frac(eps))


def E(s: Schedule, k: int) -> Fraction:
    return s.E(k)


def D(s: Schedule, eps: RationalLike, M: RationalLike) -> Fraction:
    return s.D(eps, M)


def product_through(s: Schedule, k: int) -> Fraction:
    return s.product_through(k)


def load_custom_table(path: Union[str, Path]) -> list[Tuple[int, Fraction]]:
    """Parse a plain-text table: one `n numerator/denominator` per line.

    Blank lines and lines starting with `#` are skipped.
    """
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'n p/q', got {line!r}")
        try:
            n = int(parts[0])
            value = Fraction(parts[1])
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        entries.append((n, value))
    if not entries:
        raise ValueError(f"{path}: table file contains no entries")
    return entries
