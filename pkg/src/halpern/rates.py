"""Exact-arithmetic rate calculators.

Implements the full chain of quantitative bounds for the anchored
iteration and the resolvent family:

* ``lemma_ineq_bound`` — closed-form majorant for the basic recurrence
  s_{k+1} <= (1-alpha_k) s_k + alpha_k beta_k + gamma_k;
* ``phi_rate`` — convergence rate Phi for sequences satisfying that
  recurrence with vanishing beta-tails and summable gamma;
* ``psi_rate`` — asymptotic-regularity rate for the anchored iteration,
  assembled from the schedule moduli R1/R2/R3/E;
* ``psi_closed_form`` — the closed form floor(12*M*floor(3M/eps)/eps)
  valid for M >= 1, eps <= 3/2, always <= floor(36 M^2/eps^2);
* ``k_resolvent_meta`` — metastability rate for the resolvent sequence
  (z_{1/m}): iterate n -> max{n, g(n)} ceil(M^2/eps^2) times from 0;
* ``sigma_rate`` — metastability rate for the iteration itself,
  relative to a rate K for the resolvents.

All arithmetic is over Fractions and arbitrary-precision ints: the
formulas take ceilings and floors, so any float rounding could shift a
certified value.  Results are RateResult values: Exact(v), or
BudgetExceeded(lower_bound, steps_done) when the computation blows the
step/bit budget (sigma in particular is astronomically large for
realistic parameters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

from .counterfunction import (
    BudgetExhausted,
    BudgetMeter,
    Counterfunction,
    Dynamic,
    cf_star,
    cf_tilde_max,
    evaluate,
)
from .geometry import Modulus, Space
from .schedules import Schedule

__all__ = [
    "EvalBudget",
    "DEFAULT_BUDGET",
    "RateResult",
    "Exact",
    "BudgetExceeded",
    "ModuliBundle",
    "cf_iterate",
    "lemma_ineq_bound",
    "phi_rate",
    "psi_rate",
    "psi_closed_form",
    "k_resolvent_meta",
    "sigma_rate",
]

RationalLike = Union[Fraction, int, str]


def _frac(x: RationalLike) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class EvalBudget:
    """Step count and bit-size caps for rate evaluations."""

    max_steps: int = 10**6
    max_bits: int = 10**4

    def meter(self) -> BudgetMeter:
        return BudgetMeter(self.max_steps, self.max_bits)


DEFAULT_BUDGET = EvalBudget()


@dataclass(frozen=True)
class RateResult:
    """Either an exact natural-number bound or a budget-exceeded marker."""

    @property
    def is_exact(self) -> bool:
        return isinstance(self, Exact)


@dataclass(frozen=True)
class Exact(RateResult):
    value: int


@dataclass(frozen=True)
class BudgetExceeded(RateResult):
    """``lower_bound`` is a fully evaluated partial value that the true
    bound dominates (the underlying evaluations are monotone max-scans
    or iterations of inflationary functions)."""

    lower_bound: int
    steps_done: int


def _cf_iterate_metered(g: Counterfunction, n: int, meter: BudgetMeter) -> int:
    value = 0
    for _ in range(n):
        value = evaluate(g, value, meter)
    return value


def cf_iterate(g: Counterfunction, n: int, budget: EvalBudget = DEFAULT_BUDGET) -> RateResult:
    """n-fold composition of g applied to 0.

    On budget exhaustion the result carries the last fully computed
    iterate, which lower-bounds the final value whenever g is
    inflationary (g(m) >= m), as all uses here are.
    """
    if n < 0:
        raise ValueError("iteration count must be a natural number")
    meter = budget.meter()
    value = 0
    try:
        for _ in range(n):
            value = evaluate(g, value, meter)
    except BudgetExhausted:
        return BudgetExceeded(lower_bound=value, steps_done=meter.steps)
    return Exact(value)


def lemma_ineq_bound(
    m: int,
    n: int,
    s_m: RationalLike,
    schedule: Schedule,
    C: RationalLike,
    gamma: list,
) -> Fraction:
    """Closed-form majorant for the recurrence
    s_{k+1} <= (1-alpha_k) s_k + alpha_k beta_k + gamma_k with beta_k <= C:

        s_{n+1} <= prod*s_m + (1-prod)*C + sum(gamma_k, k=m..n),
        prod = prod_{k=m}^{n} (1-alpha_k).

    ``gamma`` is indexed absolutely: gamma[k] pairs with alpha_k.
    """
    if n < m:
        raise ValueError("need n >= m")
    if m < schedule.start_index:
        raise ValueError(f"m below schedule start_index {schedule.start_index}")
    if len(gamma) <= n:
        raise ValueError(f"gamma needs entries through index {n}, got {len(gamma)}")
    s_m, C = _frac(s_m), _frac(C)
    prod = Fraction(1)
    tail = Fraction(0)
    for k in range(m, n + 1):
        prod *= 1 - schedule.alpha(k)
        tail += _frac(gamma[k])
    return prod * s_m + (1 - prod) * C + tail


def phi_rate(
    eps: RationalLike,
    C: RationalLike,
    S1: Callable[[Fraction], int],
    S2: Callable[[Fraction], int],
    S3: Callable[[Fraction], int],
    D: Callable[[Fraction], Fraction],
) -> int:
    """Convergence rate max{S1(eps*D(eps)/(3C)), S2(eps/3), S3(eps/3)}.

    S1 witnesses the product decay, S2 the beta-tail decay, S3 the
    gamma-tail decay, and D(eps) > 0 floors the relevant products.
    """
    eps, C = _frac(eps), _frac(C)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if C < 1:
        raise ValueError("C must be at least 1")
    d = _frac(D(eps))
    if d <= 0:
        raise ValueError("D(eps) must be positive")
    return max(int(S1(eps * d / (3 * C))), int(S2(eps / 3)), int(S3(eps / 3)))


@dataclass(frozen=True)
class ModuliBundle:
    """Everything sigma_rate/psi_rate need about one schedule+instance.

    R1/R2/R3/E are the schedule moduli, omega a modulus of continuity
    for the duality map, M the instance bound.  ``psi`` may inject an
    alternative asymptotic-regularity rate (closed form or stub); when
    None the general pipeline is used.  ``space`` is only required when
    omega is empirical.
    """

    R1: Callable[[Fraction], int]
    R2: Callable[[Fraction], int]
    R3: Callable[[Fraction], int]
    E: Callable[[int], Fraction]
    omega: Modulus
    M: Fraction
    psi: Optional[Callable[[Fraction], int]] = None
    space: Optional[Space] = None

    @classmethod
    def from_schedule(
        cls,
        schedule: Schedule,
        M: RationalLike,
        omega: Optional[Modulus] = None,
        psi: Optional[Callable[[Fraction], int]] = None,
        space: Optional[Space] = None,
    ) -> "ModuliBundle":
        return cls(
            R1=schedule.R1,
            R2=schedule.R2,
            R3=schedule.R3,
            E=schedule.E,
            omega=omega if omega is not None else Modulus.identity(),
            M=_frac(M),
            psi=psi,
            space=space,
        )

    def psi_fn(self) -> Callable[[Fraction], int]:
        if self.psi is not None:
            return self.psi
        return lambda eps: psi_rate(eps, self)


def psi_rate(eps: RationalLike, bundle: ModuliBundle) -> int:
    """Asymptotic-regularity rate

        psi(eps) = max{R1(eps/2M), Phi(eps/2, M, R2, R3(./M), 0, D)}

    with D(eps') = E(R3(eps'/(3M))): past psi(eps) the residual
    |x_n - S x_n| stays below eps.
    """
    eps = _frac(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    M = bundle.M
    half = eps / 2
    phi = phi_rate(
        half,
        M,
        S1=bundle.R2,
        S2=lambda t: bundle.R3(t / M),
        S3=lambda _t: 0,
        D=lambda e: bundle.E(bundle.R3(e / (3 * M))),
    )
    return max(int(bundle.R1(half / M)), phi)


def psi_closed_form(eps: RationalLike, M: RationalLike) -> int:
    """floor(12*M*floor(3M/eps)/eps) for M >= 1, 0 < eps <= 3/2.

    Always at most floor(36 M^2 / eps^2) in that regime (asserted).
    """
    eps, M = _frac(eps), _frac(M)
    if M < 1:
        raise ValueError("closed form requires M >= 1")
    if not (0 < eps <= Fraction(3, 2)):
        raise ValueError("closed form requires 0 < eps <= 3/2")
    value = math.floor(12 * M * math.floor(3 * M / eps) / eps)
    envelope = math.floor(36 * M * M / (eps * eps))
    assert value <= envelope, (value, envelope)
    return value


def k_resolvent_meta(
    eps: RationalLike,
    g: Counterfunction,
    M: RationalLike,
    budget: EvalBudget = DEFAULT_BUDGET,
) -> RateResult:
    """Metastability rate for the resolvent sequence (z_{1/m}):
    iterate n -> max{n, g(n)} exactly ceil(M^2/eps^2) times from 0."""
    eps, M = _frac(eps), _frac(M)
    if eps <= 0 or M <= 0:
        raise ValueError("eps and M must be positive")
    count = math.ceil(M * M / (eps * eps))
    return cf_iterate(cf_tilde_max(g), count, budget)


def sigma_rate(
    eps: RationalLike,
    g: Counterfunction,
    bundle: ModuliBundle,
    K: Optional[Callable[[Fraction, Counterfunction], RateResult]] = None,
    budget: EvalBudget = DEFAULT_BUDGET,
) -> RateResult:
    """Metastability rate for the anchored iteration relative to a rate
    K for the resolvent sequence.

    In exact arithmetic, with M = bundle.M and psi from the bundle:

        delta  = eps^2 / (144 M)
        eps0   = min{delta, omega(M, delta)}
        m0     = ceil(72 M^2 / eps^2)
        phi(k) = psi(eps^2 / (72 M k))
        f(k)   = ceil(max{24 M^2 (max{g*(R2(E(phi(k)) eps^2 / 12M^2)),
                                      phi(k)+1} - phi(k) - 1)/eps^2 - k, 0})
        f*(k)  = f(k + m0) + m0
        Gamma~ , Gamma = min / max of phi(k) over k in [m0, K(eps0, f*) + m0]
        Sigma  = max over k in [Gamma~, Gamma] of max{R2(E(k) eps^2/(12 M^2)), k+1}

    When K is None the resolvent rate k_resolvent_meta is used with the
    same budget.  Any sub-evaluation blowing the budget produces
    BudgetExceeded carrying the largest fully evaluated Sigma candidate.
    """
    eps = _frac(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    M = bundle.M
    if M <= 0:
        raise ValueError("bundle M must be positive")
    psi = bundle.psi_fn()
    meter = budget.meter()

    delta = eps * eps / (144 * M)
    try:
        omega_value = bundle.omega.evaluate(M, delta, space=bundle.space)
    except ValueError as exc:
        raise ValueError(f"modulus required: {exc}") from None
    eps0 = min(delta, omega_value)
    m0 = math.ceil(72 * M * M / (eps * eps))

    phi_cache: dict[int, int] = {}

    def phi(k: int) -> int:
        if k not in phi_cache:
            meter.tick()
            value = int(psi(eps * eps / (72 * M * k)))
            meter.check_value(value)
            phi_cache[k] = value
        return phi_cache[k]

    g_star = cf_star(g)

    def f(k: int) -> int:
        phi_k = phi(k)
        r2_arg = bundle.E(phi_k) * eps * eps / (12 * M * M)
        r2_val = int(bundle.R2(r2_arg))
        meter.check_value(r2_val)
        reach = max(evaluate(g_star, r2_val, meter), phi_k + 1)
        expr = 24 * M * M * (reach - phi_k - 1) / (eps * eps) - k
        return max(math.ceil(expr), 0)

    def f_star_fn(k: int) -> int:
        return f(k + m0) + m0

    f_star = Dynamic(f_star_fn, name="f-star")

    partial = 0
    try:
        if K is None:
            count = math.ceil(M * M / (eps0 * eps0))
            k_value = _cf_iterate_metered(cf_tilde_max(f_star), count, meter)
            k_result: RateResult = Exact(k_value)
        else:
            k_result = K(eps0, f_star)
        if isinstance(k_result, BudgetExceeded):
            return BudgetExceeded(
                lower_bound=0,
                steps_done=meter.steps + k_result.steps_done,
            )
        top = int(k_result.value) + m0

        gamma_lo: Optional[int] = None
        gamma_hi: Optional[int] = None
        for k in range(m0, top + 1):
            value = phi(k)
            gamma_lo = value if gamma_lo is None else min(gamma_lo, value)
            gamma_hi = value if gamma_hi is None else max(gamma_hi, value)

        for k in range(gamma_lo, gamma_hi + 1):
            meter.tick()
            r2_arg = bundle.E(k) * eps * eps / (12 * M * M)
            candidate = max(int(bundle.R2(r2_arg)), k + 1)
            meter.check_value(candidate)
            partial = max(partial, candidate)
    except BudgetExhausted:
        return BudgetExceeded(lower_bound=partial, steps_done=meter.steps)
    return Exact(partial)
