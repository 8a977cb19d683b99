"""Brute-force checks that pit computed orbits and resolvent paths
against the certificates the rate calculators hand out.

Three layers live here:

* window scanners (`brute_force_metastability`) that search a finite
  trace for the quantitative Cauchy witness a rate promises exists;
* float-world inequality checkers (asymptotic regularity, the duality
  pairing diagnostic, the descent inequality) run on real traces with a
  fixed 1e-6 / 1e-9 slack for accumulated roundoff;
* exact-rational simulators (`simulate_lemma_recurrences`) that draw
  random recurrence instances satisfying the convergence lemmas'
  premises and check the closed-form bounds with zero slack.

`run_suite` bundles all of it per catalog instance and emits JSON-ready
report rows.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from halpern.catalog import CatalogInstance
from halpern.counterfunction import Affine, Const, Counterfunction, render
from halpern.geometry import Space, Vector, duality_map, pairing
from halpern.iteration import HalpernTrace, ResolventPath, halpern_orbit, resolvent_path
from halpern.operators import compute_instance_bound
from halpern.rates import (
    DEFAULT_BUDGET,
    EvalBudget,
    Exact,
    BudgetExceeded,
    ModuliBundle,
    RateResult,
    k_resolvent_meta,
    lemma_ineq_bound,
    phi_rate,
    psi_closed_form,
    psi_rate,
)
from halpern.schedules import Classic, Custom, NaturalShifted, Schedule

RationalLike = Union[int, Fraction]

#: absolute slack for float-world inequality checks
FLOAT_SLACK = 1e-6
#: slack for residual thresholds (residuals are single subtractions)
RESIDUAL_SLACK = 1e-9


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _space_for(points: Sequence[Vector], space: Optional[Space]) -> Space:
    return space if space is not None else Space.hilbert(points[0].dim)


# ---------------------------------------------------------------------------
# window scanning


def brute_force_metastability(
    points: Sequence[Vector],
    eps,
    g: Counterfunction,
    space: Optional[Space] = None,
) -> Optional[int]:
    """Least n with n+g(n) < len(points) and all pairs in the window
    [n, n+g(n)] within eps of each other; None if no window fits.

    This is the ground-truth scan every metastability certificate is
    compared against: a sound rate must dominate the value returned
    here whenever one exists.
    """
    if not points:
        raise ValueError("need a nonempty point list")
    space = _space_for(points, space)
    threshold = float(_frac(eps))
    arrs = [p.coords for p in points]
    length = len(arrs)
    for n in range(length):
        hi = n + int(g(n))
        if hi >= length:
            continue
        if _window_within(arrs, n, hi, threshold, space):
            return n
    return None


def _window_within(arrs, lo: int, hi: int, threshold: float, space: Space) -> bool:
    for i in range(lo, hi + 1):
        for j in range(i + 1, hi + 1):
            if space.norm(arrs[i] - arrs[j]) > threshold:
                return False
    return True


# ---------------------------------------------------------------------------
# float-world checkers


def check_asymptotic_regularity(trace: HalpernTrace, eps, rate: int) -> bool:
    """True iff the residual stays at or below eps from absolute index
    `rate` through the end of the trace (slack 1e-9)."""
    if rate < 0:
        raise ValueError("rate must be a natural number")
    start = trace.start_index
    last = start + trace.N
    if last < rate:
        raise ValueError("trace too short")
    threshold = float(_frac(eps)) + RESIDUAL_SLACK
    lo = max(rate, start)
    return all(r <= threshold for r in trace.residuals[lo - start :])


@dataclass(frozen=True)
class MetastabilityReport:
    """Outcome of comparing a brute-force witness with a computed bound.

    `witness_n` is reported in m-units (the resolvent path entry for
    t = 1/m), while the bound and the comparison live on the 0-based
    sequence index m-1, matching how the rate iterates counterfunctions
    from 0.  `bound_respected` is "verified" when the bound is exact
    and dominates the witness, "violated" when every window at or below
    an exact bound fits in the path yet fails, and "not-comparable"
    (with a reason) otherwise.
    """

    eps: Fraction
    g_id: str
    witness_n: Optional[int]
    bound: RateResult
    bound_respected: str
    reason: Optional[str] = None


def check_resolvent_metastability(
    path: ResolventPath,
    eps,
    g: Counterfunction,
    M,
    space: Optional[Space] = None,
    budget: EvalBudget = DEFAULT_BUDGET,
) -> MetastabilityReport:
    """Scan a resolvent path for a metastability window and compare it
    against the iterated-counterfunction bound for (z_{1/m})."""
    eps = _frac(eps)
    pts = path.points()
    witness_index = brute_force_metastability(pts, eps, g, space)
    bound = k_resolvent_meta(eps, g, _frac(M), budget)
    witness_n = None if witness_index is None else witness_index + 1

    if not bound.is_exact:
        status, reason = "not-comparable", "budget"
    elif witness_index is None:
        status, reason = "not-comparable", "path too short"
    elif witness_index <= bound.value:
        status, reason = "verified", None
    elif all(n + int(g(n)) < len(pts) for n in range(bound.value + 1)):
        status, reason = "violated", "every window at or below the bound fails"
    else:
        status, reason = "not-comparable", "path too short"

    return MetastabilityReport(
        eps=eps,
        g_id=render(g),
        witness_n=witness_n,
        bound=bound,
        bound_respected=status,
        reason=reason,
    )


@dataclass(frozen=True)
class DiagnosticRow:
    """One sampled duality-pairing diagnostic: beta <= rhs must hold."""

    n: int
    m: int
    beta: float
    rhs: float
    holds: bool


def beta_diagnostics(
    trace: HalpernTrace,
    path: ResolventPath,
    space: Space,
    u: Vector,
    M,
    ns: Optional[Sequence[int]] = None,
    ms: Optional[Sequence[int]] = None,
) -> List[DiagnosticRow]:
    """Sample beta(n, m) = 2<u - z_m, J(x_n - z_m)> - M^2/m and check it
    against 3*m*M*residual(n) with relative slack 1e-6.

    `ns` are absolute orbit indices, `ms` resolvent indices (from 1);
    both default to power-of-two grids across the trace and path.
    """
    M_f = float(_frac(M))
    start = trace.start_index
    if ns is None:
        ns = _pow2_grid(start, start + trace.N)
    if ms is None:
        ms = _pow2_grid(1, path.m_max)
    u_arr = u.coords
    rows = []
    for n in ns:
        if not (start <= n <= start + trace.N):
            raise ValueError(f"orbit index {n} outside trace")
        x_n = trace.points[n - start].coords
        residual = trace.residuals[n - start]
        for m in ms:
            if not (1 <= m <= path.m_max):
                raise ValueError(f"resolvent index {m} outside path")
            z_m = path.entries[m - 1][1].coords
            j_val = duality_map(space, x_n - z_m)
            beta = 2.0 * pairing(u_arr - z_m, j_val.functional) - M_f * M_f / m
            rhs = 3.0 * m * M_f * residual
            holds = beta <= rhs + FLOAT_SLACK * max(1.0, abs(rhs))
            rows.append(DiagnosticRow(n=n, m=m, beta=beta, rhs=rhs, holds=holds))
    return rows


def _pow2_grid(lo: int, hi: int) -> List[int]:
    grid = {lo, hi}
    step = 1
    while lo + step < hi:
        grid.add(lo + step)
        step *= 2
    return sorted(grid)


def check_descent_inequality(
    trace: HalpernTrace,
    path: ResolventPath,
    s: Schedule,
    m: int,
    n0: int,
    n: int,
    M,
    eps,
    space: Optional[Space] = None,
) -> bool:
    """Check ||x_n - z_m||^2 against the product-decay majorant

        prod_{k=n0}^{n-1}(1-alpha_k) * M^2 + eps^2/12 + (2M^2/m)(n-1-n0)

    with absolute slack 1e-6.  Indices are absolute (n0 < n within the
    trace, 1 <= m within the path)."""
    start = trace.start_index
    if not (start <= n0 < n <= start + trace.N):
        raise ValueError("need start <= n0 < n within the trace")
    if not (1 <= m <= path.m_max):
        raise ValueError(f"resolvent index {m} outside path")
    space = _space_for(trace.points, space)
    M_q, eps_q = _frac(M), _frac(eps)
    prod = Fraction(1)
    for k in range(n0, n):
        prod *= 1 - s.alpha(k)
    x_n = trace.points[n - start].coords
    z_m = path.entries[m - 1][1].coords
    lhs = space.norm(x_n - z_m) ** 2
    rhs = float(
        prod * M_q * M_q + eps_q * eps_q / 12 + Fraction(2) * M_q * M_q * (n - 1 - n0) / m
    )
    return lhs <= rhs + FLOAT_SLACK


# ---------------------------------------------------------------------------
# exact-rational lemma simulations


def _dyadic(rng, lo: int, hi: int, den: int) -> Fraction:
    """Uniform dyadic rational k/den with k in [lo, hi]."""
    return Fraction(int(rng.integers(lo, hi + 1)), den)


def _ceil_log2_inv(x: Fraction) -> int:
    """Least k >= 0 with 2**(-k) <= x, for x > 0."""
    if x <= 0:
        raise ValueError("need x > 0")
    num, den = x.numerator, x.denominator
    if num >= den:
        return 0
    k = (den // num).bit_length() - 1
    while (num << k) < den:
        k += 1
    return k


@dataclass(frozen=True)
class _MajorantInstance:
    """Random exact instance of the plain recurrence majorant: data for
    s_{k+1} = (1-alpha_k) s_k + alpha_k beta_k + gamma_k with
    beta_k <= C from index m on."""

    m: int
    C: Fraction
    alphas: Tuple[Fraction, ...]
    betas: Tuple[Fraction, ...]
    gammas: Tuple[Fraction, ...]
    s: Tuple[Fraction, ...]


def _majorant_instance(rng) -> _MajorantInstance:
    length = 12 + int(rng.integers(0, 21))
    m = int(rng.integers(0, 6))
    C = _dyadic(rng, -32, 32, 8)
    alphas = tuple(_dyadic(rng, 0, 16, 16) for _ in range(length))
    betas = tuple(
        C + _dyadic(rng, 1, 32, 16) if k < m else C - _dyadic(rng, 0, 32, 16)
        for k in range(length)
    )
    gammas = tuple(_dyadic(rng, 0, 8, 16) for _ in range(length))
    s = [_dyadic(rng, -64, 64, 16)]
    for k in range(length):
        s.append((1 - alphas[k]) * s[k] + alphas[k] * betas[k] + gammas[k])
    return _MajorantInstance(
        m=m, C=C, alphas=alphas, betas=betas, gammas=gammas, s=tuple(s)
    )


def _check_majorant_bound(inst: _MajorantInstance) -> bool:
    """Exact check of s_{n+1} <= prod*s_m + (1-prod)*C + sum(gamma)."""
    sched = Custom(table=list(enumerate(inst.alphas)))
    gamma = list(inst.gammas)
    return all(
        inst.s[n + 1]
        <= lemma_ineq_bound(inst.m, n, inst.s[inst.m], sched, inst.C, gamma)
        for n in range(inst.m, len(inst.alphas))
    )


@dataclass(frozen=True)
class _XuInstance:
    """Random exact instance of the moduli-driven convergence lemma.

    The premises hold by construction: alpha in [1/2, 15/16] so
    products decay geometrically, beta_k <= 2^-k, gamma_k <= 4^-(k+1),
    and s is clamped into [0, C] without ever rising above the
    recurrence's right-hand side.
    """

    eps: Fraction
    C: int
    alphas: Tuple[Fraction, ...]
    betas: Tuple[Fraction, ...]
    gammas: Tuple[Fraction, ...]
    s: Tuple[Fraction, ...]
    s1_used: int
    s1_arg: Fraction
    s2_used: int
    s3_used: int
    d_value: Fraction
    phi: int


def _xu_instance(rng) -> _XuInstance:
    eps = Fraction(int(rng.integers(1, 65)), 64)
    C = int(rng.integers(1, 5))
    alphas: List[Fraction] = []

    def alpha_at(k: int) -> Fraction:
        while len(alphas) <= k:
            alphas.append(_dyadic(rng, 8, 15, 16))
        return alphas[k]

    def product_through(k: int) -> Fraction:
        out = Fraction(1)
        for i in range(k + 1):
            out *= 1 - alpha_at(i)
        return out

    def s1(e: Fraction) -> int:
        prod = Fraction(1)
        k = 0
        while True:
            prod *= 1 - alpha_at(k)
            if prod <= e:
                return k
            k += 1

    def s2(e: Fraction) -> int:
        return _ceil_log2_inv(e)

    def s3(e: Fraction) -> int:
        return (_ceil_log2_inv(e) + 1) // 2

    def d_fn(e: Fraction) -> Fraction:
        return product_through(max(s2(e / 3), s3(e / 3)))

    phi = phi_rate(eps, C, s1, s2, s3, d_fn)
    horizon = phi + 9
    betas = tuple(
        _dyadic(rng, 0, 16, 16) * Fraction(1, 2**k) for k in range(horizon)
    )
    gammas = tuple(
        _dyadic(rng, 0, 16, 16) * Fraction(1, 4 ** (k + 1)) for k in range(horizon)
    )
    s = [_dyadic(rng, 0, 16 * C, 16)]
    for k in range(horizon):
        value = (1 - alpha_at(k)) * s[k] + alpha_at(k) * betas[k] + gammas[k]
        s.append(min(value, Fraction(C)))
    d_value = d_fn(eps)
    s1_arg = eps * d_value / (3 * C)
    return _XuInstance(
        eps=eps,
        C=C,
        alphas=tuple(alpha_at(k) for k in range(horizon)),
        betas=betas,
        gammas=gammas,
        s=tuple(s),
        s1_used=s1(s1_arg),
        s1_arg=s1_arg,
        s2_used=s2(eps / 3),
        s3_used=s3(eps / 3),
        d_value=d_value,
        phi=phi,
    )


def _classify_xu(inst: _XuInstance) -> str:
    """Premise guard, then conclusion check, all with exact rationals.

    Returns "ok", a "premise-violation: ..." tag naming the broken
    premise, or "conclusion-failure" when the premises hold but some
    s_k past phi exceeds eps.
    """
    n_steps = len(inst.s) - 1
    if any(not (0 <= a <= 1) for a in inst.alphas[:n_steps]):
        return "premise-violation: alpha range"
    if any(not (0 <= v <= inst.C) for v in inst.s):
        return "premise-violation: boundedness"
    for k in range(n_steps):
        rhs = (1 - inst.alphas[k]) * inst.s[k] + inst.alphas[k] * inst.betas[k] + inst.gammas[k]
        if inst.s[k + 1] > rhs:
            return "premise-violation: recurrence"
    prod = Fraction(1)
    for k in range(inst.s1_used + 1):
        prod *= 1 - inst.alphas[k]
    if prod > inst.s1_arg:
        return "premise-violation: product decay"
    third = inst.eps / 3
    if any(inst.betas[k] > third for k in range(inst.s2_used, n_steps)):
        return "premise-violation: beta tail"
    if any(gm < 0 for gm in inst.gammas):
        return "premise-violation: gamma sign"
    if sum(inst.gammas[inst.s3_used :], Fraction(0)) > third:
        return "premise-violation: gamma tail"
    floor_prod = Fraction(1)
    for k in range(max(inst.s2_used, inst.s3_used) + 1):
        floor_prod *= 1 - inst.alphas[k]
    if not (0 < inst.d_value <= floor_prod):
        return "premise-violation: product floor"
    if any(inst.s[k] > inst.eps for k in range(inst.phi + 1, len(inst.s))):
        return "conclusion-failure"
    return "ok"


def _spiked_xu_instance(inst: _XuInstance) -> _XuInstance:
    """Corrupt one beta past its decay threshold (guard self-test)."""
    betas = list(inst.betas)
    betas[inst.s2_used] = inst.eps + 1
    return replace(inst, betas=tuple(betas))


def simulate_lemma_recurrences(count: int, seed: int) -> bool:
    """Draw `count` random exact-rational recurrence instances per
    lemma, check the closed-form majorant and the phi-rate conclusion
    with zero slack; True iff every instance passes."""
    if count < 0:
        raise ValueError("count must be a natural number")
    rng = np.random.default_rng(int(seed))
    for _ in range(count):
        if not _check_majorant_bound(_majorant_instance(rng)):
            return False
        if _classify_xu(_xu_instance(rng)) != "ok":
            return False
    return True


# ---------------------------------------------------------------------------
# suite runner and JSON reports


@dataclass
class ReportEntry:
    """One check outcome in the JSON report."""

    check: str
    instance: str
    parameters: Dict[str, object]
    outcome: str
    witness: Optional[int]
    bound: Optional[str]
    elapsed_ms: float

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "instance": self.instance,
            "parameters": self.parameters,
            "outcome": self.outcome,
            "witness": self.witness,
            "bound": self.bound,
            "elapsed_ms": self.elapsed_ms,
        }

    @property
    def ok(self) -> bool:
        return self.outcome in ("pass", "verified")


def _bound_str(bound: RateResult) -> str:
    if isinstance(bound, Exact):
        return f"Exact {bound.value}"
    return f"BudgetExceeded lower={bound.lower_bound} steps={bound.steps_done}"


DEFAULT_EPS_GRID = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))


def _psi_for(schedule: Schedule, M: Fraction, eps: Fraction, bundle: ModuliBundle) -> int:
    if isinstance(schedule, (NaturalShifted, Classic)) and M >= 1 and eps <= Fraction(3, 2):
        return psi_closed_form(eps, M)
    return psi_rate(eps, bundle)


def _timed(fn: Callable[[], Tuple[str, Optional[int], Optional[str]]], check: str,
           instance: str, parameters: Dict[str, object]) -> ReportEntry:
    t0 = time.perf_counter()
    outcome, witness, bound = fn()
    elapsed = (time.perf_counter() - t0) * 1000.0
    return ReportEntry(
        check=check,
        instance=instance,
        parameters=parameters,
        outcome=outcome,
        witness=witness,
        bound=bound,
        elapsed_ms=elapsed,
    )


def _instance_entries(
    inst: CatalogInstance,
    schedule: Schedule,
    eps_grid: Sequence[Fraction],
    gs: Sequence[Counterfunction],
    m_max: int,
    budget: EvalBudget,
) -> List[ReportEntry]:
    entries: List[ReportEntry] = []
    bundle = ModuliBundle.from_schedule(schedule, inst.M)

    def m_bound_check():
        computed = compute_instance_bound(inst.op, inst.u, inst.x0, inst.space).M
        outcome = "pass" if computed <= inst.M else "fail"
        return outcome, None, str(computed)

    entries.append(
        _timed(m_bound_check, "m-bound-precondition", inst.name, {"M": str(inst.M)})
    )

    rates = {eps: _psi_for(schedule, inst.M, eps, bundle) for eps in eps_grid}
    N = max(rates.values(), default=0) + 32
    trace = halpern_orbit(inst.op, schedule, inst.u, inst.x0, N, inst.space)
    path = resolvent_path(inst.op, inst.u, m_max, space=inst.space)

    for eps in eps_grid:
        rate = rates[eps]

        def regularity_check(eps=eps, rate=rate):
            ok = check_asymptotic_regularity(trace, eps, rate)
            return ("pass" if ok else "fail"), None, str(rate)

        entries.append(
            _timed(
                regularity_check,
                "asymptotic-regularity",
                inst.name,
                {"eps": str(eps), "rate": rate},
            )
        )

    for eps in eps_grid[:2]:
        for g in gs:

            def meta_check(eps=eps, g=g):
                report = check_resolvent_metastability(
                    path, eps, g, inst.M, inst.space, budget
                )
                outcome = report.bound_respected
                if report.reason is not None:
                    outcome = f"{outcome} ({report.reason})"
                return outcome, report.witness_n, _bound_str(report.bound)

            entries.append(
                _timed(
                    meta_check,
                    "resolvent-metastability",
                    inst.name,
                    {"eps": str(eps), "g": render(g)},
                )
            )

    def beta_check():
        rows = beta_diagnostics(trace, path, inst.space, inst.u, inst.M)
        bad = [r for r in rows if not r.holds]
        return ("pass" if not bad else "fail"), None, f"{len(rows)} rows"

    entries.append(_timed(beta_check, "beta-diagnostics", inst.name, {}))

    start = trace.start_index
    m_near, m_far = min(4, m_max), min(16, m_max)
    spot = [
        (m_near, start + 8, start + 9),
        (m_near, start + 8, start + 72),
        (m_far, start + 128, start + 129),
        (m_far, start + 8, start + 72),
    ]
    for m, n0, n in spot:

        def descent_check(m=m, n0=n0, n=n):
            ok = check_descent_inequality(
                trace, path, schedule, m, n0, n, inst.M, Fraction(1, 2), inst.space
            )
            return ("pass" if ok else "fail"), None, None

        entries.append(
            _timed(
                descent_check,
                "descent-inequality",
                inst.name,
                {"m": m, "n0": n0, "n": n, "eps": "1/2"},
            )
        )

    return entries


def run_suite(
    instances: Sequence[CatalogInstance],
    schedule: Optional[Schedule] = None,
    eps_grid: Sequence[Fraction] = DEFAULT_EPS_GRID,
    gs: Optional[Sequence[Counterfunction]] = None,
    m_max: int = 24,
    budget: EvalBudget = DEFAULT_BUDGET,
) -> List[ReportEntry]:
    """Run every checker against every instance; instances fan out to a
    thread pool and the rows are merged in instance-name order."""
    schedule = schedule if schedule is not None else NaturalShifted()
    gs = tuple(gs) if gs is not None else (Const(2), Affine(1, 1))
    ordered = sorted(instances, key=lambda inst: inst.name)
    if not ordered:
        return []

    def worker(inst: CatalogInstance) -> List[ReportEntry]:
        return _instance_entries(inst, schedule, tuple(eps_grid), gs, m_max, budget)

    with ThreadPoolExecutor(max_workers=min(8, len(ordered))) as pool:
        blocks = list(pool.map(worker, ordered))
    return [entry for block in blocks for entry in block]


def write_report(entries: Sequence[ReportEntry], path: Union[str, Path]) -> None:
    """Serialize report rows to JSON (field order fixed; elapsed_ms is
    the only nondeterministic field)."""
    payload = [entry.as_dict() for entry in entries]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_report(path: Union[str, Path]) -> List[ReportEntry]:
    rows = json.loads(Path(path).read_text())
    return [
        ReportEntry(
            check=row["check"],
            instance=row["instance"],
            parameters=row["parameters"],
            outcome=row["outcome"],
            witness=row["witness"],
            bound=row["bound"],
            elapsed_ms=row["elapsed_ms"],
        )
        for row in rows
    ]
