"""Brute-force verification layer: window scans against an independent
reference, inequality checkers on real and corrupted traces, exact
lemma simulations, and the suite/report plumbing."""

import json
from dataclasses import replace
from fractions import Fraction as F

import numpy as np
import pytest

from halpern.catalog import catalog_instances
from halpern.counterfunction import Affine, Const, Identity, Table
from halpern.geometry import Space, Vector
from halpern.iteration import (
    HalpernTrace,
    ResolventPath,
    halpern_orbit,
    resolvent_path,
)
from halpern.operators import AffineContractive, Rotation, compute_instance_bound
from halpern.rates import EvalBudget, Exact, ModuliBundle, lemma_ineq_bound, sigma_rate
from halpern.schedules import Classic, Custom, NaturalShifted
from halpern.verify import (
    DiagnosticRow,
    MetastabilityReport,
    ReportEntry,
    _check_majorant_bound,
    _classify_xu,
    _majorant_instance,
    _spiked_xu_instance,
    _xu_instance,
    beta_diagnostics,
    brute_force_metastability,
    check_asymptotic_regularity,
    check_descent_inequality,
    check_resolvent_metastability,
    read_report,
    run_suite,
    simulate_lemma_recurrences,
    write_report,
)

RNG_SEED = 20240817


def _negation_op():
    return AffineContractive(
        matrix=[[-1.0]], offset=Vector([0.0]), known_fixed_point=Vector([0.0])
    )


def _identity_op(dim=2):
    return Rotation(0.0) if dim == 2 else AffineContractive(
        matrix=np.eye(dim), offset=Vector([0.0] * dim),
        known_fixed_point=Vector([0.0] * dim),
    )


def _rotation_setup(N=1024, m_max=25):
    inst = {i.name: i for i in catalog_instances()}["rotation-pi-3"]
    sched = NaturalShifted()
    trace = halpern_orbit(inst.op, sched, inst.u, inst.x0, N, inst.space)
    path = resolvent_path(inst.op, inst.u, m_max, space=inst.space)
    return inst, sched, trace, path


def _reference_scan(points, eps, g, p=None):
    """Quadratic-scan reference: full pairwise distance matrix, then a
    linear pass over window starts.  Kept free of the library's norm
    helpers on purpose."""
    arrs = np.stack([pt.coords for pt in points])
    diffs = arrs[:, None, :] - arrs[None, :, :]
    if p is None:
        dist = np.sqrt((diffs**2).sum(axis=2))
    else:
        dist = (np.abs(diffs) ** p).sum(axis=2) ** (1.0 / p)
    length = len(points)
    for n in range(length):
        hi = n + int(g(n))
        if hi >= length:
            continue
        if dist[n : hi + 1, n : hi + 1].max() <= float(eps):
            return n
    return None


class TestBruteForceMetastability:
    def test_constant_sequence_witness_zero(self):
        points = [Vector([3.0, 4.0])] * 5
        assert brute_force_metastability(points, F(1, 100), Identity()) == 0

    def test_harmonic_trace_hand_windows(self):
        # x_n = 1/(n+1), eps = 1/2, g(n) = n+2: n=0 spans [1, 1/3]
        # (spread 2/3, fails); n=1 spans [1/2, 1/5] (spread 3/10, passes)
        points = [Vector([1.0 / (n + 1)]) for n in range(12)]
        assert brute_force_metastability(points, F(1, 2), Affine(1, 2)) == 1

    def test_no_fitting_window_returns_none(self):
        points = [Vector([0.0]), Vector([9.0])]
        assert brute_force_metastability(points, F(1), Const(5)) is None

    def test_scan_skips_windows_that_overrun_the_trace(self):
        # g huge at n=0 but tiny later: the scan must not give up early
        g = Table(entries=(99, 0, 0), default=Const(0))
        points = [Vector([0.0]), Vector([5.0]), Vector([5.0])]
        assert brute_force_metastability(points, F(1, 2), g) == 1

    def test_empty_points_rejected(self):
        with pytest.raises(ValueError):
            brute_force_metastability([], F(1), Const(0))

    def test_oracle_equivalence_random_traces(self):
        rng = np.random.default_rng(RNG_SEED)
        gs = [Const(0), Const(2), Const(4), Identity(), Affine(1, 1), Affine(2, 1)]
        for trial in range(60):
            dim = int(rng.integers(1, 4))
            length = int(rng.integers(1, 41))
            steps = rng.normal(size=(length, dim))
            steps /= np.arange(1, length + 1)[:, None] ** 1.5
            points = [Vector(p) for p in np.cumsum(steps, axis=0)]
            eps = F(int(rng.integers(1, 9)), 4)
            g = gs[trial % len(gs)]
            assert brute_force_metastability(points, eps, g) == _reference_scan(
                points, eps, g
            )

    def test_oracle_equivalence_lp_norm(self):
        rng = np.random.default_rng(RNG_SEED + 1)
        space = Space.lp(3, 4)
        for _ in range(20):
            steps = rng.normal(size=(24, 3)) / np.arange(1, 25)[:, None] ** 1.5
            points = [Vector(p) for p in np.cumsum(steps, axis=0)]
            eps = F(int(rng.integers(1, 9)), 4)
            assert brute_force_metastability(
                points, eps, Const(3), space
            ) == _reference_scan(points, eps, Const(3), p=4)


class TestAsymptoticRegularity:
    def test_identity_trace_rate_zero(self):
        op = _identity_op()
        u = Vector([1.0, 0.0])
        trace = halpern_orbit(op, NaturalShifted(), u, u, 20)
        assert check_asymptotic_regularity(trace, F(1, 1000), 0) is True

    def test_rotation_closed_form_rate_holds(self):
        inst, sched, trace, _path = _rotation_setup(N=616, m_max=1)
        assert check_asymptotic_regularity(trace, F(1, 2), 576) is True

    def test_rate_zero_with_tiny_eps_fails(self):
        _inst, _sched, trace, _path = _rotation_setup(N=64, m_max=1)
        assert check_asymptotic_regularity(trace, F(1, 1000), 0) is False

    def test_trace_too_short_raises(self):
        _inst, _sched, trace, _path = _rotation_setup(N=64, m_max=1)
        with pytest.raises(ValueError, match="trace too short"):
            check_asymptotic_regularity(trace, F(1, 2), 1000)

    def test_classic_start_index_is_respected(self):
        op = _identity_op()
        u = Vector([1.0, 0.0])
        trace = halpern_orbit(op, Classic(), u, u, 10)
        assert trace.start_index == 1
        assert check_asymptotic_regularity(trace, F(1, 100), 0) is True

    def test_negative_rate_rejected(self):
        _inst, _sched, trace, _path = _rotation_setup(N=16, m_max=1)
        with pytest.raises(ValueError):
            check_asymptotic_regularity(trace, F(1, 2), -1)


class TestResolventMetastability:
    def test_identity_path_first_index_witness(self):
        path = resolvent_path(_identity_op(), Vector([1.0, 0.0]), 8)
        for g in [Const(0), Const(2), Identity()]:
            report = check_resolvent_metastability(path, F(1, 2), g, F(2))
            assert report.witness_n == 1
            assert report.bound_respected == "verified"

    def test_negation_path_hand_windows(self):
        # z_{1/m} = 1/(2m-1): window at list index 1 spans {1/3, 1/5, 1/7}
        # with spread 4/21 <= 1/4; the bound iterates max(., 2) to 2
        path = resolvent_path(_negation_op(), Vector([1.0]), 12, space=Space.hilbert(1))
        report = check_resolvent_metastability(path, F(1, 4), Const(2), F(2))
        assert report.witness_n == 2
        assert report.bound == Exact(2)
        assert report.bound_respected == "verified"

    def test_single_entry_path_not_comparable(self):
        path = resolvent_path(_identity_op(), Vector([1.0, 0.0]), 1)
        report = check_resolvent_metastability(path, F(1, 2), Const(5), F(2))
        assert report.witness_n is None
        assert report.bound_respected == "not-comparable"
        assert report.reason == "path too short"

    def test_budget_exhaustion_not_comparable(self):
        path = resolvent_path(_identity_op(), Vector([1.0, 0.0]), 8)
        report = check_resolvent_metastability(
            path, F(1, 4), Const(2), F(2), budget=EvalBudget(max_steps=5)
        )
        assert report.bound_respected == "not-comparable"
        assert report.reason == "budget"
        assert report.witness_n == 1

    def test_oscillating_path_flags_violation(self):
        values = [0.0, 9.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0]
        entries = tuple((m + 1, Vector([v]), 0.0) for m, v in enumerate(values))
        path = ResolventPath(entries=entries, u=Vector([1.0]), tol=1e-10)
        report = check_resolvent_metastability(path, F(1, 2), Const(1), F(1))
        assert report.bound == Exact(1)
        assert report.witness_n == 5
        assert report.bound_respected == "violated"

    def test_rotation_path_verified_on_grid(self):
        inst, _sched, _trace, path = _rotation_setup(N=8, m_max=25)
        for eps in [F(1, 2), F(1, 4)]:
            for g in [Const(2), Affine(1, 1)]:
                report = check_resolvent_metastability(
                    path, eps, g, inst.M, inst.space
                )
                assert report.bound_respected == "verified", (eps, report)

    def test_report_records_inputs(self):
        path = resolvent_path(_identity_op(), Vector([1.0, 0.0]), 4)
        report = check_resolvent_metastability(path, F(1, 3), Const(1), F(2))
        assert report.eps == F(1, 3)
        assert report.g_id == "const 1"


class TestBetaDiagnostics:
    def test_identity_operator_rows_hold(self):
        op = _identity_op()
        u = Vector([1.0, 0.0])
        trace = halpern_orbit(op, NaturalShifted(), u, u, 16)
        path = resolvent_path(op, u, 4)
        rows = beta_diagnostics(trace, path, Space.hilbert(2), u, F(2))
        assert rows and all(r.holds for r in rows)
        assert all(r.beta <= 0 for r in rows)

    def test_rotation_sampled_grid_holds(self):
        inst, _sched, trace, path = _rotation_setup()
        rows = beta_diagnostics(
            trace, path, inst.space, inst.u, inst.M, ns=[10, 100, 1000], ms=[1, 5, 25]
        )
        assert len(rows) == 9
        assert all(r.holds for r in rows)

    def test_corrupted_residual_detected(self):
        # a far-away iterate with its residual zeroed out makes beta
        # positive while the right side collapses to 0
        sched = NaturalShifted()
        u = Vector([1.0])
        path = resolvent_path(_negation_op(), u, 4, space=Space.hilbert(1))
        fake = HalpernTrace(
            points=tuple(Vector([5.0]) for _ in range(6)),
            residuals=tuple(0.0 for _ in range(6)),
            alphas=tuple(sched.alpha(n) for n in range(5)),
            schedule_id=sched.label(),
            u=u,
            x0=Vector([5.0]),
            N=5,
        )
        rows = beta_diagnostics(fake, path, Space.hilbert(1), u, F(2), ns=[2], ms=[2])
        assert rows == [
            DiagnosticRow(n=2, m=2, beta=rows[0].beta, rhs=0.0, holds=False)
        ]
        assert rows[0].beta > 0

    def test_default_grids_cover_endpoints(self):
        inst, _sched, trace, path = _rotation_setup(N=64, m_max=8)
        rows = beta_diagnostics(trace, path, inst.space, inst.u, inst.M)
        ns = {r.n for r in rows}
        ms = {r.m for r in rows}
        assert {0, 64} <= ns
        assert {1, 8} <= ms

    def test_out_of_range_indices_rejected(self):
        inst, _sched, trace, path = _rotation_setup(N=16, m_max=4)
        with pytest.raises(ValueError):
            beta_diagnostics(trace, path, inst.space, inst.u, inst.M, ns=[99], ms=[1])
        with pytest.raises(ValueError):
            beta_diagnostics(trace, path, inst.space, inst.u, inst.M, ns=[1], ms=[9])


class TestDescentInequality:
    def test_identity_instance_trivially_true(self):
        op = _identity_op()
        u = Vector([1.0, 0.0])
        trace = halpern_orbit(op, NaturalShifted(), u, u, 12)
        path = resolvent_path(op, u, 4)
        assert check_descent_inequality(
            trace, path, NaturalShifted(), 2, 4, 5, F(2), F(1, 2)
        )

    def test_rotation_spot_grid_holds(self):
        inst, sched, trace, path = _rotation_setup(N=640, m_max=25)
        grid = [(4, 8, 9), (4, 8, 72), (16, 128, 129), (16, 8, 72), (25, 500, 600)]
        for m, n0, n in grid:
            assert check_descent_inequality(
                trace, path, sched, m, n0, n, inst.M, F(1, 2), inst.space
            ), (m, n0, n)

    def test_corrupted_trace_detected(self):
        inst, sched, trace, path = _rotation_setup(N=200, m_max=8)
        points = list(trace.points)
        points[9] = Vector([10.0, 10.0])
        bad = replace(trace, points=tuple(points))
        assert not check_descent_inequality(
            bad, path, sched, 4, 8, 9, inst.M, F(1, 2), inst.space
        )

    def test_index_validation(self):
        inst, sched, trace, path = _rotation_setup(N=32, m_max=4)
        with pytest.raises(ValueError):
            check_descent_inequality(trace, path, sched, 4, 9, 9, inst.M, F(1, 2))
        with pytest.raises(ValueError):
            check_descent_inequality(trace, path, sched, 9, 8, 9, inst.M, F(1, 2))
        with pytest.raises(ValueError):
            check_descent_inequality(trace, path, sched, 4, 8, 99, inst.M, F(1, 2))


class TestLemmaSimulations:
    def test_vacuous_count(self):
        assert simulate_lemma_recurrences(0, 0) is True

    def test_thousand_instances(self):
        assert simulate_lemma_recurrences(1000, 42) is True

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            simulate_lemma_recurrences(-1, 0)

    def test_instances_are_deterministic_per_seed(self):
        a = _xu_instance(np.random.default_rng(11))
        b = _xu_instance(np.random.default_rng(11))
        assert a == b
        c = _majorant_instance(np.random.default_rng(11))
        d = _majorant_instance(np.random.default_rng(11))
        assert c == d

    def test_premise_guard_flags_spiked_beta(self):
        inst = _xu_instance(np.random.default_rng(123))
        assert _classify_xu(inst) == "ok"
        spiked = _spiked_xu_instance(inst)
        assert _classify_xu(spiked) == "premise-violation: beta tail"

    def test_majorant_bound_tight_when_beta_equals_cap(self):
        # with beta identically C and gamma = 0 the closed form is an
        # exact identity; positive gamma makes it a strict majorant
        # (early gamma is damped by later products in the recurrence
        # but added undamped in the bound)
        alphas = tuple(F(1, 2) for _ in range(6))
        C = F(3)
        sched = Custom(table=list(enumerate(alphas)))
        zeros = [F(0)] * 6
        s = [F(1)]
        for k in range(6):
            s.append((1 - alphas[k]) * s[k] + alphas[k] * C)
        for n in range(6):
            assert s[n + 1] == lemma_ineq_bound(0, n, s[0], sched, C, zeros)
        gammas = [F(1, 8)] * 6
        t = [F(1)]
        for k in range(6):
            t.append((1 - alphas[k]) * t[k] + alphas[k] * C + gammas[k])
        assert t[2] < lemma_ineq_bound(0, 1, t[0], sched, C, gammas)


class TestSigmaDomination:
    def test_small_certificates_dominate_orbit_witnesses(self):
        # instance sized so the computed bound M is exactly 1, matching
        # the small full-pipeline certificate configurations
        op = Rotation(np.pi / 3)
        u, x0 = Vector([0.5, 0.0]), Vector([0.0, 0.5])
        assert compute_instance_bound(op, u, x0).M == 1
        bundle = ModuliBundle.from_schedule(NaturalShifted(), 1)
        trace = halpern_orbit(op, NaturalShifted(), u, x0, 64)
        for eps, value in [(F(12), 47), (F(6), 2399)]:
            cert = sigma_rate(eps, Const(0), bundle)
            assert cert == Exact(value)
            witness = brute_force_metastability(list(trace.points), eps, Const(0))
            assert witness is not None and witness <= value


class TestSuiteAndReports:
    def test_catalog_suite_all_green(self):
        entries = run_suite(catalog_instances())
        assert len(entries) == 52
        assert all(e.ok for e in entries), [e for e in entries if not e.ok]

    def test_rows_merge_in_instance_name_order(self):
        entries = run_suite(catalog_instances())
        names = [e.instance for e in entries]
        assert names == sorted(names, key=lambda n: names.index(n))
        blocks = sorted(set(names))
        seen = [n for i, n in enumerate(names) if n not in names[:i]]
        assert seen == blocks

    def test_undersized_m_fails_the_precondition_row(self):
        inst = {i.name: i for i in catalog_instances()}["rotation-pi-3"]
        entries = run_suite([replace(inst, M=F(1))])
        row = next(e for e in entries if e.check == "m-bound-precondition")
        assert row.outcome == "fail"
        assert row.bound == "2"

    def test_empty_instance_list(self):
        assert run_suite([]) == []

    def test_json_report_round_trip(self, tmp_path):
        entries = run_suite(catalog_instances()[:1], m_max=8)
        target = tmp_path / "report.json"
        write_report(entries, target)
        raw = json.loads(target.read_text())
        assert [list(row.keys()) for row in raw] == [
            ["check", "instance", "parameters", "outcome", "witness", "bound", "elapsed_ms"]
        ] * len(entries)
        loaded = read_report(target)
        assert [e.as_dict() for e in loaded] == [e.as_dict() for e in entries]

    def test_report_entry_ok_semantics(self):
        good = ReportEntry("c", "i", {}, "verified", None, None, 0.0)
        bad = ReportEntry("c", "i", {}, "not-comparable (budget)", None, None, 0.0)
        assert good.ok and not bad.ok
