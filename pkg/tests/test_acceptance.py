"""Acceptance criteria, each at its stated tolerance; one verdict line per criterion."""

import time

import numpy as np

import batches as B
from trigcons.analysis import (audit_triggers, check_bound, fit_decay,
                               weighted_lyapunov_monotone, zeno_audit)
from trigcons.engine import run_oracle
from trigcons.graph import pf_normal_form, random_strongly_connected, laplacian
from trigcons.spectral import build_constants, nonroot_constants, scc_constants, verify_inequalities


def test_ac1_golden_seven_agents(report):
    t0 = time.perf_counter()
    runs = B.golden_runs.__wrapped__()
    elapsed = (time.perf_counter() - t0) / len(runs)
    details, ok = [], True
    for r in runs:
        tr = r.trace
        lf = r.setup.lyapunov
        ts = np.linspace(0.0, tr.final_time, 2001)
        v = lf.series(tr.states_at(ts))[0].sum(axis=1)
        rate = fit_decay(ts, v, horizon=tr.final_time)
        ratio = v[-1] / v[0]
        spread = tr.final_spread()
        mins = tr.min_inter_event
        n = len(tr.events)
        good = (not r.zeno and spread < 1e-3 and ratio < 1e-4 and rate <= -0.4
                and bool(np.all(mins > 0)) and n < 10_000)
        ok &= good
        details.append(f"{tr.mode}: spread={spread:.3g} V(T)/V(0)={ratio:.3g} rate={rate:.3f} "
                       f"min_gap={mins.min():.3g} events={n}")
    ok &= elapsed < 5.0
    report("AC1 golden seven-agent run", ok, f"[{'; '.join(details)}; {elapsed:.2f}s per run]")
    assert ok


def test_ac2_spectral_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(201)
    worst = {"residual": 0.0, "r_vs_uu": np.inf, "ltl_vs_uu": np.inf, "r_vs_ltl": np.inf, "ordering": np.inf}

    def fold(c, margin):
        worst["residual"] = max(worst["residual"], float(np.abs(c.xi @ c.laplacian).max()))
        rep = verify_inequalities(c)
        worst["r_vs_uu"] = min(worst["r_vs_uu"], rep.r_vs_uu)
        worst["ltl_vs_uu"] = min(worst["ltl_vs_uu"], rep.ltl_vs_uu)
        worst["r_vs_ltl"] = min(worst["r_vs_ltl"], rep.r_vs_ltl)
        worst["ordering"] = min(worst["ordering"], margin)

    seven = B.seven_laplacian()
    sc = scc_constants(pf_normal_form(seven))
    worst["residual"] = max(worst["residual"], float(np.abs(sc.root_xi_full @ seven).max()))
    fold(sc.root, min(b.ordering_margin() for b in sc.blocks))
    for _ in range(500):
        m = int(rng.integers(2, 9))
        lap = laplacian(random_strongly_connected(m, rng))
        c = build_constants(lap)
        # the same graph as a non-root block: add a nonzero nonnegative coupling diagonal
        d = rng.uniform(0, 2, m) * (rng.random(m) < 0.5)
        d[rng.integers(m)] += rng.uniform(0.5, 2)
        fold(c, nonroot_constants(lap + np.diag(d)).ordering_margin())
    elapsed = time.perf_counter() - t0
    ok = (worst["residual"] <= 1e-10 and min(worst["r_vs_uu"], worst["ltl_vs_uu"], worst["r_vs_ltl"]) >= -1e-9
          and worst["ordering"] >= -1e-10 and elapsed < 10.0)
    report("AC2 spectral suite", ok,
           f"[residual={worst['residual']:.2e} r_vs_uu={worst['r_vs_uu']:.2e} ltl_vs_uu={worst['ltl_vs_uu']:.2e} "
           f"r_vs_ltl={worst['r_vs_ltl']:.2e} ordering={worst['ordering']:.2e} {elapsed:.2f}s]")
    assert ok


def test_ac3_oracle_equivalence(report):
    worst, zeno = 0.0, 0
    for r in B.oracle_batch():
        zeno += r.zeno
        o = run_oracle(r.scenario, r.trace, 1e-4)
        worst = max(worst, float(np.abs(r.trace.states_at(o.times) - o.states).max()))
    ok = worst <= 1e-6 and zeno == 0
    report("AC3 oracle equivalence", ok, f"[50 scenarios, max deviation {worst:.2e}, zeno={zeno}]")
    assert ok


def test_ac4_self_vs_event_triggered(report):
    gap, count_bad, zeno = 0.0, 0, 0
    for et, st in B.paired_batch():
        zeno += et.zeno + st.zeno
        if not np.array_equal(et.trace.trigger_counts, st.trace.trigger_counts):
            count_bad += 1
            continue
        for i in range(et.scenario.m):
            a, b = et.trace.event_times(i), st.trace.event_times(i)
            if a.size:
                gap = max(gap, float(np.abs(a - b).max()))
    ok = gap <= 1e-9 and count_bad == 0 and zeno == 0
    report("AC4 self/event-triggered equivalence", ok,
           f"[100 pairs, max time gap {gap:.2e}, count mismatches {count_bad}]")
    assert ok


def test_ac5_trigger_soundness(report):
    viol = late = 0
    worst_excess, worst_gap = -np.inf, 0.0
    n = 0
    for name, runs in B.all_batches().items():
        for r in runs:
            a = audit_triggers(r.trace, r.law, n_samples=10_000, tol=1e-9)
            viol += a.violations
            late += a.early_or_late
            worst_excess = max(worst_excess, a.max_excess)
            worst_gap = max(worst_gap, a.max_boundary_gap)
            n += 1
    ok = viol == 0 and late == 0
    report("AC5 trigger soundness/maximality", ok,
           f"[{n} traces, violations {viol}, off-boundary events {late}, "
           f"max excess {worst_excess:.2e}, max boundary gap {worst_gap:.2e}]")
    assert ok


def test_ac6_explicit_envelope(report):
    bad, worst_t0, post = 0, 0.0, 0
    for r in B.envelope_batch():
        tr = r.trace
        rep = check_bound(tr, r.law, r.setup.scc.root, n_samples=2000)
        good = (not r.zeno and rep.hypothesis_ok and rep.within_half_horizon(r.scenario.horizon)
                and rep.post_transient_violations == 0)
        bad += not good
        worst_t0 = max(worst_t0, rep.transient_end)
        post += rep.post_transient_violations
    ok = bad == 0
    report("AC6 explicit consensus envelope", ok,
           f"[100 scenarios, failures {bad}, latest transient end {worst_t0:.3f} (limit 10), "
           f"post-transient violations {post}]")
    assert ok


def test_ac7_lyapunov_monotonicity(report):
    worst = -np.inf
    truncated = 0
    for r in B.relative_batch():
        # a Zeno run is checked on its whole existence interval [0, accumulation time)
        truncated += r.zeno
        worst = max(worst, weighted_lyapunov_monotone(r.trace, r.law, r.setup.scc.root, n_uniform=1000))
    ok = worst <= 1e-9
    report("AC7 weighted Lyapunov monotonicity", ok,
           f"[50 scenarios, largest increase {worst:.2e}; {truncated} runs end at a Zeno accumulation point]")
    assert ok


def test_ac8_zeno_guard(report):
    zeno_by_batch = {}
    bound_bad = 0
    for name, runs in B.all_batches().items():
        zeno_by_batch[name] = sum(r.zeno for r in runs)
        for r in runs:
            if r.law.relative or r.zeno:
                continue
            if not zeno_audit(r.trace, r.law).respects_bound:
                bound_bad += 1
    total = sum(zeno_by_batch.values())
    ok = total == 0 and bound_bad == 0
    per = " ".join(f"{k}={v}" for k, v in zeno_by_batch.items())
    report("AC8 Zeno guard", ok, f"[Zeno/cap runs per batch: {per}; inter-event bound violations {bound_bad}]")
    assert total == 0, f"runs ending in Zeno accumulation (event cap would be reached): {per}"
    assert bound_bad == 0


def test_ac9_reducible_convergence(report):
    bad, worst_nu, zeno = 0, 0.0, 0
    for r in B.reducible_batch():
        zeno += r.zeno
        lf = r.setup.lyapunov
        v0 = lf.components(r.scenario.x0)
        vt = lf.components(r.trace.final_state)
        nu = lf.agreement(r.trace.final_state)
        dev = float(np.abs(r.trace.final_state - nu).max())
        worst_nu = max(worst_nu, dev)
        good = (not r.zeno and r.setup.scc.K >= 2
                and all(b < 1e-6 * a + 1e-12 for a, b in zip(v0[:-1], vt[:-1])) and dev < 1e-4)
        bad += not good
    ok = bad == 0
    report("AC9 reducible convergence", ok,
           f"[50 scenarios, failures {bad}, worst |x - nu| {worst_nu:.2e}, zeno={zeno}]")
    assert ok

