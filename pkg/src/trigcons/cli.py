"""Command-line entry point: ``trigcons {run,constants,compare,analyze}``.

Exit codes: 0 success, 1 comparison failure, 2 usage error, 3 configuration
error, 4 hypothesis violation, 5 suspected Zeno behaviour.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfg
from .analysis import DecayFitError, check_bound, fit_decay, sample_times, zeno_audit
from .engine import EVENT_TRIGGERED, MODES, SELF_TRIGGERED, Scenario, ZenoSuspect, prepare, run
from .graph import (GraphError, NoSpanningTreeError, StructuralError, laplacian, pf_normal_form,
                    random_strongly_connected)
from .spectral import SpectralError, build_constants, scc_constants
from .triggers import AbsoluteExp, HypothesisError

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_CONFIG = 3
EXIT_HYPOTHESIS = 4
EXIT_ZENO = 5

COMPARE_TOL = 1e-9


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _summary_items(s: Scenario, trace, setup, times, v) -> dict:
    items = {
        "scenario": s.name or "-",
        "mode": trace.mode,
        "rule": setup.law.name,
        "agents": s.m,
        "termination": trace.termination,
        "final_time": trace.final_time,
        "total_events": len(trace.events),
        "trigger_counts": [int(k) for k in trace.trigger_counts],
        "min_inter_event": [float(x) for x in trace.min_inter_event],
        "final_spread": trace.final_spread(),
        "V0": float(v[0]),
        "VT": float(v[-1]),
    }
    try:
        items["decay_rate"] = fit_decay(times, v, horizon=trace.final_time)
    except DecayFitError:
        items["decay_rate"] = "undefined"
    return items


def _write_artifacts(out: Path, s: Scenario, trace, setup, period: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_events(out / "events.csv", trace.events)
    t = sample_times(trace, period=period)
    x = trace.states_at(t)
    v = setup.lyapunov.series(x)[0].sum(axis=1)
    cfg.write_trace(out / "trace.csv", t, x, v)
    items = _summary_items(s, trace, setup, t, v)
    cfg.write_summary(out / "summary.txt", items)
    return items


def cmd_run(args) -> int:
    conf = cfg.load_config(args.config, mode=args.mode, seed=args.seed, out=args.out,
                           sample_period=args.sample_period)
    s = conf.scenario
    setup = prepare(s)
    try:
        trace = run(s, setup)
    except ZenoSuspect as exc:
        _write_artifacts(conf.output_dir, s, exc.trace, setup, conf.sample_period)
        raise
    items = _write_artifacts(conf.output_dir, s, trace, setup, conf.sample_period)
    for k in ("termination", "total_events", "final_spread", "decay_rate"):
        v = items[k]
        print(f"{k} = {cfg.fmt(v) if isinstance(v, float) else v}")
    print(f"artifacts written to {conf.output_dir}")
    return EXIT_OK


def _constants_rows(lap: np.ndarray) -> list[tuple[str, str]]:
    pf = pf_normal_form(lap)
    scc = scc_constants(pf)
    rows = [("agents", str(lap.shape[0])), ("K", str(scc.K)),
            ("block_sizes", " ".join(str(n) for n in pf.block_sizes)),
            ("permutation", " ".join(str(p + 1) for p in pf.permutation))]
    if scc.K == 1:
        c = build_constants(lap)
        rows += [("xi", " ".join(cfg.fmt(v) for v in c.xi)),
                 ("lambda2", cfg.fmt(c.lambda2)), ("mu_m", cfg.fmt(c.mu_m)),
                 ("gamma2", cfg.fmt(c.gamma2)), ("rho_LtL", cfg.fmt(c.rho_LtL))]
    else:
        rows.append(("root_members", " ".join(str(i + 1) for i in scc.root_members)))
        rows.append(("root_xi", " ".join(cfg.fmt(v) for v in scc.root.xi)))
        for b in scc.blocks:
            k = b.index + 1
            rows.append((f"scc{k}_members", " ".join(str(i + 1) for i in b.members)))
            rows.append((f"scc{k}_xi", " ".join(cfg.fmt(v) for v in b.xi)))
            rows.append((f"scc{k}_rho2_Q", cfg.fmt(b.rho2_Q)))
            rows.append((f"scc{k}_ordering_margin", cfg.fmt(b.ordering_margin())))
        root = scc.root
        if root.m >= 2:
            rows += [("root_lambda2", cfg.fmt(root.lambda2)), ("root_mu_m", cfg.fmt(root.mu_m)),
                     ("root_gamma2", cfg.fmt(root.gamma2)), ("root_rho_LtL", cfg.fmt(root.rho_LtL))]
    return rows


def cmd_constants(args) -> int:
    lap = laplacian(cfg.load_graph(args.config))
    rows = _constants_rows(lap)
    for k, v in rows:
        print(f"{k} = {v}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "value"])
            w.writerows(rows)
    return EXIT_OK


def compare_pair(s: Scenario) -> tuple[float, int]:
    """Largest trigger-time discrepancy and total count difference between modes."""
    setup = prepare(s)
    et = run(Scenario(s.laplacian, s.x0, s.rule, EVENT_TRIGGERED, s.horizon, s.consensus_tol, s.event_cap), setup)
    st = run(Scenario(s.laplacian, s.x0, s.rule, SELF_TRIGGERED, s.horizon, s.consensus_tol, s.event_cap), setup)
    count_diff = int(np.abs(et.trigger_counts - st.trigger_counts).sum())
    gap = 0.0
    for i in range(s.m):
        a, b = et.event_times(i), st.event_times(i)
        n = min(len(a), len(b))
        if n:
            gap = max(gap, float(np.abs(a[:n] - b[:n]).max()))
    return gap, count_diff


def random_scenario(rng: np.random.Generator, m_range=(2, 8), beta=0.5, horizon=20.0) -> Scenario:
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    g = random_strongly_connected(m, rng)
    return Scenario(laplacian(g), rng.uniform(-5, 5, m), AbsoluteExp(beta), horizon=horizon)


def cmd_compare(args) -> int:
    if args.batch:
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        scenarios = [random_scenario(rng) for _ in range(args.batch)]
        for k, sc in enumerate(scenarios):
            sc.name = f"random{k + 1}"
    else:
        if not args.config:
            raise cfg.ConfigError("compare needs --config or --batch")
        scenarios = [cfg.load_config(args.config, seed=args.seed).scenario]
    failures = 0
    for sc in scenarios:
        if not isinstance(sc.rule, AbsoluteExp):
            raise HypothesisError("compare requires the AbsoluteExp rule")
        gap, dc = compare_pair(sc)
        ok = gap <= COMPARE_TOL and dc == 0
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {sc.name or '-'} max_time_gap={cfg.fmt(gap)} count_diff={dc}")
    return EXIT_OK if failures == 0 else EXIT_COMPARE_FAIL


def cmd_analyze(args) -> int:
    conf = cfg.load_config(args.config, mode=args.mode, seed=args.seed, out=args.out,
                           sample_period=args.sample_period)
    s = conf.scenario
    setup = prepare(s)
    events_path = Path(args.events) if args.events else conf.output_dir / "events.csv"
    events = cfg.read_events(events_path)
    final_time = None
    summ = events_path.parent / "summary.txt"
    if summ.exists():
        final_time = float(cfg.read_summary(summ).get("final_time", "nan"))
        if not np.isfinite(final_time):
            final_time = None
    trace = cfg.trace_from_events(s, events, final_time)
    law = setup.law
    out = conf.output_dir
    out.mkdir(parents=True, exist_ok=True)
    items = {"total_events": len(trace.events), "final_time": trace.final_time,
             "final_spread": trace.final_spread()}
    if setup.strongly_connected and s.m >= 2:
        rep = check_bound(trace, law, setup.scc.root)
        items["envelope_checked"] = rep.hypothesis_ok
        if rep.hypothesis_ok:
            items.update(transient_end=rep.transient_end, post_transient_violations=rep.post_transient_violations,
                         derivative_violations=rep.derivative_violations, decay_rate=rep.decay_rate)
            with open(out / "bound_report.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time"] + [f"dev{i + 1}" for i in range(s.m)] + [f"env{i + 1}" for i in range(s.m)])
                for t, d, e in zip(rep.times, rep.deviation, rep.envelope):
                    w.writerow([cfg.fmt(t)] + [cfg.fmt(v) for v in d] + [cfg.fmt(v) for v in e])
        else:
            items["envelope_reason"] = rep.reason
    else:
        items["envelope_checked"] = False
        items["envelope_reason"] = "reducible graph: no explicit envelope"
    z = zeno_audit(trace, law)
    items["min_inter_event"] = [float(v) for v in z.min_inter_event]
    if z.lower_bound is not None:
        items["inter_event_lower_bound"] = [float(v) for v in z.lower_bound]
    items["zeno_bound_respected"] = z.respects_bound
    cfg.write_summary(out / "analysis.txt", items)
    for k, v in items.items():
        if not isinstance(v, list):
            print(f"{k} = {cfg.fmt(v) if isinstance(v, float) else v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trigcons", description="Event- and self-triggered consensus simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="scenario (or graph) YAML file")
        sp.add_argument("--seed", type=int, default=None, help="seed for generated data")

    r = sub.add_parser("run", help="simulate a scenario and write events.csv, trace.csv, summary.txt")
    common(r)
    r.add_argument("--out", help="output directory")
    r.add_argument("--sample-period", type=float, help="sampling period of trace.csv")
    r.add_argument("--mode", choices=MODES, help="override the scenario mode")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("constants", help="print spectral constants of a graph")
    common(c)
    c.add_argument("--csv", help="also write the report as CSV")
    c.set_defaults(func=cmd_constants)

    m = sub.add_parser("compare", help="paired event/self-triggered runs")
    common(m, config_required=False)
    m.add_argument("--batch", type=int, default=0, help="run N seeded random scenarios instead")
    m.set_defaults(func=cmd_compare)

    a = sub.add_parser("analyze", help="bound and inter-event report from an event log")
    common(a)
    a.add_argument("--events", help="events.csv (default: <out>/events.csv)")
    a.add_argument("--out", help="output directory")
    a.add_argument("--sample-period", type=float)
    a.add_argument("--mode", choices=MODES)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except ZenoSuspect as exc:
        _err(f"Zeno suspected: {exc}")
        return EXIT_ZENO
    except (HypothesisError, NoSpanningTreeError, StructuralError, SpectralError) as exc:
        _err(f"hypothesis violated: {exc}")
        return EXIT_HYPOTHESIS
    except (cfg.ConfigError, GraphError, OSError) as exc:
        _err(f"configuration: {exc}")
        return EXIT_CONFIG
    print(f"elapsed = {time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
