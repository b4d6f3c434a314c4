"""YAML configuration files and CSV/text artifacts.

Agent numbers are 1-based in every file; the Python API is 0-based.

Graph file::

    agents: 3
    edges:            # [src, dst, weight]: src sends to dst
      - [1, 2, 1.0]
      - [2, 3, 0.5]

or a dense block tagged ``laplacian`` or ``system_matrix`` (the ``-L``
convention), written as a YAML list of rows or a whitespace-separated text
block.

Scenario file::

    graph: seven_agents.yaml      # path relative to this file, or an inline mapping
    initial_state: [2.192, -3.699, ...]
    rule: {type: absolute_exp, beta: 0.5}
    mode: self_triggered          # or event_triggered
    horizon: 20
    consensus_tol: 1.0e-6
    event_cap: 1000000
    output: {directory: out, sample_period: 0.05}
    seed: 0
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml

from . import triggers as tr
from .dynamics import AgentRuntime, advance
from .engine import EVENT_TRIGGERED, MODES, EventRecord, Scenario, SimTrace
from .graph import Digraph, GraphError, laplacian

EVENTS_HEADER = ("time", "agent", "state", "control")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _parse_matrix(block) -> np.ndarray:
    if isinstance(block, str):
        rows = [line.split() for line in block.strip().splitlines() if line.strip()]
    else:
        rows = block
    try:
        mat = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"matrix block is not numeric: {exc}") from None
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"matrix block must be square, got {len(rows)} rows of lengths "
                          f"{sorted({len(r) for r in rows})}")
    return mat


def graph_from_mapping(data: dict) -> Digraph:
    tags = [k for k in ("edges", "laplacian", "system_matrix", "matrix") if k in data]
    if len(tags) != 1:
        raise ConfigError(f"graph needs exactly one of edges/laplacian/system_matrix/matrix, got {tags}")
    tag = tags[0]
    try:
        if tag == "edges":
            if "agents" not in data:
                raise ConfigError("edge list requires 'agents'")
            edges = []
            for e in data["edges"]:
                if len(e) != 3:
                    raise ConfigError(f"edge {e!r} must be [src, dst, weight]")
                edges.append((int(e[0]) - 1, int(e[1]) - 1, float(e[2])))
            return Digraph.from_edges(int(data["agents"]), edges)
        mat = _parse_matrix(data[tag])
        if "agents" in data and int(data["agents"]) != mat.shape[0]:
            raise ConfigError(f"'agents' = {data['agents']} but matrix is {mat.shape[0]}x{mat.shape[0]}")
        return Digraph.from_matrix(mat, kind="auto" if tag == "matrix" else tag)
    except GraphError as exc:
        raise ConfigError(str(exc)) from None


def _load_yaml(path: Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_graph(path) -> Digraph:
    """Graph file, or the graph referenced by a scenario file."""
    path = Path(path)
    data = _load_yaml(path)
    if "graph" in data:
        return _resolve_graph(data["graph"], path.parent)
    return graph_from_mapping(data)


def _resolve_graph(ref, base: Path) -> Digraph:
    if isinstance(ref, str):
        return load_graph(base / ref)
    if isinstance(ref, dict):
        return graph_from_mapping(ref)
    raise ConfigError("'graph' must be a file path or a mapping")


def _num(d: dict, key: str, default=None, required: bool = False) -> float | None:
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"rule parameter '{key}' is required")
        return default
    try:
        return float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"rule parameter '{key}' must be a number, got {d[key]!r}") from None


def parse_weight(d) -> tr.MuFamily:
    if not isinstance(d, dict):
        raise ConfigError("weight 'mu' must be a mapping with 'family'")
    family = d.get("family", "exponential")
    try:
        if family == "exponential":
            return tr.ExponentialWeight(_num(d, "beta", required=True))
        if family == "polynomial":
            return tr.PolynomialWeight(_num(d, "p", required=True))
    except tr.HypothesisError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown weight family {family!r}")


def parse_rule(d) -> tr.TriggerRule:
    """Rule block; ``type`` is one of relative_lyapunov, relative_constant,
    absolute_decaying, absolute_exp."""
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("rule must be a mapping with a 'type'")
    kind = d["type"]
    if kind == "relative_lyapunov":
        mu = parse_weight(d["mu"]) if "mu" in d else None
        return tr.RelativeLyapunov(a=_num(d, "a"), beta=_num(d, "beta", 0.0), mu=mu)
    if kind == "relative_constant":
        return tr.RelativeConstant(c=_num(d, "c", required=True))
    if kind == "absolute_decaying":
        mu = parse_weight(d.get("mu", {"family": "exponential", "beta": d.get("beta")}))
        return tr.AbsoluteDecaying(mu=mu, a=_num(d, "a"))
    if kind == "absolute_exp":
        return tr.AbsoluteExp(beta=_num(d, "beta", 0.5), a=_num(d, "a"),
                              phi=_num(d, "phi"), alpha=_num(d, "alpha"))
    raise ConfigError(f"unknown rule type {kind!r}")


def rule_to_mapping(rule: tr.TriggerRule) -> dict:
    def weight(mu):
        if isinstance(mu, tr.ExponentialWeight):
            return {"family": "exponential", "beta": mu.beta}
        return {"family": "polynomial", "p": mu.p}

    if isinstance(rule, tr.RelativeLyapunov):
        out = {"type": "relative_lyapunov", "a": rule.a, "beta": rule.beta}
        if rule.mu is not None:
            out["mu"] = weight(rule.mu)
    elif isinstance(rule, tr.RelativeConstant):
        out = {"type": "relative_constant", "c": rule.c}
    elif isinstance(rule, tr.AbsoluteDecaying):
        out = {"type": "absolute_decaying", "mu": weight(rule.mu), "a": rule.a}
    else:
        out = {"type": "absolute_exp", "beta": rule.beta, "a": rule.a, "phi": rule.phi, "alpha": rule.alpha}
    return {k: v for k, v in out.items() if v is not None}


@dataclass
class Config:
    scenario: Scenario
    output_dir: Path
    sample_period: float
    seed: int
    source: Path | None = None


def load_config(path, mode: str | None = None, seed: int | None = None,
                out: str | None = None, sample_period: float | None = None) -> Config:
    path = Path(path)
    data = _load_yaml(path)
    if "graph" not in data:
        raise ConfigError(f"{path}: scenario needs a 'graph'")
    graph = _resolve_graph(data["graph"], path.parent)
    lap = laplacian(graph)
    seed = int(data.get("seed", 0)) if seed is None else seed
    x0 = data.get("initial_state")
    if x0 is None:
        x0 = np.random.default_rng(seed).uniform(-5, 5, graph.m)
    try:
        x0 = np.array([float(v) for v in x0])
    except (TypeError, ValueError):
        raise ConfigError("initial_state must be a list of numbers") from None
    if x0.shape != (graph.m,):
        raise ConfigError(f"initial_state has {x0.size} entries, graph has {graph.m} agents")
    output = data.get("output") or {}
    try:
        horizon = float(data.get("horizon", 20.0))
        tol = float(data.get("consensus_tol", 1e-6))
        cap = int(float(data.get("event_cap", 10**6)))
        period = float(sample_period if sample_period is not None else output.get("sample_period", 0.05))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"numeric field malformed: {exc}") from None
    mode = mode or data.get("mode", EVENT_TRIGGERED)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if not period > 0:
        raise ConfigError("sample_period must be positive")
    try:
        scenario = Scenario(lap, x0, parse_rule(data.get("rule")), mode=mode, horizon=horizon,
                            consensus_tol=tol, event_cap=cap, name=path.stem)
    except GraphError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    out_dir = Path(out) if out else path.parent / output.get("directory", "out")
    return Config(scenario, out_dir, period, seed, path)


# -- artifacts ------------------------------------------------------------------

def write_events(path, events: Iterable[EventRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENTS_HEADER)
        for e in events:
            w.writerow([fmt(e.time), e.agent + 1, fmt(e.state), fmt(e.control)])


def read_events(path) -> list[EventRecord]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if tuple(header or ()) != EVENTS_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(EVENTS_HEADER)}")
        return [EventRecord(float(t), int(a) - 1, float(x), float(u)) for t, a, x, u in r]


def write_trace(path, times: np.ndarray, states: np.ndarray, v: np.ndarray) -> None:
    m = states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"x{i + 1}" for i in range(m)] + ["V"])
        for t, row, vv in zip(times, states, v):
            w.writerow([fmt(t)] + [fmt(x) for x in row] + [fmt(vv)])


def write_summary(path, items: dict[str, Any]) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(fmt(x) if isinstance(x, (float, np.floating)) else str(x) for x in v)
        elif isinstance(v, (float, np.floating)):
            v = fmt(v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def trace_from_events(s: Scenario, events: list[EventRecord], final_time: float | None = None) -> SimTrace:
    """Rebuild a trace from an event log.

    Without ``final_time`` the run is taken to have stopped at the last event
    if the spread there is below the consensus tolerance, else at the horizon.
    """
    if not events:
        raise ConfigError("event log is empty")
    t_last = max(e.time for e in events)
    trace = SimTrace(s.laplacian, s.x0.copy(), events, t_last, "replay", s.mode)
    if final_time is None:
        final_time = t_last if trace.final_spread() < s.consensus_tol else s.horizon
    return SimTrace(s.laplacian, s.x0.copy(), events, final_time, "replay", s.mode)


def final_state_from_events(events: list[EventRecord], m: int, final_time: float) -> np.ndarray:
    """Advance every agent's latest broadcast to ``final_time``."""
    latest: dict[int, EventRecord] = {}
    for e in events:
        latest[e.agent] = e
    agents = [AgentRuntime(i, latest[i].time, latest[i].state, latest[i].control) for i in range(m)]
    t_from = max(e.time for e in latest.values())
    return advance(agents, t_from, final_time)


def finite_or_none(v: float):
    return v if math.isfinite(v) else None
