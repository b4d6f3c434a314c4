"""Discrete-event simulation of the triggered network.

Two information models share one event loop:

* ``event_triggered``: an agent evaluates its measurement from the true
  in-neighbour states (continuous monitoring);
* ``self_triggered``: an agent only knows the broadcasts it received and
  extrapolates them; it re-plans whenever a new broadcast arrives.

Each agent has one candidate trigger time in a heap. When agent ``i`` fires,
its own candidate and those of its out-neighbours are recomputed, since their
measurements change slope.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .analysis import LyapunovFunction
from .dynamics import AgentRuntime, NeighborSnapshot, predict_q
from .graph import check_laplacian, has_spanning_tree, laplacian_digraph, pf_normal_form
from .spectral import SccConstants, scc_constants
from .triggers import AbsoluteExp, HypothesisError, TriggerLaw, TriggerRule, next_crossing, validate

EVENT_TRIGGERED = "event_triggered"
SELF_TRIGGERED = "self_triggered"
MODES = (EVENT_TRIGGERED, SELF_TRIGGERED)
SIMULTANEITY_TOL = 1e-12


class ZenoSuspect(RuntimeError):
    """The run produced a zero inter-event time or hit the event cap."""

    def __init__(self, message: str, trace: "SimTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class Scenario:
    laplacian: np.ndarray
    x0: np.ndarray
    rule: TriggerRule
    mode: str = EVENT_TRIGGERED
    horizon: float = 20.0
    consensus_tol: float = 1e-6
    event_cap: int = 10**6
    name: str = ""

    def __post_init__(self):
        self.laplacian = check_laplacian(self.laplacian)
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        m = self.laplacian.shape[0]
        if self.x0.shape != (m,):
            raise ValueError(f"initial state has {self.x0.size} entries, graph has {m} agents")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.event_cap < m:
            raise ValueError(f"event_cap {self.event_cap} is below the {m} initial triggers")

    @property
    def m(self) -> int:
        return self.laplacian.shape[0]


@dataclass(frozen=True, eq=False)
class Setup:
    """Graph analysis and validated law shared by every run on a scenario."""

    scc: SccConstants
    law: TriggerLaw
    lyapunov: LyapunovFunction

    @property
    def strongly_connected(self) -> bool:
        return self.scc.K == 1


def prepare(s: Scenario) -> Setup:
    """Validate the graph and the rule hypotheses before any simulation."""
    g = laplacian_digraph(s.laplacian)
    if not has_spanning_tree(g):
        raise HypothesisError("graph has no spanning tree; consensus cannot be reached")
    scc = scc_constants(pf_normal_form(s.laplacian))
    strongly = scc.K == 1
    law = validate(s.rule, scc.root if strongly else None, strongly_connected=strongly)
    return Setup(scc, law, LyapunovFunction(scc))


class EventRecord(NamedTuple):
    time: float
    agent: int
    state: float
    control: float


class Recomputation(NamedTuple):
    time: float
    agent: int
    cause: int
    candidate: float | None


@dataclass(eq=False)
class SimTrace:
    laplacian: np.ndarray
    x0: np.ndarray
    events: list[EventRecord]
    final_time: float
    termination: str
    mode: str = EVENT_TRIGGERED
    lyapunov: list[tuple[float, float]] = field(default_factory=list)
    recomputations: list[Recomputation] = field(default_factory=list)
    law: TriggerLaw | None = None

    def __post_init__(self):
        self._index()

    def _index(self):
        m = len(self.x0)
        per = [[] for _ in range(m)]
        for k, e in enumerate(self.events):
            per[e.agent].append(k)
        self._times = [np.array([self.events[k].time for k in ks]) for ks in per]
        self._states = [np.array([self.events[k].state for k in ks]) for ks in per]
        self._controls = [np.array([self.events[k].control for k in ks]) for ks in per]

    @property
    def m(self) -> int:
        return len(self.x0)

    def event_times(self, agent: int) -> np.ndarray:
        return self._times[agent]

    @property
    def trigger_counts(self) -> np.ndarray:
        return np.array([len(t) for t in self._times])

    @property
    def min_inter_event(self) -> np.ndarray:
        """Per-agent minimum gap between consecutive triggers (``inf`` if fewer than two)."""
        return np.array([np.diff(t).min() if len(t) > 1 else math.inf for t in self._times])

    def _last_index(self, agent: int, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._times[agent], t, side="right") - 1
        if np.any(idx < 0):
            raise ValueError("query time precedes the initial trigger")
        return idx

    def states_at(self, t) -> np.ndarray:
        """Exact states, shape ``(len(t), m)`` (or ``(m,)`` for scalar ``t``)."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), self.m))
        for i in range(self.m):
            k = self._last_index(i, t)
            out[:, i] = self._states[i][k] + (t - self._times[i][k]) * self._controls[i][k]
        return out[0] if scalar else out

    def controls_at(self, t) -> np.ndarray:
        """Held controls in force at ``t`` (right-continuous)."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), self.m))
        for i in range(self.m):
            out[:, i] = self._controls[i][self._last_index(i, t)]
        return out[0] if scalar else out

    @property
    def final_state(self) -> np.ndarray:
        return self.states_at(self.final_time)

    def final_spread(self) -> float:
        x = self.final_state
        return float(x.max() - x.min())


def _spread(runtimes, t) -> float:
    xs = [rt.state(t) for rt in runtimes]
    return max(xs) - min(xs)


class _GlobalView:
    """Continuous monitoring: measurements come from the true states."""

    def __init__(self, lap, runtimes):
        self.lap = lap
        self.rt = runtimes
        self.cols = [np.flatnonzero(lap[i]) for i in range(lap.shape[0])]

    def q_affine(self, i: int, t: float) -> tuple[float, float]:
        row = self.lap[i]
        a = b = 0.0
        for j in self.cols[i]:
            rt = self.rt[j]
            a -= row[j] * rt.state(t)
            b -= row[j] * rt.held_control
        return a, b

    def held(self, i: int) -> float:
        return self.rt[i].held_control

    def pull(self, i: int, t: float) -> float:
        return self.q_affine(i, t)[0]

    def broadcast(self, i: int, out_neighbors) -> None:
        pass


class _SnapshotView:
    """Self-triggered: every agent works only with the broadcasts it holds."""

    def __init__(self, lap, runtimes):
        self.lap = lap
        self.rt = runtimes
        self.snaps = [NeighborSnapshot() for _ in range(lap.shape[0])]

    def q_affine(self, i: int, t: float) -> tuple[float, float]:
        aq = predict_q(self.lap, self.snaps[i], i, t, t_ref=t)
        return aq.intercept, aq.slope

    def held(self, i: int) -> float:
        return self.snaps[i].entries[i].control

    def pull(self, i: int, t: float) -> float:
        # the snapshot holds every broadcast up to t, so the prediction is exact
        return predict_q(self.lap, self.snaps[i], i, t, t_ref=t).value

    def broadcast(self, i: int, out_neighbors) -> None:
        b = self.rt[i].broadcast()
        self.snaps[i].update(i, b)
        for j in out_neighbors:
            self.snaps[j].update(i, b)


def _simulate(s: Scenario, setup: Setup, mode: str) -> SimTrace:
    lap = s.laplacian
    m = s.m
    law = setup.law
    horizon = float(s.horizon)
    runtimes = [AgentRuntime(i, 0.0, float(s.x0[i])) for i in range(m)]
    view = _GlobalView(lap, runtimes) if mode == EVENT_TRIGGERED else _SnapshotView(lap, runtimes)
    out_nb = [np.flatnonzero(lap[:, i] * (1 - np.eye(m)[i])).tolist() for i in range(m)]
    events: list[EventRecord] = []
    recomps: list[Recomputation] = []
    lyap: list[tuple[float, float]] = []
    heap: list[tuple[float, int, int]] = []
    version = [0] * m

    def states(t):
        return np.array([rt.state(t) for rt in runtimes])

    def trace(t_end, why):
        return SimTrace(lap, s.x0.copy(), events, t_end, why, mode, lyap, recomps, law)

    def fire(i, t):
        q = view.pull(i, t)
        runtimes[i].trigger(t, q)
        view.broadcast(i, out_nb[i])
        events.append(EventRecord(t, i, runtimes[i].state_at_trigger, q))

    def replan(i, t, cause):
        a, b = view.q_affine(i, t)
        cand = next_crossing(law, view.held(i), a, b, t, horizon)
        recomps.append(Recomputation(t, i, cause, cand))
        version[i] += 1
        if cand is not None:
            if cand <= runtimes[i].last_trigger:
                raise ZenoSuspect(f"agent {i + 1}: zero inter-event time at t={t!r}", trace(t, "zeno"))
            heapq.heappush(heap, (cand, i, version[i]))

    if mode == SELF_TRIGGERED:
        # initial exchange: at t = 0 every agent reads its in-neighbours' states
        for i in range(m):
            for j in np.flatnonzero(lap[i]):
                view.snaps[i].update(int(j), runtimes[j].broadcast())
    for i in range(m):
        fire(i, 0.0)
    lyap.append((0.0, setup.lyapunov(states(0.0))))
    if _spread(runtimes, 0.0) < s.consensus_tol:
        return trace(0.0, "consensus")
    for i in range(m):
        replan(i, 0.0, i)

    now = 0.0
    while True:
        while heap and heap[0][2] != version[heap[0][1]]:
            heapq.heappop(heap)
        if not heap or heap[0][0] > horizon:
            return trace(horizon, "horizon")
        t0 = heap[0][0]
        # near-simultaneous candidates fire in ascending agent order at the earliest time
        group = []
        while heap and heap[0][0] <= t0 + SIMULTANEITY_TOL:
            entry = heapq.heappop(heap)
            if entry[2] == version[entry[1]]:
                group.append(entry)
        group.sort(key=lambda e: e[1])
        _, i, _ = group[0]
        for entry in group[1:]:
            heapq.heappush(heap, entry)
        now = max(now, t0)
        if len(events) >= s.event_cap:
            raise ZenoSuspect(f"event cap {s.event_cap} reached at t={now!r}", trace(now, "event_cap"))
        fire(i, now)
        version[i] += 1
        replan(i, now, i)
        for j in out_nb[i]:
            replan(j, now, i)
        lyap.append((now, setup.lyapunov(states(now))))
        if _spread(runtimes, now) < s.consensus_tol:
            return trace(now, "consensus")


def run_event_triggered(s: Scenario, setup: Setup | None = None) -> SimTrace:
    return _simulate(s, setup or prepare(s), EVENT_TRIGGERED)


def run_self_triggered(s: Scenario, setup: Setup | None = None) -> SimTrace:
    if not isinstance(s.rule, AbsoluteExp):
        raise HypothesisError("the self-triggered scheme is defined for the AbsoluteExp law")
    return _simulate(s, setup or prepare(s), SELF_TRIGGERED)


def run(s: Scenario, setup: Setup | None = None) -> SimTrace:
    if s.mode == SELF_TRIGGERED:
        return run_self_triggered(s, setup)
    return run_event_triggered(s, setup)


@dataclass
class OracleTrajectory:
    times: np.ndarray
    states: np.ndarray
    controls_match: float = 0.0


def run_oracle(s: Scenario, trace: SimTrace, step: float, align_events: bool = True) -> OracleTrajectory:
    """Forward-Euler integration replaying the trace's trigger schedule.

    With ``align_events`` every step is cut at the replayed trigger instants
    and each trigger pulls its new control from the oracle's own state, which
    makes the scheme exact up to round-off (controls are piecewise constant).
    Otherwise triggers take effect at the first grid point at or after their
    time with the recorded control, a first-order scheme.
    ``controls_match`` is the largest gap between pulled and recorded controls.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    lap = s.laplacian
    T = trace.final_time
    n = int(math.floor(T / step + 1e-9))
    grid = step * np.arange(n + 1)
    if grid[-1] < T:
        grid = np.append(grid, T)
    ev_t = np.array([e.time for e in trace.events])
    ev_i = np.array([e.agent for e in trace.events])
    ev_u = np.array([e.control for e in trace.events])

    if not align_events:
        u_grid = np.zeros((len(grid), s.m))
        for i in range(s.m):
            mask = ev_i == i
            k = np.searchsorted(grid, ev_t[mask], side="left")
            applied = np.searchsorted(k, np.arange(len(grid)), side="right") - 1
            u_grid[:, i] = ev_u[mask][applied]
        incr = np.diff(grid)[:, None] * u_grid[:-1]
        states = np.vstack([s.x0, s.x0 + np.cumsum(incr, axis=0)])
        return OracleTrajectory(grid, states)

    x = s.x0.astype(float).copy()
    u = np.zeros(s.m)
    out_t, out_x = [np.array([0.0])], [x[None, :].copy()]
    gap = 0.0
    starts = np.flatnonzero(np.r_[True, np.diff(ev_t) > 0])
    bounds = list(starts) + [len(ev_t)]
    for g, (k0, k1) in enumerate(zip(bounds[:-1], bounds[1:])):
        t_e = ev_t[k0]
        for k in range(k0, k1):
            i = ev_i[k]
            u[i] = -(lap[i] @ x)
            gap = max(gap, abs(u[i] - ev_u[k]))
        t_next = ev_t[bounds[g + 1]] if g + 1 < len(starts) else T
        pts = grid[(grid > t_e) & (grid < t_next)]
        if t_next > t_e:
            pts = np.append(pts, t_next)
        if len(pts) == 0:
            continue
        dts = np.diff(np.r_[t_e, pts])
        xs = x + np.cumsum(dts[:, None] * u[None, :], axis=0)
        out_t.append(pts)
        out_x.append(xs)
        x = xs[-1].copy()
    return OracleTrajectory(np.concatenate(out_t), np.vstack(out_x), gap)
