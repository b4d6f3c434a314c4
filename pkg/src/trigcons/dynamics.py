"""Exact piecewise-linear flow of the triggered single-integrator network.

Between two of its own triggers agent ``i`` moves with the constant control
``u_i`` it froze at its latest trigger, so every state and every combinational
measurement ``q_i(t) = -sum_j L_ij x_j(t)`` is affine in time until the next
trigger of ``i`` or one of its in-neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np


class DynamicsError(RuntimeError):
    """Contract violation in state propagation."""


class StaleSnapshotError(DynamicsError):
    """A prediction was requested past newer neighbour information."""


@dataclass
class AgentRuntime:
    agent: int
    last_trigger: float
    state_at_trigger: float
    held_control: float = 0.0
    trigger_count: int = 0

    def state(self, t: float) -> float:
        return self.state_at_trigger + (t - self.last_trigger) * self.held_control

    def trigger(self, t: float, control: float) -> None:
        if self.trigger_count and t < self.last_trigger:
            raise DynamicsError(f"agent {self.agent}: trigger at {t} precedes previous trigger {self.last_trigger}")
        self.state_at_trigger = self.state(t)
        self.last_trigger = t
        self.held_control = control
        self.trigger_count += 1

    def broadcast(self) -> "Broadcast":
        return Broadcast(self.last_trigger, self.state_at_trigger, self.held_control)


class Broadcast(NamedTuple):
    """What an agent sends at a trigger: time, state, and new control."""

    time: float
    state: float
    control: float


@dataclass
class NeighborSnapshot:
    """The latest broadcast an agent holds for itself and each in-neighbour."""

    entries: dict[int, Broadcast] = field(default_factory=dict)

    def update(self, agent: int, b: Broadcast) -> None:
        self.entries[agent] = b

    def predict_state(self, agent: int, t: float) -> float:
        b = self.entries[agent]
        return b.state + (t - b.time) * b.control


class AffineQ(NamedTuple):
    """``q_i(t) = intercept + slope * (t - t_ref)``; ``value`` is at the query time."""

    value: float
    intercept: float
    slope: float
    t_ref: float


def q_of(lap: np.ndarray, x: np.ndarray, i: int) -> float:
    return float(-(lap[i] @ x))


def q_all(lap: np.ndarray, x: np.ndarray) -> np.ndarray:
    return -(lap @ x)


def measurement_error(rt: AgentRuntime, q_now: float) -> float:
    return rt.held_control - q_now


def advance(agents: Sequence[AgentRuntime], t_from: float, t_to: float,
            pending: Mapping[int, float] | None = None) -> np.ndarray:
    """States at ``t_to`` given that no agent triggers in ``(t_from, t_to)``.

    ``pending`` optionally maps agents to their next scheduled trigger time; a
    schedule inside the open interval is a contract violation, as is an agent
    whose latest trigger lies after ``t_from``.
    """
    if t_to < t_from:
        raise DynamicsError(f"cannot advance backwards from {t_from} to {t_to}")
    for rt in agents:
        if rt.last_trigger > t_from:
            raise DynamicsError(f"agent {rt.agent} triggered at {rt.last_trigger}, after t_from={t_from}")
    if pending:
        for i, t in pending.items():
            if t_from < t < t_to:
                raise DynamicsError(f"agent {i} triggers at {t}, inside ({t_from}, {t_to})")
    return np.array([rt.state(t_to) for rt in agents])


def predict_q(lap: np.ndarray, snap: NeighborSnapshot, i: int, t: float,
              t_ref: float | None = None) -> AffineQ:
    """Extrapolate ``q_i`` from broadcasts only.

    The affine form is anchored at ``t_ref`` (default: the newest entry in the
    snapshot). It is exact as long as no in-neighbour of ``i`` (nor ``i``)
    triggers after ``t_ref``; an entry newer than ``t_ref`` therefore makes
    the request stale.
    """
    row = lap[i]
    cols = np.flatnonzero(row)
    missing = [int(j) for j in cols if j not in snap.entries]
    if missing:
        raise DynamicsError(f"snapshot of agent {i} lacks in-neighbours {missing}")
    newest = max((snap.entries[int(j)].time for j in cols), default=0.0)
    if t_ref is None:
        t_ref = newest
    if newest > t_ref:
        raise StaleSnapshotError(f"agent {i}: snapshot holds a trigger at {newest} after t_ref={t_ref}")
    if t < t_ref:
        raise StaleSnapshotError(f"agent {i}: query time {t} precedes t_ref={t_ref}")
    intercept = 0.0
    slope = 0.0
    for j in cols:
        b = snap.entries[int(j)]
        lij = row[j]
        intercept -= lij * (b.state + (t_ref - b.time) * b.control)
        slope -= lij * b.control
    return AffineQ(intercept + slope * (t - t_ref), intercept, slope, t_ref)
