"""Lyapunov functions, explicit envelopes, decay-rate fits and trace audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .spectral import NonRootScc, SccConstants, SpectralConstants

if TYPE_CHECKING:
    from .engine import SimTrace
    from .triggers import TriggerLaw


class DecayFitError(ValueError):
    """Not enough positive samples to define a decay rate."""


def lyapunov(c: SpectralConstants, x) -> float:
    """``V = 1/2 sum xi_i (x_i - xbar)^2``, cross-checked against ``1/2 x^T U x``."""
    x = np.asarray(x, dtype=float)
    xbar = float(c.xi @ x)
    v = 0.5 * float(c.xi @ (x - xbar) ** 2)
    quad = 0.5 * float(x @ c.U @ x)
    if abs(v - quad) > 1e-12 + 1e-9 * float(c.xi @ x**2):
        raise ArithmeticError(f"Lyapunov forms disagree: {v!r} vs {quad!r}")
    return v


def lyapunov_scc(block: NonRootScc, x_k, nu: float) -> float:
    """``V_k = 1/2 (x^k - nu 1)^T Xi^k (x^k - nu 1)`` for a non-root component."""
    d = np.asarray(x_k, dtype=float) - nu
    return 0.5 * float(block.xi @ d**2)


class LyapunovFunction:
    """Sum of per-component Lyapunov functions; the plain ``V`` when irreducible.

    Non-root components measure their deviation from the root agreement value
    ``nu = xi^K . x^K``.
    """

    def __init__(self, scc: SccConstants):
        self.scc = scc
        self.root_idx = np.array(scc.root_members, dtype=int)
        self.block_idx = [np.array(b.members, dtype=int) for b in scc.blocks]

    def agreement(self, x) -> float:
        return float(self.scc.root.xi @ np.asarray(x)[self.root_idx])

    def components(self, x) -> list[float]:
        """``[V_1, ..., V_{K-1}, V_K]`` with the root term last."""
        x = np.asarray(x, dtype=float)
        nu = self.agreement(x)
        vals = [lyapunov_scc(b, x[idx], nu) for b, idx in zip(self.scc.blocks, self.block_idx)]
        root_x = x[self.root_idx]
        vals.append(0.5 * float(self.scc.root.xi @ (root_x - nu) ** 2))
        return vals

    def __call__(self, x) -> float:
        return float(sum(self.components(x)))

    def series(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised ``(V_components (n, K), nu (n,))`` over rows of ``states``."""
        states = np.asarray(states, dtype=float)
        nu = states[:, self.root_idx] @ self.scc.root.xi
        cols = []
        for b, idx in zip(self.scc.blocks, self.block_idx):
            cols.append(0.5 * ((states[:, idx] - nu[:, None]) ** 2) @ b.xi)
        cols.append(0.5 * ((states[:, self.root_idx] - nu[:, None]) ** 2) @ self.scc.root.xi)
        return np.column_stack(cols), nu


def fit_decay(times: Sequence[float], values: Sequence[float], transient_fraction: float = 0.2,
              horizon: float | None = None, floor: float = 1e-300) -> float:
    """Least-squares slope of ``log V`` against ``t`` after the transient window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if horizon is None:
        horizon = float(t.max()) if t.size else 0.0
    keep = (t >= transient_fraction * horizon) & (v > floor)
    if keep.sum() < 10:
        raise DecayFitError(f"only {int(keep.sum())} positive samples after the transient; rate undefined")
    slope, _ = np.polyfit(t[keep], np.log(v[keep]), 1)
    return float(slope)


def sample_times(trace: "SimTrace", n: int | None = None, period: float | None = None) -> np.ndarray:
    if period is not None:
        k = int(math.floor(trace.final_time / period + 1e-9))
        t = period * np.arange(k + 1)
        return t if t[-1] == trace.final_time else np.append(t, trace.final_time)
    return np.linspace(0.0, trace.final_time, n or 1000)


def q_series(trace: "SimTrace", t: np.ndarray) -> np.ndarray:
    return -(trace.states_at(t) @ trace.laplacian.T)


@dataclass
class TriggerAudit:
    """Sampled soundness and at-event maximality of a trace."""

    samples: int
    max_excess: float
    violations: int
    boundary_gaps: np.ndarray
    tol: float = 1e-9

    @property
    def max_boundary_gap(self) -> float:
        return float(np.abs(self.boundary_gaps).max()) if self.boundary_gaps.size else 0.0

    @property
    def early_or_late(self) -> int:
        return int(np.sum(np.abs(self.boundary_gaps) > self.tol))

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.early_or_late == 0


def audit_triggers(trace: "SimTrace", law: "TriggerLaw", n_samples: int = 10_000,
                   tol: float = 1e-9) -> TriggerAudit:
    """Check ``|f_i(t)| <= threshold`` on a uniform grid and ``|f| = threshold`` at each event."""
    t = np.linspace(0.0, trace.final_time, n_samples)
    q = q_series(trace, t)
    f = trace.controls_at(t) - q
    excess = np.abs(f) - law.thresholds(t[:, None], np.abs(q))
    gaps = []
    lap = trace.laplacian
    prev = {}
    for e in trace.events:
        if e.agent in prev and e.time > 0:
            x = trace.states_at(e.time)
            qi = -float(lap[e.agent] @ x)
            gaps.append(abs(prev[e.agent] - qi) - law.threshold(e.time, abs(qi)))
        prev[e.agent] = e.control
    return TriggerAudit(n_samples, float(excess.max()) if excess.size else -np.inf,
                        int(np.sum(excess > tol)), np.array(gaps), tol)


@dataclass
class ZenoAudit:
    min_inter_event: np.ndarray
    slope_bound: np.ndarray
    lower_bound: np.ndarray | None

    @property
    def positive(self) -> bool:
        return bool(np.all(self.min_inter_event > 0))

    @property
    def respects_bound(self) -> bool:
        if self.lower_bound is None:
            return self.positive
        finite = np.isfinite(self.min_inter_event)
        return bool(np.all(self.min_inter_event[finite] >= self.lower_bound[finite] * (1 - 1e-9)))


def zeno_audit(trace: "SimTrace", law: "TriggerLaw") -> ZenoAudit:
    """Measured minimum inter-event times against ``threshold(T)/sqrt(M)``.

    ``M`` is the largest squared slope of ``q_i`` observed on ``[0, T]``; for
    the squared decaying law this is the ``sqrt(mu(T)^-1 / M)`` bound.
    Relative laws have no explicit bound; only positivity is reported.
    """
    lap = trace.laplacian
    u = np.zeros(trace.m)
    slopes = np.zeros(trace.m)
    for e in trace.events:
        u[e.agent] = e.control
        slopes = np.maximum(slopes, (lap @ u) ** 2)
    mins = trace.min_inter_event
    bound = None
    if not law.relative:
        thr_T = law.envelope.value(trace.final_time)
        with np.errstate(divide="ignore"):
            bound = np.where(slopes > 0, thr_T / np.sqrt(slopes), np.inf)
    return ZenoAudit(mins, slopes, bound)


@dataclass
class BoundReport:
    """Explicit consensus envelope checked along a trace."""

    hypothesis_ok: bool
    reason: str = ""
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    envelope: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    deviation: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    raw_violations: int = 0
    transient_end: float = 0.0
    post_transient_violations: int = 0
    derivative_violations: int = 0
    decay_rate: float = math.nan
    inter_event: dict = field(default_factory=dict)

    def within_half_horizon(self, horizon: float) -> bool:
        return self.hypothesis_ok and self.transient_end <= horizon / 2


def check_bound(trace: "SimTrace", law: "TriggerLaw", c: SpectralConstants,
                n_samples: int = 2000) -> BoundReport:
    """Evaluate ``|x_i - xbar| <= mu^(-1/2)(t) / sqrt(2 a xi_i kappa)`` on a uniform grid.

    The transient end is the earliest sample after which the envelope holds at
    every later sample. The derivative bound ``|u_i| <= sum_j |L_ij| env_j(t_k)``
    is counted for triggers after the transient; it is reported, not enforced.
    """
    gaps = [np.diff(trace.event_times(i)) for i in range(trace.m)]
    gaps = np.concatenate(gaps) if gaps else np.zeros(0)
    stats = {"min": float(gaps.min()), "mean": float(gaps.mean()), "max": float(gaps.max())} if gaps.size else {}
    if law.relative or law.bound_denominator is None:
        return BoundReport(False, reason=f"{law.name}: no explicit envelope (hypotheses not met or relative law)",
                           inter_event=stats)
    t = np.linspace(0.0, trace.final_time, n_samples)
    x = trace.states_at(t)
    dev = np.abs(x - (x @ c.xi)[:, None])
    env = law.envelope_bound(t)
    bad_rows = np.flatnonzero(np.any(dev > env, axis=1))
    if bad_rows.size == 0:
        t0 = 0.0
    elif bad_rows[-1] + 1 < len(t):
        t0 = float(t[bad_rows[-1] + 1])
    else:
        t0 = math.inf
    post = int(np.sum(dev[t >= t0] > env[t >= t0])) if math.isfinite(t0) else int(np.sum(dev > env))
    deriv_bad = 0
    absL = np.abs(trace.laplacian)
    for e in trace.events:
        if e.time >= t0 and math.isfinite(t0):
            env_k = law.envelope_bound(np.array([e.time]))[0]
            if abs(e.control) > absL[e.agent] @ env_k * (1 + 1e-9):
                deriv_bad += 1
    rate = math.nan
    v = np.array([lyapunov(c, row) for row in x])
    try:
        rate = fit_decay(t, v, horizon=trace.final_time)
    except DecayFitError:
        pass
    return BoundReport(True, times=t, envelope=env, deviation=dev, raw_violations=int(np.sum(dev > env)),
                       transient_end=t0, post_transient_violations=post, derivative_violations=deriv_bad,
                       decay_rate=rate, inter_event=stats)


def weighted_lyapunov_monotone(trace: "SimTrace", law: "TriggerLaw", c: SpectralConstants,
                               n_uniform: int = 1000) -> float:
    """Largest increase of ``mu(t) V(t)`` between consecutive samples.

    Samples are every event time plus ``n_uniform`` uniform times; a value
    ``<= 0`` (up to round-off) means the sequence is non-increasing.
    """
    ts = np.union1d([e.time for e in trace.events], np.linspace(0.0, trace.final_time, n_uniform))
    x = trace.states_at(ts)
    xbar = x @ c.xi
    v = 0.5 * ((x - xbar[:, None]) ** 2) @ c.xi
    w = law.weight(ts) * v
    return float(np.max(np.diff(w))) if len(w) > 1 else 0.0
