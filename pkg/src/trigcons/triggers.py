"""Trigger laws and the exact next-crossing solver.

A trigger law bounds the measurement error ``|f_i(t)| = |u_i - q_i(t)|``
either relative to ``|q_i(t)|`` or by an absolute decaying envelope. Between
events ``f_i`` and ``q_i`` are affine in ``t``, which is what makes the
crossing time computable exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dynamics import NeighborSnapshot, predict_q
from .spectral import SpectralConstants

# |f| - threshold at the start of a search may exceed 0 by rounding only.
PRECONDITION_TOL = 1e-9
MAX_ITER = 100
TIME_TOL = 1e-12


class HypothesisError(ValueError):
    """Rule parameters violate the hypotheses of the corresponding result."""


class CrossingError(RuntimeError):
    """A crossing search started from a state that already violates the rule."""


# -- weight functions mu(t) ---------------------------------------------------

@dataclass(frozen=True)
class ExponentialWeight:
    """``mu(t) = exp(beta t)``."""

    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise HypothesisError(f"exponential weight needs beta >= 0, got {self.beta}")

    def __call__(self, t):
        return np.exp(self.beta * np.asarray(t, dtype=float))

    def growth_bound(self) -> float:
        return self.beta

    def inv_sqrt_envelope(self) -> "ExpEnvelope":
        return ExpEnvelope(1.0, self.beta / 2)


@dataclass(frozen=True)
class PolynomialWeight:
    """``mu(t) = (1 + t)^p``; ``mu'/mu = p/(1+t) <= p``."""

    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise HypothesisError(f"polynomial weight needs p > 0, got {self.p}")

    def __call__(self, t):
        return (1.0 + np.asarray(t, dtype=float)) ** self.p

    def growth_bound(self) -> float:
        return self.p

    def inv_sqrt_envelope(self) -> "PowerEnvelope":
        return PowerEnvelope(self.p / 2)


MuFamily = Union[ExponentialWeight, PolynomialWeight]


# -- absolute thresholds: positive, decreasing, convex ------------------------

@dataclass(frozen=True)
class ExpEnvelope:
    """``scale * exp(-rate t)``."""

    scale: float
    rate: float

    def value(self, t: float) -> float:
        return self.scale * math.exp(-self.rate * t)

    def deriv(self, t: float) -> float:
        return -self.rate * self.value(t)

    def deriv_inverse(self, s: float) -> float:
        """Time at which the derivative equals ``s`` (``s < 0``)."""
        if self.rate == 0:
            return math.inf
        return -math.log(-s / (self.rate * self.scale)) / self.rate

    def values(self, t: np.ndarray) -> np.ndarray:
        return self.scale * np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class PowerEnvelope:
    """``(1 + t)^(-r)``."""

    r: float

    def value(self, t: float) -> float:
        return (1.0 + t) ** (-self.r)

    def deriv(self, t: float) -> float:
        return -self.r * (1.0 + t) ** (-self.r - 1.0)

    def deriv_inverse(self, s: float) -> float:
        return (-s / self.r) ** (-1.0 / (self.r + 1.0)) - 1.0

    def values(self, t: np.ndarray) -> np.ndarray:
        return (1.0 + np.asarray(t, dtype=float)) ** (-self.r)


Envelope = Union[ExpEnvelope, PowerEnvelope]


# -- rules --------------------------------------------------------------------

@dataclass(frozen=True)
class RelativeLyapunov:
    """``|f_i| <= sqrt(2ab)|q_i|`` with ``b`` built from the spectral constants.

    ``a`` defaults to ``lambda2 / mu_m^2``. ``mu`` defaults to
    ``exp(beta t)`` and must satisfy ``mu'/mu <= beta``.
    """

    a: float | None = None
    beta: float = 0.0
    mu: MuFamily | None = None


@dataclass(frozen=True)
class RelativeConstant:
    """``|f_i| <= c|q_i|`` with ``0 < c < 1``."""

    c: float


@dataclass(frozen=True)
class AbsoluteDecaying:
    """``|f_i|^2 <= 1/mu(t)``, handled as ``|f_i| <= mu(t)^(-1/2)``."""

    mu: MuFamily
    a: float | None = None


@dataclass(frozen=True)
class AbsoluteExp:
    """``|f_i| <= exp(-beta t)``; also the law of the self-triggered scheme.

    ``phi`` and ``alpha`` are accepted for configuration compatibility and
    have no effect on the law.
    """

    beta: float
    a: float | None = None
    phi: float | None = None
    alpha: float | None = None


TriggerRule = Union[RelativeLyapunov, RelativeConstant, AbsoluteDecaying, AbsoluteExp]


@dataclass(frozen=True, eq=False)
class TriggerLaw:
    """A rule whose hypotheses have been checked, with derived coefficients."""

    rule: TriggerRule
    gain: float | None = None
    envelope: Envelope | None = None
    weight: MuFamily | None = None
    a: float | None = None
    b: float | None = None
    beta: float | None = None
    kappa: float | None = None
    bound_denominator: np.ndarray | None = None
    derived: dict = field(default_factory=dict)

    @property
    def relative(self) -> bool:
        return self.gain is not None

    @property
    def name(self) -> str:
        return type(self.rule).__name__

    def threshold(self, t: float, q_abs: float) -> float:
        if self.relative:
            return self.gain * q_abs
        return self.envelope.value(t)

    def thresholds(self, t: np.ndarray, q_abs: np.ndarray) -> np.ndarray:
        if self.relative:
            return self.gain * np.abs(q_abs)
        return self.envelope.values(t) * np.ones_like(np.asarray(q_abs, dtype=float))

    def envelope_bound(self, t: np.ndarray) -> np.ndarray | None:
        """Per-agent ``mu^(-1/2)(t) / sqrt(2 a xi_i kappa)``, shape ``(len(t), m)``."""
        if self.bound_denominator is None or self.weight is None:
            return None
        t = np.asarray(t, dtype=float)
        return (self.weight(t) ** -0.5)[:, None] / self.bound_denominator[None, :]


def threshold_at(law: TriggerLaw, t: float, q_abs: float) -> float:
    return law.threshold(t, q_abs)


def _need_constants(rule, constants, strongly_connected):
    if not strongly_connected:
        raise HypothesisError(f"{type(rule).__name__} requires a strongly connected graph")
    if constants is None or constants.degenerate:
        raise HypothesisError(f"{type(rule).__name__} requires at least two agents and spectral constants")


def _envelope_terms(c: SpectralConstants, a: float | None, beta: float, explicit: bool):
    """``(a, kappa, denominators)`` of the explicit consensus envelope."""
    lead = c.lambda2 / float(c.xi.max())
    if a is None:
        a = lead - beta
        if a <= 0:
            return None, None, None
    elif not a > 0:
        raise HypothesisError(f"a must be positive, got {a}")
    kappa = lead - a / 2 - beta
    if kappa <= 0:
        if explicit:
            raise HypothesisError(
                f"need lambda2/max(xi) - a/2 - beta > 0; got {lead:.6g} - {a / 2:.6g} - {beta:.6g} = {kappa:.6g}")
        return None, None, None
    return a, kappa, np.sqrt(2 * a * c.xi * kappa)


def validate(rule: TriggerRule, constants: SpectralConstants | None = None,
             strongly_connected: bool = True) -> TriggerLaw:
    """Check the hypotheses of ``rule`` and precompute its coefficients."""
    if isinstance(rule, RelativeConstant):
        if not 0 < rule.c < 1:
            raise HypothesisError(f"relative gain c must lie in (0, 1), got {rule.c}")
        if not strongly_connected:
            raise HypothesisError("RelativeConstant requires a strongly connected graph")
        return TriggerLaw(rule, gain=float(rule.c))

    if isinstance(rule, RelativeLyapunov):
        _need_constants(rule, constants, strongly_connected)
        c = constants
        a_max = 2 * c.lambda2 / c.mu_m**2
        a = c.lambda2 / c.mu_m**2 if rule.a is None else float(rule.a)
        if not 0 < a < a_max:
            raise HypothesisError(f"need 0 < a < 2 lambda2/mu_m^2 = {a_max:.6g}, got a = {a:.6g}")
        if rule.beta < 0:
            raise HypothesisError(f"beta must be nonnegative, got {rule.beta}")
        mu = rule.mu if rule.mu is not None else ExponentialWeight(rule.beta)
        if mu.growth_bound() > rule.beta:
            raise HypothesisError(
                f"weight growth rate {mu.growth_bound():.6g} exceeds beta = {rule.beta:.6g}")
        b = (1 - a * c.mu_m**2 / (2 * c.lambda2)) * c.lambda2 / c.rho_LtL - c.gamma2 * rule.beta / c.mu_m
        if not b > 0:
            raise HypothesisError(f"b = {b:.6g} is not positive for a = {a:.6g}, beta = {rule.beta:.6g}")
        return TriggerLaw(rule, gain=math.sqrt(2 * a * b), weight=mu, a=a, b=b, beta=rule.beta,
                          derived={"a_max": a_max})

    if isinstance(rule, AbsoluteDecaying):
        _need_constants(rule, constants, strongly_connected)
        beta = rule.mu.growth_bound()
        a, kappa, den = _envelope_terms(constants, rule.a, beta, explicit=True)
        if a is None:
            raise HypothesisError(
                f"no a > 0 satisfies lambda2/max(xi) - a/2 - beta > 0 with beta = {beta:.6g}")
        return TriggerLaw(rule, envelope=rule.mu.inv_sqrt_envelope(), weight=rule.mu, a=a,
                          beta=beta, kappa=kappa, bound_denominator=den)

    if isinstance(rule, AbsoluteExp):
        if not rule.beta > 0:
            raise HypothesisError(f"beta must be positive, got {rule.beta}")
        env = ExpEnvelope(1.0, float(rule.beta))
        if strongly_connected and constants is not None and not constants.degenerate:
            a, kappa, den = _envelope_terms(constants, rule.a, rule.beta, explicit=rule.a is not None)
            return TriggerLaw(rule, envelope=env, weight=ExponentialWeight(rule.beta), a=a,
                              beta=rule.beta, kappa=kappa, bound_denominator=den)
        if rule.a is not None and not strongly_connected:
            raise HypothesisError("the explicit envelope parameter a only applies to strongly connected graphs")
        return TriggerLaw(rule, envelope=env, weight=ExponentialWeight(rule.beta), beta=rule.beta)

    raise TypeError(f"unknown trigger rule {rule!r}")


# -- crossing solver ------------------------------------------------------------

def _rise_root(g, dg, lo: float, hi: float) -> float:
    """Root of a concave ``g`` increasing on ``[lo, hi]`` with ``g(lo) < 0 < g(hi)``.

    Newton from the left never overshoots a concave increasing function, so
    every iterate stays on the admissible side; bisection takes over when a
    step stalls or leaves the bracket.
    """
    a, b = lo, hi
    ga = g(a)
    for _ in range(MAX_ITER):
        d = dg(a)
        nxt = a - ga / d if d > 0 else b
        if not a < nxt < b:
            nxt = 0.5 * (a + b)
        gn = g(nxt)
        if gn > 0:
            b = nxt
        else:
            if nxt - a <= TIME_TOL * 1e-3 * (1.0 + abs(a)) or gn == 0:
                return nxt
            a, ga = nxt, gn
        if b - a <= TIME_TOL * 1e-3 * (1.0 + abs(a)):
            return a
    return a


def _absolute_crossing(env: Envelope, F0: float, Fs: float, t_lo: float, t_hi: float) -> float | None:
    best = None
    for sigma in (1.0, -1.0):
        def g(t, sigma=sigma):
            return sigma * (F0 + Fs * (t - t_lo)) - env.value(t)

        def dg(t, sigma=sigma):
            return sigma * Fs - env.deriv(t)

        g_lo = g(t_lo)
        if g_lo > PRECONDITION_TOL * (1.0 + env.value(t_lo)):
            raise CrossingError(f"|f| exceeds the threshold at t={t_lo} by {g_lo:.3g}")
        if g_lo >= 0 and dg(t_lo) > 0:
            return t_lo
        if dg(t_lo) <= 0:
            continue  # concave and already decreasing: never rises again
        right = t_hi
        if sigma * Fs < 0:
            right = min(right, env.deriv_inverse(sigma * Fs))
        if right <= t_lo or g(right) <= 0:
            continue
        root = _rise_root(g, dg, t_lo, right)
        if best is None or root < best:
            best = root
    return best


def _relative_crossing(c: float, F0: float, Fs: float, Q0: float, Qs: float, span: float) -> float | None:
    """Earliest ``s`` in ``[0, span]`` with ``|F0 + Fs s| > c |Q0 + Qs s|``."""
    g0 = abs(F0) - c * abs(Q0)
    if g0 > PRECONDITION_TOL * (1.0 + abs(Q0)):
        raise CrossingError(f"|f| exceeds c|q| at the start of the search by {g0:.3g}")
    kinks = []
    if Fs != 0:
        kinks.append(-F0 / Fs)
    if Qs != 0:
        kinks.append(-Q0 / Qs)
    pts = [0.0] + sorted(s for s in kinks if 0 < s < span) + [span]
    for p0, p1 in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (p0 + p1)
        sf = math.copysign(1.0, F0 + Fs * mid) if F0 + Fs * mid != 0 else 0.0
        sq = math.copysign(1.0, Q0 + Qs * mid) if Q0 + Qs * mid != 0 else 0.0
        alpha = sf * F0 - c * sq * Q0
        gamma = sf * Fs - c * sq * Qs
        if gamma <= 0:
            continue
        root = -alpha / gamma
        if root <= p0:
            return p0
        if root <= p1:
            return root
    return None


def next_crossing(law: TriggerLaw, held: float, intercept: float, slope: float,
                  t_lo: float, t_hi: float) -> float | None:
    """Earliest time in ``[t_lo, t_hi]`` at which ``|held - q(t)|`` overtakes the threshold.

    ``q(t) = intercept + slope (t - t_lo)`` on the whole segment. Returns
    ``None`` if the condition holds throughout.
    """
    if t_hi < t_lo:
        return None
    F0 = held - intercept
    Fs = -slope
    if law.relative:
        s = _relative_crossing(law.gain, F0, Fs, intercept, slope, t_hi - t_lo)
        return None if s is None else t_lo + s
    return _absolute_crossing(law.envelope, F0, Fs, t_lo, t_hi)


def self_triggered_schedule(lap: np.ndarray, i: int, snap: NeighborSnapshot, s: float,
                            law: TriggerLaw, horizon: float) -> float | None:
    """Predicted next trigger of agent ``i`` from broadcasts received up to ``s``."""
    aq = predict_q(lap, snap, i, s, t_ref=s)
    held = snap.entries[i].control
    return next_crossing(law, held, aq.intercept, aq.slope, s, horizon)
