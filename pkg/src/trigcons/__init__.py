"""Event-triggered and self-triggered consensus on directed weighted graphs."""

from .analysis import LyapunovFunction, audit_triggers, check_bound, fit_decay, lyapunov, zeno_audit
from .engine import (EVENT_TRIGGERED, SELF_TRIGGERED, Scenario, SimTrace, ZenoSuspect, prepare, run,
                     run_event_triggered, run_oracle, run_self_triggered)
from .graph import Digraph, laplacian, pf_normal_form, scc_decompose
from .spectral import build_constants, scc_constants, verify_inequalities
from .triggers import (AbsoluteDecaying, AbsoluteExp, ExponentialWeight, HypothesisError, PolynomialWeight,
                       RelativeConstant, RelativeLyapunov, validate)

__all__ = [
    "AbsoluteDecaying", "AbsoluteExp", "Digraph", "EVENT_TRIGGERED", "ExponentialWeight", "HypothesisError",
    "LyapunovFunction", "PolynomialWeight", "RelativeConstant", "RelativeLyapunov", "SELF_TRIGGERED",
    "Scenario", "SimTrace", "ZenoSuspect", "audit_triggers", "build_constants", "check_bound", "fit_decay",
    "laplacian", "lyapunov", "pf_normal_form", "prepare", "run", "run_event_triggered", "run_oracle",
    "run_self_triggered", "scc_constants", "scc_decompose", "validate", "verify_inequalities", "zeno_audit",
]
