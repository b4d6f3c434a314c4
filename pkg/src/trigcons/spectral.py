"""Left eigenvectors, the weighted matrices R and U, and the scalar constants
that parametrise the trigger rules.

Every eigenvalue that should exclude the consensus direction is computed on
the orthogonal complement of ``1`` (explicit deflation) instead of by
sorting the spectrum and skipping the smallest entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .graph import PfForm, auxiliary_split


class SpectralError(ValueError):
    """Raised when a matrix lacks the spectral structure a routine requires."""


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-10
    psd_slack: float = 1e-9
    zero_gap: float = 1e-9


DEFAULT_TOL = Tolerances()


def consensus_complement(m: int) -> np.ndarray:
    """Orthonormal basis (m x m-1) of the subspace orthogonal to ``1``."""
    if m == 1:
        return np.zeros((1, 0))
    return scipy.linalg.null_space(np.ones((1, m)))


def deflated_eigvalsh(mat: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """Eigenvalues of a symmetric matrix restricted to ``1``-perp, ascending."""
    if basis is None:
        basis = consensus_complement(mat.shape[0])
    if basis.shape[1] == 0:
        return np.zeros(0)
    sub = basis.T @ mat @ basis
    return np.linalg.eigvalsh(0.5 * (sub + sub.T))


def left_eigenvector(lap, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Positive ``xi`` with ``xi^T L = 0`` and ``sum(xi) = 1`` for an irreducible ``L``.

    Solves the bordered system ``[L^T; 1^T] xi = [0; 1]``.
    """
    lap = np.asarray(lap, dtype=float)
    m = lap.shape[0]
    if m == 1:
        return np.ones(1)
    sv = np.linalg.svd(lap, compute_uv=False)
    scale = max(1.0, float(sv[0]))
    if sv[-2] <= tol.zero_gap * scale:
        raise SpectralError(
            f"zero eigenvalue is not simple (second smallest singular value {sv[-2]:.3g}); "
            "matrix is not irreducible")
    system = np.vstack([lap.T, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    xi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    resid = float(np.abs(xi @ lap).max())
    if resid > tol.residual * scale:
        raise SpectralError(f"left null vector residual {resid:.3g} exceeds {tol.residual:g}")
    if np.any(xi <= 0):
        raise SpectralError(f"left null vector is not positive (min {xi.min():.3g}); matrix is reducible")
    return xi / xi.sum()


@dataclass(frozen=True, eq=False)
class SpectralConstants:
    """Constants of an irreducible Laplacian.

    For ``m == 1`` all eigenvalue scalars are ``0`` and ``degenerate`` is set.
    """

    laplacian: np.ndarray
    xi: np.ndarray
    R: np.ndarray
    U: np.ndarray
    LtL: np.ndarray
    lambda2: float
    lambda_m: float
    mu_m: float
    mu2: float
    gamma2: float
    rho_LtL: float
    degenerate: bool = False

    @property
    def m(self) -> int:
        return len(self.xi)

    @property
    def Xi(self) -> np.ndarray:
        return np.diag(self.xi)


def build_constants(lap, xi: np.ndarray | None = None, tol: Tolerances = DEFAULT_TOL) -> SpectralConstants:
    lap = np.asarray(lap, dtype=float)
    if xi is None:
        xi = left_eigenvector(lap, tol)
    m = lap.shape[0]
    Xi = np.diag(xi)
    R = 0.5 * (Xi @ lap + lap.T @ Xi)
    U = Xi - np.outer(xi, xi)
    LtL = lap.T @ lap
    if m == 1:
        return SpectralConstants(lap, xi, R, U, LtL, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    basis = consensus_complement(m)
    ev_R = deflated_eigvalsh(R, basis)
    ev_U = deflated_eigvalsh(U, basis)
    ev_LtL = deflated_eigvalsh(LtL, basis)
    for name, ev in (("R", ev_R), ("U", ev_U), ("L^T L", ev_LtL)):
        if ev[0] <= tol.zero_gap * max(1.0, ev[-1]):
            raise SpectralError(
                f"{name} has a second zero eigenvalue (deflated minimum {ev[0]:.3g} "
                f"below gap {tol.zero_gap:g}); consensus direction is not isolated")
    return SpectralConstants(
        laplacian=lap, xi=xi, R=R, U=U, LtL=LtL,
        lambda2=float(ev_R[0]), lambda_m=float(ev_R[-1]),
        mu_m=float(ev_U[-1]), mu2=float(ev_U[0]),
        gamma2=float(ev_LtL[0]), rho_LtL=float(ev_LtL[-1]),
    )


@dataclass
class InequalityReport:
    """Minimum deflated eigenvalues of the four matrix inequalities."""

    r_vs_uu: float
    ltl_vs_uu: float
    upper_r_vs_ltl: float
    r_vs_ltl: float
    slack: float = DEFAULT_TOL.psd_slack

    def items(self):
        return {
            "R - (lambda2/mu_m^2) UU": self.r_vs_uu,
            "LtL - (gamma2/mu_m^2) UU": self.ltl_vs_uu,
            "(lambda_m/gamma2) LtL - R": self.upper_r_vs_ltl,
            "R - (lambda2/rho) LtL": self.r_vs_ltl,
        }.items()

    @property
    def violations(self) -> list[str]:
        return [name for name, v in self.items() if v < -self.slack]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_inequalities(c: SpectralConstants, tol: Tolerances = DEFAULT_TOL) -> InequalityReport:
    if c.m == 1:
        return InequalityReport(np.inf, np.inf, np.inf, np.inf, tol.psd_slack)
    basis = consensus_complement(c.m)
    UU = c.U @ c.U

    def low(mat):
        return float(deflated_eigvalsh(mat, basis)[0])

    return InequalityReport(
        r_vs_uu=low(c.R - c.lambda2 / c.mu_m**2 * UU),
        ltl_vs_uu=low(c.LtL - c.gamma2 / c.mu_m**2 * UU),
        upper_r_vs_ltl=low(c.lambda_m / c.gamma2 * c.LtL - c.R),
        r_vs_ltl=low(c.R - c.lambda2 / c.rho_LtL * c.LtL),
        slack=tol.psd_slack,
    )


@dataclass(frozen=True, eq=False)
class NonRootScc:
    """Per-block data of a non-root strongly connected component."""

    index: int
    members: tuple[int, ...]
    block: np.ndarray
    L_tilde: np.ndarray
    D: np.ndarray
    xi: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    rho2_Q: float
    rho_Xi: float

    @property
    def Xi(self) -> np.ndarray:
        return np.diag(self.xi)

    def ordering_margin(self) -> float:
        """Minimum eigenvalue of ``(rho(Xi)/rho2(Q)) Q - Xi``; nonnegative in theory."""
        diff = self.rho_Xi / self.rho2_Q * self.Q - self.Xi
        return float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0])


@dataclass(frozen=True, eq=False)
class SccConstants:
    pf: PfForm
    blocks: tuple[NonRootScc, ...]
    root: SpectralConstants
    root_members: tuple[int, ...] = field(default=())

    @property
    def K(self) -> int:
        return self.pf.K

    @property
    def root_xi_full(self) -> np.ndarray:
        """Length-m weight vector putting the root ``xi`` on the root agents."""
        w = np.zeros(len(self.pf.permutation))
        w[list(self.root_members)] = self.root.xi
        return w


def nonroot_constants(block, index: int = 0, members=None, tol: Tolerances = DEFAULT_TOL) -> NonRootScc:
    """Constants of a diagonal block ``L_tilde + D`` with ``D >= 0``, ``D != 0``."""
    block = np.asarray(block, dtype=float)
    tilde, d = auxiliary_split(block)
    xi = left_eigenvector(tilde, tol)
    Xi = np.diag(xi)
    R = 0.5 * (Xi @ tilde + (Xi @ tilde).T)
    Q = 0.5 * (Xi @ block + (Xi @ block).T)
    ev = np.linalg.eigvalsh(Q)
    if ev[0] <= 0:
        raise SpectralError(f"Q^{index + 1} is not positive definite (min eigenvalue {ev[0]:.3g})")
    members = tuple(range(block.shape[0])) if members is None else tuple(members)
    return NonRootScc(index=index, members=members, block=block, L_tilde=tilde, D=d,
                      xi=xi, R=R, Q=Q, rho2_Q=float(ev[0]), rho_Xi=float(xi.max()))


def scc_constants(pf: PfForm, tol: Tolerances = DEFAULT_TOL) -> SccConstants:
    blocks = tuple(nonroot_constants(pf.block(k, k), k, pf.components[k], tol) for k in range(pf.K - 1))
    root = build_constants(pf.block(pf.K - 1, pf.K - 1), tol=tol)
    return SccConstants(pf, blocks, root, root_members=pf.components[-1])
