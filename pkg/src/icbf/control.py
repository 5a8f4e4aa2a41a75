"""Nominal LQR control and CBF safety filters.

A constraint row encodes the CBF condition

    Lf + Lg . u + alpha(h) >= 0

Single-row filtering uses the softplus-smoothed closed form of the CBF-QP,

    u = u_d + softplus_c(-Psi) Lg / |Lg|^2,   Psi = Lf + Lg . u_d + alpha(h)

with softplus_c(z) = ln(1 + exp(c z)) / c >= max(z, 0), so the condition holds
with margin. Several rows are handled by an exact active-set solve of
min 1/2 |u - u_d|^2 over the rows (two unknowns, at most two active rows).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInput, InvalidWeight

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray  # (2, 4) acting on (px, py, vx, vy)
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    riccati_residual: float


@dataclass(frozen=True)
class FilterConfig:
    c: float = 1.0
    u_max: Optional[float] = None
    lgh_eps: float = 1e-10

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidInput("filter.c must be positive")
        if not self.lgh_eps > 0:
            raise InvalidInput("filter.lgh_eps must be positive")
        if self.u_max is not None and not self.u_max > 0:
            raise InvalidInput("filter.u_max must be positive when set")


@dataclass(frozen=True)
class ConstraintRow:
    Lf: float
    Lg: np.ndarray
    alpha_h: float
    label: str = ""

    def value(self, u) -> float:
        """Lf + Lg . u + alpha(h); the row is satisfied when this is >= 0."""
        return float(self.Lf + self.Lg @ u + self.alpha_h)


@dataclass
class FilterResult:
    u: np.ndarray
    psi: np.ndarray  # per-row value at u_d
    active: tuple = ()
    degenerate: bool = False
    infeasible: bool = False
    dropped: tuple = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _double_integrator():
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = 1.0
    return A, B


def lqr_gain(Q, R) -> LqrGain:
    """Infinite-horizon LQR gain for the planar double integrator.

    Q weights (px, py, vx, vy) and must be diagonal, R must be diagonal positive
    definite; each axis then has the closed form
    K = [sqrt(q_p/r), sqrt(q_v/r + 2 sqrt(q_p/r))].
    """
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if Q.ndim == 1:
        Q = np.diag(Q)
    if R.ndim == 1:
        R = np.diag(R)
    if Q.shape != (4, 4) or R.shape != (2, 2):
        raise InvalidWeight(f"expected Q 4x4 and R 2x2, got {Q.shape} and {R.shape}")
    if np.any(Q - np.diag(np.diag(Q))) or np.any(R - np.diag(np.diag(R))):
        raise InvalidWeight("Q and R must be diagonal (axis-decoupled double integrator)")
    q = np.diag(Q)
    rho = np.diag(R)
    if np.any(rho <= 0):
        raise InvalidWeight("R must be positive definite")
    if np.any(q < 0) or np.any(q[:2] == 0):
        raise InvalidWeight("Q must be positive semidefinite with positive position weights")
    K = np.zeros((2, 4))
    P = np.zeros((4, 4))
    for i in range(2):
        qp, qv, r = q[i], q[i + 2], rho[i]
        p12 = np.sqrt(qp * r)
        p22 = np.sqrt(r * (qv + 2.0 * p12))
        p11 = p12 * p22 / r
        P[i, i], P[i, i + 2], P[i + 2, i], P[i + 2, i + 2] = p11, p12, p12, p22
        K[i, i], K[i, i + 2] = p12 / r, p22 / r
    A, B = _double_integrator()
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    resid = float(np.max(np.abs(res)))
    if resid > 1e-8 * max(1.0, float(np.max(np.abs(P)))):
        raise InvalidWeight(f"Riccati residual {resid:.2e} too large")
    return LqrGain(K=K, Q=Q, R=R, P=P, riccati_residual=resid)


def nominal_control(x, goal, gain: LqrGain, u_max: Optional[float] = None) -> np.ndarray:
    """u_d = -K (x - goal), clipped per axis to ``u_max`` when given."""
    u = -gain.K @ (np.asarray(x, dtype=float) - np.asarray(goal, dtype=float))
    if u_max is not None:
        u = np.clip(u, -u_max, u_max)
    return u


def softplus(z, c: float = 1.0):
    """ln(1 + exp(c z)) / c evaluated without overflow.

    Written as max(z, 0) + ln(1 + exp(-c|z|)) / c so that the result never
    rounds below the ReLU it smooths.
    """
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-c * np.abs(z))) / c


def relu_filter(u_d, row: ConstraintRow) -> np.ndarray:
    """Exact single-constraint CBF-QP solution."""
    u_d = np.asarray(u_d, dtype=float)
    psi = row.value(u_d)
    return u_d + max(-psi, 0.0) * row.Lg / float(row.Lg @ row.Lg)


def softplus_filter(u_d, row: ConstraintRow, cfg: FilterConfig) -> FilterResult:
    u_d = np.asarray(u_d, dtype=float)
    psi = row.value(u_d)
    n2 = float(row.Lg @ row.Lg)
    if np.sqrt(n2) < cfg.lgh_eps:
        log.warning("degenerate actuation on %s (|Lg h| = %.2e); passing nominal control",
                    row.label, np.sqrt(n2))
        return FilterResult(u=u_d.copy(), psi=np.array([psi]), degenerate=True)
    u = u_d + float(softplus(-psi, cfg.c)) * row.Lg / n2
    return FilterResult(u=u, psi=np.array([psi]), active=(0,))


def _kkt_candidate(u_d, A, b, S):
    if not S:
        return u_d.copy(), np.zeros(0)
    As = A[list(S)]
    M = As @ As.T
    if abs(np.linalg.det(M)) <= 1e-14 * max(1.0, np.max(np.abs(M))) ** len(S):
        return None, None
    mu = np.linalg.solve(M, b[list(S)] - As @ u_d)
    return u_d + As.T @ mu, mu


def qp_filter(u_d, rows: Sequence[ConstraintRow], cfg: FilterConfig) -> FilterResult:
    """Minimise 1/2 |u - u_d|^2 subject to every row, by active-set enumeration.

    Candidates are tried by increasing active-set size; the first one that is
    primal feasible with non-negative multipliers is the unique optimum. If the
    rows admit no common solution the most violated row is softplus-filtered
    and the result is flagged ``infeasible``.
    """
    u_d = np.asarray(u_d, dtype=float)
    if len(rows) > 4:
        raise InvalidInput("qp_filter supports at most 4 constraint rows")
    keep, dropped = [], []
    for i, r in enumerate(rows):
        if np.linalg.norm(r.Lg) < cfg.lgh_eps:
            log.warning("dropping constraint %s with degenerate actuation", r.label or i)
            dropped.append(i)
        else:
            keep.append(i)
    psi = np.array([r.value(u_d) for r in rows])
    if not keep:
        return FilterResult(u=u_d.copy(), psi=psi, degenerate=True, dropped=tuple(dropped))
    A = np.array([rows[i].Lg for i in keep], dtype=float)
    b = np.array([-(rows[i].Lf + rows[i].alpha_h) for i in keep])
    scale = 1.0 + np.abs(b) + np.linalg.norm(A, axis=1) * (1.0 + np.linalg.norm(u_d))
    for size in range(0, min(2, len(keep)) + 1):
        for S in itertools.combinations(range(len(keep)), size):
            u, mu = _kkt_candidate(u_d, A, b, S)
            if u is None:
                continue
            if np.any(mu < -1e-12 * scale[list(S)]):
                continue
            if np.all(A @ u - b >= -1e-12 * scale):
                full_mu = np.zeros(len(rows))
                full_mu[[keep[s] for s in S]] = mu
                return FilterResult(u=u, psi=psi, active=tuple(keep[s] for s in S),
                                    dropped=tuple(dropped), multipliers=full_mu)
    worst = keep[int(np.argmin(psi[keep]))]
    log.warning("CBF-QP infeasible; softplus-filtering most violated row %s", rows[worst].label or worst)
    res = softplus_filter(u_d, rows[worst], cfg)
    return FilterResult(u=res.u, psi=psi, active=(worst,), infeasible=True, dropped=tuple(dropped))
