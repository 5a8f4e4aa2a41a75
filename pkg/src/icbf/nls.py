"""Nonlinear least-squares localization cost and the information field.

The estimation cost for a measurement vector ``m`` is

    J(p, m) = sum_k (m_k - M_k(p))^2 / Sigma_kk(p)

where ``M`` is the beacon measurement model. Gradient and Hessian are the
full analytic ones, including the chain terms through the position
dependent covariance (not Gauss-Newton).

The *information field* is the Hessian evaluated with the measurement
replaced by its prediction, H(p) = d2J/dp2 (p, M(p)). Along that manifold
the residual is identically zero, so H reduces to 2 sum_k g_k g_k^T / Sigma_kk
while its position derivative picks up the chain term through m = M(p).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .eigen import EigenSystem, eig_sym
from .errors import BeaconSingularity, InvalidInput
from .measurements import BeaconSet, covariance, measurement_model, wrap_residual

log = logging.getLogger(__name__)

DEFAULT_STEP = {"range": 1e-2, "bearing": 1.0}


@dataclass(frozen=True)
class CostEval:
    J: float
    grad: np.ndarray
    hess: Optional[np.ndarray] = None


@dataclass(frozen=True)
class InformationField:
    p: np.ndarray
    H: np.ndarray
    dH: np.ndarray  # dH[j] = dH/dp_j
    eig: EigenSystem
    d2H: Optional[np.ndarray] = None  # d2H[j, l] = d2H/dp_j dp_l


@dataclass
class NlsOptions:
    step: float = 1e-2
    max_iters: int = 500
    grad_tol: float = 1e-10
    warm_start: bool = True
    line_search: bool = True

    def __post_init__(self):
        if not (self.step > 0 and self.grad_tol > 0 and self.max_iters > 0):
            raise InvalidInput("NLS step, grad_tol and max_iters must be positive")

    @classmethod
    def for_model(cls, kind: str, **kw):
        kw.setdefault("step", DEFAULT_STEP[kind])
        return cls(**kw)


@dataclass(frozen=True)
class NlsResult:
    p: np.ndarray
    iters: int
    converged: bool
    J: float
    grad_norm: float
    history: list = field(default_factory=list, repr=False)


def _weights(cov, order):
    """w = 1/Sigma and its position derivatives up to ``order``."""
    S = cov.diag
    w = 1.0 / S
    out = [w]
    if order >= 1:
        S1 = cov.d1
        out.append(-S1 / (S * S)[:, None])
    if order >= 2:
        S2 = cov.d2
        out.append(2.0 * S1[:, :, None] * S1[:, None, :] / (S ** 3)[:, None, None]
                   - S2 / (S * S)[:, None, None])
    if order >= 3:
        S3 = cov.d3
        s111 = S1[:, :, None, None] * S1[:, None, :, None] * S1[:, None, None, :]
        s21 = (S2[:, :, None, :] * S1[:, None, :, None]
               + S1[:, :, None, None] * S2[:, None, :, :]
               + S2[:, :, :, None] * S1[:, None, None, :])
        out.append(-6.0 * s111 / (S ** 4)[:, None, None, None]
                   + 2.0 * s21 / (S ** 3)[:, None, None, None]
                   - S3 / (S * S)[:, None, None, None])
    return out


def _residual(kind, m, value):
    r = np.asarray(m, dtype=float) - value
    if kind == "bearing":
        r = wrap_residual(r)
    return r


def _check_m(m, beacons):
    m = np.asarray(m, dtype=float)
    if m.shape != (len(beacons),):
        raise InvalidInput(f"measurement vector has shape {m.shape}, expected ({len(beacons)},)")
    return m


def _sym_ij(X):
    return X + X.transpose(0, 2, 1, *range(3, X.ndim))


def _hess_terms(r, w, W1, W2, g, G):
    gg = g[:, :, None] * g[:, None, :]
    W1g = W1[:, :, None] * g[:, None, :]
    per_k = (W2 * (r * r)[:, None, None]
             - 2.0 * r[:, None, None] * (W1g + W1g.transpose(0, 2, 1))
             + 2.0 * w[:, None, None] * gg
             - 2.0 * (w * r)[:, None, None] * G)
    return per_k.sum(axis=0)


def cost_eval(p, m, kind: str, beacons: BeaconSet, order: int = 2) -> CostEval:
    """Cost, gradient and (for ``order`` 2) full Hessian of the weighted least-squares cost."""
    m = _check_m(m, beacons)
    md = measurement_model(kind, p, beacons, order)
    cov = covariance(kind, p, md, order)
    ws = _weights(cov, order)
    r = _residual(kind, m, md.value)
    w = ws[0]
    J = float(np.sum(w * r * r))
    if order < 1:
        return CostEval(J, None)
    W1, g = ws[1], md.d1
    grad = np.sum(W1 * (r * r)[:, None] - 2.0 * (w * r)[:, None] * g, axis=0)
    if order < 2:
        return CostEval(J, grad)
    hess = _hess_terms(r, w, W1, ws[2], g, md.d2)
    return CostEval(J, grad, hess)


def hessian_partials(p, m, kind: str, beacons: BeaconSet):
    """Partial derivatives of the cost Hessian H(p, m).

    Returns ``(dH_dp, dH_dm)`` with ``dH_dp[l] = dH/dp_l`` at fixed ``m`` and
    ``dH_dm[k] = dH/dm_k`` at fixed ``p``.
    """
    m = _check_m(m, beacons)
    md = measurement_model(kind, p, beacons, 3)
    ws = _weights(covariance(kind, p, md, 3), 3)
    return _partials(kind, m, md, ws)


def _partials(kind, m, md, ws):
    w, W1, W2, W3 = ws
    g, G, T = md.d1, md.d2, md.d3
    r = _residual(kind, m, md.value)
    rr = r[:, None, None, None]
    ww = w[:, None, None, None]
    W1g = W1[:, :, None] * g[:, None, :]
    gg = g[:, :, None] * g[:, None, :]
    gl = g[:, None, None, :]
    t = (W3 * rr * rr
         - 2.0 * rr * W2[:, :, :, None] * gl
         + 2.0 * gl * (W1g + W1g.transpose(0, 2, 1))[:, :, :, None]
         - 2.0 * rr * (_sym_ij(W2[:, :, None, :] * g[:, None, :, None])
                       + _sym_ij(G[:, :, None, :] * W1[:, None, :, None]))
         + 2.0 * W1[:, None, None, :] * gg[:, :, :, None]
         + 2.0 * ww * _sym_ij(G[:, :, None, :] * g[:, None, :, None])
         - 2.0 * rr * W1[:, None, None, :] * G[:, :, :, None]
         + 2.0 * ww * gl * G[:, :, :, None]
         - 2.0 * ww * rr * T)
    dH_dp = t.sum(axis=0).transpose(2, 0, 1)
    dH_dm = (2.0 * r[:, None, None] * W2
             - 2.0 * (W1g + W1g.transpose(0, 2, 1))
             - 2.0 * w[:, None, None] * G)
    return dH_dp, dH_dm


def _second_field_derivative(w, W1, W2, g, G, T):
    """d2H/dp_l dp_q of 2 sum_k w g g^T along the zero-residual manifold."""
    gg = g[:, :, None] * g[:, None, :]
    Gg = G.transpose(0, 2, 1)[:, :, :, None] * g[:, None, None, :]  # [k, q, i, j] = G_iq g_j
    Gg = Gg + Gg.transpose(0, 1, 3, 2)
    Tg = np.einsum("kilq,kj->klqij", T, g)
    GG = np.einsum("kil,kjq->klqij", G, G)
    out = (np.einsum("klq,kij->lqij", W2, gg)
           + np.einsum("kl,kqij->lqij", W1, Gg)
           + np.einsum("kq,klij->lqij", W1, Gg)
           + np.einsum("k,klqij->lqij", w, Tg + Tg.transpose(0, 1, 2, 4, 3)
                       + GG + GG.transpose(0, 1, 2, 4, 3)))
    return 2.0 * out


def information_field(p, kind: str, beacons: BeaconSet, second: bool = False) -> InformationField:
    """H(p, M(p)) with its total position derivative (and optionally the second derivative)."""
    p = np.asarray(p, dtype=float)
    md = measurement_model(kind, p, beacons, 3)
    cov = covariance(kind, p, md, 3)
    ws = _weights(cov, 3)
    w, W1, W2, _ = ws
    m = md.value
    r = _residual(kind, m, md.value)
    H = _hess_terms(r, w, W1, W2, md.d1, md.d2)
    dH_dp, dH_dm = _partials(kind, m, md, ws)
    dH = dH_dp + np.einsum("kij,kl->lij", dH_dm, md.d1)
    dH = 0.5 * (dH + dH.transpose(0, 2, 1))
    d2H = None
    if second:
        d2H = _second_field_derivative(w, W1, W2, md.d1, md.d2, md.d3)
    return InformationField(p=p, H=H, dH=dH, eig=eig_sym(H), d2H=d2H)


def information_matrix_grid(points, kind: str, beacons: BeaconSet) -> np.ndarray:
    """Zero-residual information matrices 2 sum_k g g^T / Sigma_kk for an (N, 2) array of points."""
    pts = np.asarray(points, dtype=float)
    d = pts[:, None, :] - beacons.positions[None, :, :]
    r2 = np.maximum(np.sum(d * d, axis=-1), 1e-300)
    if kind == "range":
        r = np.sqrt(r2)
        g = d / r[..., None]
        w = 1.0 / (1.0 + np.exp(np.minimum(r - 10.0, 500.0)))
    elif kind == "bearing":
        g = np.stack([-d[..., 1], d[..., 0]], axis=-1) / r2[..., None]
        w = np.ones_like(r2)
    else:
        raise InvalidInput(f"unknown measurement model {kind!r}")
    return 2.0 * np.einsum("nk,nki,nkj->nij", w, g, g)


def lambda_min_grid(points, kind: str, beacons: BeaconSet) -> np.ndarray:
    H = information_matrix_grid(points, kind, beacons)
    mean = 0.5 * (H[:, 0, 0] + H[:, 1, 1])
    return mean - np.hypot(0.5 * (H[:, 0, 0] - H[:, 1, 1]), H[:, 0, 1])


def _value_grad(p, m, kind, beacons):
    c = cost_eval(p, m, kind, beacons, order=1)
    return c.J, c.grad


def solve_nls(m, p0, opts: NlsOptions, kind: str, beacons: BeaconSet, track: bool = False) -> NlsResult:
    """Gradient-descent estimate of the position from the measurement vector ``m``.

    With ``opts.line_search`` the step length starts from ``opts.step`` and is
    adapted with Barzilai-Borwein steps, each trial backtracked until the
    Armijo condition holds, so accepted iterates never increase J. Without it
    a fixed step is used and ten consecutive increases of J stop the descent.
    """
    m = _check_m(m, beacons)
    p = np.array(p0, dtype=float)
    J, g = _value_grad(p, m, kind, beacons)
    history = [J] if track else []
    step = opts.step
    increases = 0
    prev = None
    for it in range(opts.max_iters):
        gn = float(np.linalg.norm(g))
        if gn <= opts.grad_tol:
            return NlsResult(p, it, True, J, gn, history)
        if not opts.line_search:
            p_new = p - opts.step * g
            J_new, g_new = _value_grad(p_new, m, kind, beacons)
            increases = increases + 1 if J_new > J else 0
            p, J, g = p_new, J_new, g_new
            if track:
                history.append(J)
            if increases >= 10:
                log.warning("gradient descent diverging after %d iterations", it + 1)
                return NlsResult(p, it + 1, False, J, float(np.linalg.norm(g)), history)
            continue
        if prev is not None:
            s, y = p - prev[0], g - prev[1]
            sy = float(s @ y)
            step = float(s @ s) / sy if sy > 0 else opts.step
        t = step
        for _ in range(60):
            trial = p - t * g
            try:
                J_new, g_new = _value_grad(trial, m, kind, beacons)
            except BeaconSingularity:
                J_new = np.inf
            if J_new <= J - 1e-4 * t * gn * gn:
                break
            t *= 0.5
        else:
            return NlsResult(p, it, False, J, gn, history)
        prev = (p, g)
        p, J, g = trial, J_new, g_new
        if track:
            history.append(J)
    gn = float(np.linalg.norm(g))
    return NlsResult(p, opts.max_iters, gn <= opts.grad_tol, J, gn, history)
