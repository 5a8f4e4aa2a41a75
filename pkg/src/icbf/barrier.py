"""Barrier functions on the minimum eigenvalue of the information field.

Position barriers (functions of p only):

* raw:     h = lam_min(H) - lam_s           (localize)   or  lam_s - lam_min(H)  (avoid)
* smooth:  h = smoothmin_kappa(lam - lam_s)                (localize)
           h = lam_s - smoothmin_kappa(lam) - ln(n)/kappa  (avoid)
  both under-approximate the raw barrier by at most ln(n)/kappa.
* cross:   h_i = lam_{i+1} - lam_i - delta_cross  keeps adjacent eigenvalues apart.

The double integrator (f = (v, 0), g = (0, I)) gives position barriers
relative degree two, so each is lifted to

    h_r = h (1 + sigmoid(grad h . v)) - delta

which has relative degree one. Lifting needs the spatial Hessian of h; by
default it is a central difference of the analytic gradient.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .eigen import SIMPLE_TOL, pinv_shift, smooth_min, smooth_min_weights
from .errors import InvalidInput, NonSimpleEigenvalue, SafetyViolation
from .measurements import BeaconSet
from .nls import InformationField, information_field

log = logging.getLogger(__name__)

LOCALIZE = "localize"
AVOID = "avoid"
ANALYTIC = "analytic"
ANTI_CROSSING = "anticrossing"


@dataclass(frozen=True)
class BarrierConfig:
    lambda_s: float
    kappa: float = 1.0
    delta: float = 0.01
    delta_cross: float = 0.01
    alpha_gain: float = 10.0
    alpha_gain_cross: float = 100.0
    mode: str = LOCALIZE
    method: str = ANALYTIC
    simple_tol: float = SIMPLE_TOL
    hess_method: str = "fd"
    hess_step: float = 1e-5

    def __post_init__(self):
        for name in ("lambda_s", "kappa", "delta", "delta_cross", "alpha_gain",
                     "alpha_gain_cross", "simple_tol", "hess_step"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"barrier.{name} must be positive")
        if self.mode not in (LOCALIZE, AVOID):
            raise InvalidInput(f"barrier.mode must be {LOCALIZE!r} or {AVOID!r}")
        if self.method not in (ANALYTIC, ANTI_CROSSING):
            raise InvalidInput(f"barrier.method must be {ANALYTIC!r} or {ANTI_CROSSING!r}")
        if self.hess_method not in ("fd", "analytic"):
            raise InvalidInput("barrier.hess_method must be 'fd' or 'analytic'")


@dataclass
class Spatial:
    """A position barrier with its spatial gradient and Hessian."""
    h: float
    grad: np.ndarray
    hess: Optional[np.ndarray] = None
    name: str = ""
    info: dict = field(default_factory=dict)


@dataclass
class BarrierEval:
    h: float
    grad_x: np.ndarray  # d h / d(p, v)
    Lf: float
    Lg: np.ndarray
    name: str = ""
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LambdaField:
    value: float
    grad: np.ndarray
    hess: np.ndarray
    field: InformationField


class Stencil:
    """Information field at ``p`` plus the central-difference neighbours used for Hessians."""

    def __init__(self, p, kind: str, beacons: BeaconSet, step: float = 1e-5, analytic: bool = False):
        self.p = np.asarray(p, dtype=float)
        self.kind = kind
        self.beacons = beacons
        self.step = step
        self.analytic = analytic
        self.center = information_field(self.p, kind, beacons, second=analytic)
        self.plus = self.minus = None
        if not analytic:
            eye = np.eye(2)
            self.plus = [information_field(self.p + step * e, kind, beacons) for e in eye]
            self.minus = [information_field(self.p - step * e, kind, beacons) for e in eye]

    def fd_hessian(self, grad_fn) -> np.ndarray:
        cols = [(grad_fn(self.plus[j]) - grad_fn(self.minus[j])) / (2.0 * self.step) for j in range(2)]
        Hs = np.column_stack(cols)
        return 0.5 * (Hs + Hs.T)


def _eig_grads(F: InformationField) -> np.ndarray:
    """Row i holds grad lam_i = (v_i^T dH_j v_i)_j; ill-defined only where lam_i is repeated."""
    V = F.eig.vectors
    return np.einsum("ai,jab,bi->ij", V, F.dH, V)


def _eig_hessian(F: InformationField, i: int) -> np.ndarray:
    v = F.eig.vectors[:, i]
    P = pinv_shift(F.H, F.eig.values[i], F.eig)
    dHv = np.einsum("jab,b->ja", F.dH, v)
    Hs = np.einsum("a,jlab,b->jl", v, F.d2H, v) - 2.0 * dHv @ P @ dHv.T
    return 0.5 * (Hs + Hs.T)


def _lam_min_grad(F: InformationField, simple_tol: float) -> np.ndarray:
    if not F.eig.is_simple(simple_tol):
        raise NonSimpleEigenvalue(
            f"lam_min not simple at p={F.p.tolist()} (gap {F.eig.gapmin:.3e})", gap=F.eig.gapmin)
    return _eig_grads(F)[0]


def lambda_field(p, kind: str, beacons: BeaconSet, hess: str = "fd", step: float = 1e-5,
                 simple_tol: float = SIMPLE_TOL, stencil: Optional[Stencil] = None) -> LambdaField:
    """lam_min of the information field with its spatial gradient and Hessian.

    Raises NonSimpleEigenvalue where the smallest eigenvalue is repeated.
    """
    st = stencil or Stencil(p, kind, beacons, step=step, analytic=(hess == "analytic"))
    F = st.center
    grad = _lam_min_grad(F, simple_tol)
    if st.analytic:
        H2 = _eig_hessian(F, 0)
    else:
        H2 = st.fd_hessian(lambda G: _lam_min_grad(G, simple_tol))
    return LambdaField(F.eig.lam_min, grad, H2, F)


def _sign(cfg: BarrierConfig) -> float:
    return 1.0 if cfg.mode == LOCALIZE else -1.0


def h_raw(st: Stencil, cfg: BarrierConfig) -> Spatial:
    """lam_min - lam_s (localize) or lam_s - lam_min (avoid)."""
    lf = lambda_field(st.p, st.kind, st.beacons, simple_tol=cfg.simple_tol, stencil=st)
    s = _sign(cfg)
    return Spatial(h=s * (lf.value - cfg.lambda_s), grad=s * lf.grad, hess=s * lf.hess, name="h",
                   info={"lam": st.center.eig.values.copy()})


def _smooth_value_grad(F: InformationField, cfg: BarrierConfig):
    lam = F.eig.values
    n = lam.shape[0]
    wts = smooth_min_weights(lam, cfg.kappa)
    # sum_i w_i v_i^T dH v_i = tr(W dH) with W = sum_i w_i v_i v_i^T; well defined at coalescence.
    V = F.eig.vectors
    W = (V * wts) @ V.T
    grad = np.einsum("ab,jab->j", W, F.dH)
    if cfg.mode == LOCALIZE:
        return smooth_min(lam - cfg.lambda_s, cfg.kappa), grad
    return cfg.lambda_s - smooth_min(lam, cfg.kappa) - np.log(n) / cfg.kappa, -grad


def h_smooth(st: Stencil, cfg: BarrierConfig) -> Spatial:
    """Log-sum-exp smoothed barrier; needs no eigenvalue simplicity."""
    F = st.center
    h, grad = _smooth_value_grad(F, cfg)
    if st.analytic:
        hess = _smooth_hessian_analytic(F, cfg)
    else:
        hess = st.fd_hessian(lambda G: _smooth_value_grad(G, cfg)[1])
    if not F.eig.is_simple(cfg.simple_tol):
        log.debug("smooth barrier evaluated at coalescence p=%s", F.p.tolist())
    return Spatial(h=float(h), grad=grad, hess=hess, name="h_smooth",
                   info={"lam": F.eig.values.copy()})


def _smooth_hessian_analytic(F: InformationField, cfg: BarrierConfig) -> np.ndarray:
    if not F.eig.is_simple(cfg.simple_tol):
        raise NonSimpleEigenvalue("analytic smooth-barrier Hessian needs a simple spectrum", gap=F.eig.gapmin)
    lam = F.eig.values
    wts = smooth_min_weights(lam, cfg.kappa)
    grads = _eig_grads(F)
    gbar = wts @ grads
    Hs = sum(wts[i] * _eig_hessian(F, i) for i in range(lam.shape[0]))
    Hs = Hs - cfg.kappa * (np.einsum("i,ij,il->jl", wts, grads, grads) - np.outer(gbar, gbar))
    return _sign(cfg) * Hs


def _gap_grad(F: InformationField, i: int, simple_tol: float) -> np.ndarray:
    eig = F.eig
    gap = eig.values[i + 1] - eig.values[i]
    if gap > simple_tol * eig.scale:
        g = _eig_grads(F)
        return g[i + 1] - g[i]
    if eig.dim != 2:
        raise NonSimpleEigenvalue("eigenvalue gap collapsed", gap=gap)
    H, dH = F.H, F.dH
    a, b = H[0, 0] - H[1, 1], H[0, 1]
    root = np.hypot(a, 2.0 * b)
    if root == 0.0:
        raise SafetyViolation(f"eigenvalues coalesced exactly at p={F.p.tolist()}")
    return (a * (dH[:, 0, 0] - dH[:, 1, 1]) + 4.0 * b * dH[:, 0, 1]) / root


def h_cross(st: Stencil, cfg: BarrierConfig) -> list:
    """Anti-crossing barriers lam_{i+1} - lam_i - delta_cross for i = 1..n-1."""
    F = st.center
    out = []
    for i in range(F.eig.dim - 1):
        gap = float(F.eig.values[i + 1] - F.eig.values[i])
        grad = _gap_grad(F, i, cfg.simple_tol)
        if st.analytic:
            hess = _eig_hessian(F, i + 1) - _eig_hessian(F, i)
        else:
            hess = st.fd_hessian(lambda G: _gap_grad(G, i, cfg.simple_tol))
        out.append(Spatial(h=gap - cfg.delta_cross, grad=grad, hess=hess, name=f"h_cross_{i + 1}",
                           info={"gap": gap}))
    return out


def sigmoid(z):
    """Logistic function, accurate in both tails."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lift_rd2(base: Spatial, p, v, delta: float) -> BarrierEval:
    """Relative-degree-two lift h_r = h (1 + sigmoid(L_f h)) - delta for the double integrator."""
    v = np.asarray(v, dtype=float)
    lfh = float(base.grad @ v)
    s = float(sigmoid(lfh))
    ds = s * (1.0 - s)
    h_r = base.h * (1.0 + s) - delta
    dp = base.grad * (1.0 + s) + base.h * ds * (base.hess @ v)
    dv = base.h * ds * base.grad
    info = dict(base.info)
    info.update(h_base=base.h, lfh=lfh)
    return BarrierEval(h=float(h_r), grad_x=np.concatenate([dp, dv]), Lf=float(dp @ v), Lg=dv,
                       name=base.name + "_r", info=info)


def unlifted(base: Spatial, v) -> BarrierEval:
    """State-space view of a position barrier without lifting (L_g h = 0)."""
    v = np.asarray(v, dtype=float)
    return BarrierEval(h=base.h, grad_x=np.concatenate([base.grad, np.zeros(2)]),
                       Lf=float(base.grad @ v), Lg=np.zeros(2), name=base.name, info=dict(base.info))


def alpha_eval(s, gain: float):
    """Extended class-K_inf function gain * s * |s| (equals gain * s^2 for s >= 0)."""
    return gain * s * np.abs(s)
