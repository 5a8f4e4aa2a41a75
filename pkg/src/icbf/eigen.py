"""Small dense symmetric eigen-decomposition and eigenpair derivatives.

Everything here works on real symmetric matrices of dimension at most 8.
Dimension 2 uses a closed form, larger sizes a cyclic Jacobi sweep; both
return eigenvalues in ascending order with a deterministic sign convention
on the eigenvectors (first significant component positive) so eigenvectors
are a function of the matrix whenever the spectrum is simple.

For a simple eigenpair (lam, v) of A(t) the rates are

    lam'  = v^T A' v
    v'    = (A - lam I)^+ (lam' I - A') v
    lam'' = v'^T A' v + v^T A'' v + v^T A' v'
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidMatrix, NonSimpleEigenvalue

MAX_DIM = 8
SIMPLE_TOL = 1e-8
RANK_TOL = 1e-9
SIGN_TOL = 1e-12


def as_sym(A) -> np.ndarray:
    """Validate ``A`` and return an exactly symmetric float copy.

    Symmetric input is returned unchanged (0.5 * (a + a) == a in floating point).
    """
    a = np.array(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n < 1 or n > MAX_DIM:
        raise InvalidMatrix(f"dimension {n} outside 1..{MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("matrix has non-finite entries")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns, orthonormal
    gapmin: float
    scale: float  # Frobenius norm of the decomposed matrix

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def lam_min(self) -> float:
        return float(self.values[0])

    def is_simple(self, simple_tol: float = SIMPLE_TOL) -> bool:
        return self.gapmin > simple_tol * self.scale


@dataclass(frozen=True)
class EigenRates:
    lam_dot: np.ndarray
    vec_dot: np.ndarray
    lam_ddot: Optional[np.ndarray] = None
    vec_ddot: Optional[np.ndarray] = None


def _fix_signs(V: np.ndarray) -> np.ndarray:
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if idx.size and col[idx[0]] < 0:
            V[:, j] = -col
    return V


def _eig2(a: np.ndarray):
    p, b, q = a[0, 0], a[0, 1], a[1, 1]
    mean = 0.5 * (p + q)
    half = 0.5 * (p - q)
    r = np.hypot(half, b)
    values = np.array([mean - r, mean + r])
    if r == 0.0:
        return values, np.eye(2)
    phi = 0.5 * np.arctan2(b, half)
    c, s = np.cos(phi), np.sin(phi)
    return values, np.array([[-s, c], [c, s]])


def _jacobi(a: np.ndarray, max_sweeps: int = 64):
    a = a.copy()
    n = a.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-17 * norm or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], V[:, order]


def eig_sym(A) -> EigenSystem:
    """Eigen-decomposition of a small symmetric matrix.

    Raises InvalidMatrix for non-finite entries or unsupported shapes.
    """
    a = as_sym(A)
    n = a.shape[0]
    if n == 1:
        values, V = a[0].copy(), np.ones((1, 1))
    elif n == 2:
        values, V = _eig2(a)
    else:
        values, V = _jacobi(a)
    V = _fix_signs(V)
    gapmin = float(np.min(np.diff(values))) if n > 1 else np.inf
    return EigenSystem(values=values, vectors=V, gapmin=gapmin, scale=float(np.linalg.norm(a)))


def pinv_shift(A, lam: float, eigsys: EigenSystem, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Spectral pseudoinverse of ``A - lam*I``.

    Directions whose shifted eigenvalue is within ``rank_tol * ||A||`` of zero map to zero.
    """
    shifted = eigsys.values - lam
    inv = np.zeros_like(shifted)
    keep = np.abs(shifted) > rank_tol * eigsys.scale
    inv[keep] = 1.0 / shifted[keep]
    V = eigsys.vectors
    P = (V * inv) @ V.T
    return 0.5 * (P + P.T)


def _require_simple(eigsys: EigenSystem, simple_tol: float):
    if not eigsys.is_simple(simple_tol):
        raise NonSimpleEigenvalue(
            f"eigenvalue gap {eigsys.gapmin:.3e} below {simple_tol:.1e} * ||A|| ({eigsys.scale:.3e})",
            gap=eigsys.gapmin,
        )


def eig_rates(A, A_dot, eigsys: EigenSystem, simple_tol: float = SIMPLE_TOL) -> EigenRates:
    """First derivatives of every eigenpair along the direction ``A_dot``."""
    _require_simple(eigsys, simple_tol)
    a = as_sym(A)
    ad = as_sym(A_dot)
    V = eigsys.vectors
    n = eigsys.dim
    lam_dot = np.einsum("ij,ik,kj->j", V, ad, V)
    vec_dot = np.empty_like(V)
    eye = np.eye(n)
    for i in range(n):
        P = pinv_shift(a, eigsys.values[i], eigsys)
        vec_dot[:, i] = P @ ((lam_dot[i] * eye - ad) @ V[:, i])
    return EigenRates(lam_dot=lam_dot, vec_dot=vec_dot)


def eig_accel(A, A_dot, A_ddot, eigsys: EigenSystem, rates: EigenRates,
              simple_tol: float = SIMPLE_TOL) -> EigenRates:
    """Second derivatives along a path with first/second matrix derivatives ``A_dot``, ``A_ddot``.

    ``vec_ddot`` keeps unit norm to second order, so it carries the component
    ``-|v'|^2 v`` along the eigenvector and a factor 2 on the ``(lam' I - A') v'`` term.
    """
    _require_simple(eigsys, simple_tol)
    a = as_sym(A)
    ad = as_sym(A_dot)
    add = as_sym(A_ddot)
    V = eigsys.vectors
    Vd = rates.vec_dot
    n = eigsys.dim
    eye = np.eye(n)
    lam_ddot = np.empty(n)
    vec_ddot = np.empty_like(V)
    for i in range(n):
        v, vd = V[:, i], Vd[:, i]
        lam_ddot[i] = vd @ ad @ v + v @ add @ v + v @ ad @ vd
        P = pinv_shift(a, eigsys.values[i], eigsys)
        rhs = (lam_ddot[i] * eye - add) @ v + 2.0 * ((rates.lam_dot[i] * eye - ad) @ vd)
        vec_ddot[:, i] = P @ rhs - (vd @ vd) * v
    return EigenRates(lam_dot=rates.lam_dot, vec_dot=rates.vec_dot,
                      lam_ddot=lam_ddot, vec_ddot=vec_ddot)


def smooth_min(values, kappa: float) -> float:
    """Log-sum-exp under-approximation of ``min(values)``.

    min(values) - ln(n)/kappa <= smooth_min(values, kappa) <= min(values)
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    x = np.asarray(values, dtype=float).ravel()
    lo = x.min()
    return float(lo - np.log(np.sum(np.exp(-kappa * (x - lo)))) / kappa)


def smooth_min_weights(values, kappa: float) -> np.ndarray:
    """Gradient of :func:`smooth_min` with respect to ``values`` (a softmax of ``-kappa*values``)."""
    x = np.asarray(values, dtype=float).ravel()
    e = np.exp(-kappa * (x - x.min()))
    return e / e.sum()
