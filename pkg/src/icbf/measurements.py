"""Range-only and bearing-only beacon measurement models.

Each model returns the stacked measurement prediction for K beacons together
with analytic position derivatives up to third order::

    range:    m_k(p) = |p - b_k|
    bearing:  m_k(p) = atan2(p_y - b_y^k, p_x - b_x^k)   wrapped to (-pi, pi]

and a diagonal measurement covariance Sigma(p) with its derivatives. Range
confidence degrades with distance as Sigma_kk = 1 + exp(m_k(p) - 10); bearing
uses Sigma = I.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BeaconSingularity, InvalidInput

log = logging.getLogger(__name__)

GUARD_RADIUS = 1e-6
RANGE_DROPOUT_DISTANCE = 10.0
EXP_CLAMP = 500.0

MODELS = ("range", "bearing")


@dataclass(frozen=True)
class BeaconSet:
    positions: np.ndarray  # (K, 2)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise InvalidInput(f"beacons must be a non-empty list of planar points, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidInput("beacon coordinates must be finite")
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if np.linalg.norm(pos[i] - pos[j]) <= 1e-9:
                    raise InvalidInput(f"beacons {i} and {j} coincide")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.positions.shape[0]

    @classmethod
    def equilateral(cls, side: float = 10.0, center=(0.0, 0.0)):
        """Three beacons on an equilateral triangle centred on ``center``, one vertex straight up."""
        radius = side / np.sqrt(3.0)
        angles = np.pi / 2 + np.array([0.0, 2.0, 4.0]) * np.pi / 3
        pts = np.column_stack([np.cos(angles), np.sin(angles)]) * radius + np.asarray(center, dtype=float)
        return cls(pts)


@dataclass(frozen=True)
class ModelDerivs:
    value: np.ndarray  # (K,)
    d1: Optional[np.ndarray] = None  # (K, 2)
    d2: Optional[np.ndarray] = None  # (K, 2, 2)
    d3: Optional[np.ndarray] = None  # (K, 2, 2, 2)

    @property
    def order(self) -> int:
        for k, d in enumerate((self.d1, self.d2, self.d3)):
            if d is None:
                return k
        return 3


@dataclass(frozen=True)
class Covariance:
    """Diagonal of Sigma(p) and its position derivatives (``d1[k, i]``, ``d2[k, i, j]``)."""
    diag: np.ndarray  # (K,)
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None
    d3: Optional[np.ndarray] = None

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


def wrap_residual(a):
    """Wrap angles into the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def _offsets(p, beacons: BeaconSet):
    p = np.asarray(p, dtype=float)
    if p.shape != (2,):
        raise InvalidInput(f"position must be a planar point, got shape {p.shape}")
    d = p - beacons.positions
    r = np.hypot(d[:, 0], d[:, 1])
    k = int(np.argmin(r))
    if r[k] < GUARD_RADIUS:
        raise BeaconSingularity(f"position {p.tolist()} within {GUARD_RADIUS} m of beacon {k}")
    return d, r


def range_model(p, beacons: BeaconSet, order: int = 2) -> ModelDerivs:
    d, r = _offsets(p, beacons)
    if order < 1:
        return ModelDerivs(r)
    u = d / r[:, None]
    d1 = u
    if order < 2:
        return ModelDerivs(r, d1)
    eye = np.eye(2)
    uu = u[:, :, None] * u[:, None, :]
    d2 = (eye - uu) / r[:, None, None]
    if order < 3:
        return ModelDerivs(r, d1, d2)
    uuu = uu[:, :, :, None] * u[:, None, None, :]
    sym = (eye[None, :, :, None] * u[:, None, None, :]
           + eye[None, :, None, :] * u[:, None, :, None]
           + eye[None, None, :, :] * u[:, :, None, None])
    d3 = (3.0 * uuu - sym) / (r ** 2)[:, None, None, None]
    return ModelDerivs(r, d1, d2, d3)


def _im_rot(w, ny):
    """Im(i**ny * w) for complex array ``w``."""
    return (w.imag, w.real, -w.imag, -w.real)[ny % 4]


def bearing_model(p, beacons: BeaconSet, order: int = 2) -> ModelDerivs:
    # theta = Im(log z) with z = dx + i dy; d/dx acts as d/dz and d/dy as i d/dz.
    d, _ = _offsets(p, beacons)
    value = wrap_residual(np.arctan2(d[:, 1], d[:, 0]))
    if order < 1:
        return ModelDerivs(value)
    z = d[:, 0] + 1j * d[:, 1]
    w1 = 1.0 / z
    d1 = np.column_stack([_im_rot(w1, 0), _im_rot(w1, 1)])
    if order < 2:
        return ModelDerivs(value, d1)
    w2 = -w1 * w1
    d2 = np.empty((len(z), 2, 2))
    for i in range(2):
        for j in range(2):
            d2[:, i, j] = _im_rot(w2, i + j)
    if order < 3:
        return ModelDerivs(value, d1, d2)
    w3 = 2.0 * w1 * w1 * w1
    d3 = np.empty((len(z), 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                d3[:, i, j, k] = _im_rot(w3, i + j + k)
    return ModelDerivs(value, d1, d2, d3)


def range_covariance(p, model: ModelDerivs, order: int = 2) -> Covariance:
    """Sigma_kk = 1 + exp(m_k(p) - 10), differentiated through the range model."""
    if model.order < order:
        raise InvalidInput(f"covariance order {order} needs model derivatives of order {order}")
    s = model.value - RANGE_DROPOUT_DISTANCE
    if np.any(s > EXP_CLAMP):
        log.warning("range covariance exponent clamped at %g", EXP_CLAMP)
        s = np.minimum(s, EXP_CLAMP)
    e = np.exp(s)
    diag = 1.0 + e
    if order < 1:
        return Covariance(diag)
    g = model.d1
    d1 = e[:, None] * g
    if order < 2:
        return Covariance(diag, d1)
    G = model.d2
    d2 = e[:, None, None] * (g[:, :, None] * g[:, None, :] + G)
    if order < 3:
        return Covariance(diag, d1, d2)
    ggg = g[:, :, None, None] * g[:, None, :, None] * g[:, None, None, :]
    mixed = (G[:, :, None, :] * g[:, None, :, None]
             + g[:, :, None, None] * G[:, None, :, :]
             + G[:, :, :, None] * g[:, None, None, :])
    d3 = e[:, None, None, None] * (ggg + mixed + model.d3)
    return Covariance(diag, d1, d2, d3)


def bearing_covariance(p, model: ModelDerivs, order: int = 2) -> Covariance:
    k = model.value.shape[0]
    return Covariance(np.ones(k),
                      np.zeros((k, 2)) if order >= 1 else None,
                      np.zeros((k, 2, 2)) if order >= 2 else None,
                      np.zeros((k, 2, 2, 2)) if order >= 3 else None)


def measurement_model(kind: str, p, beacons: BeaconSet, order: int = 2) -> ModelDerivs:
    if kind == "range":
        return range_model(p, beacons, order)
    if kind == "bearing":
        return bearing_model(p, beacons, order)
    raise InvalidInput(f"unknown measurement model {kind!r}")


def covariance(kind: str, p, model: ModelDerivs, order: int = 2) -> Covariance:
    if kind == "range":
        return range_covariance(p, model, order)
    if kind == "bearing":
        return bearing_covariance(p, model, order)
    raise InvalidInput(f"unknown measurement model {kind!r}")


def measure(kind: str, p, beacons: BeaconSet) -> np.ndarray:
    """Noiseless measurement vector at position ``p``."""
    return measurement_model(kind, p, beacons, order=0).value
