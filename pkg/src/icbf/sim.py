"""Closed-loop double-integrator simulation with information-CBF filtering.

Each step: synthesize beacon measurements at the true position, localize by
gradient descent (warm started), build the information field at the
estimate, evaluate and lift the barriers, filter the LQR command and
integrate the dynamics exactly over ``dt`` with the control held constant.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import barrier as bar
from .control import (ConstraintRow, FilterConfig, LqrGain, lqr_gain, nominal_control,
                      qp_filter, softplus_filter)
from .errors import ConfigError, InvalidInput, NonSimpleEigenvalue, SafetyViolation
from .measurements import BeaconSet, measure, wrap_residual
from .nls import NlsOptions, information_matrix_grid, solve_nls

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-3

CSV_COLUMNS = ("t", "px", "py", "vx", "vy", "phat_x", "phat_y", "ud_x", "ud_y", "u_x", "u_y",
               "lam1", "lam2", "h_raw", "h_smooth_or_cross", "h_r", "psi", "step_ms")
EXTRA_COLUMNS = ("h_r_cross", "cbf_residual", "lam1_true", "nls_iters")


@dataclass(frozen=True)
class State:
    p: np.ndarray
    v: np.ndarray

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (4,) or not np.all(np.isfinite(x)):
            raise InvalidInput(f"state must be 4 finite numbers, got {x}")
        return cls(x[:2].copy(), x[2:].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: str
    beacons: BeaconSet
    barrier: bar.BarrierConfig
    filter: FilterConfig
    nls: NlsOptions
    x0: State
    goal: State
    dt: float = 1e-3
    t_final: float = 10.0
    lqr_q: tuple = (1.0, 1.0, 1.0, 1.0)
    lqr_r: tuple = (1.0, 1.0)
    noise_std: Optional[float] = None
    seed: int = 0
    evaluate_at: str = "estimate"
    violation_tol: float = VIOLATION_TOL

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_final / self.dt + 1e-9))

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


@dataclass
class TrajectoryLog:
    name: str
    method: str
    mode: str
    filtered: bool
    columns: dict
    summary: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.columns["t"])

    def column(self, key) -> np.ndarray:
        return self.columns[key]


def step_dynamics(state: State, u, dt: float) -> State:
    """Exact zero-order-hold step of p'' = u."""
    u = np.asarray(u, dtype=float)
    return State(state.p + state.v * dt + 0.5 * u * dt * dt, state.v + u * dt)


class Controller:
    """Barrier evaluation and filtering for one scenario; holds no per-run state."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.bcfg = cfg.barrier
        self.gain: LqrGain = lqr_gain(np.asarray(cfg.lqr_q, dtype=float), np.asarray(cfg.lqr_r, dtype=float))

    def barriers(self, p, v):
        """Return (raw position barrier, secondary position barrier, lifted evals)."""
        b = self.bcfg
        st = bar.Stencil(p, self.cfg.model, self.cfg.beacons, step=b.hess_step,
                         analytic=(b.hess_method == "analytic"))
        if b.method == bar.ANALYTIC:
            smooth = bar.h_smooth(st, b)
            lam = st.center.eig.values
            raw = _raw_value(lam, b)
            lifted = [bar.lift_rd2(smooth, p, v, b.delta)]
            return raw, smooth.h, lifted, lam
        try:
            base = bar.h_raw(st, b)
        except NonSimpleEigenvalue as exc:
            raise SafetyViolation(f"eigenvalues coalesced under anti-crossing: {exc}") from exc
        cross = bar.h_cross(st, b)
        lifted = [bar.lift_rd2(base, p, v, b.delta)] + [bar.lift_rd2(c, p, v, b.delta) for c in cross]
        return base.h, cross[0].h, lifted, st.center.eig.values

    def rows(self, lifted):
        b = self.bcfg
        gains = [b.alpha_gain] + [b.alpha_gain_cross] * (len(lifted) - 1)
        return [ConstraintRow(Lf=e.Lf, Lg=e.Lg, alpha_h=float(bar.alpha_eval(e.h, k)), label=e.name)
                for e, k in zip(lifted, gains)]

    def filter(self, u_d, rows):
        if self.bcfg.method == bar.ANALYTIC:
            return softplus_filter(u_d, rows[0], self.cfg.filter)
        return qp_filter(u_d, rows, self.cfg.filter)


def _raw_value(lam, b: bar.BarrierConfig) -> float:
    return float(lam[0] - b.lambda_s) if b.mode == bar.LOCALIZE else float(b.lambda_s - lam[0])


def _lam_true(cfg: ScenarioConfig, p) -> float:
    H = information_matrix_grid(p[None, :], cfg.model, cfg.beacons)[0]
    return float(0.5 * (H[0, 0] + H[1, 1]) - np.hypot(0.5 * (H[0, 0] - H[1, 1]), H[0, 1]))


def check_initial_state(cfg: ScenarioConfig, ctrl: Optional[Controller] = None):
    """Raise ConfigError unless every lifted barrier is strictly positive at x0."""
    ctrl = ctrl or Controller(cfg)
    try:
        _, _, lifted, lam = ctrl.barriers(cfg.x0.p, cfg.x0.v)
    except (NonSimpleEigenvalue, SafetyViolation) as exc:
        raise ConfigError(f"x0 is not strictly inside the safe set: {exc}", field="x0") from exc
    bad = [(e.name, e.h) for e in lifted if not e.h > 0]
    if bad:
        desc = ", ".join(f"{n} = {h:.4g}" for n, h in bad)
        raise ConfigError(f"x0 is not strictly inside the safe set ({desc}; eigenvalues {np.round(lam, 6).tolist()},"
                          f" lambda_s = {cfg.barrier.lambda_s})", field="x0")


def _run(cfg: ScenarioConfig, filtered: bool) -> TrajectoryLog:
    ctrl = Controller(cfg)
    if filtered:
        check_initial_state(cfg, ctrl)
    b = cfg.barrier
    n = cfg.n_steps
    cols = {k: np.full(n + 1, np.nan) for k in CSV_COLUMNS + EXTRA_COLUMNS}
    rng = np.random.default_rng(cfg.seed)
    state = cfg.x0
    p_hat = cfg.x0.p.copy()
    goal = cfg.goal.as_vector()
    events = []
    violation_time = None
    for i in range(n + 1):
        t0 = time.perf_counter()
        m = measure(cfg.model, state.p, cfg.beacons)
        if cfg.noise_std:
            m = m + rng.normal(0.0, cfg.noise_std, size=m.shape)
            if cfg.model == "bearing":
                m = wrap_residual(m)
        start = p_hat if cfg.nls.warm_start else cfg.x0.p
        est = solve_nls(m, start, cfg.nls, cfg.model, cfg.beacons)
        if not est.converged:
            events.append({"step": i, "event": "nls_not_converged", "grad_norm": est.grad_norm})
        if np.all(np.isfinite(est.p)):
            p_hat = est.p
        p_bar = p_hat if cfg.evaluate_at == "estimate" else state.p
        x_hat = np.concatenate([p_hat, state.v])
        u_d = nominal_control(x_hat, goal, ctrl.gain, cfg.filter.u_max)
        try:
            raw, second, lifted, lam = ctrl.barriers(p_bar, state.v)
            rows = ctrl.rows(lifted)
        except SafetyViolation as exc:
            if filtered:
                exc.step = i
                raise
            raw = second = np.nan
            lifted, rows = [], []
            lam = np.linalg.eigvalsh(information_matrix_grid(p_bar[None, :], cfg.model, cfg.beacons)[0])
            raw = _raw_value(lam, b)
        if filtered:
            res = ctrl.filter(u_d, rows)
            u = res.u
            if res.degenerate or res.infeasible:
                events.append({"step": i, "event": "infeasible" if res.infeasible else "degenerate_actuation"})
        else:
            u = u_d
        step_ms = (time.perf_counter() - t0) * 1e3

        rec = cols
        rec["t"][i] = i * cfg.dt
        rec["px"][i], rec["py"][i] = state.p
        rec["vx"][i], rec["vy"][i] = state.v
        rec["phat_x"][i], rec["phat_y"][i] = p_hat
        rec["ud_x"][i], rec["ud_y"][i] = u_d
        rec["u_x"][i], rec["u_y"][i] = u
        rec["lam1"][i], rec["lam2"][i] = lam[0], lam[-1]
        rec["h_raw"][i] = raw
        rec["h_smooth_or_cross"][i] = second
        rec["step_ms"][i] = step_ms
        rec["lam1_true"][i] = _lam_true(cfg, state.p)
        rec["nls_iters"][i] = est.iters
        if rows:
            rec["h_r"][i] = lifted[0].h
            rec["psi"][i] = rows[0].value(u_d)
            rec["cbf_residual"][i] = min(r.value(u) for r in rows)
            if len(lifted) > 1:
                rec["h_r_cross"][i] = min(e.h for e in lifted[1:])
        if violation_time is None and raw < 0:
            violation_time = i * cfg.dt
        if filtered and rows:
            worst = min(lifted, key=lambda e: e.h)
            if worst.h < -cfg.violation_tol:
                partial = _truncate(cols, i + 1)
                raise SafetyViolation(f"{worst.name} = {worst.h:.3e} at step {i} (t = {i * cfg.dt:.4f} s)",
                                      step=i, record={k: v[-1] for k, v in partial.items()})
        if i < n:
            state = step_dynamics(state, u, cfg.dt)
    out = TrajectoryLog(name=cfg.name, method=b.method, mode=b.mode, filtered=filtered,
                        columns=cols, events=events)
    out.summary = summarize(out, violation_time)
    return out


def _truncate(cols, k):
    return {key: v[:k] for key, v in cols.items()}


def summarize(traj: TrajectoryLog, violation_time=None) -> dict:
    c = traj.columns
    u_norm = np.hypot(c["u_x"], c["u_y"])
    corr = np.hypot(c["u_x"] - c["ud_x"], c["u_y"] - c["ud_y"])
    summary = {
        "scenario": traj.name,
        "method": traj.method,
        "mode": traj.mode,
        "filtered": traj.filtered,
        "steps": int(len(c["t"])),
        "min_h_r": _nanstat(np.nanmin, c["h_r"]),
        "min_h_r_cross": _nanstat(np.nanmin, c["h_r_cross"]),
        "min_h_raw": _nanstat(np.nanmin, c["h_raw"]),
        "min_lam": _nanstat(np.nanmin, c["lam1"]),
        "max_lam": _nanstat(np.nanmax, c["lam1"]),
        "min_lam_true": _nanstat(np.nanmin, c["lam1_true"]),
        "max_lam_true": _nanstat(np.nanmax, c["lam1_true"]),
        "min_gap": _nanstat(np.nanmin, c["lam2"] - c["lam1"]),
        "max_u_norm": _nanstat(np.nanmax, u_norm),
        "max_correction": _nanstat(np.nanmax, corr),
        "min_cbf_residual": _nanstat(np.nanmin, c["cbf_residual"]),
        "max_estimation_error": _nanstat(np.nanmax, np.hypot(c["phat_x"] - c["px"], c["phat_y"] - c["py"])),
        "mean_step_ms": _nanstat(np.nanmean, c["step_ms"]),
        "final_position": [float(c["px"][-1]), float(c["py"][-1])],
        "events": len(traj.events),
    }
    if violation_time is not None:
        summary["violation_time"] = float(violation_time)
    return summary


def _nanstat(fn, x):
    x = np.asarray(x, dtype=float)
    if not np.any(np.isfinite(x)):
        return None
    return float(fn(x))


def simulate(cfg: ScenarioConfig) -> TrajectoryLog:
    """Filtered closed-loop run. Raises SafetyViolation if a lifted barrier drops below -violation_tol."""
    return _run(cfg, filtered=True)


def simulate_baseline(cfg: ScenarioConfig) -> TrajectoryLog:
    """Same loop with the nominal LQR command applied unfiltered; violations are only recorded."""
    return _run(cfg, filtered=False)
