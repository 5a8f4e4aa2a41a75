"""Static SVG figures for a completed run.

Two panels per run: the trajectory drawn over the lambda_min field with the
lambda_s level curve in red and the goal as a green cross, and the barrier
values against time.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .nls import lambda_min_grid  # noqa: E402
from .sim import ScenarioConfig, TrajectoryLog  # noqa: E402

# Keep SVG output byte-stable across runs.
_SVG_META = {"Date": None, "Creator": None}
plt.rcParams["svg.hashsalt"] = "icbf"


def _bounds(cfg: ScenarioConfig, traj: TrajectoryLog, pad: float = 3.0):
    pts = [cfg.beacons.positions, cfg.goal.p[None, :], cfg.x0.p[None, :]]
    px, py = traj.column("px"), traj.column("py")
    ok = np.isfinite(px) & np.isfinite(py)
    if ok.any():
        pts.append(np.column_stack([px[ok], py[ok]]))
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0) - pad, allp.max(axis=0) + pad
    # cap runaway trajectories so the field stays legible
    lo = np.maximum(lo, -60.0)
    hi = np.minimum(hi, 60.0)
    return lo, hi


def lambda_field_grid(cfg: ScenarioConfig, lo, hi, n: int = 161):
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    d = np.min(np.linalg.norm(pts[:, None, :] - cfg.beacons.positions[None], axis=2), axis=1)
    lam = np.full(pts.shape[0], np.nan)
    ok = d > 1e-3
    lam[ok] = lambda_min_grid(pts[ok], cfg.model, cfg.beacons)
    return X, Y, lam.reshape(X.shape)


def _svg(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return buf.getvalue()


def trajectory_svg(cfg: ScenarioConfig, traj: TrajectoryLog) -> bytes:
    lo, hi = _bounds(cfg, traj)
    X, Y, L = lambda_field_grid(cfg, lo, hi)
    fig, ax = plt.subplots(figsize=(6, 5.4))
    logL = np.log10(np.clip(L, 1e-12, None))
    cf = ax.contourf(X, Y, logL, levels=30, cmap="Greys_r")
    fig.colorbar(cf, ax=ax, label="log10 lambda_min")
    lam_s = cfg.barrier.lambda_s
    if np.nanmin(L) < lam_s < np.nanmax(L):
        ax.contour(X, Y, L, levels=[lam_s], colors="red", linewidths=1.5)
    b = cfg.beacons.positions
    ax.plot(b[:, 0], b[:, 1], "b^", ms=8, label="beacons")
    ax.plot(traj.column("px"), traj.column("py"), "C1-", lw=1.5, label="trajectory")
    ax.plot(*cfg.x0.p, "ko", ms=5, label="start")
    ax.plot(*cfg.goal.p, "gx", ms=12, mew=3, label="goal")
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    kind = "baseline" if not traj.filtered else traj.method
    ax.set_title(f"{cfg.name} ({kind}), lambda_s = {lam_s:g}", fontsize=9)
    ax.legend(loc="upper right", fontsize=7)
    return _svg(fig)


def barrier_svg(traj: TrajectoryLog) -> bytes:
    t = traj.column("t")
    fig, ax = plt.subplots(figsize=(6, 3.6))
    series = [("h_raw", "h"), ("h_smooth_or_cross", "h_smooth" if traj.method == "analytic" else "h_cross"),
              ("h_r", "h_r"), ("h_r_cross", "h_r_cross")]
    for key, label in series:
        if key in traj.columns:
            y = traj.column(key)
            if np.isfinite(y).any():
                ax.plot(t, y, lw=1.2, label=label)
    ax.axhline(0.0, color="red", lw=0.8, ls="--")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("barrier value")
    ax.set_title(f"{traj.name}: barrier values")
    ax.legend(fontsize=7)
    return _svg(fig)
