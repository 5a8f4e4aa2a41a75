"""Command line scenario runner.

    icbf run <config|builtin> [...] [--baseline] [--dt S] [--t-final S] [--out DIR] [--jobs N]
    icbf sweep <config|builtin> --param filter.c --values 1,10,100
    icbf list
    icbf show <builtin>

Exit codes: 0 success, 2 invalid configuration or arguments, 3 safety violation,
1 any other runtime failure.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, IcbfError, SafetyViolation
from .scenarios import BUILTIN, builtin_document, config_from_document, digest, load_document, set_path
from .sim import CSV_COLUMNS, EXTRA_COLUMNS, simulate, simulate_baseline

log = logging.getLogger("icbf")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_SAFETY = 3


@dataclass
class RunManifest:
    scenario: str
    config_digest: str
    version: str
    baseline: bool
    status: str
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def write_atomic(path: Path, data) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def trajectory_csv(columns: dict, timing: bool = True) -> str:
    keys = list(CSV_COLUMNS) + [k for k in EXTRA_COLUMNS if k in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    n = len(columns["t"])
    cols = [columns[k] if (timing or k != "step_ms") else np.zeros(n) for k in keys]
    for i in range(n):
        w.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue()


def _json(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def _clean(obj):
    """Replace non-finite floats by None so the JSON is standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def execute(doc: dict, text: str, out_root: str, baseline: bool = False, timing: bool = True,
            plots: bool = True) -> dict:
    """Run one scenario document and write its outputs; returns a result record."""
    t_start = time.perf_counter()
    try:
        cfg = config_from_document(doc, text)
    except ConfigError as exc:
        return {"name": doc.get("name"), "status": "config_error", "exit": EXIT_CONFIG, "message": str(exc)}
    sub = cfg.name + ("-baseline" if baseline else "")
    out = Path(out_root) / sub
    manifest = RunManifest(scenario=cfg.name, config_digest=digest(doc), version=__version__,
                           baseline=baseline, status="ok")
    try:
        traj = simulate_baseline(cfg) if baseline else simulate(cfg)
    except SafetyViolation as exc:
        manifest.status = "safety_violation"
        manifest.timings["wall_s"] = time.perf_counter() - t_start
        diag = {"error": str(exc), "step": exc.step, "record": _clean(exc.record or {})}
        write_atomic(out / "summary.json", _json(diag))
        manifest.outputs["summary"] = str(out / "summary.json")
        write_atomic(out / "manifest.json", _json(asdict(manifest)))
        return {"name": cfg.name, "status": "safety_violation", "exit": EXIT_SAFETY,
                "message": f"safety violation at step {exc.step}: {exc}", "out": str(out)}
    except ConfigError as exc:
        return {"name": cfg.name, "status": "config_error", "exit": EXIT_CONFIG, "message": str(exc)}
    except IcbfError as exc:
        return {"name": cfg.name, "status": "error", "exit": EXIT_ERROR,
                "message": f"{type(exc).__name__}: {exc}"}
    sim_s = time.perf_counter() - t_start
    summary = dict(traj.summary)
    summary.update(lambda_s=cfg.barrier.lambda_s, dt=cfg.dt, t_final=cfg.t_final, config_digest=manifest.config_digest,
                   event_log=traj.events[:200])
    outputs = {"trajectory": out / "trajectory.csv", "summary": out / "summary.json"}
    write_atomic(outputs["trajectory"], trajectory_csv(traj.columns, timing=timing))
    write_atomic(outputs["summary"], _json(_clean(summary)))
    if plots:
        from . import plots as plot_mod
        outputs["trajectory_svg"] = out / "trajectory.svg"
        outputs["barrier_svg"] = out / "barrier.svg"
        write_atomic(outputs["trajectory_svg"], plot_mod.trajectory_svg(cfg, traj))
        write_atomic(outputs["barrier_svg"], plot_mod.barrier_svg(traj))
    manifest.outputs = {k: str(v) for k, v in outputs.items()}
    manifest.timings = {"simulate_s": sim_s, "total_s": time.perf_counter() - t_start}
    outputs["manifest"] = out / "manifest.json"
    write_atomic(outputs["manifest"], _json(asdict(manifest)))
    return {"name": cfg.name, "status": "ok", "exit": EXIT_OK, "out": str(out), "summary": _clean(summary)}


def _apply_overrides(doc: dict, args) -> dict:
    if getattr(args, "dt", None) is not None:
        doc = set_path(doc, "dt", args.dt)
    if getattr(args, "t_final", None) is not None:
        doc = set_path(doc, "t_final", args.t_final)
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}", field=item)
        doc = set_path(doc, key, _parse_value(raw))
    return doc


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _combine(codes) -> int:
    """Configuration errors take precedence, then safety violations, then other failures."""
    codes = set(codes)
    for c in (EXIT_CONFIG, EXIT_SAFETY, EXIT_ERROR):
        if c in codes:
            return c
    return EXIT_OK


def _out_root(args) -> str:
    return args.out or os.environ.get("ICBF_OUT_DIR") or "icbf-out"


def _map(fn, jobs, items):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *it) for it in items]
        return [f.result() for f in futures]


def cmd_run(args) -> int:
    items = []
    for source in args.config:
        doc, text = load_document(source)
        doc = _apply_overrides(doc, args)
        items.append((doc, text, _out_root(args), args.baseline, not args.no_timing, not args.no_plots))
    results = _map(execute, args.jobs, items)
    for r in results:
        if r["exit"] != EXIT_OK:
            print(f"{r['name']}: {r['message']}", file=sys.stderr)
        else:
            s = r["summary"]
            line = (f"{r['name']}: ok  min_h_r={s['min_h_r']}  min_lam={s['min_lam']}  max_lam={s['max_lam']}  "
                    f"max_u_norm={s['max_u_norm']:.4g}  mean_step_ms={s['mean_step_ms']:.3f}")
            if "violation_time" in s:
                line += f"  violation_time={s['violation_time']}"
            print(line + f"  -> {r['out']}")
    return _combine(r["exit"] for r in results)


SWEEP_FIELDS = ("value", "status", "min_h_r", "min_lam", "max_lam", "max_u_norm", "max_correction",
                "smooth_slack", "mean_step_ms")


def _parse_values(text: str) -> list:
    vals = [_parse_value(v.strip()) for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("--values must list at least one value", field="values")
    return vals


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    doc, _ = load_document(args.config)
    doc = _apply_overrides(doc, args)
    root = Path(_out_root(args)) / f"{doc['name']}-sweep-{args.param}"
    items = []
    for v in values:
        d = set_path(doc, args.param, v)
        d["name"] = f"{doc['name']}-{args.param}={v}"
        config_from_document(d)  # fail fast before any run
        items.append((d, "", str(root), args.baseline, not args.no_timing, not args.no_plots))
    results = _map(execute, args.jobs, items)
    rows = []
    for v, d, r in zip(values, (it[0] for it in items), results):
        s = r.get("summary") or {}
        b = d["barrier"]
        slack = math.log(2) / b.get("kappa", 1.0) if b["method"] == "analytic" else None
        rows.append({"value": v, "status": r["status"], "min_h_r": s.get("min_h_r"), "min_lam": s.get("min_lam"),
                     "max_lam": s.get("max_lam"), "max_u_norm": s.get("max_u_norm"),
                     "max_correction": s.get("max_correction"), "smooth_slack": slack,
                     "mean_step_ms": s.get("mean_step_ms")})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    write_atomic(root / "sweep.csv", buf.getvalue())
    write_atomic(root / "sweep.json", _json({"param": args.param, "rows": rows}))
    print(f"{args.param:>14}  " + "  ".join(f"{k:>14}" for k in SWEEP_FIELDS[1:]))
    for row in rows:
        cells = [f"{row[k]:>14.6g}" if isinstance(row[k], float) else f"{str(row[k]):>14}" for k in SWEEP_FIELDS]
        print("  ".join(cells))
    for r in results:
        if r["exit"] != EXIT_OK:
            print(f"{r['name']}: {r['message']}", file=sys.stderr)
    return _combine(r["exit"] for r in results)


def cmd_list(args) -> int:
    for name in sorted(BUILTIN):
        print(name)
    return EXIT_OK


def cmd_show(args) -> int:
    print(_json(builtin_document(args.name)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icbf", description="Information-CBF safe localization simulator")
    ap.add_argument("--version", action="version", version=f"icbf {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings from the filter and estimator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--baseline", action="store_true", help="run the unfiltered LQR controller")
        p.add_argument("--dt", type=float, help="override the time step (s)")
        p.add_argument("--t-final", type=float, help="override the run length (s)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry, e.g. filter.c=10")
        p.add_argument("--out", help="output directory (default $ICBF_OUT_DIR or ./icbf-out)")
        p.add_argument("--jobs", type=int, default=1, help="number of scenarios run in parallel")
        p.add_argument("--no-timing", action="store_true", help="write step_ms as 0 so the CSV is reproducible")
        p.add_argument("--no-plots", action="store_true", help="skip the SVG figures")

    run = sub.add_parser("run", help="run one or more scenarios")
    run.add_argument("config", nargs="+", help="JSON config path or built-in scenario name")
    common(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, help="dotted config path, e.g. filter.c or barrier.kappa")
    sw.add_argument("--values", required=True, help="comma separated values")
    common(sw)
    sw.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)
    show = sub.add_parser("show", help="print a built-in scenario as JSON")
    show.add_argument("name")
    show.set_defaults(func=cmd_show)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
