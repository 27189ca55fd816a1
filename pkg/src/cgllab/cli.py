"""Command-line entry point and artifact writers.

Exit codes: 0 success (a BlowUp verdict is a result, not a failure), 2 bad
config or input, 3 step-size underflow without a verdict, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .decay import decay_report, dumps_report
from .evolution import (
    Checkpoint,
    Trajectory,
    Verdict,
    load_checkpoint,
    resume,
    run,
    save_checkpoint,
)
from .ground_state import reference_constants
from .scenarios import (
    ClassificationReport,
    build_initial_data,
    dichotomy_control,
    dichotomy_suite,
    trichotomy_suite,
)

__all__ = ["main", "write_trajectory", "write_suite", "RunManifest", "VERDICT_FLAGS", "EXIT_OK",
           "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# verdict_flag column: 0 on every row but the last, which carries the run verdict
VERDICT_FLAGS = {
    Verdict.RUNNING: 0,
    Verdict.REACHED_HORIZON: 1,
    Verdict.DISSIPATED: 2,
    Verdict.BLOWUP: 3,
    Verdict.STEP_UNDERFLOW: 4,
}

CSV_HEADER = ("t", "h1", "l2", "crit", "energy", "diss", "verdict_flag")


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(traj: Trajectory, path) -> dict:
    """Write the diagnostics CSV; returns a manifest entry for it."""
    n = len(traj)
    if n == 0:
        raise ValueError("no samples")
    path = Path(path)
    cols = [traj.times, traj.h1, traj.l2, traj.crit, traj.energy, traj.diss]
    lines = [",".join(CSV_HEADER)]
    last_flag = VERDICT_FLAGS[traj.verdict]
    for i in range(n):
        flag = last_flag if i == n - 1 else 0
        lines.append(",".join([_g17(c[i]) for c in cols] + [str(flag)]))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory {path}: {exc}") from exc
    return {"path": path.name, "kind": "trajectory", "rows": n, "verdict": traj.verdict.value}


def write_suite(reports: Sequence[ClassificationReport], out_dir, stem: str = "suite") -> list[dict]:
    """JSONL (one report per line) plus a CSV summary table."""
    out_dir = Path(out_dir)
    jl = out_dir / f"{stem}.jsonl"
    jl.write_text("".join(r.to_json() + "\n" for r in reports))
    summary = out_dir / f"{stem}_summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "params", "energy_ratio", "kinetic_ratio", "verdict", "h1_initial",
                    "h1_final", "t_final", "blowup_time", "reason"])
        for r in reports:
            init = r.params.get("initial_data", {})
            params = ";".join(f"{k}={init[k]}" for k in ("kind", "c", "lam", "eps") if k in init)
            ev = r.evidence
            w.writerow([r.scenario_id, params, _g17(r.energy_ratio), _g17(r.kinetic_ratio), r.verdict,
                        _g17(ev.get("h1_initial", math.nan)), _g17(ev.get("h1_final", math.nan)),
                        _g17(ev.get("t_final", math.nan)), _g17(ev.get("blowup_time", math.nan)),
                        r.reason or ""])
    return [{"path": jl.name, "kind": "suite_reports"}, {"path": summary.name, "kind": "suite_summary"}]


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    started: str
    finished: str = ""
    verdict: Optional[str] = None
    artifacts: list = field(default_factory=list)
    reference_constants: dict = field(default_factory=dict)

    def write(self, out_dir) -> Path:
        p = Path(out_dir) / "manifest.json"
        p.write_text(json.dumps(_finite(asdict(self)), indent=2, sort_keys=True) + "\n")
        return p


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_finite(x) for x in v]
    return v


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _refs_summary(d: int, L: Optional[float] = None, lam: float = 1.0) -> dict:
    out = {"R^d": json.loads(reference_constants(d).to_json())}
    if L is not None:
        out["box"] = json.loads(reference_constants(d, box_length=L, lam=lam).to_json())
    return out


def _start(cfg: RunConfig, out_dir: Path) -> RunManifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = cfg.to_json().encode("utf-8")
    (out_dir / "config.json").write_bytes(text)
    m = RunManifest(hashlib.sha256(text).hexdigest(), __version__, _now())
    m.artifacts.append({"path": "config.json", "kind": "config"})
    return m


def _write_snapshots(traj: Trajectory, out_dir: Path, cfg_ctrl) -> list[dict]:
    """Intermediate snapshots as checkpoint files (not resumable: no step state)."""
    entries = []
    for i, (t, f) in enumerate(traj.snapshots[1:-1], start=1):
        ck = Checkpoint(traj.grid, traj.flow, cfg_ctrl, t, 0.0, -1, traj.h1_initial,
                        np.fft.fftn(f.values))
        p, side = save_checkpoint(out_dir / f"snapshot_{i:04d}.ckpt", ck)
        entries += [{"path": p.name, "kind": "snapshot", "t": t}, {"path": side.name, "kind": "snapshot_sidecar"}]
    return entries


def _finish_run(traj: Trajectory, manifest: RunManifest, out_dir: Path, ctrl, ckpt_path: Path) -> int:
    manifest.artifacts.append(write_trajectory(traj, out_dir / "trajectory.csv"))
    manifest.artifacts += _write_snapshots(traj, out_dir, ctrl)
    if ckpt_path.exists():
        manifest.artifacts += [{"path": ckpt_path.name, "kind": "checkpoint", "t": traj.times[-1]},
                               {"path": ckpt_path.name + ".json", "kind": "checkpoint_sidecar"}]
    manifest.verdict = traj.verdict.value
    return EXIT_NUMERIC if traj.verdict == Verdict.STEP_UNDERFLOW else EXIT_OK


def _cmd_run(cfg: RunConfig, out_dir: Path, analyze: bool = False) -> int:
    if analyze is False and cfg.mode not in ("nonlinear", "linear_heat"):
        raise ConfigError("mode", f"`run` needs mode nonlinear or linear_heat, got {cfg.mode!r}")
    manifest = _start(cfg, out_dir)
    grid = cfg.grid
    manifest.reference_constants = _refs_summary(cfg.d, grid.L, cfg.initial_data.lam)
    data = build_initial_data(cfg.initial_data, grid)
    ctrl = cfg.step_control
    ckpt_path = out_dir / "checkpoint.ckpt"
    traj = run(data.field, cfg.flow, ctrl, checkpoint_path=ckpt_path)
    code = _finish_run(traj, manifest, out_dir, ctrl, ckpt_path)
    if analyze:
        t1, t2 = cfg.raw["decay"]["t_window"]
        rep = decay_report(data.field, traj, (t1, t2), cfg.raw["decay"]["rho_window"])
        (out_dir / "decay_report.json").write_text(dumps_report(rep) + "\n")
        manifest.artifacts.append({"path": "decay_report.json", "kind": "decay_report"})
    manifest.finished = _now()
    manifest.write(out_dir)
    print(json.dumps({"verdict": traj.verdict.value, "t_final": traj.times[-1], "output_dir": str(out_dir)}))
    return code


def _cmd_suite(cfg: RunConfig, out_dir: Path) -> int:
    su = cfg.raw["suite"]
    manifest = _start(cfg, out_dir)
    grid = cfg.grid
    if cfg.mode == "suite:dichotomy":
        lam = su["lam"] or 1.0
        ctrl = dichotomy_control(su["horizon"] or 400.0)
        reports = dichotomy_suite(cfg.d, cfg.z, su["c_values"], grid=grid, lam=lam, ctrl=ctrl)
        stem = "dichotomy"
    elif cfg.mode == "suite:trichotomy":
        lam = su["lam"] or 3.0
        kw = {} if su["horizon"] is None else {"horizon_B": su["horizon"], "horizon_C": su["horizon"]}
        reports = trichotomy_suite(cfg.d, cfg.z, grid=grid, lam=lam, **kw)
        stem = "trichotomy"
    else:
        raise ConfigError("mode", f"`suite` needs mode suite:dichotomy or suite:trichotomy, got {cfg.mode!r}")
    manifest.reference_constants = _refs_summary(cfg.d, grid.L, lam)
    manifest.artifacts += write_suite(reports, out_dir, stem)
    manifest.verdict = ",".join(f"{r.scenario_id}={r.verdict}" for r in reports)
    manifest.finished = _now()
    manifest.write(out_dir)
    for r in reports:
        print(f"{r.scenario_id}\t{r.verdict}\tE/E(W)={r.energy_ratio:.6f}\tK/K(W)={r.kinetic_ratio:.4f}")
    return EXIT_OK


def _cmd_resume(ckpt_file: Path, t_max: Optional[float], out_dir: Optional[Path]) -> int:
    try:
        ck = load_checkpoint(ckpt_file)
    except FileNotFoundError:
        raise ConfigError("checkpoint", f"no such checkpoint: {ckpt_file}") from None
    except ValueError as exc:
        raise ConfigError("checkpoint", str(exc)) from None
    if ck.k < 0:
        raise ConfigError("checkpoint", "snapshot files carry no step state and cannot be resumed")
    if t_max is not None and not t_max > ck.t:
        raise ConfigError("--t-max", f"must exceed the checkpoint time {ck.t}")
    out_dir = ckpt_file.parent / "resumed" if out_dir is None else out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    src = ckpt_file.read_bytes()
    m = RunManifest(hashlib.sha256(src).hexdigest(), __version__, _now())
    m.reference_constants = _refs_summary(ck.grid.d)
    ckpt_path = out_dir / "checkpoint.ckpt"
    traj = resume(ck, t_max=t_max, checkpoint_path=ckpt_path)
    code = _finish_run(traj, m, out_dir, ck.ctrl, ckpt_path)
    m.finished = _now()
    m.write(out_dir)
    print(json.dumps({"verdict": traj.verdict.value, "t_final": traj.times[-1], "output_dir": str(out_dir)}))
    return code


def _cmd_constants(d: int, box_length: Optional[float], lam: float) -> int:
    if d not in (3, 4):
        raise ConfigError("d", "dimension must be 3 or 4")
    print(reference_constants(d, box_length=box_length, lam=lam).to_json())
    return EXIT_OK


def _load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgllab", description="Energy-critical complex Ginzburg-Landau simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate one initial datum")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    s = sub.add_parser("suite", help="dichotomy or trichotomy suite")
    s.add_argument("config")
    s.add_argument("--out")
    a = sub.add_parser("analyze", help="analysis commands")
    asub = a.add_subparsers(dest="analysis", required=True)
    ad = asub.add_parser("decay", help="run and fit decay rates")
    ad.add_argument("config")
    ad.add_argument("--out")
    rs = sub.add_parser("resume", help="continue from a checkpoint")
    rs.add_argument("checkpoint")
    rs.add_argument("--t-max", type=float, default=None)
    rs.add_argument("--out")
    c = sub.add_parser("constants", help="print reference constants of W")
    c.add_argument("d", type=int)
    c.add_argument("--box-length", type=float, default=None)
    c.add_argument("--lam", type=float, default=1.0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "constants":
            return _cmd_constants(args.d, args.box_length, args.lam)
        if args.command == "resume":
            return _cmd_resume(Path(args.checkpoint), args.t_max, Path(args.out) if args.out else None)
        cfg = _load_config(args.config)
        out_dir = Path(args.out or cfg.output_dir)
        if args.command == "run":
            return _cmd_run(cfg, out_dir)
        if args.command == "suite":
            return _cmd_suite(cfg, out_dir)
        return _cmd_run(cfg, out_dir, analyze=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
