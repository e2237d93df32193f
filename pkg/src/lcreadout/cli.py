"""Command-line entry point.

Every subcommand reads one JSON config (the bundled device config by
default), writes its artifacts atomically into the output directory and
exits 0.  Failures print one ``error: <Kind>: <reason>`` line to stderr and
exit 2.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .circuit import (
    FluxSweepRegressor,
    dispersive_shift,
    longitudinal_fraction,
    read_sweep_csv,
    write_sweep_csv,
)
from .config import RunConfig, load_config
from .duffing import bifurcation_sweep
from .dynamics import MAIN, shot_uniforms, simulate_segment
from .errors import ParameterDomainError, ReadoutModelError
from .optimize import fidelity_vs_time, search_seed, write_curve_csv
from .readout import benchmark, run_round

__all__ = ["main", "build_parser"]


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(writer, *args) -> str:
    buf = io.StringIO()
    writer(buf, *args)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fit_payload(reg: FluxSweepRegressor) -> dict:
    out = reg.result().to_dict()
    out["longitudinal_fraction"] = reg.longitudinal_fraction(0.0)
    return out


def cmd_flux_sweep(cfg: RunConfig, out: Path, args) -> list[Path]:
    n = args.n_points if args.n_points is not None else cfg.flux_points
    if n < 1:
        raise ParameterDomainError("n_points must be positive")
    phis = np.linspace(-math.pi, math.pi, n)
    shifts = [dispersive_shift(cfg.circuit, p, cfg.calibration) for p in phis]
    reg = FluxSweepRegressor(cfg.circuit).fit(phis, shifts)
    payload = _fit_payload(reg)
    payload["model_longitudinal_fraction"] = longitudinal_fraction(cfg.circuit, 0.0, cfg.calibration)
    csv_path, json_path = out / "flux_sweep.csv", out / "flux_fit.json"
    _atomic_write(csv_path, _csv_text(write_sweep_csv, phis, shifts))
    _atomic_write(json_path, _json_text(payload))
    return [csv_path, json_path]


def cmd_fit(cfg: RunConfig, out: Path, args) -> list[Path]:
    data = read_sweep_csv(args.input)
    arr = np.asarray(data, dtype=float).reshape(-1, 2)
    reg = FluxSweepRegressor(cfg.circuit).fit(arr[:, 0], arr[:, 1])
    path = out / "fit.json"
    _atomic_write(path, _json_text(_fit_payload(reg)))
    return [path]


def cmd_bifurcation(cfg: RunConfig, out: Path, args) -> list[Path]:
    r = cfg.readout.resonator
    f_min = args.f_min if args.f_min is not None else cfg.bounds.f_drive_hz[0]
    f_max = args.f_max if args.f_max is not None else cfg.bounds.f_drive_hz[1]
    if args.n < 1 or f_max < f_min:
        raise ParameterDomainError("need n >= 1 and f_max >= f_min")
    freqs = np.linspace(f_min, f_max, args.n)
    eps = args.epsilon if args.epsilon is not None else cfg.readout.epsilon_hz
    paths = []
    for state in (0, 1, 2):
        sweep = bifurcation_sweep(r, eps, freqs, state)
        text = "\n".join(sweep.to_csv_rows()) + "\n"
        path = out / f"bifurcation_q{state}.csv"
        _atomic_write(path, text)
        paths.append(path)
    return paths


def cmd_shots(cfg: RunConfig, out: Path, args) -> list[Path]:
    if args.n < 1 or args.state not in (0, 1, 2):
        raise ParameterDomainError("need n >= 1 and state in {0, 1, 2}")
    rc = cfg.readout
    disc = run_round(rc, 0, 2000, search_seed(cfg.seed), args.threads).discriminator
    ids = np.arange(args.n)
    u = shot_uniforms(cfg.seed, ids)
    seg = simulate_segment(
        rc.resonator, rc.f_drive_hz, rc.epsilon_hz, rc.noise, np.full(args.n, args.state), u,
        rc.duration_s, rc.step, threads=args.threads, offset=MAIN,
    )
    labels = disc.predict(seg.iq)
    lines = ["shot_id,prepared,label_assigned,i,q,n_events,first_event_t_s"]
    for k in range(args.n):
        t0 = seg.first_event_t[k]
        lines.append(",".join([
            str(int(ids[k])), str(args.state), str(int(labels[k])),
            repr(float(seg.iq[k].real)), repr(float(seg.iq[k].imag)),
            str(int(seg.n_events[k])), "" if not np.isfinite(t0) else repr(float(t0)),
        ]))
    path = out / "shots.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    dpath = out / "discriminator.json"
    _atomic_write(dpath, _json_text(disc.to_dict()))
    return [path, dpath]


def cmd_benchmark(cfg: RunConfig, out: Path, args) -> list[Path]:
    rc = cfg.readout if not args.x12 else replace(cfg.readout, x12=True)
    rounds = args.rounds if args.rounds is not None else cfg.n_rounds
    shots = args.shots if args.shots is not None else cfg.shots_per_round
    rep = benchmark(rc, rounds, shots, cfg.seed, args.threads, with_budget=not args.no_budget)
    path = out / "report.json"
    _atomic_write(path, rep.to_json() + "\n")
    return [path]


def cmd_curve(cfg: RunConfig, out: Path, args) -> list[Path]:
    times = args.times if args.times else list(cfg.curve_times_s)
    if not times:
        raise ParameterDomainError("no integration times given")
    budget = args.budget if args.budget is not None else cfg.search_budget
    rounds = args.rounds if args.rounds is not None else cfg.n_rounds
    shots = args.shots if args.shots is not None else cfg.shots_per_round
    pts = fidelity_vs_time(cfg.readout, times, budget, cfg.seed, cfg.bounds, rounds, shots, args.threads)
    path = out / "curve.csv"
    _atomic_write(path, _csv_text(write_curve_csv, pts))
    return [path]


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (default: bundled device config)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads (never changes results)")

    p = argparse.ArgumentParser(prog="lcreadout", description="Longitudinal-coupling readout simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("flux-sweep", parents=[common], help="dispersive shift versus flux and its fit")
    s.add_argument("--n-points", type=int)
    s.set_defaults(func=cmd_flux_sweep)

    s = sub.add_parser("fit", parents=[common], help="fit a phi_ext,shift_hz CSV")
    s.add_argument("input")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("bifurcation", parents=[common], help="steady states versus drive frequency")
    s.add_argument("--f-min", type=float)
    s.add_argument("--f-max", type=float)
    s.add_argument("--n", type=int, default=201)
    s.add_argument("--epsilon", type=float, help="drive amplitude in Hz (default: config drive)")
    s.set_defaults(func=cmd_bifurcation)

    s = sub.add_parser("shots", parents=[common], help="dump single shots")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--state", type=int, default=0)
    s.set_defaults(func=cmd_shots)

    s = sub.add_parser("benchmark", parents=[common], help="multi-round fidelity report")
    s.add_argument("--rounds", type=int)
    s.add_argument("--shots", type=int, help="shots per prepared state per round")
    s.add_argument("--x12", action="store_true")
    s.add_argument("--no-budget", action="store_true")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("curve", parents=[common], help="optimized infidelity versus integration time")
    s.add_argument("--times", type=float, nargs="+")
    s.add_argument("--budget", type=int)
    s.add_argument("--rounds", type=int)
    s.add_argument("--shots", type=int)
    s.set_defaults(func=cmd_curve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out if args.out is not None else cfg.output_dir)
        args.func(cfg, out, args)
    except (ReadoutModelError, OSError, ValueError) as exc:
        reason = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {reason}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
