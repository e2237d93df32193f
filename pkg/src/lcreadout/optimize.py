"""Drive optimization and the fidelity-versus-integration-time curve.

Each candidate drive ``(f_drive, epsilon)`` is scored by a single heralded
round on a fixed set of shot seeds, so that two candidates differ only
through their drive parameters.  The search is a coarse grid followed by a
bounded Nelder-Mead refinement, restarted once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .duffing import ResonatorDrive
from .errors import ParameterDomainError, ReadoutModelError, SearchDomainError
from .readout import ReadoutConfig, benchmark, run_round

__all__ = [
    "DriveBounds",
    "OptimizationResult",
    "CurvePoint",
    "optimize_drive",
    "fidelity_vs_time",
    "write_curve_csv",
    "search_seed",
]

OPT_SHOTS = 5000
_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def search_seed(master_seed: int) -> int:
    """Seed for search evaluations, disjoint from the benchmark stream."""
    return ((master_seed + 1) * _GOLDEN) & _MASK


@dataclass(frozen=True)
class DriveBounds:
    """Closed search box for drive frequency and amplitude (Hz)."""

    f_drive_hz: tuple[float, float]
    epsilon_hz: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.f_drive_hz, self.epsilon_hz):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ParameterDomainError("bounds must be finite with lo <= hi")
        if self.epsilon_hz[0] < 0:
            raise ParameterDomainError("epsilon bounds must be non-negative")

    def to_physical(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        f = self.f_drive_hz[0] + u[0] * (self.f_drive_hz[1] - self.f_drive_hz[0])
        e = self.epsilon_hz[0] + u[1] * (self.epsilon_hz[1] - self.epsilon_hz[0])
        return float(f), float(e)


@dataclass
class OptimizationResult:
    integration_time_s: float
    best_drive: ResonatorDrive
    best_infidelity: float
    evaluations: int
    trace: list = field(repr=False)

    @property
    def f_drive_hz(self) -> float:
        return self.best_params[0]

    @property
    def epsilon_hz(self) -> float:
        return self.best_params[1]

    @property
    def best_params(self):
        finite = [t for t in self.trace if math.isfinite(t[1])]
        return min(finite, key=lambda t: t[1])[0]


class _BudgetSpent(Exception):
    pass


def _round_objective(cfg: ReadoutConfig, seed: int, shots: int, threads: int):
    def objective(f_drive_hz, epsilon_hz):
        c = replace(cfg, f_drive_hz=f_drive_hz, epsilon_hz=epsilon_hz)
        return run_round(c, 0, shots, seed, threads).infidelity

    return objective


def optimize_drive(
    config: ReadoutConfig,
    integration_time_s: float,
    bounds: DriveBounds,
    budget: int = 25,
    master_seed: int = 0,
    shots: int = OPT_SHOTS,
    threads: int = 1,
    objective=None,
) -> OptimizationResult:
    """Minimize infidelity over drive frequency and amplitude.

    Parameters
    ----------
    config : ReadoutConfig
        Protocol and noise settings; its drive is replaced by candidates.
    integration_time_s : float
        Readout duration used for every candidate.
    bounds : DriveBounds
        Search box; returned points always lie inside it.
    budget : int
        Maximum number of objective evaluations (at least 9).  A grid of
        ``max(3, isqrt(budget // 2))`` points per axis is spent first, so
        roughly half the budget remains for the simplex.
    master_seed : int
        Seeds every candidate identically (common random numbers).
    shots : int
        Shots per prepared state for each evaluation.
    objective : callable, optional
        ``objective(f_drive_hz, epsilon_hz) -> infidelity``; replaces the
        Monte Carlo score (used for testing the search itself).

    Raises
    ------
    SearchDomainError
        If no candidate could be evaluated.
    """
    if budget < 9:
        raise ParameterDomainError("budget must be at least 9")
    cfg = replace(config, duration_s=integration_time_s)
    if objective is None:
        objective = _round_objective(cfg, search_seed(master_seed), shots, threads)
    trace = []

    def score(u):
        if len(trace) >= budget:
            raise _BudgetSpent
        f, e = bounds.to_physical(u)
        try:
            val = float(objective(f, e))
        except ReadoutModelError:
            val = math.inf
        trace.append(((f, e), val))
        return val if math.isfinite(val) else 1e300

    m = max(3, math.isqrt(budget // 2))
    axis = np.linspace(0.0, 1.0, m)
    grid = [(x, y) for x in axis for y in axis]
    vals = [score(np.array(p)) for p in grid]
    best_u = np.array(grid[int(np.argmin(vals))])
    if not any(math.isfinite(v) for _, v in trace):
        raise SearchDomainError("every grid candidate failed to evaluate")

    step = 0.5 / max(m - 1, 1)
    rng_offsets = (np.array([step, 0.0]), np.array([0.0, step]))
    try:
        for restart in range(2):
            simplex = np.array([best_u] + [np.clip(best_u + (o if restart == 0 else -o), 0, 1) for o in rng_offsets])
            if np.linalg.matrix_rank(simplex[1:] - simplex[0]) < 2:
                simplex[1:] = np.clip(best_u - np.array(rng_offsets), 0, 1)
            minimize(
                score, best_u, method="Nelder-Mead", bounds=[(0.0, 1.0), (0.0, 1.0)],
                options={"initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-6, "maxfev": budget},
            )
            finite = [(i, t) for i, t in enumerate(trace) if math.isfinite(t[1])]
            i_best = min(finite, key=lambda it: (it[1][1], it[0]))[0]
            (f, e), _ = trace[i_best]
            best_u = np.array([
                (f - bounds.f_drive_hz[0]) / (bounds.f_drive_hz[1] - bounds.f_drive_hz[0] or 1.0),
                (e - bounds.epsilon_hz[0]) / (bounds.epsilon_hz[1] - bounds.epsilon_hz[0] or 1.0),
            ])
    except _BudgetSpent:
        pass

    finite = [t for t in trace if math.isfinite(t[1])]
    (f, e), best = min(finite, key=lambda t: t[1])
    r = cfg.resonator
    return OptimizationResult(
        integration_time_s=integration_time_s,
        best_drive=r.drive(f, e, 0),
        best_infidelity=best,
        evaluations=len(trace),
        trace=trace,
    )


@dataclass
class CurvePoint:
    t_s: float
    infidelity: float
    stddev: float
    infidelity_x12: float
    stddev_x12: float
    f_drive_hz: float
    eps_hz: float
    f_drive_plain_hz: float = field(default=math.nan, repr=False)
    eps_plain_hz: float = field(default=math.nan, repr=False)


def fidelity_vs_time(
    config: ReadoutConfig,
    times,
    per_time_budget: int,
    master_seed: int,
    bounds: DriveBounds,
    n_rounds: int = 10,
    shots_per_round: int = 30000,
    threads: int = 1,
) -> list[CurvePoint]:
    """Optimize and benchmark both protocols at each integration time.

    The drive columns of each point hold the X12 protocol's optimum.
    """
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ParameterDomainError("times must be sorted ascending")
    out = []
    for t in times:
        row = {}
        for x12 in (False, True):
            cfg = replace(config, duration_s=t, x12=x12)
            opt = optimize_drive(cfg, t, bounds, per_time_budget, master_seed, threads=threads)
            f, e = opt.best_params
            rep = benchmark(
                replace(cfg, f_drive_hz=f, epsilon_hz=e), n_rounds, shots_per_round,
                master_seed, threads, with_budget=False,
            )
            row[x12] = (rep.infidelity, rep.stddev, f, e)
        out.append(CurvePoint(
            t, row[False][0], row[False][1], row[True][0], row[True][1],
            row[True][2], row[True][3], row[False][2], row[False][3],
        ))
    return out


def write_curve_csv(fh, points):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t_s", "infidelity", "stddev", "infidelity_x12", "stddev_x12", "f_drive_hz", "eps_hz"])
    for p in points:
        w.writerow([repr(float(x)) for x in (p.t_s, p.infidelity, p.stddev, p.infidelity_x12, p.stddev_x12, p.f_drive_hz, p.eps_hz)])
