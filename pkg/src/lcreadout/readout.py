"""Single-shot assignment and fidelity benchmarking.

Shots are integrated to IQ points, a Fisher linear discriminant separates
"0" from "not 0", and :func:`benchmark` runs the heralded, optionally
X12-assisted protocol in independent rounds to produce a
:class:`ReadoutReport`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import expm
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .duffing import ReadoutResonator
from .dynamics import (
    HERALD,
    MAIN,
    U_GAP,
    U_THERMAL,
    U_X12,
    U_XGATE,
    NoiseModel,
    default_dt,
    shot_uniforms,
    simulate_segment,
)
from .errors import ParameterDomainError, RankError

__all__ = [
    "FisherDiscriminator",
    "ReadoutConfig",
    "ReadoutReport",
    "RoundResult",
    "integrate_iq",
    "boxcar_weights",
    "matched_weights",
    "train_discriminator",
    "herald",
    "apply_x12",
    "gap_transition_matrix",
    "run_round",
    "benchmark",
]

BUDGET_KEYS = ("separation", "decay", "out_of_equilibrium", "preparation_thermal", "preparation_gate")
ROUND_STRIDE = 1 << 26


def _as_points(X) -> np.ndarray:
    X = np.asarray(X)
    if np.iscomplexobj(X) or X.ndim == 1:
        X = np.asarray(X, dtype=complex).ravel()
        return np.column_stack([X.real, X.imag])
    if X.ndim != 2 or X.shape[1] != 2:
        raise ParameterDomainError("IQ data must be complex or shaped (n, 2)")
    return X.astype(float)


class FisherDiscriminator(ClassifierMixin, BaseEstimator):
    """Two-class Fisher linear discriminant in the IQ plane.

    ``X`` is either a complex array of IQ points or an ``(n, 2)`` real
    array.  Labels other than 0 count as class 1.  Points exactly on the
    decision boundary are assigned 0.

    Parameters
    ----------
    ridge : float
        Relative Tikhonov term added to the pooled covariance, scaled by the
        data's own spread so the decision stays invariant under rotation,
        translation and positive rescaling of the IQ plane.
    """

    def __init__(self, ridge: float = 1e-9):
        self.ridge = ridge

    def fit(self, X, y):
        P = _as_points(X)
        y = (np.asarray(y).ravel() != 0).astype(int)
        if P.shape[0] != y.shape[0]:
            raise ParameterDomainError("X and y lengths differ")
        if not (np.any(y == 0) and np.any(y == 1)):
            raise ParameterDomainError("both classes are required")
        P0, P1 = P[y == 0], P[y == 1]
        self.mean0_ = P0.mean(axis=0)
        self.mean1_ = P1.mean(axis=0)
        self.cov0_ = np.cov(P0, rowvar=False, bias=True) if len(P0) > 1 else np.zeros((2, 2))
        self.cov1_ = np.cov(P1, rowvar=False, bias=True) if len(P1) > 1 else np.zeros((2, 2))
        pooled = (len(P0) * self.cov0_ + len(P1) * self.cov1_) / len(P)
        diff = self.mean1_ - self.mean0_
        scale = np.trace(pooled) + diff @ diff
        if scale == 0.0:
            raise RankError("all training points are identical")
        reg = pooled + self.ridge * scale * np.eye(2)
        self.normal_ = np.linalg.solve(reg, diff)
        self.offset_ = float(self.normal_ @ (0.5 * (self.mean0_ + self.mean1_)))
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "normal_")
        return _as_points(X) @ self.normal_ - self.offset_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def to_dict(self) -> dict:
        check_is_fitted(self, "normal_")
        return {
            "mean0": [float(v) for v in self.mean0_],
            "mean1": [float(v) for v in self.mean1_],
            "boundary": {"normal": [float(v) for v in self.normal_], "offset": self.offset_},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FisherDiscriminator":
        self = cls()
        self.mean0_ = np.array(d["mean0"], dtype=float)
        self.mean1_ = np.array(d["mean1"], dtype=float)
        self.normal_ = np.array(d["boundary"]["normal"], dtype=float)
        self.offset_ = float(d["boundary"]["offset"])
        self.classes_ = np.array([0, 1])
        return self


def train_discriminator(iq, labels, min_per_class: int = 100) -> FisherDiscriminator:
    labels = np.asarray(labels)
    n1 = int(np.count_nonzero(labels))
    n0 = labels.size - n1
    if min(n0, n1) < min_per_class:
        raise ParameterDomainError(f"need >= {min_per_class} shots per class, got {n0} and {n1}")
    return FisherDiscriminator().fit(iq, labels)


def boxcar_weights(n_steps: int, dt_s: float) -> np.ndarray:
    return np.full(n_steps + 1, 1.0 / (n_steps * dt_s), dtype=complex)


def matched_weights(mean0: np.ndarray, mean1: np.ndarray, dt_s: float) -> np.ndarray:
    """Matched-filter kernel from two calibration mean trajectories.

    Normalized to the same noise bandwidth as the boxcar kernel, so the two
    are directly comparable.
    """
    diff = np.conj(np.asarray(mean1) - np.asarray(mean0))
    t_int = (diff.size - 1) * dt_s
    energy = np.sum(np.abs(diff) ** 2) * dt_s
    if energy == 0.0:
        return boxcar_weights(diff.size - 1, dt_s)
    return diff / math.sqrt(energy * t_int)


def integrate_iq(trajectory, dt_s: float, window=None, weights="boxcar") -> complex:
    """Trapezoid-rule integral of ``weights * trajectory`` over a window.

    ``window`` is a ``(start, stop)`` pair of sample indices (stop
    inclusive); default is the full trajectory.  ``weights="boxcar"`` is
    the constant 1, otherwise an array sampled like the trajectory.
    """
    traj = np.asarray(trajectory, dtype=complex)
    lo, hi = (0, traj.size - 1) if window is None else window
    if not (0 <= lo < hi < traj.size):
        raise ParameterDomainError(f"empty or out-of-range window {window}")
    seg = traj[lo:hi + 1]
    w = np.ones_like(seg) if isinstance(weights, str) else np.asarray(weights, dtype=complex)[lo:hi + 1]
    f = w * seg
    return complex(np.sum(f[1:] + f[:-1]) * 0.5 * dt_s)


def herald(shots, herald_labels):
    """Keep shots whose heralding pre-measurement read 0.

    Returns ``(kept, discarded_fraction)``; ``shots`` may be any array.
    """
    labels = np.asarray(herald_labels)
    keep = labels == 0
    kept = np.asarray(shots)[keep]
    return kept, float(1.0 - keep.mean()) if labels.size else 0.0


def apply_x12(levels, gate_error: float, uniforms) -> np.ndarray:
    """Pre-excite |1> to |2>; with probability ``gate_error`` the pulse fails."""
    if not 0.0 <= gate_error <= 1.0:
        raise ParameterDomainError("gate_error must lie in [0, 1]")
    levels = np.asarray(levels).copy()
    hit = (levels == 1) & (np.asarray(uniforms) >= gate_error)
    levels[hit] = 2
    return levels


def gap_transition_matrix(noise: NoiseModel, gap_s: float) -> np.ndarray:
    """Level-to-level probabilities after an idle gap (rows sum to 1)."""
    g_down = noise.decay_rate
    q = np.zeros((3, 3))
    q[0, 1] = noise.gamma_up_per_s
    q[1, 0] = g_down
    q[2, 1] = 2.0 * g_down
    q -= np.diag(q.sum(axis=1))
    return expm(q * gap_s)


@dataclass(frozen=True)
class ReadoutConfig:
    """Everything needed to run the measurement protocol."""

    resonator: ReadoutResonator
    noise: NoiseModel
    f_drive_hz: float
    epsilon_hz: float
    duration_s: float = 202e-9
    dt_s: float | None = None
    weights: str = "boxcar"
    herald: bool = True
    herald_gap_s: float = 1e-6
    thermal_population: float = 0.01
    x_gate_error: float = 5e-4
    x12: bool = False
    x12_gate_error: float = 0.0

    def __post_init__(self):
        if self.weights not in ("boxcar", "matched"):
            raise ParameterDomainError("weights must be 'boxcar' or 'matched'")
        for name in ("thermal_population", "x_gate_error", "x12_gate_error"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterDomainError(f"{name} must be a probability")
        if not self.duration_s > 0:
            raise ParameterDomainError("duration_s must be positive")

    @property
    def step(self) -> float:
        return self.dt_s if self.dt_s is not None else default_dt(self.resonator.kappa_hz)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.step))


@dataclass(frozen=True)
class _Channels:
    """Counterfactual switches; every channel on by default."""

    separation: bool = True
    decay: bool = True
    out_of_equilibrium: bool = True
    preparation_thermal: bool = True
    preparation_gate: bool = True

    def without(self, name):
        return replace(self, **{name: False})


@dataclass
class RoundResult:
    p01: float
    p10: float
    infidelity: float
    discarded_fraction: float
    discriminator: FisherDiscriminator = field(repr=False)
    iq: np.ndarray = field(repr=False)
    prepared: np.ndarray = field(repr=False)
    assigned: np.ndarray = field(repr=False)
    kept: np.ndarray = field(repr=False)


@dataclass
class ReadoutReport:
    p01: float
    p10: float
    infidelity: float
    fidelity: float
    rounds: list
    stddev: float
    budget: dict

    @property
    def pure_infidelity(self) -> float:
        """Infidelity with preparation errors subtracted."""
        prep = self.budget.get("preparation_thermal", 0.0) + self.budget.get("preparation_gate", 0.0)
        return max(self.infidelity - prep, 0.0)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _main_weights(cfg: ReadoutConfig, master_seed: int, threads: int):
    n, dt = cfg.n_steps, cfg.step
    if cfg.weights == "boxcar":
        return boxcar_weights(n, dt)
    # calibration ensembles on a dedicated stream, without heralding
    cal_seed = (master_seed ^ 0x5DEECE66D) & 0xFFFFFFFFFFFFFFFF
    m = 2048
    u = shot_uniforms(cal_seed, np.arange(m))
    means = []
    for lv in (0, 2 if cfg.x12 else 1):
        seg = simulate_segment(
            cfg.resonator, cfg.f_drive_hz, cfg.epsilon_hz, cfg.noise, np.full(m, lv), u,
            cfg.duration_s, dt, boxcar_weights(n, dt), threads=threads, record_mean=True,
        )
        means.append(seg.mean_trajectory)
    return matched_weights(means[0], means[1], dt)


def run_round(
    cfg: ReadoutConfig,
    round_index: int,
    shots_per_state: int,
    master_seed: int,
    threads: int = 1,
    channels: _Channels = _Channels(),
    weights: np.ndarray | None = None,
) -> RoundResult:
    """One round: herald, prepare |0> and |1>, read out, discriminate."""
    noise = cfg.noise
    main_noise = replace(
        noise,
        t1_s=noise.t1_s if channels.decay else math.inf,
        gamma_up_per_s=noise.gamma_up_per_s if channels.out_of_equilibrium else 0.0,
        drive_up_per_photon_per_s=noise.drive_up_per_photon_per_s if channels.out_of_equilibrium else 0.0,
        sigma_iq=noise.sigma_iq if channels.separation else 0.0,
    )
    herald_noise = replace(noise, sigma_iq=main_noise.sigma_iq)
    gap_noise = replace(noise, gamma_up_per_s=noise.gamma_up_per_s if channels.preparation_thermal else 0.0)
    p_thermal = cfg.thermal_population if channels.preparation_thermal else 0.0
    x_err = cfg.x_gate_error if channels.preparation_gate else 0.0
    x12_err = cfg.x12_gate_error if channels.preparation_gate else 0.0
    if weights is None:
        weights = _main_weights(cfg, master_seed, threads)

    n = shots_per_state
    prepared = np.repeat([0, 1], n)
    base = round_index * ROUND_STRIDE
    ids = np.concatenate([base + np.arange(n), base + ROUND_STRIDE // 2 + np.arange(n)])
    u = shot_uniforms(master_seed, ids)
    dt = cfg.step

    levels = (u[:, U_THERMAL] < p_thermal).astype(np.int64)
    herald_iq = None
    if cfg.herald:
        hseg = simulate_segment(
            cfg.resonator, cfg.f_drive_hz, cfg.epsilon_hz, herald_noise, levels, u,
            cfg.duration_s, dt, weights, threads=threads, offset=HERALD,
        )
        herald_iq = hseg.iq
        cum = np.cumsum(gap_transition_matrix(gap_noise, cfg.herald_gap_s), axis=1)
        after = hseg.final_level
        levels = np.minimum((u[:, U_GAP][:, None] >= cum[after]).sum(axis=1), 2).astype(np.int64)

    flip = (prepared == 1) & (u[:, U_XGATE] >= x_err) & (levels < 2)
    levels = np.where(flip, 1 - levels, levels)
    if cfg.x12:
        levels = apply_x12(levels, x12_err, u[:, U_X12])

    seg = simulate_segment(
        cfg.resonator, cfg.f_drive_hz, cfg.epsilon_hz, main_noise, levels, u,
        cfg.duration_s, dt, weights, threads=threads, offset=MAIN,
    )
    disc = FisherDiscriminator().fit(seg.iq, prepared)
    keep = np.ones(prepared.size, dtype=bool)
    if herald_iq is not None:
        keep = disc.predict(herald_iq) == 0
        if np.count_nonzero(prepared[keep] == 0) and np.count_nonzero(prepared[keep] == 1):
            disc = FisherDiscriminator().fit(seg.iq[keep], prepared[keep])
    assigned = disc.predict(seg.iq)
    k0 = keep & (prepared == 0)
    k1 = keep & (prepared == 1)
    p10 = float(np.mean(assigned[k0] == 1)) if k0.any() else 0.0
    p01 = float(np.mean(assigned[k1] == 0)) if k1.any() else 0.0
    return RoundResult(
        p01=p01,
        p10=p10,
        infidelity=(p01 + p10) / 2.0,
        discarded_fraction=float(1.0 - keep.mean()),
        discriminator=disc,
        iq=seg.iq,
        prepared=prepared,
        assigned=assigned,
        kept=keep,
    )


def benchmark(
    cfg: ReadoutConfig,
    n_rounds: int = 10,
    shots_per_round: int = 30000,
    master_seed: int = 0,
    threads: int = 1,
    with_budget: bool = True,
) -> ReadoutReport:
    """Repeat the protocol in independent rounds and summarize.

    ``shots_per_round`` shots are taken for each prepared state.  The error
    budget switches one channel off at a time on the same seeds and
    attributes the drop in mean infidelity to that channel.
    """
    if n_rounds < 2:
        raise ParameterDomainError("benchmark needs at least two rounds")
    weights = _main_weights(cfg, master_seed, threads)

    def mean_infidelity(channels):
        res = [run_round(cfg, r, shots_per_round, master_seed, threads, channels, weights) for r in range(n_rounds)]
        return res, float(np.mean([r.infidelity for r in res]))

    results, total = mean_infidelity(_Channels())
    budget = {}
    if with_budget:
        for name in BUDGET_KEYS:
            _, cf = mean_infidelity(_Channels().without(name))
            budget[name] = total - cf
    per_round = [r.infidelity for r in results]
    p01 = float(np.mean([r.p01 for r in results]))
    p10 = float(np.mean([r.p10 for r in results]))
    infid = (p01 + p10) / 2.0
    return ReadoutReport(
        p01=p01,
        p10=p10,
        infidelity=infid,
        fidelity=1.0 - infid,
        rounds=per_round,
        stddev=float(np.std(per_round, ddof=1)),
        budget=budget,
    )
