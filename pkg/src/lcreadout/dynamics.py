"""Hybrid semiclassical shot simulator.

The qubit is a three-level jump process; the readout field is the classical
Kerr-resonator field whose detuning follows the current qubit level.  Shots
are generated in bulk: every shot starting in a given level shares the same
deterministic field trajectory until its first qubit event, so only the few
shots that actually jump are integrated individually (in numba).

Random numbers come from a counter-based Philox stream keyed by the master
seed.  Shot ``i`` always draws its uniforms from block ``i // BLOCK`` at a
fixed offset, so a shot's outcome depends only on ``(config, seed, i)`` and
never on batch size or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numba
import numpy as np
from scipy.special import ndtri

from .duffing import ReadoutResonator, ResonatorDrive
from .errors import ParameterDomainError

__all__ = [
    "NoiseModel",
    "ShotRecord",
    "SegmentResult",
    "TRANSITIONS",
    "ring_up",
    "shot_uniforms",
    "simulate_segment",
    "simulate_shot",
    "default_dt",
]

TWO_PI = 2.0 * math.pi
TRANSITIONS = ("decay_10", "decay_21", "thermal_01", "drive_excite_up")
MAX_EVENTS = 8
BLOCK = 1024

# per-shot uniform layout: one readout segment uses SEG_WIDTH numbers
SEG_WIDTH = 2 * MAX_EVENTS + 2
N_UNIFORMS = 2 * SEG_WIDTH + 4
MAIN, HERALD = 0, SEG_WIDTH
U_THERMAL, U_GAP, U_XGATE, U_X12 = 2 * SEG_WIDTH, 2 * SEG_WIDTH + 1, 2 * SEG_WIDTH + 2, 2 * SEG_WIDTH + 3


@dataclass(frozen=True)
class NoiseModel:
    """Qubit transition rates and the additive IQ noise floor.

    ``drive_up_per_photon_per_s`` sets the measurement-induced |1> -> |2>
    rate ``r0 * n``; |0> is never driven upward by the readout tone.
    ``sigma_iq`` is the per-quadrature noise of a unit-bandwidth record, in
    field units times sqrt(seconds).
    """

    t1_s: float
    t2star_s: float
    gamma_up_per_s: float = 1e3
    drive_up_per_photon_per_s: float = 0.0
    sigma_iq: float = 0.0

    def __post_init__(self):
        if not (self.t1_s > 0 and self.t2star_s > 0):
            raise ParameterDomainError("t1_s and t2star_s must be positive")
        if self.t2star_s > 2.0 * self.t1_s:
            raise ParameterDomainError("t2star_s cannot exceed 2 * t1_s")
        for name in ("gamma_up_per_s", "drive_up_per_photon_per_s", "sigma_iq"):
            if getattr(self, name) < 0:
                raise ParameterDomainError(f"{name} must be >= 0")

    def gamma_drive_up(self, photon_number, level: int = 1):
        if level != 1:
            return 0.0 * np.asarray(photon_number)
        return self.drive_up_per_photon_per_s * np.asarray(photon_number)

    @property
    def decay_rate(self) -> float:
        return 0.0 if math.isinf(self.t1_s) else 1.0 / self.t1_s


@dataclass
class ShotRecord:
    prepared_state: int
    events: list
    iq: complex
    final_field: complex
    seed: int
    final_level: int = 0


@dataclass
class SegmentResult:
    """Bulk outcome of one readout window for many shots."""

    iq: np.ndarray
    final_alpha: np.ndarray
    final_level: np.ndarray
    n_events: np.ndarray
    first_event_t: np.ndarray
    event_times: np.ndarray
    event_codes: np.ndarray
    mean_trajectory: np.ndarray | None = None
    times: np.ndarray | None = field(default=None, repr=False)


def default_dt(kappa_hz: float, fraction: float = 0.01) -> float:
    return fraction / (TWO_PI * kappa_hz)


def _check_dt(dt_s: float, kappa_hz: float):
    if not dt_s > 0 or dt_s > 0.02 / (TWO_PI * kappa_hz) * (1 + 1e-12):
        raise ParameterDomainError(f"dt_s={dt_s} must lie in (0, 0.02/kappa]")


def ring_up(drive: ResonatorDrive, duration_s: float, dt_s: float, alpha0: complex = 0.0) -> np.ndarray:
    """Fixed-step RK4 field trajectory with the qubit frozen in one level.

    Returns the field at ``0, dt, ..., N dt`` with ``N = round(duration/dt)``.
    """
    _check_dt(dt_s, drive.kappa_hz)
    n_steps = int(round(duration_s / dt_s))
    traj = np.empty(n_steps + 1, dtype=complex)
    args = (drive.detuning_hz, drive.eta_hz, drive.kappa_hz, drive.epsilon_hz)
    a = complex(alpha0)
    traj[0] = a
    for k in range(n_steps):
        k1 = _rhs_scalar(a, *args)
        k2 = _rhs_scalar(a + 0.5 * dt_s * k1, *args)
        k3 = _rhs_scalar(a + 0.5 * dt_s * k2, *args)
        k4 = _rhs_scalar(a + dt_s * k3, *args)
        a = a + dt_s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        traj[k + 1] = a
    return traj


@numba.njit(cache=True)
def _rhs_scalar(a, det, eta, kappa, eps):
    n = a.real * a.real + a.imag * a.imag
    return -1j * TWO_PI * (det + eta * n) * a - math.pi * kappa * a - 1j * TWO_PI * eps


@numba.njit(cache=True)
def _level_rates(level, n, gamma_down, gamma_up, r0):
    # (rate of first channel, rate of second channel, code first, code second, target first, target second)
    if level == 0:
        return gamma_up, 0.0, 2, -1, 1, -1
    elif level == 1:
        return gamma_down, r0 * n, 0, 3, 0, 2
    else:
        return 2.0 * gamma_down, 0.0, 1, -1, 1, -1


@numba.njit(cache=True)
def _reference(level, n_steps, dt, det, eta, kappa, eps, weights, gamma_down, gamma_up, r0):
    traj = np.empty(n_steps + 1, dtype=np.complex128)
    hazard = np.zeros(n_steps + 1)
    integral = np.zeros(n_steps + 1, dtype=np.complex128)
    a = 0j
    traj[0] = a
    for k in range(n_steps):
        n = a.real * a.real + a.imag * a.imag
        r1, r2, _, _, _, _ = _level_rates(level, n, gamma_down, gamma_up, r0)
        hazard[k + 1] = hazard[k] + (r1 + r2) * dt
        k1 = _rhs_scalar(a, det, eta, kappa, eps)
        k2 = _rhs_scalar(a + 0.5 * dt * k1, det, eta, kappa, eps)
        k3 = _rhs_scalar(a + 0.5 * dt * k2, det, eta, kappa, eps)
        k4 = _rhs_scalar(a + dt * k3, det, eta, kappa, eps)
        a_new = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        integral[k + 1] = integral[k] + 0.5 * dt * (weights[k] * a + weights[k + 1] * a_new)
        a = a_new
        traj[k + 1] = a
    return traj, hazard, integral


@numba.njit(cache=True, nogil=True)
def _continue_shots(
    start_step, alpha_start, level_start, acc_start, thresholds, choices,
    n_steps, dt, dets, eta, kappa, eps, weights, gamma_down, gamma_up, r0,
    out_alpha, out_level, out_acc, out_nev, out_times, out_codes, mean_sum,
):
    """Integrate shots individually from their first event onward.

    Each shot ``j`` has already undergone event 0 at ``start_step[j]``.
    """
    n_shots = start_step.shape[0]
    max_ev = thresholds.shape[1]
    for j in range(n_shots):
        a = alpha_start[j]
        level = level_start[j]
        acc = acc_start[j]
        n_ev = 1
        haz = 0.0
        thr = thresholds[j, 1] if max_ev > 1 else np.inf
        for k in range(start_step[j], n_steps):
            n = a.real * a.real + a.imag * a.imag
            r1, r2, c1, c2, t1, t2 = _level_rates(level, n, gamma_down, gamma_up, r0)
            haz += (r1 + r2) * dt
            det = dets[level]
            k1 = _rhs_scalar(a, det, eta, kappa, eps)
            k2 = _rhs_scalar(a + 0.5 * dt * k1, det, eta, kappa, eps)
            k3 = _rhs_scalar(a + 0.5 * dt * k2, det, eta, kappa, eps)
            k4 = _rhs_scalar(a + dt * k3, det, eta, kappa, eps)
            a_new = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            acc += 0.5 * dt * (weights[k] * a + weights[k + 1] * a_new)
            a = a_new
            mean_sum[k + 1] += a
            if haz >= thr:
                u = choices[j, n_ev]
                if u * (r1 + r2) < r1:
                    code, level = c1, t1
                else:
                    code, level = c2, t2
                if n_ev < out_times.shape[1]:
                    out_times[j, n_ev] = (k + 1) * dt
                    out_codes[j, n_ev] = code
                n_ev += 1
                haz = 0.0
                thr = thresholds[j, n_ev] if n_ev < max_ev else np.inf
        out_alpha[j] = a
        out_level[j] = level
        out_acc[j] = acc
        out_nev[j] = n_ev


def shot_uniforms(master_seed: int, shot_ids) -> np.ndarray:
    """Uniform draws ``(len(shot_ids), N_UNIFORMS)`` for the given global shot ids.

    Uniforms for shot ``i`` live in Philox block ``i // BLOCK`` (counter-based,
    keyed by the master seed), so they never depend on which other shots are
    requested alongside.
    """
    ids = np.asarray(shot_ids, dtype=np.int64)
    out = np.empty((ids.size, N_UNIFORMS))
    if ids.size == 0:
        return out
    blocks = ids // BLOCK
    for b in np.unique(blocks):
        table = _block_table(int(master_seed), int(b))
        sel = blocks == b
        out[sel] = table[ids[sel] - b * BLOCK]
    return out


@lru_cache(maxsize=4096)
def _block_table(master_seed: int, block: int) -> np.ndarray:
    key = master_seed & 0xFFFFFFFFFFFFFFFF
    bitgen = np.random.Philox(key=key, counter=[0, 0, block, 0])
    table = np.random.Generator(bitgen).random((BLOCK, N_UNIFORMS))
    table.setflags(write=False)
    return table


def _exp_from_uniform(u):
    return -np.log1p(-u)


def simulate_segment(
    resonator: ReadoutResonator,
    f_drive_hz: float,
    epsilon_hz: float,
    noise: NoiseModel,
    levels,
    uniforms: np.ndarray,
    duration_s: float,
    dt_s: float,
    weights: np.ndarray | None = None,
    threads: int = 1,
    record_mean: bool = False,
    offset: int = MAIN,
) -> SegmentResult:
    """One readout window for a batch of shots starting in ``levels``.

    ``uniforms`` holds each shot's random numbers (rows from
    :func:`shot_uniforms`); the segment reads ``SEG_WIDTH`` of them starting
    at column ``offset``.  ``weights`` is the integration kernel sampled on
    the step grid (``N + 1`` points); default boxcar ``1/T``.
    """
    _check_dt(dt_s, resonator.kappa_hz)
    levels = np.asarray(levels, dtype=np.int64)
    n_shots = levels.size
    n_steps = int(round(duration_s / dt_s))
    if n_steps < 1:
        raise ParameterDomainError("readout window shorter than one time step")
    t_int = n_steps * dt_s
    if weights is None:
        weights = np.full(n_steps + 1, 1.0 / t_int, dtype=complex)
    weights = np.ascontiguousarray(weights, dtype=complex)
    if weights.shape != (n_steps + 1,):
        raise ParameterDomainError("weights must be sampled on the N+1 step grid")

    u = uniforms[:, offset:offset + SEG_WIDTH]
    thresholds = np.ascontiguousarray(_exp_from_uniform(u[:, :MAX_EVENTS]))
    choices = np.ascontiguousarray(u[:, MAX_EVENTS:2 * MAX_EVENTS])
    normals = ndtri(u[:, 2 * MAX_EVENTS:])

    dets = np.array([resonator.frequency(lv) - f_drive_hz for lv in (0, 1, 2)])
    eta, kappa = resonator.eta_hz, resonator.kappa_hz
    gd, gu, r0 = noise.decay_rate, noise.gamma_up_per_s, noise.drive_up_per_photon_per_s

    iq = np.empty(n_shots, dtype=complex)
    final_alpha = np.empty(n_shots, dtype=complex)
    final_level = levels.copy()
    n_events = np.zeros(n_shots, dtype=np.int64)
    first_t = np.full(n_shots, np.nan)
    ev_times = np.full((n_shots, MAX_EVENTS), np.nan)
    ev_codes = np.full((n_shots, MAX_EVENTS), -1, dtype=np.int64)
    mean_sum = np.zeros(n_steps + 1, dtype=complex)

    for lv in np.unique(levels):
        traj, hazard, integral = _reference(
            int(lv), n_steps, dt_s, dets[lv], eta, kappa, epsilon_hz, weights, gd, gu, r0
        )
        idx = np.flatnonzero(levels == lv)
        k_first = np.searchsorted(hazard, thresholds[idx, 0], side="left")
        quiet = k_first > n_steps
        q = idx[quiet]
        iq[q] = integral[-1]
        final_alpha[q] = traj[-1]

        jump = idx[~quiet]
        if record_mean:
            # event shots follow the reference up to and including their first event step
            ks_all = k_first[~quiet]
            left = np.concatenate(([0], np.cumsum(np.bincount(ks_all, minlength=n_steps + 1)[: n_steps + 1])[:-1]))
            mean_sum += (idx.size - left) * traj
        if jump.size == 0:
            continue
        ks = k_first[~quiet]
        # transition chosen with the rates of the step that fired
        n_prev = np.abs(traj[ks - 1]) ** 2
        r1, r2, c1, c2, t1, t2 = _level_rates_vec(int(lv), n_prev, gd, gu, r0)
        pick_first = choices[jump, 0] * (r1 + r2) < r1
        codes0 = np.where(pick_first, c1, c2)
        new_level = np.where(pick_first, t1, t2)
        first_t[jump] = ks * dt_s
        ev_times[jump, 0] = ks * dt_s
        ev_codes[jump, 0] = codes0

        out = _run_jump_shots(
            ks, traj[ks], new_level, integral[ks], thresholds[jump], choices[jump],
            n_steps, dt_s, dets, eta, kappa, epsilon_hz, weights, gd, gu, r0, threads,
        )
        a_out, lvl_out, acc_out, nev_out, t_out, c_out, msum = out
        final_alpha[jump] = a_out
        final_level[jump] = lvl_out
        iq[jump] = acc_out
        n_events[jump] = nev_out
        ev_times[jump, 1:] = t_out[:, 1:]
        ev_codes[jump, 1:] = c_out[:, 1:]
        mean_sum += msum

    noise_scale = noise.sigma_iq * math.sqrt(np.sum(np.abs(weights) ** 2) * dt_s) if noise.sigma_iq else 0.0
    if noise_scale:
        iq = iq + noise_scale * (normals[:, 0] + 1j * normals[:, 1])
    # the final level of quiet shots is their start level
    return SegmentResult(
        iq=iq,
        final_alpha=final_alpha,
        final_level=final_level,
        n_events=n_events,
        first_event_t=first_t,
        event_times=ev_times,
        event_codes=ev_codes,
        mean_trajectory=mean_sum / n_shots if record_mean else None,
        times=np.arange(n_steps + 1) * dt_s,
    )


def _level_rates_vec(level, n, gd, gu, r0):
    if level == 0:
        z = np.zeros_like(n)
        return z + gu, z, 2, -1, 1, -1
    if level == 1:
        return np.zeros_like(n) + gd, r0 * n, 0, 3, 0, 2
    z = np.zeros_like(n)
    return z + 2.0 * gd, z, 1, -1, 1, -1


JUMP_CHUNK = 256


def _run_jump_shots(ks, alpha_s, level_s, acc_s, thresholds, choices, n_steps, dt, dets, eta,
                    kappa, eps, weights, gd, gu, r0, threads):
    m = ks.size
    a_out = np.empty(m, dtype=complex)
    lvl_out = np.empty(m, dtype=np.int64)
    acc_out = np.empty(m, dtype=complex)
    nev_out = np.empty(m, dtype=np.int64)
    t_out = np.full((m, MAX_EVENTS), np.nan)
    c_out = np.full((m, MAX_EVENTS), -1, dtype=np.int64)
    chunks = [slice(i, min(i + JUMP_CHUNK, m)) for i in range(0, m, JUMP_CHUNK)]
    partial = [np.zeros(n_steps + 1, dtype=complex) for _ in chunks]

    def work(ci):
        s = chunks[ci]
        # numba writes into these views in place
        _continue_shots(
            np.ascontiguousarray(ks[s]), np.ascontiguousarray(alpha_s[s]),
            np.ascontiguousarray(level_s[s]), np.ascontiguousarray(acc_s[s]),
            np.ascontiguousarray(thresholds[s]), np.ascontiguousarray(choices[s]),
            n_steps, dt, dets, eta, kappa, eps, weights, gd, gu, r0,
            a_out[s], lvl_out[s], acc_out[s], nev_out[s], t_out[s], c_out[s], partial[ci],
        )

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(chunks))))
    else:
        for ci in range(len(chunks)):
            work(ci)
    msum = np.zeros(n_steps + 1, dtype=complex)
    for p in partial:  # fixed order keeps sums independent of thread count
        msum += p
    return a_out, lvl_out, acc_out, nev_out, t_out, c_out, msum


def simulate_shot(
    resonator: ReadoutResonator,
    f_drive_hz: float,
    epsilon_hz: float,
    noise: NoiseModel,
    prepared_state: int,
    duration_s: float,
    seed: int,
    dt_s: float | None = None,
) -> ShotRecord:
    """Simulate one measurement shot of a qubit prepared in ``prepared_state``.

    The shot uses shot id 0 of the stream keyed by ``seed``, so replaying the
    same seed reproduces the record exactly.
    """
    if prepared_state not in (0, 1, 2):
        raise ParameterDomainError("prepared_state must be 0, 1 or 2")
    dt_s = default_dt(resonator.kappa_hz) if dt_s is None else dt_s
    u = shot_uniforms(seed, [0])
    seg = simulate_segment(resonator, f_drive_hz, epsilon_hz, noise, [prepared_state], u, duration_s, dt_s)
    n = int(seg.n_events[0])
    events = [
        (float(seg.event_times[0, k]), TRANSITIONS[int(seg.event_codes[0, k])])
        for k in range(min(n, MAX_EVENTS))
    ]
    return ShotRecord(
        prepared_state=prepared_state,
        events=events,
        iq=complex(seg.iq[0]),
        final_field=complex(seg.final_alpha[0]),
        seed=int(seed),
        final_level=int(seg.final_level[0]),
    )
