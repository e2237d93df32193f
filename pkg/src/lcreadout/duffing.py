"""Classical steady states of the driven Kerr (Duffing) readout resonator.

The resonator field ``alpha`` obeys, in the frame rotating at the drive,

    d(alpha)/dt = -i (Delta + eta |alpha|^2) alpha - (kappa/2) alpha - i eps

with every rate given in Hz (multiplied by 2 pi when time-stepping).  Fixed
points satisfy the photon-number cubic

    n [(Delta + eta n)^2 + kappa^2 / 4] = eps^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import IntegrationLimitError, ParameterDomainError

__all__ = [
    "ResonatorDrive",
    "SteadyStateSolution",
    "ReadoutResonator",
    "SweepRow",
    "BifurcationSweep",
    "field_rhs",
    "steady_states",
    "linear_photon_number",
    "bistable_window",
    "bifurcation_sweep",
    "basin_classify",
]

TWO_PI = 2.0 * math.pi
DARK, BRIGHT, UNSTABLE = "dark", "bright", "unstable"


@dataclass(frozen=True)
class ResonatorDrive:
    """Drive seen by the resonator for one fixed qubit level.

    ``detuning_hz`` is resonator frequency minus drive frequency.
    """

    detuning_hz: float
    eta_hz: float
    kappa_hz: float
    epsilon_hz: float

    def __post_init__(self):
        if not self.kappa_hz > 0:
            raise ParameterDomainError(f"kappa_hz must be > 0, got {self.kappa_hz}")
        if not self.epsilon_hz >= 0:
            raise ParameterDomainError(f"epsilon_hz must be >= 0, got {self.epsilon_hz}")
        for name in ("detuning_hz", "eta_hz"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterDomainError(f"{name} must be finite")

    def reduced(self) -> tuple[float, float, float]:
        """Detuning, Kerr and drive in units of the linewidth."""
        k = self.kappa_hz
        return self.detuning_hz / k, self.eta_hz / k, self.epsilon_hz / k


@dataclass(frozen=True)
class SteadyStateSolution:
    alpha: complex
    photon_number: float
    stable: bool
    branch: str


@dataclass(frozen=True)
class ReadoutResonator:
    """Qubit-conditioned readout resonator.

    The resonator sits at ``f_c0_hz`` with the qubit in |0>, at
    ``f_c0_hz - chi_hz`` in |1> and at ``f_c0_hz - chi2_ratio * chi_hz`` in
    |2>, so ``chi_hz`` is the dispersive shift f_C0 - f_C1.
    """

    f_c0_hz: float
    chi_hz: float
    eta_hz: float
    kappa_hz: float
    chi2_ratio: float = 1.8

    def frequency(self, level: int) -> float:
        shift = {0: 0.0, 1: 1.0, 2: self.chi2_ratio}
        if level not in shift:
            raise ParameterDomainError(f"qubit level must be 0, 1 or 2, got {level}")
        return self.f_c0_hz - shift[level] * self.chi_hz

    def drive(self, f_drive_hz: float, epsilon_hz: float, level: int) -> ResonatorDrive:
        return ResonatorDrive(
            detuning_hz=self.frequency(level) - f_drive_hz,
            eta_hz=self.eta_hz,
            kappa_hz=self.kappa_hz,
            epsilon_hz=epsilon_hz,
        )


def field_rhs(alpha, detuning_hz, eta_hz, kappa_hz, epsilon_hz):
    """Time derivative of the classical field (per second).

    Works elementwise on arrays, so ``detuning_hz`` may vary per trajectory.
    """
    n = alpha.real**2 + alpha.imag**2
    return (
        -1j * TWO_PI * (detuning_hz + eta_hz * n) * alpha
        - math.pi * kappa_hz * alpha
        - 1j * TWO_PI * epsilon_hz
    )


def linear_photon_number(drive: ResonatorDrive) -> float:
    """Lorentzian photon number of the same drive with the Kerr term removed."""
    return drive.epsilon_hz**2 / (drive.detuning_hz**2 + drive.kappa_hz**2 / 4.0)


def _cardano_real_roots(a: float, b: float, c: float, d: float) -> list[float]:
    # a m^3 + b m^2 + c m + d = 0, a != 0
    b, c, d = b / a, c / a, d / a
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        s = math.sqrt(disc)
        t = np.cbrt(-q / 2.0 + s) + np.cbrt(-q / 2.0 - s)
        return [float(t) - shift]
    if p == 0.0:
        return [-shift]
    r = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * r)
    theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
    return [r * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]


def _quadratic_real_roots(a: float, b: float, c: float) -> list[float]:
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return []
    s = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(s, b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    return roots


def _photon_roots(d: float, h: float, e: float) -> list[float]:
    """Non-negative real roots n (photons) in reduced units."""
    if e == 0.0:
        return [0.0]
    # scale by the linear-response photon number so the middle root sits near m = 1
    s = e * e / (d * d + 0.25)
    lin = d * d + 0.25
    a = h * h * s * s / lin
    b = 2.0 * d * h * s / lin

    def poly(m):
        return ((a * m + b) * m + 1.0) * m - 1.0

    def dpoly(m):
        return (3.0 * a * m + 2.0 * b) * m + 1.0

    if a == 0.0:
        roots = [1.0]
    elif a < 1e-9:
        # near-linear: Newton from the Lorentzian root, then deflate
        m1 = 1.0
        for _ in range(50):
            step = poly(m1) / dpoly(m1)
            m1 -= step
            if abs(step) < 1e-16 * max(1.0, abs(m1)):
                break
        roots = [m1] + _quadratic_real_roots(a, b + a * m1, 1.0 / m1)
    else:
        roots = _cardano_real_roots(a, b, 1.0, -1.0)

    polished = []
    for m in roots:
        for _ in range(3):
            dp = dpoly(m)
            if dp == 0.0:
                break
            m = m - poly(m) / dp
        if m >= 0.0:
            polished.append(m * s)
    polished.sort()
    # merge duplicates produced at a fold
    merged: list[float] = []
    for n in polished:
        if merged and abs(n - merged[-1]) <= 1e-12 * max(1.0, n):
            continue
        merged.append(n)
    return merged


def _jacobian(alpha: complex, d: float, h: float) -> np.ndarray:
    n = abs(alpha) ** 2
    u = d + h * n
    cx = -1j * u - 2j * h * alpha.real * alpha - 0.5
    cy = u - 2j * h * alpha.imag * alpha - 0.5j
    return np.array([[cx.real, cy.real], [cx.imag, cy.imag]])


def steady_states(drive: ResonatorDrive) -> list[SteadyStateSolution]:
    """All fixed points of the driven Kerr resonator, sorted by photon number.

    Roots of the photon-number cubic come from Cardano's formula followed by
    Newton polishing.  Stability is read off the eigenvalues of the 2x2
    Jacobian of the (Re alpha, Im alpha) flow; real parts within 1e-12 kappa
    of zero count as unstable.
    """
    d, h, e = drive.reduced()
    roots = _photon_roots(d, h, e)

    sols = []
    for n in roots:
        alpha = -1j * e / (0.5 + 1j * (d + h * n))
        eig = np.linalg.eigvals(_jacobian(alpha, d, h))
        stable = bool(np.max(eig.real) < -1e-12)
        sols.append((complex(alpha), float(abs(alpha) ** 2), stable))

    stable_ns = [n for _, n, s in sols if s]
    out = []
    for alpha, n, stable in sols:
        if not stable:
            branch = UNSTABLE
        elif len(stable_ns) >= 2:
            branch = DARK if n == min(stable_ns) else BRIGHT
        else:
            branch = _single_root_branch(drive, n)
        out.append(SteadyStateSolution(alpha, n, stable, branch))
    return out


def _single_root_branch(drive: ResonatorDrive, n: float) -> str:
    # bright once the Kerr shift has eaten more than half of the detuning
    # and the response exceeds the linear one
    delta = drive.detuning_hz
    if n <= linear_photon_number(drive) or delta == 0.0:
        return DARK
    return BRIGHT if abs(delta + drive.eta_hz * n) < 0.5 * abs(delta) else DARK


def _fold_eps2(d: float, h: float, sign: int) -> float:
    # squared drive at which a fold occurs for reduced detuning d
    root = math.sqrt(max(d * d - 0.75, 0.0))
    n = (-2.0 * d + sign * root) / (3.0 * h)
    return n * ((d + h * n) ** 2 + 0.25)


def bistable_window(epsilon_hz: float, eta_hz: float, kappa_hz: float):
    """Detuning interval ``(lo, hi)`` in Hz where three fixed points coexist.

    Returns ``None`` when no bistability is possible at this drive.  The
    edges are located by root-finding on the fold conditions
    dn/d(eps^2) -> infinity, which is independent of the root solver.
    """
    if eta_hz == 0.0 or epsilon_hz == 0.0:
        return None
    h = eta_hz / kappa_hz
    e2 = (epsilon_hz / kappa_hz) ** 2
    sgn = -1.0 if h > 0 else 1.0  # bistable detunings have sign opposite to eta
    cusp = math.sqrt(0.75)
    # along |d|, the upper fold value grows from the cusp; three roots need
    # fold_low(d) < e2 < fold_high(d)
    folds = sorted([lambda x, s=s: _fold_eps2(sgn * x, h, s) for s in (1, -1)], key=lambda f: f(cusp + 1.0))
    f_low, f_high = folds
    if f_low(cusp) >= e2:
        return None

    def upper(x0):
        x = x0
        while True:
            x = 2.0 * x + 1.0
            if x > 1e12:
                raise ParameterDomainError("bistable window edge not bracketed")
            yield x

    def solve(f):
        lo = cusp
        for hi in upper(cusp):
            if f(hi) > e2:
                return brentq(lambda x: f(x) - e2, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
            lo = hi

    x_a = solve(f_high)
    x_b = solve(f_low)
    edges = sorted([sgn * x_a * kappa_hz, sgn * x_b * kappa_hz])
    return edges[0], edges[1]


@dataclass(frozen=True)
class SweepRow:
    f_hz: float
    qubit_state: int
    n_dark: float | None
    n_bright: float | None
    n_unstable: float | None
    bistable: bool


@dataclass(frozen=True)
class BifurcationSweep:
    rows: list[SweepRow]
    window_hz: tuple[float, float] | None

    def to_csv_rows(self):
        def cell(v):
            return "" if v is None else repr(float(v))

        yield "f_hz,qubit_state,n_dark,n_bright,n_unstable,bistable"
        for r in self.rows:
            yield ",".join(
                [repr(float(r.f_hz)), str(r.qubit_state), cell(r.n_dark), cell(r.n_bright),
                 cell(r.n_unstable), "1" if r.bistable else "0"]
            )


def bifurcation_sweep(
    resonator: ReadoutResonator,
    epsilon_hz: float,
    freqs_hz: Sequence[float],
    qubit_state: int,
) -> BifurcationSweep:
    """Steady-state branches versus drive frequency for one qubit state.

    ``window_hz`` is the drive-frequency interval ``(f_low, f_high)`` where
    three fixed points coexist, or ``None`` when the sweep never enters it.
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    if freqs.size == 0:
        raise ParameterDomainError("empty frequency range")
    if np.any(np.diff(freqs) < 0):
        raise ParameterDomainError("frequencies must be sorted ascending")

    rows = []
    for f in freqs:
        sols = steady_states(resonator.drive(float(f), epsilon_hz, qubit_state))
        by = {s.branch: s.photon_number for s in sols}
        rows.append(SweepRow(float(f), qubit_state, by.get(DARK), by.get(BRIGHT), by.get(UNSTABLE), len(sols) == 3))

    window = None
    if any(r.bistable for r in rows):
        det = bistable_window(epsilon_hz, resonator.eta_hz, resonator.kappa_hz)
        if det is not None:
            f_res = resonator.frequency(qubit_state)
            window = (f_res - det[1], f_res - det[0])
    return BifurcationSweep(rows, window)


def basin_classify(
    drive: ResonatorDrive,
    alpha0,
    dt_kappa: float = 0.01,
    max_steps: int = 1_000_000,
    tol: float = 1e-8,
):
    """Label the attractor (dark or bright) reached from ``alpha0``.

    ``alpha0`` may be a scalar or an array; the flow is integrated with fixed
    RK4 steps of ``dt_kappa / kappa`` (reduced time) until the reduced field
    velocity falls below ``tol`` for every point.
    """
    sols = steady_states(drive)
    stable = [s for s in sols if s.stable]
    if len(stable) < 2:
        raise ParameterDomainError("basin classification needs a bistable drive")
    d, h, e = drive.reduced()

    def rhs(a):
        n = a.real**2 + a.imag**2
        return -1j * (d + h * n) * a - 0.5 * a - 1j * e

    a = np.array(alpha0, dtype=complex, ndmin=1).copy()
    scalar = np.ndim(alpha0) == 0
    active = np.ones(a.shape, dtype=bool)
    dt = dt_kappa
    for _ in range(max_steps):
        x = a[active]
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        a[active] = x
        if not np.all(np.isfinite(x)):
            raise IntegrationLimitError("field diverged; start point too far out for the fixed step")
        done = np.abs(rhs(x)) < tol
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
    else:
        raise IntegrationLimitError(f"{int(active.sum())} trajectories unconverged after {max_steps} steps")

    # fixed points were computed in reduced units with the same alpha scale
    centers = np.array([s.alpha for s in stable])
    labels = np.array([s.branch for s in stable])
    nearest = np.argmin(np.abs(a[..., None] - centers), axis=-1)
    out = labels[nearest]
    return str(out[0]) if scalar else out


def with_epsilon(drive: ResonatorDrive, epsilon_hz: float) -> ResonatorDrive:
    return replace(drive, epsilon_hz=epsilon_hz)
