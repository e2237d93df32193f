"""Small density-matrix reference model.

A three-level qubit tensored with a truncated Fock space is evolved under
the full master equation with a fixed-step RK4 integrator.  It is far too
slow for shot statistics and exists to bound the error of the hybrid shot
model in regimes where both apply.  :func:`exact_transversal_shift` gives a
matching non-perturbative check of the transversal dispersive shift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .duffing import ReadoutResonator
from .dynamics import NoiseModel
from .errors import ParameterDomainError, TruncationError

__all__ = ["LindbladSystem", "OracleTrajectory", "lindblad_oracle", "exact_transversal_shift"]

TWO_PI = 2.0 * math.pi
N_LEVELS = 3


@dataclass(frozen=True)
class LindbladSystem:
    """Driven readout resonator coupled longitudinally to a three-level qubit.

    The Hamiltonian in the frame rotating at the drive is
    ``sum_l |l><l| (f_l - f_d) a^dag a + (eta/2) a^dag^2 a^2 + eps (a + a^dag)``
    in Hz (multiplied by 2 pi internally).
    """

    resonator: ReadoutResonator
    f_drive_hz: float
    epsilon_hz: float
    noise: NoiseModel
    n_fock: int = 16

    def __post_init__(self):
        if not 2 <= self.n_fock <= 32:
            raise ParameterDomainError("Fock cutoff must lie in [2, 32]")

    def operators(self):
        """Return ``(H, collapse_ops)`` in angular units on the joint space."""
        nf = self.n_fock
        a_f = np.diag(np.sqrt(np.arange(1, nf)), 1)
        eye_q = np.eye(N_LEVELS)
        eye_f = np.eye(nf)
        a = np.kron(eye_q, a_f)
        num = a.conj().T @ a
        proj = [np.kron(np.outer(eye_q[i], eye_q[i]), eye_f) for i in range(N_LEVELS)]
        r = self.resonator
        h = np.zeros((N_LEVELS * nf,) * 2, dtype=complex)
        for lv in range(N_LEVELS):
            h += (r.frequency(lv) - self.f_drive_hz) * proj[lv] @ num
        adag = a.conj().T
        h += 0.5 * r.eta_hz * adag @ adag @ a @ a
        h += self.epsilon_hz * (a + adag)
        h *= TWO_PI

        def qop(i, j):
            return np.kron(np.outer(eye_q[i], eye_q[j]), eye_f)

        n = self.noise
        cops = [math.sqrt(TWO_PI * r.kappa_hz) * a]
        g_down = n.decay_rate
        if g_down > 0:
            cops.append(math.sqrt(g_down) * qop(0, 1))
            cops.append(math.sqrt(2.0 * g_down) * qop(1, 2))
        if n.gamma_up_per_s > 0:
            cops.append(math.sqrt(n.gamma_up_per_s) * qop(1, 0))
        g_phi = 1.0 / n.t2star_s - 0.5 * g_down
        if g_phi > 0:
            cops.append(math.sqrt(2.0 * g_phi) * np.kron(np.diag(np.arange(N_LEVELS, dtype=float)), eye_f))
        if n.drive_up_per_photon_per_s > 0:
            sqrt_n = np.kron(eye_q, np.diag(np.sqrt(np.arange(nf, dtype=float))))
            cops.append(math.sqrt(n.drive_up_per_photon_per_s) * qop(2, 1) @ sqrt_n)
        return h, cops

    def initial_state(self, level: int) -> np.ndarray:
        psi = np.zeros(N_LEVELS * self.n_fock, dtype=complex)
        psi[level * self.n_fock] = 1.0
        return np.outer(psi, psi.conj())


@dataclass
class OracleTrajectory:
    times: np.ndarray
    n_photon: np.ndarray
    populations: np.ndarray
    max_trace_drift: float
    min_eigenvalue: float
    max_top_population: float

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "n_photon", "p0", "p1", "p2"])
        for t, n, p in zip(self.times, self.n_photon, self.populations):
            w.writerow([repr(float(t)), repr(float(n))] + [repr(float(x)) for x in p])


def lindblad_oracle(
    system: LindbladSystem,
    duration_s: float,
    dt_s: float,
    level: int = 0,
    rho0: np.ndarray | None = None,
    leak_tol: float = 1e-6,
    check_every: int = 1,
) -> OracleTrajectory:
    """Integrate the master equation and record photon number and populations.

    Raises
    ------
    TruncationError
        If the population of the top Fock level exceeds ``leak_tol``.
    """
    if not (dt_s > 0 and duration_s >= 0):
        raise ParameterDomainError("need dt_s > 0 and duration_s >= 0")
    h, cops = system.operators()
    nf = system.n_fock
    dim = h.shape[0]
    heff = h - 0.5j * sum(c.conj().T @ c for c in cops)
    heff_dag = heff.conj().T
    cops_dag = [c.conj().T for c in cops]

    def rhs(rho):
        out = -1j * (heff @ rho - rho @ heff_dag)
        for c, cd in zip(cops, cops_dag):
            out += c @ rho @ cd
        return out

    n_op = np.kron(np.eye(N_LEVELS), np.diag(np.arange(nf, dtype=float))).diagonal()
    level_idx = np.arange(dim) // nf
    top_idx = np.arange(dim) % nf == nf - 1

    rho = system.initial_state(level) if rho0 is None else np.array(rho0, dtype=complex)
    n_steps = int(round(duration_s / dt_s))
    times = np.arange(n_steps + 1) * dt_s
    n_photon = np.empty(n_steps + 1)
    pops = np.empty((n_steps + 1, N_LEVELS))
    drift = 0.0
    min_eig = 1.0
    top = 0.0
    for k in range(n_steps + 1):
        diag = rho.diagonal().real
        n_photon[k] = float(diag @ n_op)
        pops[k] = np.bincount(level_idx, weights=diag, minlength=N_LEVELS)
        top = max(top, float(diag[top_idx].sum()))
        if top > leak_tol:
            raise TruncationError(f"top Fock population {top:.3g} exceeds {leak_tol:g}; raise n_fock")
        drift = max(drift, abs(float(diag.sum()) - 1.0))
        if k % check_every == 0 or k == n_steps:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]))
        if k == n_steps:
            break
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt_s * k1)
        k3 = rhs(rho + 0.5 * dt_s * k2)
        k4 = rhs(rho + dt_s * k3)
        rho = rho + (dt_s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return OracleTrajectory(times, n_photon, pops, drift, min_eig, top)


def exact_transversal_shift(
    f_qubit_hz: float,
    f_res_hz: float,
    anharmonicity_hz: float,
    gxx_hz: float,
    n_levels: int = 5,
    n_fock: int = 4,
) -> float:
    """Exact ``f_C1 - f_C0`` of a transmon exchange-coupled to a resonator.

    Diagonalizes ``f_q b^dag b + (alpha/2) b^dag^2 b^2 + f_r a^dag a +
    g (a^dag b + a b^dag)`` and follows the dressed states by maximum overlap
    with the bare states ``|q, n>``.
    """
    b = np.diag(np.sqrt(np.arange(1, n_levels)), 1)
    a = np.diag(np.sqrt(np.arange(1, n_fock)), 1)
    iq, ir = np.eye(n_levels), np.eye(n_fock)
    bq = np.kron(b, ir)
    ar = np.kron(iq, a)
    nq = bq.T @ bq
    h = f_qubit_hz * nq + 0.5 * anharmonicity_hz * (nq @ nq - nq) + f_res_hz * ar.T @ ar
    h = h + gxx_hz * (ar.T @ bq + ar @ bq.T)
    # work relative to the bare scale so eigh sees O(1) numbers
    scale = max(abs(f_qubit_hz), abs(f_res_hz))
    vals, vecs = np.linalg.eigh(h / scale)

    def energy(q, n):
        return vals[int(np.argmax(np.abs(vecs[q * n_fock + n, :])))] * scale

    f_c0 = energy(0, 1) - energy(0, 0)
    f_c1 = energy(1, 1) - energy(1, 0)
    return float(f_c1 - f_c0)
