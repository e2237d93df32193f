"""Flux-dependent coupling coefficients and the dispersive shift.

The qubit and the readout resonator share a coupling junction whose
Josephson energy is modulated by the external flux.  Every junction-borne
term of the interaction (qubit and resonator frequency shifts, resonator
self-Kerr, longitudinal coupling and the junction part of the transversal
coupling) therefore scales as ``cos(phi_ext)``, while the transversal
coupling through the electrode capacitances does not depend on flux.

Coefficients come either from direct input or from a
:class:`CouplingCalibration`, which maps ``E_JC`` and the capacitances to
the coefficients through linear calibration constants.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import FitRankError, IterationLimitError, ParameterDomainError, SingularityError

__all__ = [
    "CircuitParams",
    "CouplingCalibration",
    "CouplingCoefficients",
    "normalize_flux",
    "coupling_coefficients",
    "qubit_frequency",
    "resonator_frequency",
    "transversal_shift",
    "dispersive_components",
    "dispersive_shift",
    "longitudinal_fraction",
    "calibrate_coupling",
    "FluxSweepFit",
    "FluxSweepRegressor",
    "fit_flux_sweep",
    "synthesize_sweep",
    "read_sweep_csv",
    "write_sweep_csv",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CircuitParams:
    """Device constants (frequencies in Hz, capacitances in F, times in s)."""

    ejc_hz: float
    anharmonicity_hz: float
    f_qubit_max_hz: float
    f_qubit_min_hz: float
    f_res_center_hz: float
    f_res_tuning_hz: float
    c_parasitic_f: float
    c_planar_f: float
    t1_s: float
    t2star_s: float
    kappa_hz: float

    def __post_init__(self):
        checks = (
            (self.ejc_hz > 0, "ejc_hz must be positive"),
            (self.t1_s > 0, "t1_s must be positive"),
            (self.t2star_s > 0, "t2star_s must be positive"),
            (self.t2star_s <= 2.0 * self.t1_s, "t2star_s must not exceed 2*t1_s"),
            (self.anharmonicity_hz < 0, "anharmonicity_hz must be negative"),
            (self.f_qubit_max_hz > self.f_qubit_min_hz, "f_qubit_max_hz must exceed f_qubit_min_hz"),
            (self.kappa_hz > 0, "kappa_hz must be positive"),
            (self.f_res_tuning_hz >= 0, "f_res_tuning_hz must be non-negative"),
            (self.c_parasitic_f >= 0 and self.c_planar_f >= 0, "capacitances must be non-negative"),
        )
        for ok, msg in checks:
            if not ok:
                raise ParameterDomainError(msg)
        if not all(math.isfinite(v) for v in (self.ejc_hz, self.f_qubit_max_hz, self.f_res_center_hz)):
            raise ParameterDomainError("frequencies must be finite")


@dataclass(frozen=True)
class CouplingCalibration:
    """Linear maps from circuit constants to the zero-flux coefficients.

    ``gzz(0) = zz_per_ejc * E_JC``, ``gxx_junction(0) = xx_junction_per_ejc * E_JC``,
    ``eta(0) = kerr_per_ejc * E_JC`` and
    ``gxx_capacitive = xx_capacitive_hz_per_f * (c_parasitic + c_planar)``.
    """

    zz_per_ejc: float
    xx_junction_per_ejc: float
    kerr_per_ejc: float
    xx_capacitive_hz_per_f: float


@dataclass(frozen=True)
class CouplingCoefficients:
    """Interaction coefficients at one flux point (Hz)."""

    phi_ext: float
    dq_hz: float
    dr_hz: float
    eta_hz: float
    gzz_hz: float
    gxx_junction_hz: float
    gxx_capacitive_hz: float

    @property
    def gxx_total_hz(self) -> float:
        return self.gxx_junction_hz + self.gxx_capacitive_hz


def normalize_flux(phi_ext):
    """Wrap flux into [-pi, pi]."""
    phi = np.remainder(np.asarray(phi_ext, dtype=float) + math.pi, TWO_PI) - math.pi
    return float(phi) if np.ndim(phi) == 0 else phi


def _validate(params):
    if not isinstance(params, CircuitParams):
        raise ParameterDomainError("params must be a CircuitParams instance")


def coupling_coefficients(params: CircuitParams, phi_ext: float, calibration: CouplingCalibration) -> CouplingCoefficients:
    """Evaluate every interaction coefficient at ``phi_ext``."""
    _validate(params)
    phi = normalize_flux(phi_ext)
    c = math.cos(phi)
    ejc = params.ejc_hz
    return CouplingCoefficients(
        phi_ext=phi,
        dq_hz=0.5 * (params.f_qubit_max_hz - params.f_qubit_min_hz) * c,
        dr_hz=0.5 * params.f_res_tuning_hz * c,
        eta_hz=calibration.kerr_per_ejc * ejc * c,
        gzz_hz=calibration.zz_per_ejc * ejc * c,
        gxx_junction_hz=calibration.xx_junction_per_ejc * ejc * c,
        gxx_capacitive_hz=calibration.xx_capacitive_hz_per_f * (params.c_parasitic_f + params.c_planar_f),
    )


def qubit_frequency(params: CircuitParams, phi_ext):
    """Cosine interpolation between the sweet-spot and minimum frequencies."""
    mid = 0.5 * (params.f_qubit_max_hz + params.f_qubit_min_hz)
    half = 0.5 * (params.f_qubit_max_hz - params.f_qubit_min_hz)
    return mid + half * np.cos(phi_ext)


def resonator_frequency(params: CircuitParams, phi_ext):
    """Bare resonator frequency, tuning by ``f_res_tuning_hz`` about the center."""
    return params.f_res_center_hz + 0.5 * params.f_res_tuning_hz * np.cos(phi_ext)


def transversal_shift(gxx_hz, detuning_hz, anharmonicity_hz):
    """Second-order resonator shift from transversal coupling.

    Returns ``2 g**2 (1/D - 1/(D + alpha))`` with ``D = f_q - f_r``.  The
    magnitude is the difference of the resonator frequency with the qubit in
    |0> and |1> (the factor 2 carries the larger |1>-|2> matrix element).
    The sign is chosen so that the contribution is never positive for a
    qubit below the resonator, which is how it enters the total shift.

    Raises
    ------
    SingularityError
        If the qubit (or its |1>-|2> transition) is resonant with the resonator.
    """
    d = np.asarray(detuning_hz, dtype=float)
    d2 = d + anharmonicity_hz
    scale = np.maximum(np.abs(d), 1.0) * 1e-12
    if np.any(np.abs(d) <= scale) or np.any(np.abs(d2) <= scale):
        raise SingularityError("qubit transition resonant with the resonator")
    out = 2.0 * np.square(gxx_hz) * (1.0 / d - 1.0 / d2)
    return float(out) if np.ndim(out) == 0 else out


def _xx_kernel(params: CircuitParams, phi):
    det = qubit_frequency(params, phi) - resonator_frequency(params, phi)
    return transversal_shift(1.0, det, params.anharmonicity_hz)


def dispersive_components(params: CircuitParams, phi_ext: float, calibration: CouplingCalibration):
    """Return ``(chi_zz, chi_xx)`` in Hz at ``phi_ext``."""
    k = coupling_coefficients(params, phi_ext, calibration)
    det = qubit_frequency(params, k.phi_ext) - resonator_frequency(params, k.phi_ext)
    return 2.0 * k.gzz_hz, transversal_shift(k.gxx_total_hz, det, params.anharmonicity_hz)


def dispersive_shift(params: CircuitParams, phi_ext: float, calibration: CouplingCalibration) -> float:
    """Total dispersive shift ``f_C0 - f_C1`` (Hz)."""
    zz, xx = dispersive_components(params, phi_ext, calibration)
    return zz + xx


def longitudinal_fraction(params: CircuitParams, phi_ext: float, calibration: CouplingCalibration) -> float:
    """Share of the total dispersive shift carried by the longitudinal term."""
    zz, xx = dispersive_components(params, phi_ext, calibration)
    return abs(zz) / abs(zz + xx)


def calibrate_coupling(
    params: CircuitParams,
    chi_total_hz: float,
    zz_fraction: float,
    eta_hz: float,
    gxx_capacitive_hz: float,
) -> CouplingCalibration:
    """Solve for calibration constants that hit zero-flux targets.

    The longitudinal part is fixed by ``zz_fraction * chi_total_hz``; the
    remainder must come from the transversal term, which fixes ``|g_total|``.
    Of the two junction amplitudes that give this total, the one where the
    junction term dominates (and therefore opposes the capacitive term) is
    returned.
    """
    if not 0.0 < zz_fraction <= 1.0:
        raise ParameterDomainError("zz_fraction must lie in (0, 1]")
    c_total = params.c_parasitic_f + params.c_planar_f
    if c_total <= 0:
        raise ParameterDomainError("capacitive coupling needs a nonzero capacitance")
    chi_xx = (1.0 - zz_fraction) * chi_total_hz
    k0 = _xx_kernel(params, 0.0)
    g2 = chi_xx / k0
    if g2 < 0:
        raise ParameterDomainError("requested shift has the wrong sign for the transversal term")
    g_tot = math.sqrt(g2)
    gj = g_tot - gxx_capacitive_hz if gxx_capacitive_hz < 0 else -g_tot - gxx_capacitive_hz
    ejc = params.ejc_hz
    return CouplingCalibration(
        zz_per_ejc=0.5 * zz_fraction * chi_total_hz / ejc,
        xx_junction_per_ejc=gj / ejc,
        kerr_per_ejc=eta_hz / ejc,
        xx_capacitive_hz_per_f=gxx_capacitive_hz / c_total,
    )


# ---------------------------------------------------------------- fitting


def _sweep_model(phi, kernel, a, bj, bc):
    return a * np.cos(phi) + kernel * np.square(bj * np.cos(phi) + bc)


@dataclass(frozen=True)
class FluxSweepFit:
    """Fitted longitudinal and transversal amplitudes (Hz)."""

    a_zz_hz: float
    b_xx_junction_hz: float
    b_xx_capacitive_hz: float
    rms_residual_hz: float

    def to_dict(self) -> dict:
        return {
            "a_zz_hz": self.a_zz_hz,
            "b_xx_junction_hz": self.b_xx_junction_hz,
            "b_xx_capacitive_hz": self.b_xx_capacitive_hz,
            "rms_residual_hz": self.rms_residual_hz,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class FluxSweepRegressor(RegressorMixin, BaseEstimator):
    """Fit ``shift(phi) = A cos(phi) + chi_xx(phi; B_j, B_c)`` to a flux sweep.

    The transversal kernel uses the detuning and anharmonicity of ``circuit``,
    so only the three amplitudes are free.  The sign ambiguity
    ``(B_j, B_c) -> (-B_j, -B_c)`` is removed by taking ``B_j >= 0``.

    Parameters
    ----------
    circuit : CircuitParams
        Supplies frequencies and anharmonicity for the transversal kernel.
    tol : float
        Relative tolerance of the simplex refinement.
    max_iter : int
        Iteration budget of the simplex refinement.
    """

    def __init__(self, circuit: CircuitParams | None = None, tol: float = 1e-10, max_iter: int = 20000):
        self.circuit = circuit
        self.tol = tol
        self.max_iter = max_iter

    def _kernel(self, phi):
        return _xx_kernel(self.circuit, phi)

    def fit(self, X, y):
        if self.circuit is None:
            raise ParameterDomainError("FluxSweepRegressor needs circuit parameters")
        phi = normalize_flux(np.asarray(X, dtype=float).ravel())
        phi = np.atleast_1d(phi)
        y = np.asarray(y, dtype=float).ravel()
        if phi.size != y.size:
            raise ParameterDomainError("phi and shift must have the same length")
        if phi.size < 4:
            raise FitRankError("need at least 4 flux points")
        if np.ptp(phi) <= math.pi:
            raise FitRankError("flux points must span more than half a period")
        kern = self._kernel(phi)
        c = np.cos(phi)
        design = np.column_stack([c, kern * c * c, 2.0 * kern * c, kern])
        col = np.linalg.norm(design, axis=0)
        if np.any(col == 0) or np.linalg.matrix_rank(design / col) < 4:
            raise FitRankError("flux sweep does not determine all amplitudes")
        scale = max(float(np.max(np.abs(y))), 1.0)

        # with (B_j, B_c) = r (cos t, sin t) the model is linear in (A, r^2);
        # a dense scan over t locates the global basin
        thetas = np.linspace(-0.5 * math.pi, 0.5 * math.pi, 1441)
        q = kern * np.square(np.cos(thetas)[:, None] * c + np.sin(thetas)[:, None])
        cc, cy = c @ c, c @ y
        qc, qq, qy = q @ c, np.einsum("ij,ij->i", q, q), q @ y
        det = cc * qq - qc * qc
        ok = det > 1e-12 * cc * qq
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(ok, (cc * qy - qc * cy) / det, 0.0)
        r2 = np.maximum(r2, 0.0)
        a = (cy - r2 * qc) / cc
        sse = np.einsum("ij,ij->i", a[:, None] * c + r2[:, None] * q - y, a[:, None] * c + r2[:, None] * q - y)
        k = int(np.argmin(sse))
        r0 = math.sqrt(r2[k])
        x0 = np.array([a[k], r0 * math.cos(thetas[k]), r0 * math.sin(thetas[k])]) / scale

        def cost(p):
            r = _sweep_model(phi, kern, *(p * scale)) - y
            return float(np.mean(r * r)) / (scale * scale)

        best = x0
        if cost(x0) > 0.0:
            res = minimize(
                cost, x0, method="Nelder-Mead",
                options={"xatol": self.tol, "fatol": self.tol * cost(x0), "maxiter": self.max_iter},
            )
            if not res.success and res.fun > cost(x0):
                raise IterationLimitError(f"flux-sweep refinement did not converge: {res.message}")
            if res.fun < cost(x0):
                best = res.x
        a, bj, bc = best * scale
        if bj < 0:
            bj, bc = -bj, -bc
        self.a_zz_ = float(a)
        self.b_xx_junction_ = float(bj) + 0.0
        self.b_xx_capacitive_ = float(bc) + 0.0
        resid = _sweep_model(phi, kern, a, bj, bc) - y
        self.rms_residual_ = float(np.sqrt(np.mean(resid * resid)))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "a_zz_")
        phi = np.atleast_1d(normalize_flux(np.asarray(X, dtype=float).ravel()))
        return _sweep_model(phi, self._kernel(phi), self.a_zz_, self.b_xx_junction_, self.b_xx_capacitive_)

    def components(self, X):
        """Return the longitudinal and transversal parts at ``X``."""
        check_is_fitted(self, "a_zz_")
        phi = np.atleast_1d(normalize_flux(np.asarray(X, dtype=float).ravel()))
        zz = self.a_zz_ * np.cos(phi)
        return zz, self.predict(phi) - zz

    def longitudinal_fraction(self, phi_ext: float = 0.0) -> float:
        zz, xx = self.components([phi_ext])
        return float(abs(zz[0]) / abs(zz[0] + xx[0]))

    def result(self) -> FluxSweepFit:
        check_is_fitted(self, "a_zz_")
        return FluxSweepFit(self.a_zz_, self.b_xx_junction_, self.b_xx_capacitive_, self.rms_residual_)


def fit_flux_sweep(data, circuit: CircuitParams) -> FluxSweepFit:
    """Fit a sequence of ``(phi_ext, shift_hz)`` pairs."""
    arr = np.asarray(list(data), dtype=float).reshape(-1, 2) if len(data) else np.empty((0, 2))
    return FluxSweepRegressor(circuit).fit(arr[:, 0], arr[:, 1]).result()


def synthesize_sweep(circuit: CircuitParams, phis, a_zz_hz, b_xx_junction_hz, b_xx_capacitive_hz):
    """Noise-free model shifts at ``phis`` for given amplitudes."""
    phis = np.asarray(phis, dtype=float)
    return _sweep_model(phis, _xx_kernel(circuit, phis), a_zz_hz, b_xx_junction_hz, b_xx_capacitive_hz)


def read_sweep_csv(path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"phi_ext", "shift_hz"} <= set(reader.fieldnames):
            raise ParameterDomainError("flux-sweep CSV needs columns phi_ext,shift_hz")
        return [(float(r["phi_ext"]), float(r["shift_hz"])) for r in reader]


def write_sweep_csv(fh, phis, shifts):
    """Write rows to an open text handle; floats use ``repr`` so they round-trip."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["phi_ext", "shift_hz"])
    for p, s in zip(phis, shifts):
        w.writerow([repr(float(p)), repr(float(s))])
