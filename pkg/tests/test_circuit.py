import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcreadout.circuit import (
    CircuitParams,
    CouplingCalibration,
    FluxSweepRegressor,
    calibrate_coupling,
    coupling_coefficients,
    dispersive_components,
    dispersive_shift,
    fit_flux_sweep,
    longitudinal_fraction,
    normalize_flux,
    qubit_frequency,
    read_sweep_csv,
    resonator_frequency,
    synthesize_sweep,
    transversal_shift,
    write_sweep_csv,
)
from lcreadout.errors import FitRankError, ParameterDomainError, SingularityError
from lcreadout.lindblad import exact_transversal_shift

flux = st.floats(-20.0, 20.0, allow_nan=False)


@pytest.fixture
def circuit(device):
    return device.circuit


@pytest.fixture
def calib(device):
    return device.calibration


def base_kwargs():
    return dict(
        ejc_hz=2e9, anharmonicity_hz=-290e6, f_qubit_max_hz=5.2e9, f_qubit_min_hz=4.3e9,
        f_res_center_hz=6.66e9, f_res_tuning_hz=50e6, c_parasitic_f=4e-15, c_planar_f=2.9e-15,
        t1_s=15e-6, t2star_s=5.6e-6, kappa_hz=5e6,
    )


@pytest.mark.parametrize(
    "key,value",
    [("ejc_hz", 0.0), ("t1_s", -1.0), ("t2star_s", 0.0), ("t2star_s", 31e-6),
     ("anharmonicity_hz", 10e6), ("f_qubit_min_hz", 5.3e9), ("kappa_hz", 0.0)],
)
def test_params_invariants(key, value):
    kw = base_kwargs()
    kw[key] = value
    with pytest.raises(ParameterDomainError):
        CircuitParams(**kw)


def test_half_flux_point_leaves_only_capacitive_term(circuit, calib):
    k = coupling_coefficients(circuit, math.pi / 2, calib)
    for name in ("gzz_hz", "gxx_junction_hz", "dq_hz", "dr_hz", "eta_hz"):
        assert abs(getattr(k, name)) < 1e-9 * circuit.ejc_hz
    assert k.gxx_capacitive_hz != 0.0


def test_gzz_flips_sign_between_zero_and_pi(circuit, calib):
    k0 = coupling_coefficients(circuit, 0.0, calib)
    kpi = coupling_coefficients(circuit, math.pi, calib)
    assert kpi.gzz_hz == -k0.gzz_hz


def test_capacitive_opposes_junction(circuit, calib):
    k0 = coupling_coefficients(circuit, 0.0, calib)
    assert np.sign(k0.gxx_capacitive_hz) == -np.sign(k0.gxx_junction_hz)


@settings(max_examples=200, deadline=None)
@given(flux)
def test_junction_terms_scale_as_cosine(phi):
    circuit = CircuitParams(**base_kwargs())
    calib = CouplingCalibration(-1.125e-3, 0.0538, 5e-5, -60e6 / 6.9e-15)
    k0 = coupling_coefficients(circuit, 0.0, calib)
    k = coupling_coefficients(circuit, phi, calib)
    c = math.cos(normalize_flux(phi))
    for name in ("gzz_hz", "gxx_junction_hz", "dq_hz", "dr_hz", "eta_hz"):
        assert getattr(k, name) == getattr(k0, name) * c
    assert k.gxx_capacitive_hz == k0.gxx_capacitive_hz


@settings(max_examples=200, deadline=None)
@given(flux, st.integers(-3, 3))
def test_even_and_periodic(phi, m):
    circuit = CircuitParams(**base_kwargs())
    calib = CouplingCalibration(-1.125e-3, 0.0538, 5e-5, -60e6 / 6.9e-15)
    a = coupling_coefficients(circuit, phi, calib)
    b = coupling_coefficients(circuit, -phi + 2 * math.pi * m, calib)
    for name in ("gzz_hz", "gxx_junction_hz", "dq_hz", "dr_hz", "eta_hz", "gxx_capacitive_hz"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-12, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(flux)
def test_xx_part_never_positive(phi):
    circuit = CircuitParams(**base_kwargs())
    calib = CouplingCalibration(-1.125e-3, 0.0538, 5e-5, -60e6 / 6.9e-15)
    _, xx = dispersive_components(circuit, phi, calib)
    assert xx <= 0.0


def test_frequency_endpoints(circuit):
    assert qubit_frequency(circuit, 0.0) == pytest.approx(5.2e9)
    assert qubit_frequency(circuit, math.pi) == pytest.approx(4.3e9)
    assert qubit_frequency(circuit, math.pi / 2) == pytest.approx(4.75e9)
    f0, fpi = resonator_frequency(circuit, 0.0), resonator_frequency(circuit, math.pi)
    assert f0 - fpi == pytest.approx(50e6)
    assert 0.5 * (f0 + fpi) == pytest.approx(6.66e9)


def test_normalize_flux_range():
    phis = normalize_flux(np.linspace(-30, 30, 1001))
    assert np.all(phis >= -math.pi) and np.all(phis <= math.pi)


def test_longitudinal_fraction_at_sweet_spot(circuit, calib):
    assert longitudinal_fraction(circuit, 0.0, calib) == pytest.approx(0.90, abs=1e-12)


def test_zz_sign_change_and_downward_pull(circuit, calib):
    zz0, xx0 = dispersive_components(circuit, 0.0, calib)
    zzpi, xxpi = dispersive_components(circuit, math.pi, calib)
    assert zz0 < 0 < zzpi
    assert xx0 < 0 and xxpi < 0


def test_pure_zz_when_transversal_vanishes(circuit):
    calib = CouplingCalibration(1e-3, 0.0, 0.0, 0.0)
    zz, xx = dispersive_components(circuit, 0.3, calib)
    assert xx == 0.0
    assert dispersive_shift(circuit, 0.3, calib) == zz


def test_synthetic_shift_and_exact_diagonalization(circuit):
    # chi_zz(0) = +2 MHz and chi_xx(0) = -0.2 MHz
    k0 = transversal_shift(1.0, 5.2e9 - 6.685e9, -290e6)
    g = math.sqrt(-0.2e6 / k0)
    calib = CouplingCalibration(1e6 / circuit.ejc_hz, g / circuit.ejc_hz, 0.0, 0.0)
    assert dispersive_shift(circuit, 0.0, calib) == pytest.approx(1.8e6, rel=1e-12)
    exact = exact_transversal_shift(5.2e9, 6.685e9, -290e6, g)
    assert exact == pytest.approx(-0.2e6, rel=5e-3)


def test_singular_detuning():
    with pytest.raises(SingularityError):
        transversal_shift(10e6, 0.0, -290e6)
    with pytest.raises(SingularityError):
        transversal_shift(10e6, 290e6, -290e6)


def test_calibration_solver_hits_targets(circuit):
    calib = calibrate_coupling(circuit, -5e6, 0.9, 0.1e6, -60e6)
    zz, xx = dispersive_components(circuit, 0.0, calib)
    assert zz == pytest.approx(-4.5e6)
    assert xx == pytest.approx(-0.5e6)
    k = coupling_coefficients(circuit, 0.0, calib)
    assert abs(k.gxx_junction_hz) > abs(k.gxx_capacitive_hz)


def test_bundled_calibration_matches_solver(circuit, calib):
    solved = calibrate_coupling(circuit, -5e6, 0.9, 0.1e6, -60e6)
    for name in ("zz_per_ejc", "xx_junction_per_ejc", "kerr_per_ejc", "xx_capacitive_hz_per_f"):
        assert getattr(calib, name) == pytest.approx(getattr(solved, name), rel=1e-12)


@pytest.mark.parametrize("truth", [(-4.5e6, 107.7e6, -60e6), (3e6, 40e6, 25e6), (1e6, 80e6, -120e6)])
def test_noiseless_round_trip(circuit, truth):
    phis = np.linspace(-math.pi, math.pi, 41)
    y = synthesize_sweep(circuit, phis, *truth)
    fit = fit_flux_sweep(list(zip(phis, y)), circuit)
    for got, want in zip((fit.a_zz_hz, fit.b_xx_junction_hz, fit.b_xx_capacitive_hz), truth):
        assert got == pytest.approx(want, rel=1e-6)


def test_zero_data(circuit):
    phis = np.linspace(-math.pi, math.pi, 21)
    fit = fit_flux_sweep(list(zip(phis, np.zeros_like(phis))), circuit)
    assert fit.a_zz_hz == 0 and fit.b_xx_junction_hz == 0 and fit.b_xx_capacitive_hz == 0
    assert fit.rms_residual_hz == 0


def test_noisy_fit_recovers_longitudinal_amplitude(circuit):
    phis = np.linspace(-math.pi, math.pi, 41)
    truth = (-4.5e6, 107.7e6, -60e6)
    y = synthesize_sweep(circuit, phis, *truth)
    rng = np.random.default_rng(11)
    reg = FluxSweepRegressor(circuit)
    for _ in range(100):
        reg.fit(phis, y + 0.01 * np.abs(y) * rng.standard_normal(phis.size))
        assert reg.a_zz_ == pytest.approx(truth[0], rel=0.05)


@pytest.mark.parametrize("phis", [[0.0], [0.0, 0.5, 1.0], [0.0, 0.5, 1.0, 1.5, 2.0]])
def test_underdetermined(circuit, phis):
    with pytest.raises(FitRankError):
        fit_flux_sweep([(p, 1e6) for p in phis], circuit)


def test_regressor_api(circuit):
    reg = FluxSweepRegressor(circuit)
    assert reg.get_params()["tol"] == 1e-10
    phis = np.linspace(-math.pi, math.pi, 17)
    y = synthesize_sweep(circuit, phis, 2e6, 50e6, -30e6)
    assert np.allclose(reg.fit(phis, y).predict(phis), y, rtol=1e-8)
    assert reg.score(phis, y) == pytest.approx(1.0)


def test_csv_round_trip(tmp_path, circuit):
    phis = np.linspace(-math.pi, math.pi, 9)
    y = synthesize_sweep(circuit, phis, 2e6, 50e6, -30e6)
    path = tmp_path / "sweep.csv"
    with open(path, "w", newline="") as fh:
        write_sweep_csv(fh, phis, y)
    rows = read_sweep_csv(path)
    assert [r[0] for r in rows] == list(phis)
    assert [r[1] for r in rows] == list(y)
