import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eocavity.core import CONST, angular
from eocavity.optical import device_stack
from eocavity.transduction import (
    NmsParams,
    NoBracketError,
    TransductionParams,
    cooperativity,
    efficiency_spectrum,
    locked_cavity,
    mode_triplet,
    nms_modes,
    nms_spectrum,
    nms_splitting,
    peak_efficiency,
    pump_occupation,
    sweep_triple_resonance,
    tune_triple_resonance,
)

MEASURED = dict(
    N_p=6.5e10, g0=1.5, kappa_o=4.1e6, kappa_o_ext=0.683 * 4.1e6, kappa_m=8.54e6,
    kappa_m_ext=0.162 * 8.54e6, f_m=9.302e9, delta_op=9.302e9,
)


def test_cooperativity_example():
    assert cooperativity(6.5e10, 1.5, 4.1e6, 8.54e6) == pytest.approx(0.0167, abs=1e-4)


def test_peak_efficiency_example():
    C = cooperativity(6.5e10, 1.5, 4.1e6, 8.54e6)
    assert 0.005 <= peak_efficiency(C, 0.683, 0.162) <= 0.010


def test_spectrum_peak_identity():
    p = TransductionParams(**MEASURED)
    eta = efficiency_spectrum(p, [p.f_m])[0]
    assert eta == pytest.approx(p.eta_peak, rel=1e-12)
    grid = np.linspace(p.f_m - 100e6, p.f_m + 100e6, 10_000)
    assert np.all(efficiency_spectrum(p, grid) <= p.eta_peak * (1 + 1e-12))


def test_weak_coupling_is_product_of_lorentzians():
    p = TransductionParams(**{**MEASURED, "N_p": 1e2, "delta_op": 9.3e9})
    f = np.linspace(9.28e9, 9.32e9, 501)
    lor_o = 1 / (1 + (2 * (f - p.delta_op) / p.kappa_o) ** 2)
    lor_m = 1 / (1 + (2 * (f - p.f_m) / p.kappa_m) ** 2)
    expected = 4 * p.C * (p.kappa_o_ext / p.kappa_o) * (p.kappa_m_ext / p.kappa_m) * lor_o * lor_m
    assert np.allclose(efficiency_spectrum(p, f), expected, rtol=1e-6, atol=0)


def test_empty_grid_and_bad_rates():
    p = TransductionParams(**MEASURED)
    with pytest.raises(ValueError):
        efficiency_spectrum(p, [])
    with pytest.raises(ValueError):
        TransductionParams(**{**MEASURED, "kappa_o_ext": 5e6})
    with pytest.raises(ValueError):
        TransductionParams(**{**MEASURED, "kappa_m": 0.0})


@settings(max_examples=50, deadline=None)
@given(
    C=st.floats(1e-4, 10.0),
    ko=st.floats(1e5, 1e8),
    km=st.floats(1e5, 1e8),
    x=st.floats(0, 1e8),
)
def test_resonant_lineshape_is_symmetric(C, ko, km, x):
    N_p = C * ko * km / 4
    p = TransductionParams(N_p, 1.0, ko, ko / 2, km, km / 2, 9e9, 9e9)
    lo, hi = efficiency_spectrum(p, [9e9 - x, 9e9 + x])
    assert lo == pytest.approx(hi, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(C=st.floats(0, 1e3))
def test_peak_efficiency_maximal_at_unit_cooperativity(C):
    assert peak_efficiency(C, 1.0, 1.0) <= peak_efficiency(1.0, 1.0, 1.0) == 1.0


def test_pump_occupation_examples(device):
    n = pump_occupation(device.pump_power, device.mode_match, 4.1e6, 2.8e6, device.laser_freq)
    assert 6.5e10 / 2 <= n <= 2 * 6.5e10
    assert pump_occupation(0.0, 1.0, 4.1e6, 2.8e6, 1.9e14) == 0.0
    half = pump_occupation(1e-3, 1.0, 4.1e6, 2.8e6, 1.9e14, detuning=2.05e6)
    assert half == pytest.approx(pump_occupation(1e-3, 1.0, 4.1e6, 2.8e6, 1.9e14) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        pump_occupation(-1.0, 1.0, 4.1e6, 2.8e6, 1.9e14)


def test_pump_occupation_oracle():
    # input-output theory written out with angular rates
    P, ke, k, f = 2e-3, angular(2.8e6), angular(4.1e6), 1.934e14
    expected = 4 * ke * P / (CONST.hbar * 2 * math.pi * f * k * k)
    assert pump_occupation(P, 1.0, 4.1e6, 2.8e6, f) == pytest.approx(expected, rel=1e-14)


def test_nms_example():
    g0 = 103e6 / (2 * math.sqrt(1.3e15))
    assert nms_splitting(NmsParams(1.3e15, g0, 4.1e6)) == pytest.approx(103e6, rel=1e-12)
    freqs, weights = nms_modes(NmsParams(1.3e15, g0, 4.1e6))
    assert freqs[1] - freqs[0] == pytest.approx(103e6, rel=1e-12)
    assert weights == pytest.approx([0.5, 0.5], rel=1e-12)


def test_nms_without_drive_is_bare_resonance():
    x = np.linspace(-50e6, 50e6, 1001)
    spec = nms_spectrum(NmsParams(0.0, 1.5, 4.1e6), x)
    assert np.allclose(spec, 1 / (1 + (2 * x / 4.1e6) ** 2), rtol=1e-12, atol=0)


def test_nms_large_detuning_limit():
    p = NmsParams(1.3e15, 1.43, 4.1e6, delta=10e9)
    assert nms_splitting(p) == pytest.approx(10e9, rel=1e-3)
    freqs, weights = nms_modes(p)
    assert weights[0] > 0.999
    assert abs(freqs[0]) < 1e-3 * p.delta
    with pytest.raises(ValueError):
        NmsParams(-1.0, 1.0, 1e6)


@settings(max_examples=40, deadline=None)
@given(n_m=st.floats(0, 1e16), delta=st.floats(-1e9, 1e9))
def test_nms_weights_sum_to_one(n_m, delta):
    p = NmsParams(n_m, 1.43, 4.1e6, delta)
    freqs, weights = nms_modes(p)
    assert weights.sum() == pytest.approx(1.0, rel=1e-12)
    assert freqs[1] - freqs[0] == pytest.approx(nms_splitting(p), rel=1e-9, abs=1e-3)


def test_tuned_gap_is_a_few_millimetres(tuned):
    assert 2e-3 < tuned.l_air < 15e-3
    assert abs(tuned.mismatch) < 1e3


def test_tuned_gap_reinserts(device, tuned):
    stack = device_stack(device, tuned.l_air)
    _, pump, upper = mode_triplet(stack, tuned.pump_index, device.input_side)
    assert abs((upper.freq - pump.freq) - tuned.target_freq) < 1e3
    # the pump stays within a small fraction of an FSR of the laser
    assert abs(pump.freq - device.laser_freq) < 0.1 * tuned.target_freq


def test_tuning_without_bracket(device):
    with pytest.raises(NoBracketError):
        tune_triple_resonance(device, target_freq=0.0)
    with pytest.raises(NoBracketError):
        tune_triple_resonance(device, target_freq=40e9)


def test_locked_cavity_sits_on_laser(device):
    cav = locked_cavity(device, 7e-3)
    assert cav.pump.freq == pytest.approx(device.laser_freq, rel=1e-13)
    assert cav.lower.freq < cav.pump.freq < cav.upper.freq


def test_sweep_independent_of_workers(device):
    gaps = np.linspace(6.5e-3, 8.5e-3, 7)
    drive = np.linspace(5e9, 10.5e9, 301)
    serial = sweep_triple_resonance(device, "gap", gaps, drive, workers=1)
    parallel = sweep_triple_resonance(device, "gap", gaps, drive, workers=4)
    assert np.array_equal(serial.magnitude, parallel.magnitude)
    assert serial.magnitude.shape == (7, 301)
    assert not serial.flags.any()


def test_sweep_without_microwave_modes_is_empty(device):
    res = sweep_triple_resonance(device, "gap", [7e-3], np.linspace(5e9, 10e9, 11), mw_modes=[])
    assert np.all(res.magnitude == 0.0)


def test_wavelength_sweep(device, tuned):
    lam = CONST.c / device.laser_freq
    res = sweep_triple_resonance(
        device, "wavelength", [lam - 1e-10, lam, lam + 1e-10], np.linspace(9e9, 10e9, 51),
        l_air=tuned.l_air,
    )
    assert res.axis1_name == "wavelength"
    assert np.all(np.isfinite(res.magnitude))
    with pytest.raises(ValueError):
        sweep_triple_resonance(device, "wavelength", [lam], [9e9])
    with pytest.raises(ValueError):
        sweep_triple_resonance(device, "angle", [1.0], [9e9])
