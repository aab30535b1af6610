import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from eocavity.core import Material, SlabGeometry, default_ln_material
from eocavity.microwave import (
    MicrowaveModeError,
    axial_profile,
    axial_wavenumber,
    build_mode,
    default_beam_offset,
    energy_mode_volume,
    linewidths,
    mode_frequency,
    mode_table,
    mode_volume,
)

LN = default_ln_material()
SLAB = SlabGeometry(4e-3, 12e-3, 8e-3)
MODELS = ("dwm", "pmc")


def ansatz_volume_by_quadrature(geom, mat, idx, kx, n=161):
    """epsilon-weighted |E|^2 of the separable ansatz, integrated on a grid."""
    l, m, p = idx
    x = np.linspace(0, geom.len_x, n)
    y = np.linspace(0, geom.len_y, n)
    z = np.linspace(0, geom.len_z, n)
    ky, kz = m * math.pi / geom.len_y, p * math.pi / geom.len_z
    X = np.cos(kx * (x - geom.len_x / 2) - (l - 1) * math.pi / 2)
    sy, cy = np.sin(ky * y), np.cos(ky * y)
    sz, cz = np.sin(kz * z), np.cos(kz * z)
    amp_y = mat.eps_z * kz / (mat.eps_y * ky)
    w = (
        mat.eps_z * np.einsum("i,j,k->ijk", X**2, sy**2, sz**2)
        + mat.eps_y * amp_y**2 * np.einsum("i,j,k->ijk", X**2, cy**2, cz**2)
    )
    total = np.trapezoid(np.trapezoid(np.trapezoid(w, z, axis=2), y, axis=1), x)
    return total / w.max()


def test_tm131_frequency_band():
    f = mode_frequency(SLAB, LN, (1, 3, 1))
    assert abs(f / 9.44e9 - 1) <= 0.20


def test_tm111_frequency_band():
    f111 = mode_frequency(SLAB, LN, (1, 1, 1))
    assert abs(f111 / 6e9 - 1) <= 0.25
    assert f111 < mode_frequency(SLAB, LN, (1, 3, 1))


def test_tm131_mode_volume():
    v = mode_volume(SLAB, LN, (1, 3, 1))
    assert 50e-9 <= v <= 200e-9


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("idx", [(1, 1, 1), (1, 3, 1), (2, 2, 1), (1, 2, 3)])
def test_mode_volume_matches_quadrature(model, idx):
    kx = axial_wavenumber(SLAB, LN, idx, model)
    expected = ansatz_volume_by_quadrature(SLAB, LN, idx, kx)
    assert mode_volume(SLAB, LN, idx, model) == pytest.approx(expected, rel=2e-3)


@pytest.mark.parametrize("model", MODELS)
def test_mode_volume_decreases_with_m(model):
    vols = [mode_volume(SLAB, LN, (1, m, 1), model) for m in range(1, 6)]
    assert all(a > b for a, b in zip(vols, vols[1:]))


def test_uniform_field_fills_the_slab():
    nx, ny, nz = 5, 7, 9
    spacing = (4e-3 / (nx - 1), 12e-3 / (ny - 1), 8e-3 / (nz - 1))
    v = energy_mode_volume(np.ones((nx, ny, nz)), spacing)
    assert v * 1e9 == pytest.approx(384.0, rel=1e-12)
    with pytest.raises(ValueError):
        energy_mode_volume(np.zeros((2, 2, 2)), spacing)


@pytest.mark.parametrize("model", MODELS)
def test_mode_volume_below_geometric(model):
    for idx in [(1, 1, 1), (1, 3, 1), (2, 1, 1), (3, 2, 2)]:
        assert mode_volume(SLAB, LN, idx, model) < SLAB.volume


def test_isotropic_cube_permutation_symmetry():
    cube = SlabGeometry(5e-3, 5e-3, 5e-3)
    iso = Material(2.0, 10.0, 10.0, 10.0, 1e-12)
    f = mode_frequency(cube, iso, (1, 2, 3), "pmc")
    for perm in [(1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]:
        assert mode_frequency(cube, iso, perm, "pmc") == pytest.approx(f, rel=1e-14)


def test_dwm_axial_wavenumber_solves_slab_relation():
    eps = LN.eps_z
    for idx in [(1, 1, 1), (1, 3, 1), (2, 3, 1)]:
        l, m, p = idx
        kx = axial_wavenumber(SLAB, LN, idx)
        kt2 = (m * math.pi / SLAB.len_y) ** 2 + (p * math.pi / SLAB.len_z) ** 2
        gamma = math.sqrt(((eps - 1) * kt2 - kx * kx) / eps)
        assert (l - 1) * math.pi < kx * SLAB.len_x < l * math.pi
        # even / odd slab-waveguide conditions
        lhs = kx * math.tan(kx * SLAB.len_x / 2) if l % 2 else -kx / math.tan(kx * SLAB.len_x / 2)
        assert lhs == pytest.approx(gamma, rel=1e-9)


def test_dwm_lies_below_pmc():
    for idx in [(1, 1, 1), (1, 3, 1), (2, 1, 1)]:
        assert mode_frequency(SLAB, LN, idx, "dwm") < mode_frequency(SLAB, LN, idx, "pmc")


def test_eps_eff_override():
    f25 = mode_frequency(SLAB, LN, (1, 3, 1), eps_eff=25.0)
    assert f25 == mode_frequency(SLAB, LN, (1, 3, 1))
    assert mode_frequency(SLAB, LN, (1, 3, 1), "pmc", eps_eff=36.0) == pytest.approx(
        mode_frequency(SLAB, LN, (1, 3, 1), "pmc") * 5 / 6, rel=1e-14
    )


@pytest.mark.parametrize("model", MODELS)
@settings(max_examples=25, deadline=None)
@given(
    l=st.integers(1, 3),
    m=st.integers(1, 4),
    p=st.integers(1, 4),
    axis=st.integers(0, 2),
)
def test_frequency_increases_in_each_index(model, l, m, p, axis):
    idx = [l, m, p]
    up = list(idx)
    up[axis] += 1
    try:
        f_up = mode_frequency(SLAB, LN, tuple(up), model)
    except MicrowaveModeError:
        assume(False)  # not guided along x in the dielectric-waveguide model
    assert f_up > mode_frequency(SLAB, LN, tuple(idx), model)


@pytest.mark.parametrize("model", MODELS)
@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.1, 10.0), l=st.integers(1, 2), m=st.integers(1, 3), p=st.integers(1, 3))
def test_frequency_scales_inversely_with_size(model, s, l, m, p):
    f = mode_frequency(SLAB, LN, (l, m, p), model)
    assert mode_frequency(SLAB.scaled(s), LN, (l, m, p), model) == pytest.approx(f / s, rel=1e-12)


def test_indices_must_be_positive():
    with pytest.raises(MicrowaveModeError):
        mode_frequency(SLAB, LN, (0, 1, 1))
    with pytest.raises(ValueError):
        mode_frequency(SLAB, LN, (1, 1, 1), "pec")


def test_axial_profile_central_antinode_pmc():
    x, psi = axial_profile(SLAB, (1, 3, 1), (6e-3, 4e-3), wall_model="pmc")
    psi = psi * np.sign(psi[len(x) // 2])  # global sign is arbitrary
    assert np.max(np.abs(psi - np.sin(np.pi * x / SLAB.len_x))) < 1e-12
    assert np.trapezoid(psi**2, x) == pytest.approx(SLAB.len_x / 2, abs=1e-9)


def test_axial_profile_central_antinode_dwm():
    x, psi = axial_profile(SLAB, (1, 3, 1), material=LN)
    psi = psi * np.sign(psi[len(x) // 2])
    assert np.max(np.abs(psi)) == pytest.approx(1.0, abs=1e-12)
    assert psi[len(x) // 2] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(psi, psi[::-1])
    assert 0 < psi[0] < 1


def test_axial_profile_on_a_node_vanishes():
    # y = 4 mm is a node of sin(3 pi y / 12 mm)
    _, psi = axial_profile(SLAB, (1, 3, 1), (4e-3, 4e-3), material=LN)
    assert np.all(psi == 0.0)


def test_axial_profile_peak_over_mode_is_one():
    peak = 0.0
    for y0 in np.linspace(0, 12e-3, 25):
        for z0 in np.linspace(0, 8e-3, 17):
            _, psi = axial_profile(SLAB, (1, 3, 1), (y0, z0), material=LN)
            peak = max(peak, np.max(np.abs(psi)))
    assert peak == pytest.approx(1.0, abs=1e-12)


def test_axial_profile_rejects_beam_outside():
    with pytest.raises(MicrowaveModeError):
        axial_profile(SLAB, (1, 3, 1), (13e-3, 4e-3), material=LN)
    with pytest.raises(ValueError):
        axial_profile(SLAB, (1, 3, 1))


def test_default_beam_offset_is_central_antinode():
    assert default_beam_offset(SLAB, (1, 3, 1)) == pytest.approx((6e-3, 4e-3))
    assert default_beam_offset(SLAB, (1, 2, 1)) == pytest.approx((3e-3, 4e-3))


def test_linewidth_examples():
    kappa, kappa_int = linewidths(9.302e9, 1300, 0.0)
    assert kappa_int == pytest.approx(7.155e6, rel=1e-3)
    assert kappa == kappa_int
    kappa_ext = 8.54e6 - kappa_int
    assert kappa_ext == pytest.approx(1.38e6, rel=0.01)
    assert linewidths(9.302e9, math.inf, 1.38e6)[0] == 1.38e6
    with pytest.raises(ValueError):
        linewidths(9e9, 0, 1e6)
    with pytest.raises(ValueError):
        linewidths(9e9, 1300, -1.0)


def test_built_mode_invariants():
    mode = build_mode(SLAB, LN, (1, 3, 1), 1300, 1.38e6)
    assert np.max(np.abs(mode.psi_axial)) == pytest.approx(1.0)
    assert mode.V_m <= SLAB.volume
    assert 0 <= mode.kappa_m_ext <= mode.kappa_m
    assert mode.kappa_m == pytest.approx(mode.freq / 1300 + 1.38e6)
    assert mode.kappa_m_int == pytest.approx(mode.freq / 1300)
    assert np.allclose(mode.axial(mode.x), mode.psi_axial)
    forced = build_mode(SLAB, LN, (1, 3, 1), 1300, 1.38e6, freq_override=9.302e9)
    assert forced.freq == 9.302e9
    assert forced.V_m == mode.V_m


def test_mode_table_sorted():
    rows = mode_table(SLAB, LN, (range(1, 3), range(1, 4), range(1, 3)), 1300, 1.38e6)
    freqs = [r[3] for r in rows]
    assert freqs == sorted(freqs)
    assert (rows[0][0], rows[0][1], rows[0][2]) == (1, 1, 1)
    assert len(rows[0]) == 6
