"""Semi-analytic modes of a rectangular anisotropic dielectric resonator.

Modes are labelled (l, m, p) by their number of field antinodes along x, y
and z. The field ansatz is separable. The electric field lies in the y-z
plane with Ez dominant at the antinodes:

    Ez = X(x) sin(ky y) sin(kz z)
    Ey = (eps_z kz / (eps_y ky)) X(x) cos(ky y) cos(kz z)

which makes div(eps E) vanish. ky = m pi / Ly and kz = p pi / Lz (magnetic
walls on the y and z faces). Along x two wall models are available:

``"pmc"``
    magnetic walls, X = sin(l pi x / Lx).
``"dwm"``
    dielectric-waveguide model: the field leaks through the x faces and kx
    solves ``kx Lx = (l-1) pi + 2 atan(gamma / kx)``, where gamma is the
    decay rate in the surrounding air. Interior profile is
    ``X = cos(kx (x - Lx/2) - (l-1) pi / 2)``.

The resonance condition is ``(kx^2 + ky^2 + kz^2) = eps * k0^2``, with eps the
permittivity seen by the dominant (z) field component, or ``eps_eff`` when
supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .core import CONST, Material, SlabGeometry

WALL_MODELS = ("dwm", "pmc")


class MicrowaveModeError(ValueError):
    """Requested mode does not exist or its inputs are out of range."""


def _check_indices(indices) -> tuple[int, int, int]:
    l, m, p = (int(i) for i in indices)
    if min(l, m, p) < 1:
        raise MicrowaveModeError(f"mode indices must be >= 1, got {indices}")
    return l, m, p


def _eps(material: Material, eps_eff: float | None) -> float:
    return material.eps_z if eps_eff is None else float(eps_eff)


def _transverse(geometry: SlabGeometry, m: int, p: int) -> tuple[float, float]:
    return m * math.pi / geometry.len_y, p * math.pi / geometry.len_z


def axial_wavenumber(
    geometry: SlabGeometry,
    material: Material,
    indices,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
) -> float:
    """kx [1/m] for the requested wall model."""
    l, m, p = _check_indices(indices)
    a = geometry.len_x
    if wall_model == "pmc":
        return l * math.pi / a
    if wall_model != "dwm":
        raise ValueError(f"wall_model must be one of {WALL_MODELS}, got {wall_model!r}")
    eps = _eps(material, eps_eff)
    ky, kz = _transverse(geometry, m, p)
    kt2 = ky * ky + kz * kz
    kx_cut = math.sqrt((eps - 1.0) * kt2)

    def residual(kx):
        gamma = math.sqrt(max(((eps - 1.0) * kt2 - kx * kx) / eps, 0.0))
        return kx * a - (l - 1) * math.pi - 2.0 * math.atan2(gamma, kx)

    lo = (l - 1) * math.pi / a
    hi = min(l * math.pi / a, kx_cut)
    if hi <= lo:
        raise MicrowaveModeError(f"mode {indices} is not confined along x (eps={eps})")
    lo = max(lo, 1e-12 * hi)
    return brentq(residual, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def mode_frequency(
    geometry: SlabGeometry,
    material: Material,
    indices,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
) -> float:
    """Resonance frequency [Hz] of mode (l, m, p)."""
    l, m, p = _check_indices(indices)
    kx = axial_wavenumber(geometry, material, (l, m, p), wall_model, eps_eff)
    ky, kz = _transverse(geometry, m, p)
    k0 = math.sqrt((kx * kx + ky * ky + kz * kz) / _eps(material, eps_eff))
    return CONST.c * k0 / (2 * math.pi)


def _x_profile(l: int, kx: float, a: float) -> Callable[[np.ndarray], np.ndarray]:
    phase = (l - 1) * math.pi / 2

    def X(x):
        return np.cos(kx * (np.asarray(x, dtype=float) - a / 2) - phase)

    return X


def _yz_ratio(material: Material, ky: float, kz: float) -> float:
    """Peak eps*Ey^2 over peak eps*Ez^2 for the ansatz."""
    return (material.eps_z / material.eps_y) * (kz / ky) ** 2


def mode_volume(
    geometry: SlabGeometry,
    material: Material,
    indices,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
) -> float:
    """Energy mode volume [m^3], integrating over the slab only."""
    l, m, p = _check_indices(indices)
    a = geometry.len_x
    kx = axial_wavenumber(geometry, material, (l, m, p), wall_model, eps_eff)
    ky, kz = _transverse(geometry, m, p)
    # int_0^a X^2 dx in closed form; max |X| on [0, a] is 1 for every branch
    ix = a / 2 + (-1) ** (l - 1) * math.sin(kx * a) / (2 * kx)
    r = _yz_ratio(material, ky, kz)
    return ix * geometry.len_y * geometry.len_z / 4 * (1 + r) / max(1.0, r)


def energy_mode_volume(energy_density: np.ndarray, spacing: tuple[float, float, float]) -> float:
    """V = integral(w) / max(w) for w = eps |E|^2 sampled on a regular grid
    (trapezoid rule)."""
    w = np.asarray(energy_density, dtype=float)
    peak = w.max()
    if peak <= 0:
        raise ValueError("energy density must have a positive maximum")
    total = w
    for axis, h in reversed(list(enumerate(spacing))):
        total = np.trapezoid(total, dx=h, axis=axis)
    return float(total / peak)


def default_beam_offset(geometry: SlabGeometry, indices) -> tuple[float, float]:
    """Transverse antinode of Ez closest to the slab centre."""
    _, m, p = _check_indices(indices)

    def nearest(length, count):
        j = round(count / 2 - 0.5)
        return (j + 0.5) * length / count

    return nearest(geometry.len_y, m), nearest(geometry.len_z, p)


@dataclass(frozen=True)
class MicrowaveMode:
    """A resonator mode sampled along the optical path. Rates in Hz."""

    indices: tuple[int, int, int]
    freq: float
    V_m: float
    Q_int: float
    kappa_m: float
    kappa_m_ext: float
    len_x: float
    kx: float
    transverse_weight: float
    beam_offset: tuple[float, float]
    wall_model: str = "dwm"
    x: np.ndarray = field(default=None, repr=False, compare=False)
    psi_axial: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def kappa_m_int(self) -> float:
        return self.kappa_m - self.kappa_m_ext

    def axial(self, x):
        """Ez along the beam at position(s) x, unit peak over the mode."""
        X = _x_profile(self.indices[0], self.kx, self.len_x)
        return self.transverse_weight * X(x)


def axial_profile(
    geometry: SlabGeometry,
    indices,
    beam_offset: tuple[float, float] | None = None,
    material: Material | None = None,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
    samples: int = 401,
) -> tuple[np.ndarray, np.ndarray]:
    """Ez along the optical path through (y0, z0), normalised so the largest
    |Ez| anywhere in the mode is 1. Returns ``(x, psi)`` over [0, Lx]."""
    weight, kx = _beam_weight(geometry, indices, beam_offset, material, wall_model, eps_eff)
    x = np.linspace(0.0, geometry.len_x, samples)
    return x, weight * _x_profile(int(indices[0]), kx, geometry.len_x)(x)


def _beam_weight(geometry, indices, beam_offset, material, wall_model, eps_eff):
    l, m, p = _check_indices(indices)
    if beam_offset is None:
        beam_offset = default_beam_offset(geometry, indices)
    y0, z0 = beam_offset
    if not (0 <= y0 <= geometry.len_y and 0 <= z0 <= geometry.len_z):
        raise MicrowaveModeError(f"beam offset {beam_offset} lies outside the slab cross-section")
    if material is None:
        if wall_model != "pmc":
            raise ValueError("material is required for the dwm wall model")
        kx = l * math.pi / geometry.len_x
    else:
        kx = axial_wavenumber(geometry, material, indices, wall_model, eps_eff)
    ky, kz = _transverse(geometry, m, p)
    weight = math.sin(ky * y0) * math.sin(kz * z0)
    # sin(k*pi) is ~1e-16, not 0; a beam on a node must couple to nothing
    if abs(weight) < 1e-12:
        weight = 0.0
    return weight, kx


def linewidths(freq: float, Q_int: float, kappa_m_ext: float) -> tuple[float, float]:
    """(kappa_m, kappa_m_int) in Hz."""
    if not Q_int > 0:
        raise ValueError("Q_int must be > 0")
    if kappa_m_ext < 0:
        raise ValueError("kappa_m_ext must be >= 0")
    kappa_int = freq / Q_int
    return kappa_int + kappa_m_ext, kappa_int


def build_mode(
    geometry: SlabGeometry,
    material: Material,
    indices,
    Q_int: float,
    kappa_m_ext: float,
    beam_offset: tuple[float, float] | None = None,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
    freq_override: float | None = None,
    samples: int = 401,
) -> MicrowaveMode:
    """Assemble a :class:`MicrowaveMode` record.

    ``freq_override`` replaces the modelled frequency (e.g. with a measured
    one) without touching the field shape.
    """
    idx = _check_indices(indices)
    if beam_offset is None:
        beam_offset = default_beam_offset(geometry, idx)
    freq = (
        mode_frequency(geometry, material, idx, wall_model, eps_eff)
        if freq_override is None
        else float(freq_override)
    )
    weight, kx = _beam_weight(geometry, idx, beam_offset, material, wall_model, eps_eff)
    x = np.linspace(0.0, geometry.len_x, samples)
    kappa_m, _ = linewidths(freq, Q_int, kappa_m_ext)
    return MicrowaveMode(
        indices=idx,
        freq=freq,
        V_m=mode_volume(geometry, material, idx, wall_model, eps_eff),
        Q_int=float(Q_int),
        kappa_m=kappa_m,
        kappa_m_ext=float(kappa_m_ext),
        len_x=geometry.len_x,
        kx=kx,
        transverse_weight=weight,
        beam_offset=(float(beam_offset[0]), float(beam_offset[1])),
        wall_model=wall_model,
        x=x,
        psi_axial=weight * _x_profile(idx[0], kx, geometry.len_x)(x),
    )


MODE_TABLE_HEADER = ("l", "m", "p", "freq_hz", "V_m_mm3", "kappa_m_hz")


def mode_table(
    geometry: SlabGeometry,
    material: Material,
    index_ranges: tuple[range, range, range],
    Q_int: float,
    kappa_m_ext: float,
    wall_model: str = "dwm",
    eps_eff: float | None = None,
) -> list[tuple]:
    """Rows of (l, m, p, freq_hz, V_m_mm3, kappa_m_hz) sorted by frequency,
    ties broken by indices."""
    rows = []
    for l in index_ranges[0]:
        for m in index_ranges[1]:
            for p in index_ranges[2]:
                try:
                    f = mode_frequency(geometry, material, (l, m, p), wall_model, eps_eff)
                except MicrowaveModeError:
                    continue
                v = mode_volume(geometry, material, (l, m, p), wall_model, eps_eff)
                rows.append((l, m, p, f, v * 1e9, linewidths(f, Q_int, kappa_m_ext)[0]))
    rows.sort(key=lambda r: (r[3], r[:3]))
    return rows
