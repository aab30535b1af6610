"""Single-photon electro-optic coupling rate g0."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .core import CONST, Material, angular, ordinary
from .microwave import MicrowaveMode
from .optical import OpticalMode


@dataclass(frozen=True)
class CouplingInput:
    material: Material
    microwave_mode: MicrowaveMode
    pump_mode: OpticalMode
    output_mode: OpticalMode
    L_LN: float
    L_air: float


@dataclass(frozen=True)
class CouplingResult:
    """g0 in Hz (magnitude), signed overlap integral in m, n*dk*L in rad."""

    g0: float
    overlap_integral: float
    phase_mismatch: float

    def to_dict(self) -> dict:
        return {
            "g0_hz": self.g0,
            "overlap_integral_m": self.overlap_integral,
            "phase_mismatch_rad": self.phase_mismatch,
        }


def _prefactor(material: Material, omega_m, omega_p, omega_o) -> float:
    return (
        material.r33
        * material.n_opt**2
        / math.sqrt(material.eps_z)
        * math.sqrt(CONST.hbar * omega_m * omega_p * omega_o / (8 * CONST.eps0))
    )


def g0_general(
    material: Material,
    psi_m: np.ndarray,
    psi_p: np.ndarray,
    psi_o: np.ndarray,
    spacing: tuple[float, float, float],
    freqs: tuple[float, float, float],
    volumes: tuple[float, float, float],
) -> float:
    """g0 [Hz] from the full three-mode overlap on a regular 3-D grid.

    ``freqs`` and ``volumes`` are ordered (microwave, pump, output). Mode
    functions are expected with unit peak and zero outside the crystal. The
    nonlinear susceptibility is taken as r33 with the same n^2/sqrt(eps_z)
    dressing as the 1-D form, so the two routes share one constant.
    """
    psi_m, psi_p, psi_o = (np.asarray(a, dtype=float) for a in (psi_m, psi_p, psi_o))
    if not (psi_m.shape == psi_p.shape == psi_o.shape) or psi_m.ndim != 3:
        raise ValueError(
            f"mode grids must be congruent 3-D arrays, got {psi_m.shape}, {psi_p.shape}, {psi_o.shape}"
        )
    if min(volumes) <= 0:
        raise ValueError(f"mode volumes must be > 0, got {volumes}")
    integrand = psi_m * psi_p * psi_o
    for axis in (2, 1, 0):
        integrand = np.trapezoid(integrand, dx=spacing[axis], axis=axis)
    wm, wp, wo = (angular(f) for f in freqs)
    vm, vp, vo = volumes
    g = _prefactor(material, wm, wp, wo) / math.sqrt(vm * vp * vo) * float(integrand)
    return abs(ordinary(g))


def overlap_1d(psi_m, L_LN: float, q: float) -> float:
    """int_0^L psi_m(x) * cos(q x) / 2 dx by adaptive quadrature."""
    val, _ = quad(
        lambda x: psi_m(x) * 0.5 * math.cos(q * x),
        0.0,
        L_LN,
        epsabs=1e-14 * L_LN,
        epsrel=1e-10,
        limit=200,
    )
    return float(val)


def g0_quasi_1d(inp: CouplingInput) -> CouplingResult:
    """g0 for a beam crossing the crystal from the mirror face (x = 0)."""
    mat = inp.material
    wm = angular(inp.microwave_mode.freq)
    wp = angular(inp.pump_mode.freq)
    wo = angular(inp.output_mode.freq)
    q = mat.n_opt * wm / CONST.c
    integral = overlap_1d(lambda x: float(inp.microwave_mode.axial(x)), inp.L_LN, q)
    g = (
        _prefactor(mat, wm, wp, wo)
        / math.sqrt(inp.microwave_mode.V_m * inp.pump_mode.L_eff * inp.output_mode.L_eff)
        * integral
    )
    return CouplingResult(
        g0=abs(ordinary(g)),
        overlap_integral=integral,
        phase_mismatch=q * inp.L_LN,
    )


def calibrate_g0_from_nms(delta_nms: float, n_m: float) -> float:
    """g0 [Hz] from a measured normal-mode splitting [Hz] at photon number n_m."""
    if not n_m > 0:
        raise ValueError(f"n_m must be > 0, got {n_m}")
    return delta_nms / (2.0 * math.sqrt(n_m))
