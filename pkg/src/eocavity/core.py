"""Shared physical types, constants and unit helpers.

Conventions
-----------
SI units throughout. Every public function and every dataclass field that
holds a frequency or a rate uses ordinary frequency in Hz; formulas that
need angular frequency (anything with hbar*omega) convert with
:func:`angular` at the point of use and convert back with :func:`ordinary`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from scipy import constants as _sc

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants used by the toolkit (read-only)."""

    c: float = _sc.c
    hbar: float = _sc.hbar
    k_B: float = _sc.k
    eps0: float = _sc.epsilon_0


CONST = PhysicalConstants()


def angular(freq_hz):
    """Ordinary frequency [Hz] -> angular frequency [rad/s]."""
    return TWO_PI * freq_hz


def ordinary(omega):
    """Angular frequency [rad/s] -> ordinary frequency [Hz]."""
    return omega / TWO_PI


@dataclass(frozen=True)
class Material:
    """Electro-optic crystal parameters.

    Parameters
    ----------
    n_opt : float
        Optical (extraordinary) refractive index at the pump wavelength.
    eps_x, eps_y, eps_z : float
        Relative microwave permittivities along the crystal axes.
    r33 : float
        Electro-optic coefficient [m/V].
    name : str
        Free-form label.
    """

    n_opt: float
    eps_x: float
    eps_y: float
    eps_z: float
    r33: float
    name: str = ""

    def __post_init__(self) -> None:
        if not self.n_opt > 1:
            raise ValueError(f"n_opt must be > 1, got {self.n_opt}")
        for axis in ("eps_x", "eps_y", "eps_z"):
            if not getattr(self, axis) >= 1:
                raise ValueError(f"{axis} must be >= 1, got {getattr(self, axis)}")
        if not self.r33 >= 0:
            raise ValueError(f"r33 must be >= 0, got {self.r33}")

    def eps(self, axis: str) -> float:
        """Permittivity along ``'x'``, ``'y'`` or ``'z'``."""
        return {"x": self.eps_x, "y": self.eps_y, "z": self.eps_z}[axis]


@dataclass(frozen=True)
class SlabGeometry:
    """Crystal dimensions [m]; the optical beam propagates along x."""

    len_x: float
    len_y: float
    len_z: float

    def __post_init__(self) -> None:
        for name in ("len_x", "len_y", "len_z"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def volume(self) -> float:
        return self.len_x * self.len_y * self.len_z

    def scaled(self, s: float) -> "SlabGeometry":
        return SlabGeometry(self.len_x * s, self.len_y * s, self.len_z * s)


# Extraordinary index of congruent LiNbO3 at 1550 nm, frozen from a Sellmeier
# evaluation (see tests/test_core.py for the oracle).
LN_N_EXTRAORDINARY_1550 = 2.138


def default_ln_material() -> Material:
    """Congruent lithium niobate, z-polarised light at 1550 nm."""
    return Material(
        n_opt=LN_N_EXTRAORDINARY_1550,
        eps_x=45.0,
        eps_y=45.0,
        eps_z=25.0,
        r33=31e-12,
        name="LiNbO3",
    )


@dataclass(frozen=True)
class ARCoating:
    index: float
    thickness: float


@dataclass(frozen=True)
class DeviceFixture:
    """Everything needed to model one physical transducer build.

    Mirror transmissions are power transmissions; ``excess_loss`` is the
    round-trip fractional power loss not accounted for by the mirrors.
    ``microwave_modes`` lists every resonator mode considered in sweeps; modes
    with a node on the optical axis simply contribute nothing. ``measured``
    holds the operating-point numbers reported for the device
    (Hz for rates) so that budgets can be evaluated at the measured point
    instead of the modelled one.
    """

    material: Material
    slab: SlabGeometry
    back_mirror_T: float
    front_mirror_T: float
    excess_loss: float
    ar: ARCoating | None
    wavelength: float = 1550e-9
    input_side: str = "back"
    pump_power: float = 50e-3
    mode_match: float = 0.9
    q_int: float = 1.3e3
    kappa_m_ext: float = 1.38e6
    temperature: float = 300.0
    microwave_modes: tuple[tuple[int, int, int], ...] = ((1, 1, 1), (1, 2, 1), (1, 1, 2), (1, 3, 1))
    target_mode: tuple[int, int, int] = (1, 3, 1)
    wall_model: str = "dwm"
    eps_eff: float | None = None
    beam_offset: tuple[float, float] | None = None
    measured: Mapping[str, float] = field(default_factory=lambda: MappingProxyType({}))

    @property
    def laser_freq(self) -> float:
        return CONST.c / self.wavelength

    @property
    def beam_position(self) -> tuple[float, float]:
        """(y0, z0) of the optical axis; the slab centre unless overridden."""
        if self.beam_offset is not None:
            return self.beam_offset
        return self.slab.len_y / 2, self.slab.len_z / 2


_MEASURED = MappingProxyType(
    {
        "kappa_o": 4.1e6,
        "kappa_o_ext": 2.8e6,
        "kappa_m": 8.54e6,
        "f_m": 9.302e9,
        "N_p": 6.5e10,
        "g0": 1.5,
        "C": 0.017,
        "n_m_nms": 1.3e15,
        "delta_nms": 103e6,
    }
)


def paper_device() -> DeviceFixture:
    """The upgraded (AR-coated, high-finesse) device.

    4 x 12 x 8 mm x-cut LN slab, HR back coating T = 0.16 %, curved front
    mirror T = 0.02 %, 0.1 % excess round-trip loss, 300 nm fused-silica AR
    layer on the inner crystal face.
    """
    return DeviceFixture(
        material=default_ln_material(),
        slab=SlabGeometry(4e-3, 12e-3, 8e-3),
        back_mirror_T=0.0016,
        front_mirror_T=0.0002,
        excess_loss=0.001,
        ar=ARCoating(index=1.444, thickness=300e-9),
        measured=_MEASURED,
    )
