"""1-D standing-wave model of the composite Fabry-Perot cavity.

The cavity is a stack of lossless dielectric layers closed by two hard
mirrors (field node at each mirror). Resonances are found from the
standing-wave phase accumulated between the mirrors: writing the field in
layer j as ``E = r sin(theta)``, ``E'/(n_j k0) = r cos(theta)``, theta grows
by ``n_j k0 d_j`` across the layer and is remapped at each interface so that
E and dE/dx stay continuous. theta is continuous and strictly increasing in
frequency, and mode q (q half-waves, counting from the back mirror) sits where
``theta_end = q*pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import CONST, DeviceFixture

# brentq's rtol floor is 4*eps; using it gives roots to the last few ulps.
_ROOT_RTOL = 4.0 * np.finfo(float).eps
_SCAN_PER_FSR = 20


class OpticalSolverError(RuntimeError):
    """Root finding on the resonance condition failed."""


@dataclass(frozen=True)
class Layer:
    index: float
    thickness: float
    name: str = ""

    def __post_init__(self) -> None:
        if not self.index >= 1:
            raise ValueError(f"layer index must be >= 1, got {self.index}")
        if not self.thickness >= 0:
            raise ValueError(f"layer thickness must be >= 0, got {self.thickness}")


@dataclass(frozen=True)
class LayerStack:
    """Layers ordered from the back mirror to the front mirror.

    The first layer is taken as the crystal and the last one as the tunable
    air gap when computing the enhancement factor.
    """

    layers: tuple[Layer, ...]
    back_mirror_T: float
    front_mirror_T: float
    excess_loss: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a LayerStack needs at least one layer")
        for name in ("back_mirror_T", "front_mirror_T"):
            t = getattr(self, name)
            if not 0 < t < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {t}")
        if not 0 <= self.excess_loss < 1:
            raise ValueError(f"excess_loss must lie in [0, 1), got {self.excess_loss}")

    @property
    def optical_length(self) -> float:
        return sum(l.index * l.thickness for l in self.layers)

    @property
    def length(self) -> float:
        return sum(l.thickness for l in self.layers)

    @property
    def round_trip_loss(self) -> float:
        return self.back_mirror_T + self.front_mirror_T + self.excess_loss

    def with_gap(self, thickness: float) -> "LayerStack":
        """Copy with the last layer's thickness replaced."""
        last = replace(self.layers[-1], thickness=thickness)
        return replace(self, layers=self.layers[:-1] + (last,))


@dataclass(frozen=True)
class OpticalMode:
    """One longitudinal resonance. Rates are in Hz."""

    freq: float
    longitudinal_index: int
    A: float
    L_eff: float
    kappa_o: float = math.nan
    kappa_o_ext: float = math.nan
    fsr_local: float = math.nan
    field_x: np.ndarray = field(default=None, repr=False, compare=False)
    field_E: np.ndarray = field(default=None, repr=False, compare=False)


def device_stack(device: DeviceFixture, air_gap: float) -> LayerStack:
    """Crystal | optional AR layer | air gap, between the device mirrors."""
    layers = [Layer(device.material.n_opt, device.slab.len_x, "crystal")]
    if device.ar is not None:
        layers.append(Layer(device.ar.index, device.ar.thickness, "ar"))
    layers.append(Layer(1.0, air_gap, "air"))
    return LayerStack(
        tuple(layers), device.back_mirror_T, device.front_mirror_T, device.excess_loss
    )


# ---------------------------------------------------------------------------
# Interface reflectivity


def fresnel_reflectivity(n1: float, n2: float) -> float:
    """Normal-incidence power reflectivity of a bare n1|n2 interface."""
    if n1 < 1 or n2 < 1:
        raise ValueError("indices must be >= 1")
    return ((n1 - n2) / (n1 + n2)) ** 2


def stack_reflectivity(layers: Sequence[Layer], wavelength: float) -> tuple[complex, float]:
    """Normal-incidence reflection of a layered interface.

    ``layers[0]`` is the incidence medium and ``layers[-1]`` the exit medium;
    their thicknesses are ignored. Returns ``(r, |r|**2)``.
    """
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    if len(layers) < 2:
        raise ValueError("need at least an incidence and an exit medium")
    n_in, n_out = layers[0].index, layers[-1].index
    m = np.eye(2, dtype=complex)
    for layer in layers[1:-1]:
        delta = 2 * np.pi * layer.index * layer.thickness / wavelength
        eta = layer.index
        m = m @ np.array(
            [[np.cos(delta), 1j * np.sin(delta) / eta], [1j * eta * np.sin(delta), np.cos(delta)]]
        )
    b, c = m @ np.array([1.0, n_out])
    r = (n_in * b - c) / (n_in * b + c)
    return complex(r), float(abs(r) ** 2)


# ---------------------------------------------------------------------------
# Standing-wave phase


def _wavenumber(freq):
    return 2 * np.pi * np.asarray(freq, dtype=float) / CONST.c


def _cross_interface(theta, amp, n_from, n_to):
    m = np.floor(theta / np.pi + 0.5)
    phi = theta - m * np.pi
    s, c = np.sin(phi), np.cos(phi)
    phi_new = np.arctan2(s * n_to, c * n_from)
    amp_new = amp * np.sqrt(s * s + (c * n_from / n_to) ** 2)
    return m * np.pi + phi_new, amp_new


def _propagate(stack: LayerStack, freq):
    """Phase and envelope at the start of every layer plus at the far end.

    Returns lists ``thetas``, ``amps`` of length ``len(layers) + 1`` evaluated
    for (possibly array) ``freq``. Entry j refers to the left edge of layer j
    (just inside it); the last entry is the front-mirror plane.
    """
    k0 = _wavenumber(freq)
    layers = stack.layers
    theta = np.zeros_like(k0)
    amp = np.ones_like(k0)
    thetas, amps = [theta], [amp]
    for j, layer in enumerate(layers):
        theta = theta + layer.index * k0 * layer.thickness
        if j + 1 < len(layers):
            theta, amp = _cross_interface(theta, amp, layer.index, layers[j + 1].index)
        thetas.append(theta)
        amps.append(amp)
    return thetas, amps


def round_trip_phase(stack: LayerStack, freq):
    """Standing-wave phase at the front mirror; ``q*pi`` at resonance q."""
    thetas, _ = _propagate(stack, freq)
    return thetas[-1]


def _expected_fsr(stack: LayerStack) -> float:
    return CONST.c / (2 * stack.optical_length)


def _layer_amplitudes(stack: LayerStack, freq: float) -> np.ndarray:
    _, amps = _propagate(stack, freq)
    return np.array([float(a) for a in amps[: len(stack.layers)]])


def enhancement_factor(stack: LayerStack, freq: float) -> float:
    """Peak field in the last layer divided by peak field in the first."""
    amps = _layer_amplitudes(stack, freq)
    return float(amps[-1] / amps[0])


def _mode_L_eff(stack: LayerStack, amps: np.ndarray) -> float:
    n0 = stack.layers[0].index
    return float(
        sum((l.index * a / (n0 * amps[0])) ** 2 * l.thickness / 2 for l, a in zip(stack.layers, amps))
    )


def field_profile(stack: LayerStack, freq: float, samples_per_layer: int = 400):
    """Sampled standing-wave field E(x), unit peak in the first layer.

    Returns ``(x, E)`` with x measured from the back mirror. Interface
    positions appear twice (once per side) so both layers are represented.
    """
    k0 = float(_wavenumber(freq))
    thetas, amps = _propagate(stack, freq)
    xs, es = [], []
    x0 = 0.0
    for j, layer in enumerate(stack.layers):
        x = np.linspace(0.0, layer.thickness, samples_per_layer)
        xs.append(x0 + x)
        es.append(float(amps[j]) * np.sin(float(thetas[j]) + layer.index * k0 * x))
        x0 += layer.thickness
    return np.concatenate(xs), np.concatenate(es) / float(amps[0])


def mirror_residual(stack: LayerStack, freq: float) -> float:
    """|E| at the front mirror relative to the peak field (transfer matrix)."""
    k0 = float(_wavenumber(freq))
    vec = np.array([0.0, 1.0])  # (E, dE/dx / k0) at the back mirror
    peak = 1.0 / stack.layers[0].index
    for layer in stack.layers:
        ph = layer.index * k0 * layer.thickness
        n = layer.index
        m = np.array([[np.cos(ph), np.sin(ph) / n], [-n * np.sin(ph), np.cos(ph)]])
        vec = m @ vec
        peak = max(peak, math.hypot(vec[0], vec[1] / n))
    return abs(vec[0]) / peak


# ---------------------------------------------------------------------------
# Resonances


def find_resonances(
    stack: LayerStack,
    f_lo: float,
    f_hi: float,
    input_side: str = "back",
    with_profile: bool = False,
) -> list[OpticalMode]:
    """All resonances with ``f_lo <= freq <= f_hi``, in ascending order.

    Roots are bracketed on a grid of one twentieth of the expected FSR and
    refined with Brent's method. Linewidths use the mean spacing to the
    neighbouring modes (one-sided at the window edges).
    """
    if not f_hi > f_lo:
        raise ValueError("frequency window must be non-empty")
    fsr = _expected_fsr(stack)
    n_grid = max(int(math.ceil((f_hi - f_lo) / fsr * _SCAN_PER_FSR)), 2) + 1
    grid = np.linspace(f_lo, f_hi, n_grid)
    phase = round_trip_phase(stack, grid)
    q_lo = max(int(math.ceil(phase[0] / np.pi)), 1)
    q_hi = int(math.floor(phase[-1] / np.pi))
    freqs, orders = [], []
    for q in range(q_lo, q_hi + 1):
        target = q * np.pi
        i = int(np.searchsorted(phase, target))
        if phase[i] == target:
            freqs.append(float(grid[i])), orders.append(q)
            continue
        a, b = grid[i - 1], grid[i]
        try:
            root = brentq(
                lambda f: float(round_trip_phase(stack, f)) - target,
                a,
                b,
                xtol=1e-300,
                rtol=_ROOT_RTOL,
                maxiter=200,
            )
        except (RuntimeError, ValueError) as exc:
            raise OpticalSolverError(
                f"resonance q={q} did not converge in bracket [{a!r}, {b!r}] Hz: {exc}"
            ) from exc
        freqs.append(root), orders.append(q)

    modes = []
    for k, (f, q) in enumerate(zip(freqs, orders)):
        gaps = []
        if k > 0:
            gaps.append(f - freqs[k - 1])
        if k + 1 < len(freqs):
            gaps.append(freqs[k + 1] - f)
        local = float(np.mean(gaps)) if gaps else local_fsr_from_phase(stack, f)
        modes.append(_build_mode(stack, f, q, local, input_side, with_profile))
    return modes


def local_fsr_from_phase(stack: LayerStack, freq: float, rel_step: float = 1e-7) -> float:
    """pi / (d theta / d nu): the spacing a uniform comb would have here."""
    h = freq * rel_step
    slope = (float(round_trip_phase(stack, freq + h)) - float(round_trip_phase(stack, freq - h))) / (2 * h)
    return math.pi / slope


def _build_mode(stack, f, q, fsr_local, input_side, with_profile) -> OpticalMode:
    amps = _layer_amplitudes(stack, f)
    finesse_, kappa, kappa_ext = linewidth_from_losses(stack, fsr_local, input_side)
    fx = fe = None
    if with_profile:
        fx, fe = field_profile(stack, f)
    return OpticalMode(
        freq=float(f),
        longitudinal_index=int(q),
        A=float(amps[-1] / amps[0]),
        L_eff=_mode_L_eff(stack, amps),
        kappa_o=kappa,
        kappa_o_ext=kappa_ext,
        fsr_local=fsr_local,
        field_x=fx,
        field_E=fe,
    )


def mode_at(stack: LayerStack, freq: float, input_side: str = "back") -> tuple[OpticalMode, OpticalMode, OpticalMode]:
    """(lower neighbour, mode nearest ``freq``, upper neighbour)."""
    fsr = _expected_fsr(stack)
    modes = find_resonances(stack, freq - 2.6 * fsr, freq + 2.6 * fsr, input_side)
    k = int(np.argmin([abs(m.freq - freq) for m in modes]))
    if k == 0 or k == len(modes) - 1:
        raise OpticalSolverError(f"no neighbours found around {freq!r} Hz")
    return modes[k - 1], modes[k], modes[k + 1]


def lock_gap(stack: LayerStack, freq: float) -> tuple[LayerStack, int]:
    """Adjust the last layer by less than half a wavelength so that a mode
    sits exactly at ``freq`` (what a length lock does). Returns the locked
    stack and the longitudinal index of the locked mode."""
    k0 = float(_wavenumber(freq))
    last = stack.layers[-1]
    theta_pre = float(round_trip_phase(stack.with_gap(0.0), freq))
    n = last.index
    q = int(round((theta_pre + n * k0 * last.thickness) / np.pi))
    d = (q * np.pi - theta_pre) / (n * k0)
    if d < 0:
        q += 1
        d = (q * np.pi - theta_pre) / (n * k0)
    return stack.with_gap(d), q


# ---------------------------------------------------------------------------
# Lengths and linewidths


def effective_length(A: float, L_crystal: float, L_air: float, n: float) -> float:
    """Energy-normalised mode length of a crystal + air cavity."""
    return 0.5 * L_crystal + A * A / (2 * n * n) * L_air


def finesse(stack: LayerStack) -> float:
    loss = stack.round_trip_loss
    if loss >= 0.5:
        raise ValueError(f"round-trip loss {loss} too large for the small-loss formula")
    return 2 * np.pi / loss


def linewidth_from_losses(
    stack: LayerStack, fsr_local: float, input_side: str = "back"
) -> tuple[float, float, float]:
    """(finesse, kappa_o, kappa_o_ext) with kappas in Hz."""
    F = finesse(stack)
    kappa = fsr_local / F
    if input_side == "back":
        t_in = stack.back_mirror_T
    elif input_side == "front":
        t_in = stack.front_mirror_T
    else:
        raise ValueError(f"input_side must be 'back' or 'front', got {input_side!r}")
    return F, kappa, t_in / stack.round_trip_loss * kappa


MODE_TABLE_HEADER = ("index", "freq_hz", "A", "L_eff_m", "kappa_o_hz", "kappa_o_ext_hz")


def mode_table_rows(modes: Iterable[OpticalMode]) -> list[tuple]:
    return [
        (m.longitudinal_index, m.freq, m.A, m.L_eff, m.kappa_o, m.kappa_o_ext) for m in modes
    ]

