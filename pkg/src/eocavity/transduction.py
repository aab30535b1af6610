"""Coupled-mode transduction figures of merit, normal-mode splitting and
triple-resonance tuning.

All rates and frequencies are ordinary frequencies in Hz. Ratios of rates
are convention free; only :func:`pump_occupation` needs angular units and
converts internally.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import find_peaks

from .core import CONST, DeviceFixture, angular
from .coupling import CouplingInput, g0_quasi_1d
from .microwave import MicrowaveMode, build_mode
from .optical import (
    LayerStack,
    OpticalMode,
    OpticalSolverError,
    device_stack,
    find_resonances,
    lock_gap,
    round_trip_phase,
)


class NoBracketError(ValueError):
    """The tuning function does not change sign over the search interval."""


# ---------------------------------------------------------------------------
# Figures of merit


@dataclass(frozen=True)
class TransductionParams:
    N_p: float
    g0: float
    kappa_o: float
    kappa_o_ext: float
    kappa_m: float
    kappa_m_ext: float
    f_m: float
    delta_op: float

    def __post_init__(self) -> None:
        for name in ("kappa_o", "kappa_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 < self.kappa_o_ext <= self.kappa_o:
            raise ValueError("need 0 < kappa_o_ext <= kappa_o")
        if not 0 < self.kappa_m_ext <= self.kappa_m:
            raise ValueError("need 0 < kappa_m_ext <= kappa_m")
        if self.N_p < 0:
            raise ValueError("N_p must be >= 0")

    @property
    def C(self) -> float:
        return cooperativity(self.N_p, self.g0, self.kappa_o, self.kappa_m)

    @property
    def eta_peak(self) -> float:
        return peak_efficiency(
            self.C, self.kappa_o_ext / self.kappa_o, self.kappa_m_ext / self.kappa_m
        )


def cooperativity(N_p: float, g0: float, kappa_o: float, kappa_m: float) -> float:
    return 4.0 * N_p * g0 * g0 / (kappa_o * kappa_m)


def peak_efficiency(C: float, ratio_o: float, ratio_m: float) -> float:
    """Triply resonant photon-number efficiency."""
    return 4.0 * C / (1.0 + C) ** 2 * ratio_o * ratio_m


def lineshape_denominator(freq, C, kappa_o, kappa_m, f_m, delta_op):
    """|C + (1 + 2i(delta_op - f)/kappa_o)(1 + 2i(f_m - f)/kappa_m)|^2."""
    f = np.asarray(freq, dtype=float)
    z = C + (1 + 2j * (delta_op - f) / kappa_o) * (1 + 2j * (f_m - f) / kappa_m)
    return z.real**2 + z.imag**2


def efficiency_spectrum(params: TransductionParams, freq) -> np.ndarray:
    """eta(f) for drive frequencies ``freq`` [Hz]."""
    f = np.asarray(freq, dtype=float)
    if f.size == 0:
        raise ValueError("frequency grid is empty")
    C = params.C
    den = lineshape_denominator(f, C, params.kappa_o, params.kappa_m, params.f_m, params.delta_op)
    return params.eta_peak * (1 + C) ** 2 / den


def pump_occupation(
    P_in: float,
    mode_match: float,
    kappa_o: float,
    kappa_o_ext: float,
    f_p: float,
    detuning: float = 0.0,
) -> float:
    """Intracavity photon number for input power P_in [W]; rates in Hz."""
    if P_in < 0:
        raise ValueError("P_in must be >= 0")
    k, ke, d = angular(kappa_o), angular(kappa_o_ext), angular(detuning)
    return 4 * ke * mode_match * P_in / (CONST.hbar * angular(f_p) * (k * k + 4 * d * d))


# ---------------------------------------------------------------------------
# Normal-mode splitting


@dataclass(frozen=True)
class NmsParams:
    n_m: float
    g0: float
    kappa_o: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if self.n_m < 0:
            raise ValueError("n_m must be >= 0")


def nms_modes(params: NmsParams) -> tuple[np.ndarray, np.ndarray]:
    """Normal-mode frequencies (relative to the bare pump resonance, Hz) and
    their pump-mode weights, both in ascending frequency order."""
    G = math.sqrt(params.n_m) * params.g0
    h = np.array([[0.0, G], [G, params.delta]])
    vals, vecs = np.linalg.eigh(h)
    return vals, vecs[0, :] ** 2


def nms_splitting(params: NmsParams) -> float:
    return math.sqrt(params.delta**2 + 4 * params.n_m * params.g0**2)


def nms_spectrum(params: NmsParams, detuning) -> np.ndarray:
    """Transmitted power vs laser detuning: weighted Lorentzians of width kappa_o."""
    x = np.asarray(detuning, dtype=float)
    freqs, weights = nms_modes(params)
    out = np.zeros_like(x)
    for f, w in zip(freqs, weights):
        out += w / (1 + (2 * (x - f) / params.kappa_o) ** 2)
    return out


# ---------------------------------------------------------------------------
# Device operating point


def device_microwave_modes(device: DeviceFixture) -> list[MicrowaveMode]:
    return [
        build_mode(
            device.slab,
            device.material,
            idx,
            device.q_int,
            device.kappa_m_ext,
            beam_offset=device.beam_position,
            wall_model=device.wall_model,
            eps_eff=device.eps_eff,
        )
        for idx in device.microwave_modes
    ]


def target_microwave_mode(device: DeviceFixture) -> MicrowaveMode:
    return build_mode(
        device.slab,
        device.material,
        device.target_mode,
        device.q_int,
        device.kappa_m_ext,
        beam_offset=device.beam_position,
        wall_model=device.wall_model,
        eps_eff=device.eps_eff,
    )


@dataclass(frozen=True)
class LockedCavity:
    """Cavity with its gap locked so that mode ``pump`` sits on the laser."""

    stack: LayerStack
    lower: OpticalMode
    pump: OpticalMode
    upper: OpticalMode

    @property
    def l_air(self) -> float:
        return self.stack.layers[-1].thickness

    @property
    def delta_upper(self) -> float:
        return self.upper.freq - self.pump.freq

    @property
    def delta_lower(self) -> float:
        return self.pump.freq - self.lower.freq

    def output(self, side: str) -> OpticalMode:
        return _side(self.lower, self.upper, side)


def _side(lower, upper, side):
    if side == "upper":
        return upper
    if side == "lower":
        return lower
    raise ValueError(f"output side must be 'upper' or 'lower', got {side!r}")


def mode_triplet(stack: LayerStack, q: int, input_side: str):
    fsr = CONST.c / (2 * stack.optical_length)
    centre = q * CONST.c / (2 * stack.optical_length)  # rough; refined below
    phase = float(round_trip_phase(stack, centre))
    centre += (q * math.pi - phase) / math.pi * fsr
    modes = find_resonances(stack, centre - 2.5 * fsr, centre + 2.5 * fsr, input_side)
    by_q = {m.longitudinal_index: m for m in modes}
    try:
        return by_q[q - 1], by_q[q], by_q[q + 1]
    except KeyError as exc:
        raise OpticalSolverError(f"mode q={q} or its neighbours missing near {centre!r} Hz") from exc


def locked_cavity(device: DeviceFixture, l_air: float, laser_freq: float | None = None) -> LockedCavity:
    """Lock the gap nearest ``l_air`` so a resonance sits on the laser."""
    nu = device.laser_freq if laser_freq is None else laser_freq
    stack, q = lock_gap(device_stack(device, l_air), nu)
    lower, pump, upper = mode_triplet(stack, q, device.input_side)
    return LockedCavity(stack, lower, pump, upper)


def coupling_for(device: DeviceFixture, cav_stack: LayerStack, pump, output, mw: MicrowaveMode):
    return g0_quasi_1d(
        CouplingInput(
            device.material,
            mw,
            pump,
            output,
            device.slab.len_x,
            cav_stack.layers[-1].thickness,
        )
    )


def device_params(
    device: DeviceFixture, cav: LockedCavity, mw: MicrowaveMode, side: str = "upper"
) -> TransductionParams:
    """Lineshape inputs for one (output neighbour, microwave mode) pair."""
    output = cav.output(side)
    g0 = coupling_for(device, cav.stack, cav.pump, output, mw).g0
    N_p = pump_occupation(
        device.pump_power, device.mode_match, cav.pump.kappa_o, cav.pump.kappa_o_ext, cav.pump.freq
    )
    return TransductionParams(
        N_p=N_p,
        g0=g0,
        kappa_o=output.kappa_o,
        kappa_o_ext=output.kappa_o_ext,
        kappa_m=mw.kappa_m,
        kappa_m_ext=mw.kappa_m_ext,
        f_m=mw.freq,
        delta_op=abs(output.freq - cav.pump.freq),
    )


# ---------------------------------------------------------------------------
# Triple-resonance tuning


@dataclass(frozen=True)
class TripleResonance:
    l_air: float
    pump_freq: float
    output_freq: float
    delta_op: float
    target_freq: float
    pump_index: int
    side: str

    @property
    def mismatch(self) -> float:
        return self.delta_op - self.target_freq


def _gap_for_index(stack: LayerStack, nu: float, q: int) -> float:
    k0 = 2 * math.pi * nu / CONST.c
    theta_pre = float(round_trip_phase(stack.with_gap(0.0), nu))
    return (q * math.pi - theta_pre) / (stack.layers[-1].index * k0)


def _pair_spacing(stack: LayerStack, q: int, side: str, input_side: str) -> float:
    lower, pump, upper = mode_triplet(stack, q, input_side)
    out = _side(lower, upper, side)
    return abs(out.freq - pump.freq)


def tune_triple_resonance(
    device: DeviceFixture,
    target_freq: float | None = None,
    bracket: tuple[float, float] | None = None,
    side: str = "upper",
    tol: float = 1e3,
) -> TripleResonance:
    """Gap length at which the pump-output spacing equals ``target_freq``.

    The default target is the modelled frequency of ``device.target_mode``.
    A coarse stage bisects over length-locked configurations (pump exactly
    on the laser; the gap steps by half a wavelength between them). A fine
    stage then holds the pump's longitudinal index and bisects the gap
    continuously, the laser following the pump by a small fraction of an
    FSR, until the spacing matches to ``tol`` Hz.
    """
    if target_freq is None:
        target_freq = target_microwave_mode(device).freq
    if not target_freq > 0:
        raise NoBracketError(f"no bracket for target frequency {target_freq!r} Hz")
    nu = device.laser_freq
    base = device_stack(device, 0.0)
    fixed = base.optical_length
    if bracket is None:
        guess = CONST.c / (2 * target_freq) - fixed
        if guess <= 0:
            raise NoBracketError(
                f"target {target_freq!r} Hz exceeds the FSR of the crystal alone; no bracket"
            )
        span = 0.3 * (guess + fixed)
        bracket = (max(guess - span, 1e-6), guess + span)
    lo_gap, hi_gap = bracket
    q_lo = int(math.ceil((float(round_trip_phase(base.with_gap(lo_gap), nu))) / math.pi))
    q_hi = int(math.floor((float(round_trip_phase(base.with_gap(hi_gap), nu))) / math.pi))

    def coarse(q):
        return _pair_spacing(base.with_gap(_gap_for_index(base, nu, q)), q, side, device.input_side) - target_freq

    d_lo, d_hi = coarse(q_lo), coarse(q_hi)
    if not (d_lo >= 0 > d_hi):
        raise NoBracketError(
            f"spacing minus target does not change sign over gap bracket {bracket!r} m "
            f"({d_lo:.6g} Hz, {d_hi:.6g} Hz)"
        )
    while q_hi - q_lo > 1:
        mid = (q_lo + q_hi) // 2
        if coarse(mid) >= 0:
            q_lo = mid
        else:
            q_hi = mid

    wavelength = CONST.c / nu
    for q in (q_lo, q_hi):
        d0 = _gap_for_index(base, nu, q)

        def fine(d, q=q):
            return _pair_spacing(base.with_gap(d), q, side, device.input_side) - target_freq

        root = _expand_and_solve(fine, d0, step=wavelength * 1e-3, limit=wavelength / 4)
        if root is None:
            continue
        lower, pump, upper = mode_triplet(base.with_gap(root), q, device.input_side)
        out = _side(lower, upper, side)
        delta = abs(out.freq - pump.freq)
        if abs(delta - target_freq) < tol:
            return TripleResonance(root, pump.freq, out.freq, delta, target_freq, q, side)
    raise NoBracketError(
        f"fine tuning found no root within a quarter wave of the locked gaps for q in ({q_lo}, {q_hi})"
    )


def _expand_and_solve(fn, x0, step, limit):
    f0 = fn(x0)
    if f0 == 0:
        return x0
    h = step
    while h <= limit:
        for x1 in (x0 + h, x0 - h):
            if x1 <= 0:
                continue
            f1 = fn(x1)
            if np.sign(f1) != np.sign(f0):
                a, b = sorted((x0, x1))
                return brentq(fn, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
        h *= 2
    return None


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepResult:
    """Linear transduction amplitude on an (axis1 x drive frequency) grid."""

    axis1: np.ndarray
    axis2: np.ndarray
    magnitude: np.ndarray
    axis1_name: str
    axis1_unit: str
    flags: np.ndarray = field(default=None)
    delta_upper: np.ndarray = field(default=None)
    delta_lower: np.ndarray = field(default=None)
    axis2_name: str = "drive_freq"
    axis2_unit: str = "Hz"

    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(self.magnitude)


def _sweep_row(device: DeviceFixture, axis: str, value: float, drive: np.ndarray, mw_modes, l_air):
    if axis == "gap":
        gap, laser = value, device.laser_freq
    else:
        gap, laser = l_air, CONST.c / value
    try:
        cav = locked_cavity(device, gap, laser)
    except OpticalSolverError:
        return np.full(drive.shape, np.nan), True, math.nan, math.nan
    total = np.zeros_like(drive)
    for side in ("upper", "lower"):
        for mw in mw_modes:
            p = device_params(device, cav, mw, side)
            if p.g0 == 0.0:
                continue
            total += np.sqrt(efficiency_spectrum(p, drive))
    return total, False, cav.delta_upper, cav.delta_lower


def sweep_triple_resonance(
    device: DeviceFixture,
    axis: str,
    axis_values,
    drive_freqs,
    l_air: float | None = None,
    workers: int = 1,
    mw_modes: list[MicrowaveMode] | None = None,
) -> SweepResult:
    """S21-style map over gap length (``axis='gap'``, values in m) or laser
    wavelength (``axis='wavelength'``, values in m, gap fixed at ``l_air``).

    At each axis point the cavity is length-locked to the laser, the pump
    and both neighbouring modes are found, and sqrt(eta) is summed over
    every (neighbour, microwave mode) pair. Rows are computed independently
    and assembled in axis order, so the result does not depend on
    ``workers``.
    """
    if axis not in ("gap", "wavelength"):
        raise ValueError(f"axis must be 'gap' or 'wavelength', got {axis!r}")
    if axis == "wavelength" and l_air is None:
        raise ValueError("a wavelength sweep needs a fixed l_air")
    values = np.asarray(axis_values, dtype=float)
    drive = np.asarray(drive_freqs, dtype=float)
    if values.size == 0 or drive.size == 0:
        raise ValueError("sweep ranges must be non-empty")
    modes = device_microwave_modes(device) if mw_modes is None else list(mw_modes)

    def row(v):
        return _sweep_row(device, axis, float(v), drive, modes, l_air)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, values))
    else:
        rows = [row(v) for v in values]
    return SweepResult(
        axis1=values,
        axis2=drive,
        magnitude=np.vstack([r[0] for r in rows]),
        axis1_name="l_air" if axis == "gap" else "wavelength",
        axis1_unit="m",
        flags=np.array([r[1] for r in rows]),
        delta_upper=np.array([r[2] for r in rows]),
        delta_lower=np.array([r[3] for r in rows]),
    )


@dataclass
class Ridge:
    rows: list[int]
    positions: list[float]
    kind: str = ""

    @property
    def span(self) -> float:
        return max(self.positions) - min(self.positions)


def find_ridges(
    result: SweepResult,
    prominence_db: float = 6.0,
    min_fraction: float = 0.25,
    max_gap_rows: int = 5,
    link_fraction: float = 0.02,
) -> list[Ridge]:
    """Trace peaks of the dB map across rows and classify each track.

    Peaks in consecutive rows are linked when they fall within
    ``link_fraction`` of the drive span of the track's extrapolated
    position. A track whose position never moves by more than three grid
    steps is ``'fixed'`` (a microwave resonance); anything else that
    survives ``min_fraction`` of the rows is ``'moving'``.
    """
    db = result.db()
    freq = result.axis2
    step = float(np.median(np.diff(freq)))
    link_tol = max(link_fraction * float(freq[-1] - freq[0]), 3 * step)
    n_rows = db.shape[0]
    tracks: list[Ridge] = []
    for i in range(n_rows):
        row = db[i]
        if not np.all(np.isfinite(row)):
            continue
        idx, _ = find_peaks(row, prominence=prominence_db)
        claimed = set()
        for j in idx:
            pos = float(freq[j])
            best, best_err = None, None
            for t in tracks:
                if id(t) in claimed or i - t.rows[-1] > max_gap_rows:
                    continue
                pred = t.positions[-1]
                if len(t.rows) >= 2:
                    slope = (t.positions[-1] - t.positions[-2]) / (t.rows[-1] - t.rows[-2])
                    pred += slope * (i - t.rows[-1])
                err = abs(pos - pred)
                if err <= link_tol and (best_err is None or err < best_err):
                    best, best_err = t, err
            if best is None:
                best = Ridge([], [])
                tracks.append(best)
            best.rows.append(i)
            best.positions.append(pos)
            claimed.add(id(best))
    ridges = [t for t in tracks if len(t.rows) >= min_fraction * n_rows]
    for r in ridges:
        r.kind = "fixed" if r.span <= 3 * step else "moving"
    return ridges
