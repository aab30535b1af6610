"""Receiver noise budget of a transducer used as a microwave detector.

Rates are ordinary frequencies in Hz. Occupations are Rayleigh-Jeans,
n_th = k_B T / (hbar omega).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import CONST, angular
from .transduction import cooperativity, peak_efficiency

NF_REFERENCE_K = 290.0
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class NoiseOptimizationError(RuntimeError):
    """The noise-temperature objective is not unimodal over the search bracket."""


def thermal_occupation(T: float, f_m: float) -> float:
    """Mean thermal photon number k_B T / (hbar omega_m)."""
    if T < 0 or not f_m > 0:
        raise ValueError("need T >= 0 and f_m > 0")
    return CONST.k_B * T / (CONST.hbar * angular(f_m))


def thermal_to_shot_ratio(C: float, n_th: float, ratio_o: float) -> float:
    """Thermal noise peak over the shot-noise floor, 10 log10(4 C n_th ratio_o) [dB]."""
    if min(C, n_th, ratio_o) < 0:
        raise ValueError("inputs must be >= 0")
    x = 4.0 * C * n_th * ratio_o
    if not x > 0:
        raise ValueError("ratio is zero; undefined in dB")
    return 10.0 * math.log10(x)


def added_noise(eta: float, ratio_int_ext: float, n_th: float) -> tuple[float, float]:
    """(shot-noise, internal thermal) added photons referred to the input."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return 1.0 / eta, ratio_int_ext * n_th


def noise_temperature(T: float, n_added_qu: float, n_added_th: float, n_th: float) -> tuple[float, float]:
    """(T_n [K], noise figure [dB] against a 290 K reference)."""
    if not n_th > 0:
        raise ValueError(f"n_th must be > 0, got {n_th}")
    T_n = T * (n_added_qu + n_added_th) / n_th
    return T_n, 10.0 * math.log10(1.0 + T_n / NF_REFERENCE_K)


@dataclass(frozen=True)
class ReceiverParams:
    """Inputs of the noise budget; only ``kappa_m_ext`` is varied by the optimizer."""

    N_p: float
    g0: float
    kappa_o: float
    kappa_o_ext: float
    kappa_m_int: float
    T: float
    f_m: float

    def __post_init__(self) -> None:
        for name, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.kappa_o_ext > self.kappa_o:
            raise ValueError("need kappa_o_ext <= kappa_o")


@dataclass(frozen=True)
class NoiseBudget:
    n_th: float
    snr_db: float
    n_added_qu: float
    n_added_th: float
    T_n: float
    noise_figure_db: float
    C: float
    eta: float
    kappa_m_ext: float

    def to_dict(self, inputs: ReceiverParams | None = None) -> dict:
        out = {
            "n_th": self.n_th,
            "snr_db": self.snr_db,
            "n_added_qu": self.n_added_qu,
            "n_added_th": self.n_added_th,
            "T_n_k": self.T_n,
            "noise_figure_db": self.noise_figure_db,
            "C": self.C,
            "eta": self.eta,
            "kappa_m_ext_hz": self.kappa_m_ext,
        }
        if inputs is not None:
            out["inputs"] = asdict(inputs)
        return out


def noise_budget(p: ReceiverParams, kappa_m_ext: float) -> NoiseBudget:
    """Full budget at external microwave coupling ``kappa_m_ext`` [Hz]."""
    if not kappa_m_ext > 0:
        raise ValueError(f"kappa_m_ext must be > 0, got {kappa_m_ext}")
    kappa_m = p.kappa_m_int + kappa_m_ext
    C = cooperativity(p.N_p, p.g0, p.kappa_o, kappa_m)
    ratio_o = p.kappa_o_ext / p.kappa_o
    eta = peak_efficiency(C, ratio_o, kappa_m_ext / kappa_m)
    n_th = thermal_occupation(p.T, p.f_m)
    qu, th = added_noise(eta, p.kappa_m_int / kappa_m_ext, n_th)
    T_n, nf = noise_temperature(p.T, qu, th, n_th)
    return NoiseBudget(
        n_th=n_th,
        snr_db=thermal_to_shot_ratio(C, n_th, ratio_o),
        n_added_qu=qu,
        n_added_th=th,
        T_n=T_n,
        noise_figure_db=nf,
        C=C,
        eta=eta,
        kappa_m_ext=kappa_m_ext,
    )


def _golden_min(fn, a: float, b: float, rtol: float) -> float:
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    # x is log(kappa), so an absolute width in x is a relative width in kappa
    while b - a > rtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def optimize_antenna_coupling(
    p: ReceiverParams,
    bracket: tuple[float, float] | None = None,
    rtol: float = 1e-6,
) -> NoiseBudget:
    """Minimise T_n over kappa_m_ext by golden-section search on log(kappa_m_ext).

    The default bracket is [kappa_m_int / 100, 1e4 kappa_m_int]. The result is
    checked for local optimality: T_n must be higher at both neighbours
    ``kappa * (1 +- 10 rtol)``.
    """
    lo, hi = bracket if bracket is not None else (p.kappa_m_int / 100, 1e4 * p.kappa_m_int)
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket {(lo, hi)!r}")

    def objective(x):
        return noise_budget(p, math.exp(x)).T_n

    x = _golden_min(objective, math.log(lo), math.log(hi), rtol)
    k = math.exp(x)
    best = noise_budget(p, k)
    h = 10 * rtol
    if not (noise_budget(p, k * (1 - h)).T_n > best.T_n < noise_budget(p, k * (1 + h)).T_n):
        raise NoiseOptimizationError(
            f"no interior minimum of T_n found in kappa_m_ext bracket [{lo:.6g}, {hi:.6g}] Hz "
            f"(search ended at {k:.6g} Hz)"
        )
    return best


def grid_noise_temperatures(p: ReceiverParams, lo: float, hi: float, n: int = 100) -> np.ndarray:
    """T_n at ``n`` log-spaced kappa_m_ext samples in [lo, hi]."""
    return np.array([noise_budget(p, k).T_n for k in np.geomspace(lo, hi, n)])
