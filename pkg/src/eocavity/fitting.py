"""Least-squares fits of transduction and normal-mode-splitting traces.

The solver is a small Levenberg-Marquardt loop with Marquardt diagonal
scaling and a central finite-difference Jacobian. Positive scales (gains,
rates, cooperativity) are fitted as logarithms; line positions are fitted
linearly, centred on the trace window and scaled by its span, and kept
inside the window.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .transduction import lineshape_denominator

TRACE_HEADER = ("freq_hz", "magnitude")
LINESHAPE_PARAMS = ("gain", "C", "kappa_o", "kappa_m", "f_m", "delta_op")
NMS_PARAMS = ("center", "splitting", "kappa_o", "weight_lower", "weight_upper")
FD_STEP = 1e-6
SINGULAR_COND = 1e15


class FitError(RuntimeError):
    """The fit cannot proceed (for example singular normal equations)."""


@dataclass(frozen=True)
class Trace:
    freq: np.ndarray
    value: np.ndarray
    meta: str = ""

    def __post_init__(self) -> None:
        f = np.asarray(self.freq, dtype=float)
        v = np.asarray(self.value, dtype=float)
        object.__setattr__(self, "freq", f)
        object.__setattr__(self, "value", v)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValueError(f"freq and value must be 1-D of equal length, got {f.shape} and {v.shape}")
        if f.size < 8:
            raise ValueError(f"a trace needs at least 8 samples, got {f.size}")
        if not np.all(np.diff(f) > 0):
            raise ValueError("trace frequencies must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(v))):
            raise ValueError("trace contains non-finite samples")


def read_trace_csv(path: str | Path) -> Trace:
    """Load a trace from CSV with header ``freq_hz,magnitude``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)!r}, got {header!r}")
        freq, value = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                freq.append(float(row[0]))
                value.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return Trace(np.array(freq), np.array(value), meta=str(path))


@dataclass(frozen=True)
class FitResult:
    """Estimates, linearised covariance (same order as ``names``) and
    solver diagnostics. ``condition`` is that of J^T J at the optimum."""

    params: dict
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    names: tuple[str, ...] = ()
    gradient_norm: float = math.nan
    condition: float = math.nan
    initial_residual_norm: float = math.nan
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "names": list(self.names),
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "initial_residual_norm": self.initial_residual_norm,
            "gradient_norm": self.gradient_norm,
            "condition": self.condition,
            "converged": self.converged,
            "iterations": self.iterations,
            **self.extras,
        }


# ---------------------------------------------------------------------------
# Solver


@dataclass(frozen=True)
class _Solution:
    x: np.ndarray
    residual: np.ndarray
    jacobian: np.ndarray
    gradient_norm: float
    initial_norm: float
    converged: bool
    iterations: int


def jacobian_fd(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian with step ``rel_step * max(|x_i|, 1)``."""
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2 * h))
    return np.column_stack(cols)


def scaled_condition(A: np.ndarray) -> float:
    """Condition number of J^T J after normalising every column of J to unit
    length; invariant under rescaling of individual parameters."""
    d = np.sqrt(np.diag(A))
    if np.any(d == 0):
        return math.inf
    return float(np.linalg.cond(A / np.outer(d, d)))


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    gtol: float = 1e-10,
    max_iter: int = 500,
    raise_singular: bool = True,
) -> _Solution:
    """Minimise ||fun(x)||^2.

    Converged means ||J^T r|| < gtol * ||r0||^2 with r0 the initial residual.
    Steps are projected onto ``[lower, upper]`` when bounds are given.
    Trial points that overflow are rejected like any uphill step.
    """
    with np.errstate(all="ignore"):
        return _lm(fun, x0, lower, upper, gtol, max_iter, raise_singular)


def _lm(fun, x0, lower, upper, gtol, max_iter, raise_singular) -> _Solution:
    x = np.array(x0, dtype=float)
    lo = np.full(x.size, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(x.size, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lo, hi)
    r = fun(x)
    cost = float(r @ r)
    r0 = math.sqrt(cost)
    tol = gtol * max(cost, np.finfo(float).tiny)
    J = jacobian_fd(fun, x)
    A = J.T @ J
    cond = scaled_condition(A)
    if raise_singular and not cond < SINGULAR_COND:
        raise FitError(f"singular normal equations at the initial point (condition number {cond:.3e})")
    lam = 1e-3
    g = J.T @ r
    it = 0
    converged = bool(np.linalg.norm(g) < tol)
    while not converged and it < max_iter:
        it += 1
        d = np.diag(A).copy()
        d[d <= 0] = max(d.max(), 1.0) * 1e-12
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = fun(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 10, 1e-12)
                accepted = True
                break
            lam *= 10
        if not accepted:
            break
        J = jacobian_fd(fun, x)
        A = J.T @ J
        g = J.T @ r
        converged = bool(np.linalg.norm(g) < tol)
    return _Solution(x, r, J, float(np.linalg.norm(g)), r0, converged, it)


def _covariance(J: np.ndarray, r: np.ndarray, dpdx: np.ndarray) -> tuple[np.ndarray, float]:
    n, m = J.shape
    A = J.T @ J
    cond = scaled_condition(A)
    dof = max(n - m, 1)
    s2 = float(r @ r) / dof
    cov_x = s2 * np.linalg.pinv(A, hermitian=True)
    cov = dpdx[:, None] * cov_x * dpdx[None, :]
    cov = 0.5 * (cov + cov.T)
    return cov, cond


# ---------------------------------------------------------------------------
# Parameter maps


@dataclass(frozen=True)
class _ParamMap:
    """Internal coordinates: log for positive scales, (p - centre)/span for positions."""

    names: tuple[str, ...]
    log_params: frozenset
    centre: float
    span: float

    def to_internal(self, p: Mapping[str, float]) -> np.ndarray:
        out = []
        for n in self.names:
            v = float(p[n])
            if n in self.log_params:
                if not v > 0:
                    raise ValueError(f"initial {n} must be > 0, got {v}")
                out.append(math.log(v))
            else:
                out.append((v - self.centre) / self.span)
        return np.array(out)

    def to_external(self, x: np.ndarray) -> dict:
        return {
            n: (float(np.exp(v)) if n in self.log_params else self.centre + self.span * v)
            for n, v in zip(self.names, x)
        }

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return np.array(
            [float(np.exp(v)) if n in self.log_params else self.span for n, v in zip(self.names, x)]
        )

    def bounds(self, limits: Mapping[str, tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
        """Internal bounds from external ``limits``; unlisted names are free."""
        lo, hi = [], []
        for n in self.names:
            if n in limits:
                a, b = limits[n]
                if n in self.log_params:
                    lo.append(math.log(a))
                    hi.append(math.log(b))
                else:
                    lo.append((a - self.centre) / self.span)
                    hi.append((b - self.centre) / self.span)
            else:
                lo.append(-np.inf)
                hi.append(np.inf)
        return np.array(lo), np.array(hi)


def _window(trace: Trace) -> tuple[float, float]:
    f = trace.freq
    return 0.5 * (f[0] + f[-1]), f[-1] - f[0]


def _finish(sol: _Solution, pm: _ParamMap, extras: dict | None = None) -> FitResult:
    cov, cond = _covariance(sol.jacobian, sol.residual, pm.derivative(sol.x))
    return FitResult(
        params=pm.to_external(sol.x),
        covariance=cov,
        residual_norm=float(np.linalg.norm(sol.residual)),
        converged=sol.converged,
        iterations=sol.iterations,
        names=pm.names,
        gradient_norm=sol.gradient_norm,
        condition=cond,
        initial_residual_norm=sol.initial_norm,
        extras=extras or {},
    )


# ---------------------------------------------------------------------------
# Transduction lineshape


def lineshape_model(freq, gain, C, kappa_o, kappa_m, f_m, delta_op) -> np.ndarray:
    """gain * 4C / |C + (1 + 2i(delta_op - f)/kappa_o)(1 + 2i(f_m - f)/kappa_m)|^2.

    Equals gain * eta(f) with both extraction ratios folded into ``gain``.
    """
    return gain * 4.0 * C / lineshape_denominator(freq, C, kappa_o, kappa_m, f_m, delta_op)


def fit_lineshape(
    trace: Trace,
    initial: Mapping[str, float],
    bounds: Mapping[str, tuple[float, float]] | None = None,
    fixed: Sequence[str] = (),
    gtol: float = 1e-10,
    max_iter: int = 500,
) -> FitResult:
    """Fit ``lineshape_model`` to a trace.

    ``initial`` must name every entry of ``LINESHAPE_PARAMS``. ``bounds``
    may restrict ``f_m`` and ``delta_op``; both default to the trace window.
    Names in ``fixed`` are held at their initial values and get zero rows
    in the covariance.

    With all six parameters free the problem is degenerate: the model
    depends on them only through its scale and the two complex roots of
    C + (1 + 2i(delta_op - f)/kappa_o)(1 + 2i(f_m - f)/kappa_m), which is
    five real numbers. The solver then reports singular normal equations.
    Holding ``C`` (known from N_p and g0) removes the degeneracy.
    """
    missing = set(LINESHAPE_PARAMS) - set(initial)
    if missing:
        raise ValueError(f"missing initial values: {sorted(missing)}")
    unknown = set(fixed) - set(LINESHAPE_PARAMS)
    if unknown:
        raise ValueError(f"cannot fix unknown parameters {sorted(unknown)}")
    centre, span = _window(trace)
    free = tuple(n for n in LINESHAPE_PARAMS if n not in fixed)
    held = {n: float(initial[n]) for n in fixed}
    pm = _ParamMap(free, frozenset({"gain", "C", "kappa_o", "kappa_m"}), centre, span)
    window = (float(trace.freq[0]), float(trace.freq[-1]))
    rate = (float(np.min(np.diff(trace.freq))) / 10, 10 * span)
    pos = {"f_m": window, "delta_op": window, "kappa_o": rate, "kappa_m": rate}
    # scales are free in principle; the box only stops runaway iterations
    for n in ("gain", "C"):
        pos[n] = (initial[n] * math.exp(-40), initial[n] * math.exp(40))
    pos.update(bounds or {})
    for n in ("f_m", "delta_op"):
        if n in held:
            continue
        a, b = pos[n]
        if not a <= initial[n] <= b:
            raise ValueError(f"initial {n}={initial[n]!r} lies outside its bounds {pos[n]!r}")
    lo, hi = pm.bounds(pos)
    f, y = trace.freq, trace.value

    def residual(x):
        return lineshape_model(f, **held, **pm.to_external(x)) - y

    sol = levenberg_marquardt(residual, pm.to_internal(initial), lo, hi, gtol, max_iter)
    res = _finish(sol, pm)
    if not held:
        return res
    idx = [LINESHAPE_PARAMS.index(n) for n in free]
    cov = np.zeros((len(LINESHAPE_PARAMS),) * 2)
    cov[np.ix_(idx, idx)] = res.covariance
    params = {n: (held[n] if n in held else res.params[n]) for n in LINESHAPE_PARAMS}
    return FitResult(
        **{
            **res.__dict__,
            "params": params,
            "covariance": cov,
            "names": LINESHAPE_PARAMS,
            "extras": {"fixed": list(fixed)},
        }
    )


# ---------------------------------------------------------------------------
# Normal-mode splitting


def nms_model(detuning, center, splitting, kappa_o, weight_lower, weight_upper) -> np.ndarray:
    """Two Lorentzians of shared full width ``kappa_o`` at center -+ splitting/2."""
    x = np.asarray(detuning, dtype=float)
    a = center - 0.5 * splitting
    b = center + 0.5 * splitting
    return weight_lower / (1 + (2 * (x - a) / kappa_o) ** 2) + weight_upper / (
        1 + (2 * (x - b) / kappa_o) ** 2
    )


def fit_nms(
    trace: Trace,
    initial: Mapping[str, float],
    gtol: float = 1e-10,
    max_iter: int = 500,
) -> FitResult:
    """Fit ``nms_model``. A near-singular problem (coalesced peaks) is not
    an error here; it shows up as a large ``condition`` and the
    ``degenerate`` flag in ``extras``."""
    missing = set(NMS_PARAMS) - set(initial)
    if missing:
        raise ValueError(f"missing initial values: {sorted(missing)}")
    centre, span = _window(trace)
    pm = _ParamMap(NMS_PARAMS, frozenset({"kappa_o", "weight_lower", "weight_upper"}), centre, span)
    rate = (float(np.min(np.diff(trace.freq))) / 10, 10 * span)
    lo, hi = pm.bounds(
        {
            "center": (float(trace.freq[0]), float(trace.freq[-1])),
            "splitting": (-span, span),
            "kappa_o": rate,
        }
    )
    f, y = trace.freq, trace.value

    def residual(x):
        return nms_model(f, **pm.to_external(x)) - y

    sol = levenberg_marquardt(residual, pm.to_internal(initial), lo, hi, gtol, max_iter, raise_singular=False)
    res = _finish(sol, pm)
    separation = float(abs(res.params["splitting"]))
    extras = {"separation_hz": separation, "degenerate": bool(not res.condition < SINGULAR_COND)}
    return FitResult(**{**res.__dict__, "extras": extras})


def perturbed_start(
    truth: Mapping[str, float],
    rng: np.random.Generator,
    fraction: float = 0.2,
    position_scale: Mapping[str, float] | None = None,
) -> dict:
    """Starting point with every scale parameter multiplied by U(1-f, 1+f)
    and every position in ``position_scale`` shifted by U(-f, f) times its
    scale."""
    position_scale = position_scale or {}
    out = {}
    for n, v in truth.items():
        u = rng.uniform(-fraction, fraction)
        out[n] = v + u * position_scale[n] if n in position_scale else v * (1 + u)
    return out


