"""Command-line front end.

    eocavity COMMAND --config FILE --out DIR [--threads N] [--format csv|json]

``--config @paper_device`` loads the bundled fixture. Exit codes: 0 success,
2 invalid configuration, 3 numerical failure, 4 I/O failure. Artifacts are
written only after the command has finished computing, together with
``run.json`` (resolved config and version) and ``manifest.json``.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    REQUIRED_SECTIONS,
    ConfigError,
    RunConfig,
    build_device,
    config_echo,
    parse_config,
    require_sections,
)
from .core import CONST, DeviceFixture
from .coupling import CouplingInput, g0_quasi_1d
from .fitting import FitError, fit_lineshape, fit_nms, read_trace_csv
from .microwave import MODE_TABLE_HEADER as MW_HEADER
from .microwave import MicrowaveModeError, build_mode, mode_table
from .noise import NoiseOptimizationError, ReceiverParams, noise_budget, optimize_antenna_coupling
from .optical import MODE_TABLE_HEADER as OPT_HEADER
from .optical import OpticalSolverError, device_stack, find_resonances, mode_table_rows
from .serialize import csv_text, digest, dumps, write_artifacts
from .transduction import (
    NmsParams,
    NoBracketError,
    TransductionParams,
    mode_triplet,
    efficiency_spectrum,
    nms_modes,
    nms_spectrum,
    nms_splitting,
    pump_occupation,
    sweep_triple_resonance,
    target_microwave_mode,
    tune_triple_resonance,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = tuple(REQUIRED_SECTIONS)
BUNDLED_CONFIG = "@paper_device"
NUMERICAL_ERRORS = (
    OpticalSolverError,
    MicrowaveModeError,
    NoBracketError,
    FitError,
    NoiseOptimizationError,
    ArithmeticError,
    np.linalg.LinAlgError,
    ValueError,
)


class _Context:
    def __init__(self, cfg: RunConfig, device: DeviceFixture, text: str, source: str, fmt: str, threads: int):
        self.cfg = cfg
        self.device = device
        self.text = text
        self.source = source
        self.fmt = fmt
        self.threads = threads
        self._tuned = None

    @property
    def base_dir(self) -> Path:
        return Path(self.source).parent

    def target_freq(self) -> float:
        f = self.cfg.microwave.freq_hz
        return target_microwave_mode(self.device).freq if f is None else f

    def tuned(self):
        if self._tuned is None:
            self._tuned = tune_triple_resonance(self.device, self.target_freq())
        return self._tuned

    def l_air(self) -> float:
        given = self.cfg.device.l_air_m
        return self.tuned().l_air if given is None else given

    def table(self, stem: str, header, rows) -> dict[str, str]:
        if self.fmt == "json":
            return {f"{stem}.json": dumps([dict(zip(header, r)) for r in rows])}
        return {f"{stem}.csv": csv_text(header, rows)}

    def operating_point(self) -> TransductionParams:
        op = self.cfg.operating_point
        mw = self.cfg.microwave
        return TransductionParams(
            N_p=op.n_p,
            g0=op.g0_hz,
            kappa_o=op.kappa_o_hz,
            kappa_o_ext=op.kappa_o_ext_hz,
            kappa_m=op.f_m_hz / mw.q_int + mw.kappa_m_ext_hz,
            kappa_m_ext=mw.kappa_m_ext_hz,
            f_m=op.f_m_hz,
            delta_op=op.f_m_hz if op.delta_op_hz is None else op.delta_op_hz,
        )

    def receiver(self) -> ReceiverParams:
        op = self.cfg.operating_point
        return ReceiverParams(
            N_p=op.n_p,
            g0=op.g0_hz,
            kappa_o=op.kappa_o_hz,
            kappa_o_ext=op.kappa_o_ext_hz,
            kappa_m_int=op.f_m_hz / self.cfg.microwave.q_int,
            T=op.temperature_k,
            f_m=op.f_m_hz,
        )


# ---------------------------------------------------------------------------
# Commands; each returns {file name: text}


def cmd_modes_optical(ctx: _Context) -> dict[str, str]:
    stack = device_stack(ctx.device, ctx.l_air())
    nu = ctx.device.laser_freq
    half = ctx.cfg.optical_modes.half_width_fsr * CONST.c / (2 * stack.optical_length)
    modes = find_resonances(stack, nu - half, nu + half, ctx.device.input_side)
    return ctx.table("modes_optical", OPT_HEADER, mode_table_rows(modes))


def cmd_modes_microwave(ctx: _Context) -> dict[str, str]:
    t = ctx.cfg.microwave_table
    d = ctx.device
    rows = mode_table(
        d.slab,
        d.material,
        (range(1, t.l_max + 1), range(1, t.m_max + 1), range(1, t.p_max + 1)),
        d.q_int,
        d.kappa_m_ext,
        d.wall_model,
        d.eps_eff,
    )
    return ctx.table("modes_microwave", MW_HEADER, rows)


def cmd_tune(ctx: _Context) -> dict[str, str]:
    tr = ctx.tuned()
    return {
        "tune.json": dumps(
            {
                "l_air_m": tr.l_air,
                "pump_freq_hz": tr.pump_freq,
                "output_freq_hz": tr.output_freq,
                "delta_op_hz": tr.delta_op,
                "target_freq_hz": tr.target_freq,
                "mismatch_hz": tr.mismatch,
                "pump_index": tr.pump_index,
                "output_side": tr.side,
            }
        )
    }


def cmd_g0(ctx: _Context) -> dict[str, str]:
    d = ctx.device
    tr = ctx.tuned()
    stack = device_stack(d, tr.l_air)
    lower, pump, upper = mode_triplet(stack, tr.pump_index, d.input_side)
    output = upper if tr.side == "upper" else lower
    mw = build_mode(
        d.slab,
        d.material,
        d.target_mode,
        d.q_int,
        d.kappa_m_ext,
        beam_offset=d.beam_position,
        wall_model=d.wall_model,
        eps_eff=d.eps_eff,
        freq_override=ctx.cfg.microwave.freq_hz,
    )
    res = g0_quasi_1d(CouplingInput(d.material, mw, pump, output, d.slab.len_x, tr.l_air))
    N_p = pump_occupation(d.pump_power, d.mode_match, pump.kappa_o, pump.kappa_o_ext, pump.freq)
    params = TransductionParams(
        N_p=N_p,
        g0=res.g0,
        kappa_o=output.kappa_o,
        kappa_o_ext=output.kappa_o_ext,
        kappa_m=mw.kappa_m,
        kappa_m_ext=mw.kappa_m_ext,
        f_m=mw.freq,
        delta_op=tr.delta_op,
    )
    out = {
        **res.to_dict(),
        "l_air_m": tr.l_air,
        "microwave_mode": list(mw.indices),
        "microwave_freq_hz": mw.freq,
        "microwave_volume_m3": mw.V_m,
        "pump_freq_hz": pump.freq,
        "output_freq_hz": output.freq,
        "pump_L_eff_m": pump.L_eff,
        "output_L_eff_m": output.L_eff,
        "kappa_o_hz": output.kappa_o,
        "kappa_o_ext_hz": output.kappa_o_ext,
        "kappa_m_hz": mw.kappa_m,
        "N_p": N_p,
        "C": params.C,
        "eta_peak": params.eta_peak,
    }
    return {"g0.json": dumps(out)}


def cmd_sweep(ctx: _Context) -> dict[str, str]:
    s = ctx.cfg.sweep
    d = ctx.device
    if s.axis == "gap":
        if s.start is not None and s.stop is not None:
            lo, hi = s.start, s.stop
        else:
            c = ctx.l_air()
            lo, hi = c - s.span / 2, c + s.span / 2
        l_air = None
    else:
        if s.start is None or s.stop is None:
            raise ConfigError(f"{ctx.source}:1: sweep: a wavelength sweep needs start and stop")
        lo, hi = s.start, s.stop
        l_air = ctx.l_air()
    if not 0 < lo < hi or not s.drive_start_hz < s.drive_stop_hz:
        raise ConfigError(f"{ctx.source}:1: sweep: ranges must be increasing and positive")
    axis = np.linspace(lo, hi, s.points)
    drive = np.linspace(s.drive_start_hz, s.drive_stop_hz, s.drive_points)
    res = sweep_triple_resonance(d, s.axis, axis, drive, l_air=l_air, workers=ctx.threads)
    mag = res.db() if s.db else res.magnitude
    meta = {
        "axis1_name": res.axis1_name,
        "axis1_unit": res.axis1_unit,
        "axis2_name": res.axis2_name,
        "axis2_unit": res.axis2_unit,
        "magnitude": "dB" if s.db else "linear amplitude",
        "fixture_hash": digest(dumps({k: config_echo(ctx.cfg)[k] for k in ("device", "laser", "microwave")})),
        "flagged_rows": [int(i) for i in np.flatnonzero(res.flags)],
        "shape": [int(axis.size), int(drive.size)],
    }
    if ctx.fmt == "json":
        body = {
            "axis1": res.axis1,
            "axis2": res.axis2,
            "magnitude": mag,
            "delta_upper_hz": res.delta_upper,
            "delta_lower_hz": res.delta_lower,
        }
        return {"sweep.json": dumps(body), "sweep_meta.json": dumps(meta)}
    rows = ((a, f, m) for a, row in zip(axis, mag) for f, m in zip(drive, row))
    return {"sweep.csv": csv_text(("axis1", "axis2", "magnitude"), rows), "sweep_meta.json": dumps(meta)}


def cmd_spectrum(ctx: _Context) -> dict[str, str]:
    s = ctx.cfg.spectrum
    p = ctx.operating_point()
    f = np.linspace(s.start_hz, s.stop_hz, s.points)
    eta = efficiency_spectrum(p, f)
    summary = {"C": p.C, "eta_peak": p.eta_peak, "f_m_hz": p.f_m, "delta_op_hz": p.delta_op, "kappa_m_hz": p.kappa_m}
    return {**ctx.table("spectrum", ("freq_hz", "magnitude"), zip(f, eta)), "spectrum_summary.json": dumps(summary)}


def cmd_nms(ctx: _Context) -> dict[str, str]:
    n = ctx.cfg.nms
    op = ctx.cfg.operating_point
    p = NmsParams(n.n_m, op.g0_hz, op.kappa_o_hz, n.delta_hz)
    x = np.linspace(-n.span_hz / 2, n.span_hz / 2, n.points)
    freqs, weights = nms_modes(p)
    summary = {
        "splitting_hz": nms_splitting(p),
        "normal_mode_freqs_hz": freqs,
        "pump_weights": weights,
        "n_m": n.n_m,
        "g0_hz": op.g0_hz,
    }
    return {
        **ctx.table("nms", ("detuning_hz", "transmission"), zip(x, nms_spectrum(p, x))),
        "nms_summary.json": dumps(summary),
    }


def cmd_noise(ctx: _Context) -> dict[str, str]:
    p = ctx.receiver()
    budget = noise_budget(p, ctx.cfg.microwave.kappa_m_ext_hz)
    return {"noise.json": dumps(budget.to_dict(p))}


def cmd_optimize_coupling(ctx: _Context) -> dict[str, str]:
    p = ctx.receiver()
    bracket = ctx.cfg.optimize_coupling.bracket_hz
    best = optimize_antenna_coupling(p, bracket)
    return {"optimize_coupling.json": dumps(best.to_dict(p))}


def cmd_fit(ctx: _Context) -> dict[str, str]:
    fc = ctx.cfg.fit
    path = Path(fc.trace_csv)
    if not path.is_absolute():
        path = ctx.base_dir / path
    try:
        trace = read_trace_csv(path)
    except ValueError as exc:
        # an unreadable trace file is an input failure, like a missing one
        raise OSError(f"bad trace file: {exc}") from None
    try:
        if fc.kind == "lineshape":
            res = fit_lineshape(trace, fc.initial, fixed=fc.fixed)
        else:
            res = fit_nms(trace, fc.initial)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{ctx.source}:1: fit.initial: {exc}") from None
    return {"fit.json": dumps({"kind": fc.kind, "trace": fc.trace_csv, **res.to_dict()})}


HANDLERS = {
    "modes-optical": cmd_modes_optical,
    "modes-microwave": cmd_modes_microwave,
    "g0": cmd_g0,
    "tune": cmd_tune,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "nms": cmd_nms,
    "noise": cmd_noise,
    "optimize-coupling": cmd_optimize_coupling,
    "fit": cmd_fit,
}


# ---------------------------------------------------------------------------


def _default_threads() -> int:
    env = os.environ.get("EOCAVITY_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def _positive_int(s: str) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eocavity", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help=f"JSON config file, or {BUNDLED_CONFIG}")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=_positive_int, default=None, help="worker threads (env EOCAVITY_THREADS)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _read_config_text(arg: str) -> tuple[str, str]:
    if arg == BUNDLED_CONFIG:
        res = resources.files("eocavity") / "data" / "paper_device.json"
        return res.read_text(), str(res)
    return Path(arg).read_text(), arg


def run(command: str, config: str, out: str, threads: int | None = None, fmt: str = "csv") -> int:
    """Execute one command; returns the process exit status."""
    try:
        text, source = _read_config_text(config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text, source)
        require_sections(cfg, command, text, source)
        device = build_device(cfg, source, text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ctx = _Context(cfg, device, text, source, fmt, threads or _default_threads())
    try:
        files = HANDLERS[command](ctx)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERICAL_ERRORS as exc:
        print(f"error: {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    files["run.json"] = dumps({"command": command, "version": __version__, "config": config_echo(cfg)})
    try:
        write_artifacts(Path(out), files)
    except OSError as exc:
        print(f"error: cannot write artifacts: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.threads, args.format)


if __name__ == "__main__":
    sys.exit(main())
