"""Run configuration: a JSON document validated against a strict schema.

Units: lengths in m, frequencies and rates in Hz, powers in W, temperatures
in K. Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import ARCoating, DeviceFixture, Material, SlabGeometry

Positive = Field(gt=0)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``path:line:``."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MaterialCfg(_Strict):
    n_opt: float = Field(gt=1)
    eps_x: float = Field(ge=1)
    eps_y: float = Field(ge=1)
    eps_z: float = Field(ge=1)
    r33_m_per_v: float = Field(ge=0)
    name: str = ""


class MirrorsCfg(_Strict):
    back_T: float = Field(gt=0, lt=1)
    front_T: float = Field(gt=0, lt=1)
    input_side: Literal["back", "front"] = "back"


class ARCfg(_Strict):
    index: float = Field(ge=1)
    thickness_m: float = Field(ge=0)


class DeviceCfg(_Strict):
    slab_m: tuple[float, float, float]
    material: MaterialCfg
    mirrors: MirrorsCfg
    excess_loss: float = Field(ge=0, lt=1)
    ar: Optional[ARCfg] = None
    l_air_m: Optional[float] = Field(default=None, gt=0)
    beam_offset_m: Optional[tuple[float, float]] = None

    @field_validator("slab_m")
    @classmethod
    def _positive_slab(cls, v):
        if min(v) <= 0:
            raise ValueError("slab dimensions must be > 0")
        return v


class LaserCfg(_Strict):
    wavelength_m: float = Positive
    power_w: float = Field(ge=0)
    mode_match: float = Field(gt=0, le=1)


Indices = tuple[int, int, int]


class MicrowaveCfg(_Strict):
    modes: list[Indices] = Field(min_length=1)
    target: Indices
    freq_hz: Optional[float] = Field(default=None, gt=0)
    q_int: float = Positive
    kappa_m_ext_hz: float = Field(ge=0)
    wall_model: Literal["dwm", "pmc"] = "dwm"
    eps_eff: Optional[float] = Field(default=None, ge=1)

    @field_validator("modes", "target")
    @classmethod
    def _indices_positive(cls, v):
        items = v if isinstance(v, list) else [v]
        for idx in items:
            if min(idx) < 1:
                raise ValueError(f"mode indices must be >= 1, got {list(idx)}")
        return v


class OperatingPointCfg(_Strict):
    """Measured or assumed operating point for budget-style commands."""

    n_p: float = Field(ge=0)
    g0_hz: float = Field(ge=0)
    kappa_o_hz: float = Positive
    kappa_o_ext_hz: float = Positive
    f_m_hz: float = Positive
    delta_op_hz: Optional[float] = Field(default=None, gt=0)
    temperature_k: float = Positive


class OpticalModesCfg(_Strict):
    half_width_fsr: float = Field(default=3.0, gt=0)


class MicrowaveTableCfg(_Strict):
    l_max: int = Field(default=2, ge=1)
    m_max: int = Field(default=4, ge=1)
    p_max: int = Field(default=3, ge=1)


class SweepCfg(_Strict):
    axis: Literal["gap", "wavelength"] = "gap"
    start: Optional[float] = Field(default=None, gt=0)
    stop: Optional[float] = Field(default=None, gt=0)
    span: float = Field(default=3e-3, gt=0)
    points: int = Field(default=81, ge=1)
    drive_start_hz: float = Positive
    drive_stop_hz: float = Positive
    drive_points: int = Field(default=2001, ge=2)
    db: bool = False


class SpectrumCfg(_Strict):
    start_hz: float = Positive
    stop_hz: float = Positive
    points: int = Field(default=2001, ge=8)


class NmsCfg(_Strict):
    n_m: float = Field(ge=0)
    delta_hz: float = 0.0
    span_hz: float = Field(default=400e6, gt=0)
    points: int = Field(default=2001, ge=8)


class CouplingSearchCfg(_Strict):
    bracket_hz: Optional[tuple[float, float]] = None


class FitCfg(_Strict):
    kind: Literal["lineshape", "nms"] = "lineshape"
    trace_csv: str
    initial: dict[str, float]
    fixed: list[str] = []


class RunConfig(_Strict):
    device: DeviceCfg
    laser: LaserCfg
    microwave: MicrowaveCfg
    operating_point: Optional[OperatingPointCfg] = None
    optical_modes: OpticalModesCfg = OpticalModesCfg()
    microwave_table: MicrowaveTableCfg = MicrowaveTableCfg()
    sweep: Optional[SweepCfg] = None
    spectrum: Optional[SpectrumCfg] = None
    nms: Optional[NmsCfg] = None
    optimize_coupling: CouplingSearchCfg = CouplingSearchCfg()
    fit: Optional[FitCfg] = None


# sections each command needs beyond device, laser and microwave
REQUIRED_SECTIONS = {
    "modes-optical": (),
    "modes-microwave": (),
    "g0": (),
    "tune": (),
    "sweep": ("sweep",),
    "spectrum": ("spectrum", "operating_point"),
    "nms": ("nms", "operating_point"),
    "noise": ("operating_point",),
    "optimize-coupling": ("operating_point",),
    "fit": ("fit",),
}


def _line_of(text: str, loc: tuple) -> int:
    """Best-effort line number of the JSON node at ``loc``.

    Walks the keys in document order; list indices are skipped, so the
    line of the innermost named key is reported.
    """
    pos = 0
    for part in loc:
        if isinstance(part, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(part))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            where = ".".join(str(p) for p in loc) or "<root>"
            msgs.append(f"{source}:{_line_of(text, loc)}: {where}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from None


def load_config(path: str | Path) -> tuple[RunConfig, str]:
    """Read and validate a config file. Returns the model and the raw text.
    OSError propagates unchanged."""
    path = Path(path)
    text = path.read_text()
    return parse_config(text, str(path)), text


def require_sections(cfg: RunConfig, command: str, text: str, source: str) -> None:
    missing = [s for s in REQUIRED_SECTIONS[command] if getattr(cfg, s) is None]
    if missing:
        raise ConfigError(
            f"{source}:1: command {command!r} needs section(s) {', '.join(missing)}"
        )


def build_device(cfg: RunConfig, source: str = "<config>", text: str = "") -> DeviceFixture:
    """DeviceFixture from a validated config; domain errors become ConfigError."""
    d, las, mw = cfg.device, cfg.laser, cfg.microwave
    try:
        mat = Material(
            n_opt=d.material.n_opt,
            eps_x=d.material.eps_x,
            eps_y=d.material.eps_y,
            eps_z=d.material.eps_z,
            r33=d.material.r33_m_per_v,
            name=d.material.name,
        )
        ar = None if d.ar is None else ARCoating(d.ar.index, d.ar.thickness_m)
        return DeviceFixture(
            material=mat,
            slab=SlabGeometry(*d.slab_m),
            back_mirror_T=d.mirrors.back_T,
            front_mirror_T=d.mirrors.front_T,
            excess_loss=d.excess_loss,
            ar=ar,
            wavelength=las.wavelength_m,
            input_side=d.mirrors.input_side,
            pump_power=las.power_w,
            mode_match=las.mode_match,
            q_int=mw.q_int,
            kappa_m_ext=mw.kappa_m_ext_hz,
            microwave_modes=tuple(tuple(m) for m in mw.modes),
            target_mode=tuple(mw.target),
            wall_model=mw.wall_model,
            eps_eff=mw.eps_eff,
            beam_offset=None if d.beam_offset_m is None else tuple(d.beam_offset_m),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}:{_line_of(text, ('device',))}: device: {exc}") from None


def config_echo(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")
