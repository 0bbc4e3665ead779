"""Run configuration: INI-style ``key = value`` file with bracketed sections.

Keys mirror the pendulum parameter table verbatim (``u_min``, ``P_max``,
``N_c`` ...). Unknown sections or keys are rejected so that a typo in a safety
parameter cannot silently fall back to a default.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .params import PendulumParams
from .sets import GridSpec
from .sim import DEFAULT_INITIAL_STATES, SimConfig

FILTER_CHOICES = ("backup", "hocbf", "both")
IGNORED_SECTIONS = ("manifest",)

_PENDULUM_KEYS = {f.name: f.type for f in dataclasses.fields(PendulumParams)}
_SIM_KEYS = ("dt", "t_end", "substeps", "initial_states", "filter")
_SETS_KEYS = ("grid", "x1_range", "x2_range")


@dataclass(frozen=True)
class RunConfig:
    params: PendulumParams = field(default_factory=PendulumParams)
    dt: float = 0.01
    t_end: float = 20.0
    substeps: int = 10
    initial_states: tuple = DEFAULT_INITIAL_STATES
    filter: str = "backup"
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.filter not in FILTER_CHOICES:
            raise ConfigError(f"filter must be one of {FILTER_CHOICES}, got {self.filter!r}")
        p = self.params
        if not (p.T > 0 and p.N_c >= 2 and p.K > 0 and p.X2 > 0 and p.phi_max > 0 and p.gamma > 0):
            raise ConfigError("T, K, X2, phi_max, gamma must be positive and N_c >= 2")
        if not (p.alpha_gain > 0 and p.alpha_b_gain > 0 and p.hocbf_alpha_gain > 0):
            raise ConfigError("class-K gains must be positive")
        if p.flow_mode not in ("analytic", "rk4"):
            raise ConfigError(f"flow_mode must be 'analytic' or 'rk4', got {p.flow_mode!r}")
        self.sim_config("backup")  # validates dt, t_end, initial states

    def filters(self) -> tuple[str, ...]:
        return ("backup", "hocbf") if self.filter == "both" else (self.filter,)

    def sim_config(self, filter_choice: str) -> SimConfig:
        return SimConfig(dt=self.dt, t_end=self.t_end, substeps=self.substeps,
                         initial_states=self.initial_states, filter_choice=filter_choice,
                         params=self.params)


def _pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}")
    return parts[0], parts[1]


def parse_grid(text: str) -> tuple[int, int]:
    try:
        n1, n2 = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like N1xN2, got {text!r}") from None
    return n1, n2


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    allowed = {"pendulum": set(_PENDULUM_KEYS), "sim": set(_SIM_KEYS), "sets": set(_SETS_KEYS)}
    unknown = [f"[{s}]" for s in cp.sections() if s not in allowed and s not in IGNORED_SECTIONS]
    for section, keys in allowed.items():
        if cp.has_section(section):
            unknown += [f"{section}.{k}" for k in cp[section] if k not in keys]
    if unknown:
        raise ConfigError(f"{source}: unknown config entries: {', '.join(unknown)}")

    try:
        pend = {}
        if cp.has_section("pendulum"):
            for key, raw in cp["pendulum"].items():
                kind = _PENDULUM_KEYS[key]
                try:
                    pend[key] = int(raw) if kind == "int" else raw.strip() if kind == "str" else float(raw)
                except ValueError:
                    raise ConfigError(f"{source}: pendulum.{key}: cannot parse {raw!r} as {kind}") from None
        kwargs: dict = {"params": PendulumParams(**pend)}
        if cp.has_section("sim"):
            s = cp["sim"]
            if "dt" in s:
                kwargs["dt"] = float(s["dt"])
            if "t_end" in s:
                kwargs["t_end"] = float(s["t_end"])
            if "substeps" in s:
                kwargs["substeps"] = int(s["substeps"])
            if "initial_states" in s:
                kwargs["initial_states"] = tuple(_pair(chunk) for chunk in s["initial_states"].split(";")
                                                 if chunk.strip())
            if "filter" in s:
                kwargs["filter"] = s["filter"].strip()
        if cp.has_section("sets"):
            s = cp["sets"]
            grid = {}
            if "grid" in s:
                grid["n1"], grid["n2"] = parse_grid(s["grid"])
            if "x1_range" in s:
                grid["x1_range"] = _pair(s["x1_range"])
            if "x2_range" in s:
                grid["x2_range"] = _pair(s["x2_range"])
            kwargs["grid"] = GridSpec(**grid)
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def dump_config(cfg: RunConfig) -> str:
    """Serialise with ``repr`` floats so that parsing the output is lossless."""
    lines = ["[pendulum]"]
    for f in dataclasses.fields(PendulumParams):
        lines.append(f"{f.name} = {getattr(cfg.params, f.name)!r}".replace("'", ""))
    states = "; ".join(f"{a!r}, {b!r}" for a, b in cfg.initial_states)
    lines += ["", "[sim]", f"dt = {cfg.dt!r}", f"t_end = {cfg.t_end!r}", f"substeps = {cfg.substeps}",
              f"initial_states = {states}", f"filter = {cfg.filter}"]
    g = cfg.grid
    lines += ["", "[sets]", f"grid = {g.n1}x{g.n2}",
              f"x1_range = {g.x1_range[0]!r}, {g.x1_range[1]!r}",
              f"x2_range = {g.x2_range[0]!r}, {g.x2_range[1]!r}"]
    return "\n".join(lines) + "\n"
