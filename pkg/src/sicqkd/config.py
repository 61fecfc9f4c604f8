"""Line-oriented ``key = value [unit]`` parameter files.

Every key is optional; missing keys keep the built-in defaults.  Values are
SI unless a unit suffix is given, and a suffix must match the dimension of
the key (``tau_pi = 10 ns`` is fine, ``tau_pi = 10 km`` is not).  ``#`` starts
a comment.

The heralded-write efficiency ``eta_w`` is taken as given and already folds
in the 0.25 write ceiling of the spin-photon map.  The two-photon BSM ceiling
of the model is therefore 0.25**2 = 6.25%.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .channel import DetectorSpec, NodeOptics
from .params import DeviceParams, LinkConfig
from .protocols import ProtocolConfig

_UNITS = {
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "rate": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "loss": {"dB": 1.0},
    "attenuation": {"dB/km": 1.0},
    "length": {"km": 1.0},
    "ratio": {},
    "flag": {},
}
# how a quantity is written back out
_RENDER_UNIT = {"time": "s", "rate": "Hz", "loss": "dB", "attenuation": "dB/km"}

# key -> (record, field, dimension)
KEYS = {
    "t1": ("device", "t1", "time"),
    "t2": ("device", "t2", "time"),
    "t1n": ("device", "t1n", "time"),
    "t2n": ("device", "t2n", "time"),
    "t_en": ("device", "t_en", "time"),
    "tau_r": ("device", "tau_r", "time"),
    "tau_pi": ("device", "tau_pi", "time"),
    "tau_init": ("device", "tau_init", "time"),
    "eta_up": ("device", "eta_up", "ratio"),
    "eta_down": ("device", "eta_down", "ratio"),
    "gamma_linewidth": ("device", "gamma_linewidth", "rate"),
    "tau_p": ("device", "tau_p", "time"),
    "eta_w": ("device", "eta_w", "ratio"),
    "eta_r0": ("device", "eta_r0", "ratio"),
    "memory_cutoff": ("device", "memory_cutoff", "time"),
    "pipelining": ("device", "pipelining", "flag"),
    "eta_spd": ("detector", "efficiency", "ratio"),
    "t_spd": ("detector", "timing_jitter", "time"),
    "gamma_dc": ("detector", "dark_rate", "rate"),
    "gamma_bg": ("detector", "background_rate", "rate"),
    "eta_oc": ("node", "circulator_loss", "loss"),
    "eta_os": ("node", "switch_loss", "loss"),
    "t_os": ("node", "switch_rise_fall", "time"),
    "dt_os": ("node", "switch_min_pulse", "time"),
    "alpha_ob": ("link", "alpha_ob", "attenuation"),
    "e_a": ("link", "e_a", "ratio"),
    "e_b": ("link", "e_b", "ratio"),
    "f": ("link", "f", "ratio"),
    "source_rate": ("protocol", "source_rate", "rate"),
}

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*(\S+)?\s*$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """What to compute and where to write it."""

    protocol: str = "all"
    config_path: Optional[str] = None
    dmin: float = 0.0
    dmax: float = 700.0
    dstep: float = 1.0
    tau_pi: tuple = ()  # empty: value from the parameter file
    t2: tuple = ()
    mux: tuple = (1, 1)
    rounds: int = 100_000
    seeds: tuple = (1,)
    out: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.protocol not in ("bb84", "mdi", "ma_mdi", "all"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if not self.dstep > 0:
            raise ConfigError("distance step must be positive")
        if not 0 <= self.dmin <= self.dmax:
            raise ConfigError("need 0 <= dmin <= dmax")
        if len(self.mux) != 2 or min(self.mux) < 1:
            raise ConfigError("multiplex counts must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if any(v <= 0 for v in self.tau_pi + self.t2):
            raise ConfigError("tau_pi and t2 values must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def distances(self) -> list:
        n = int(math.floor((self.dmax - self.dmin) / self.dstep + 1e-9))
        return [round(self.dmin + i * self.dstep, 9) for i in range(n + 1)]


def _parse_value(raw: str, unit: Optional[str], dim: str, line: int, key: str):
    if dim == "flag":
        if unit is not None:
            raise ConfigError(f"unexpected unit {unit!r}", line, key)
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}", line, key)
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"malformed number {raw!r}", line, key) from None
    if math.isnan(value):
        raise ConfigError("value is not a number", line, key)
    if unit is not None:
        scale = _UNITS[dim].get(unit)
        if scale is None:
            raise ConfigError(f"unit {unit!r} does not fit this quantity", line, key)
        value *= scale
    if value < 0:
        raise ConfigError("value must be non-negative", line, key)
    return value


def parse_config(text: str) -> ProtocolConfig:
    """Parse a parameter file into the device and link records."""
    groups = {"device": {}, "detector": {}, "node": {}, "link": {}, "protocol": {}}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _LINE.match(body)
        if m is None:
            raise ConfigError(f"cannot parse {body!r}", lineno)
        key, raw, unit = m.groups()
        if key not in KEYS:
            raise ConfigError("unknown key", lineno, key)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        group, name, dim = KEYS[key]
        groups[group][name] = _parse_value(raw, unit, dim, lineno, key)
    try:
        link_kw = dict(groups["link"])
        link_kw["detector"] = DetectorSpec(**groups["detector"])
        link_kw["node"] = NodeOptics(**groups["node"])
        cfg = ProtocolConfig(DeviceParams(**groups["device"]), LinkConfig(**link_kw),
                             **groups["protocol"])
    except ValueError as exc:
        # blame the line whose field the record complained about, if any
        msg = str(exc)
        for key, lineno in seen.items():
            if re.search(rf"\b{KEYS[key][1]}\b", msg):
                raise ConfigError(msg, lineno, key) from None
        raise ConfigError(msg) from None
    check_switch_timing(cfg)
    return cfg


def check_switch_timing(cfg: ProtocolConfig) -> None:
    """Warn when the optical switch cannot toggle within one round."""
    if cfg.device.round_time < cfg.link.node.switch_min_pulse:
        warnings.warn(
            f"round time {cfg.device.round_time:.3g} s is shorter than the switch's "
            f"minimum pulse width {cfg.link.node.switch_min_pulse:.3g} s",
            stacklevel=2)


def effective_parameters(cfg: ProtocolConfig) -> dict:
    """Every config key with its effective value (None where derived)."""
    records = {"device": cfg.device, "detector": cfg.link.detector,
               "node": cfg.link.node, "link": cfg.link, "protocol": cfg}
    return {key: getattr(records[group], name) for key, (group, name, _) in KEYS.items()}


def render_config(cfg: ProtocolConfig) -> str:
    """Inverse of :func:`parse_config`; omits keys whose value is derived."""
    lines = []
    for key, value in effective_parameters(cfg).items():
        if value is None:
            continue
        dim = KEYS[key][2]
        if dim == "flag":
            lines.append(f"{key} = {'true' if value else 'false'}")
            continue
        unit = _RENDER_UNIT.get(dim)
        lines.append(f"{key} = {value!r}" + (f" {unit}" if unit else ""))
    return "\n".join(lines) + "\n"


def load_config(path: Optional[str]) -> ProtocolConfig:
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def parse_list(text: str, dim: str = "time") -> tuple:
    """Comma-separated quantities such as ``10ns,25ns,100ns``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        m = re.fullmatch(r"([-+0-9.eE]+)\s*([A-Za-z/]+)?", item)
        if m is None:
            raise ConfigError(f"malformed list entry {item!r}")
        out.append(_parse_value(m.group(1), m.group(2), dim, None, None))
    if not out:
        raise ConfigError("empty list")
    return tuple(out)


def parse_mux(text: str) -> tuple:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if m is None:
        raise ConfigError(f"multiplexing must look like 88x2, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def parse_seeds(text: str) -> tuple:
    """``1,2,5`` or ranges such as ``1-10``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part)
        if m is None:
            raise ConfigError(f"malformed seed entry {part!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        if hi < lo:
            raise ConfigError(f"empty seed range {part!r}")
        seeds.extend(range(lo, hi + 1))
    if not seeds:
        raise ConfigError("seed list is empty")
    return tuple(seeds)


def sweep_grid(cfg: ProtocolConfig, tau_pi: Sequence[float], t2: Sequence[float]) -> list:
    """Device variants for the cross product of tau_pi and t2 lists."""
    tau_pi = tuple(tau_pi) or (cfg.device.tau_pi,)
    t2 = tuple(t2) or (cfg.device.t2,)
    return [((tp, tt), cfg.replace(tau_pi=tp, t2=tt)) for tp in tau_pi for tt in t2]
