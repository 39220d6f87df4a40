"""Run configuration: durations, defaults, and ``key = value`` config files."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import InvalidParams

_DURATION = re.compile(r"(\d+(?:\.\d+)?)([smhd]?)")
_UNITS = {"": 1.0, "s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}


def parse_duration(text) -> float:
    """``90``, ``90s``, ``15m``, ``7h30m``, ``1.5h`` -> seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace(" ", "")
    if not s:
        raise ValueError("empty duration")
    total, pos = 0.0, 0
    while pos < len(s):
        m = _DURATION.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad duration {text!r}")
        # a bare number is only allowed as the whole string
        if not m.group(2) and (pos or m.end() != len(s)):
            raise ValueError(f"bad duration {text!r}")
        total += float(m.group(1)) * _UNITS[m.group(2)]
        pos = m.end()
    return total


_SIZE = re.compile(r"(\d+)\s*([kmg]i?b?|b)?", re.I)
_SIZE_UNITS = {"": 1, "b": 1, "k": 10**3, "m": 10**6, "g": 10**9,
               "ki": 2**10, "mi": 2**20, "gi": 2**30}


def parse_size(text) -> int:
    """``0``, ``1KiB``, ``10MB``, ``512k`` -> bytes (decimal unless ``i``)."""
    if isinstance(text, int):
        return text
    m = _SIZE.fullmatch(str(text).strip())
    if not m:
        raise ValueError(f"bad size {text!r}")
    unit = (m.group(2) or "").lower()
    if unit != "b":
        unit = unit.rstrip("b")
    return int(m.group(1)) * _SIZE_UNITS[unit]


def resolve_threshold(n: int, k: int | None = None, percent: float | None = None) -> int:
    if k is not None:
        return k
    if percent is None:
        raise InvalidParams("need k or a threshold percent")
    if not 0 < percent <= 100:
        raise InvalidParams("threshold percent must be in (0, 100]")
    return math.ceil(round(n * percent / 100, 9))


@dataclass
class RunConfig:
    mode: str = "hybrid"
    # None picks the mode's default (50 at 90% for hybrid, 10 of 7 for vanish)
    n: int | None = None
    k: int | None = None
    threshold: float = 90.0
    ttl: float = 2 * 3600.0
    read_once: bool = False
    nodes: int = 200
    replication: int = 20
    replication_interval: float = 1800.0
    dht_ttl: float = 8 * 3600.0
    join_rate: float = 0.0
    leave_rate: float = 0.0
    hop_interval: float = 180.0
    time_scale: float = 0.0
    seed: int = 0
    state: str | None = None

    def __post_init__(self):
        if not 0 < self.threshold <= 100:
            raise InvalidParams("threshold percent must be in (0, 100]")

    def sharing_for(self, mode: str) -> tuple[int, int]:
        """(n, k) for ``mode``, filling in that mode's defaults."""
        if self.n is None:
            if mode == "vanish":
                return (10, 7) if self.k is None else (10, self.k)
            n = 50
        else:
            n = self.n
        return n, resolve_threshold(n, self.k, self.threshold)

    def merged(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_DURATION_KEYS = {"ttl", "replication_interval", "dht_ttl", "hop_interval"}


def _coerce(name: str, kind, raw: str):
    if name in _DURATION_KEYS:
        return parse_duration(raw)
    kind = str(kind)
    if "bool" in kind:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines.  ``#`` starts a comment; dashes in keys become underscores."""
    known = {f.name: f.type for f in fields(RunConfig)}
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, known[key], value.strip())
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def load_config(path) -> RunConfig:
    return RunConfig(**parse_config_text(Path(path).read_text(encoding="utf-8")))
