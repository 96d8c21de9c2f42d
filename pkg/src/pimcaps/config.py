"""Benchmark configuration files.

Flat ``key = value`` text, one entry per line, ``#`` starts a comment.
Quantities with a physical unit must carry it (``host_latency = 4.3 ms``,
``vault_freq = 312.5 MHz``). A JSON object with the same keys is accepted
when the file ends in ``.json``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .capsnet import NetworkConfig

BUNDLED = (
    "caps-mn1", "caps-mn2", "caps-mn3", "caps-cf1", "caps-cf2", "caps-cf3",
    "caps-en1", "caps-en2", "caps-en3", "caps-sv1", "caps-sv2", "caps-sv3",
)

_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}

_INT_KEYS = {
    "batch_size": "batch_size",
    "low_caps": "low_caps",
    "high_caps": "high_caps",
    "low_dim": "low_dim",
    "high_dim": "high_dim",
    "iterations": "iterations",
}
_KNOWN = set(_INT_KEYS) | {"name", "host_latency", "vault_freq", "scenarios", "n_batches", "output_dir"}


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "", line: Optional[int] = None):
        self.source, self.line = source, line
        where = source + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class BenchmarkConfig:
    name: str
    network: NetworkConfig
    host_latency_s: Optional[float] = None  # None: roofline estimate
    vault_freq: float = 312.5e6
    scenarios: Tuple[str, ...] = ("BaselineModel", "PIMCapsNet")
    n_batches: int = 1
    output_dir: Optional[str] = None
    source: str = ""

    def to_dict(self) -> Dict:
        n = self.network
        return {
            "name": self.name, "batch_size": n.batch_size, "low_caps": n.low_caps,
            "high_caps": n.high_caps, "low_dim": n.low_dim, "high_dim": n.high_dim,
            "iterations": n.iterations, "host_latency_s": self.host_latency_s,
            "vault_freq": self.vault_freq, "scenarios": list(self.scenarios),
            "n_batches": self.n_batches,
        }


def _quantity(raw: str, units: Dict[str, float], what: str) -> float:
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([A-Za-z]+)\s*", str(raw))
    if not m:
        raise ValueError(f"{what} needs a number and a unit ({', '.join(units)}), got {raw!r}")
    unit = m.group(2).lower()
    if unit not in units:
        raise ValueError(f"unknown {what} unit {m.group(2)!r}; expected one of {', '.join(units)}")
    return float(m.group(1)) * units[unit]


def _as_int(raw, key: str) -> int:
    if isinstance(raw, bool):
        raise ValueError(f"{key} must be an integer")
    if isinstance(raw, int):
        return raw
    s = str(raw).strip()
    if not re.fullmatch(r"[-+]?\d+", s):
        raise ValueError(f"{key} must be an integer, got {raw!r}")
    return int(s)


def _build(entries: Dict[str, Tuple[object, Optional[int]]], source: str) -> BenchmarkConfig:
    def fail(msg: str, key: Optional[str] = None):
        line = entries[key][1] if key in entries else None
        raise ConfigError(msg, source, line)

    for key in entries:
        if key not in _KNOWN:
            fail(f"unknown key {key!r}", key)
    if "name" not in entries:
        fail("missing required key 'name'")
    for key in ("batch_size", "low_caps", "high_caps"):
        if key not in entries:
            fail(f"missing required key {key!r}")

    net_kwargs = {}
    for key, arg in _INT_KEYS.items():
        if key in entries:
            try:
                net_kwargs[arg] = _as_int(entries[key][0], key)
            except ValueError as e:
                fail(str(e), key)
    try:
        network = NetworkConfig(**net_kwargs)
    except ValueError as e:
        bad = next((k for k in _INT_KEYS if k in str(e)), None)
        fail(str(e), bad)

    kwargs = {"name": str(entries["name"][0]).strip(), "network": network, "source": source}
    if not kwargs["name"]:
        fail("name must not be empty", "name")
    try:
        if "host_latency" in entries:
            kwargs["host_latency_s"] = _quantity(entries["host_latency"][0], _TIME_UNITS, "time")
            if kwargs["host_latency_s"] < 0:
                raise ValueError("host_latency must be >= 0")
    except ValueError as e:
        fail(str(e), "host_latency")
    try:
        if "vault_freq" in entries:
            kwargs["vault_freq"] = _quantity(entries["vault_freq"][0], _FREQ_UNITS, "frequency")
            if kwargs["vault_freq"] <= 0:
                raise ValueError("vault_freq must be positive")
    except ValueError as e:
        fail(str(e), "vault_freq")
    if "scenarios" in entries:
        raw = entries["scenarios"][0]
        items = raw if isinstance(raw, list) else str(raw).split(",")
        names = tuple(str(s).strip() for s in items if str(s).strip())
        from .sim.engine import Scenario

        try:
            kwargs["scenarios"] = tuple(Scenario.parse(s).value for s in names)
        except ValueError as e:
            fail(str(e), "scenarios")
        if not names:
            fail("scenarios must not be empty", "scenarios")
    if "n_batches" in entries:
        try:
            n = _as_int(entries["n_batches"][0], "n_batches")
        except ValueError as e:
            fail(str(e), "n_batches")
        if n < 1:
            fail("n_batches must be >= 1", "n_batches")
        kwargs["n_batches"] = n
    if "output_dir" in entries:
        kwargs["output_dir"] = str(entries["output_dir"][0]).strip()
    return BenchmarkConfig(**kwargs)


def parse_text(text: str, source: str = "<string>") -> BenchmarkConfig:
    entries: Dict[str, Tuple[object, Optional[int]]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", source, lineno)
        key, value = (x.strip() for x in body.split("=", 1))
        if not key:
            raise ConfigError("empty key", source, lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first on line {entries[key][1]})", source, lineno)
        entries[key] = (value, lineno)
    return _build(entries, source)


def parse_json(text: str, source: str = "<json>") -> BenchmarkConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", source, e.lineno) from None
    if not isinstance(obj, dict):
        raise ConfigError("top level must be an object", source, 1)
    # JSON keys carry no line numbers of their own; report the key's line
    lines = text.splitlines()

    def line_of(key: str) -> Optional[int]:
        for n, line in enumerate(lines, 1):
            if f'"{key}"' in line:
                return n
        return None

    return _build({k: (v, line_of(k)) for k, v in obj.items()}, source)


def load_config(path: Union[str, Path]) -> BenchmarkConfig:
    """Read a config file, or a bundled benchmark by name (e.g. ``caps-mn1``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled(str(path))
    try:
        text = p.read_text()
    except OSError as e:
        raise FileNotFoundError(f"cannot read config {path}: {e.strerror}") from None
    if p.suffix.lower() == ".json":
        return parse_json(text, str(p))
    return parse_text(text, str(p))


def bundled(name: str) -> BenchmarkConfig:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled config named {name!r}")
    text = resources.files("pimcaps").joinpath("configs", f"{name}.cfg").read_text()
    return parse_text(text, f"{name}.cfg")


def all_bundled() -> List[BenchmarkConfig]:
    return [bundled(n) for n in BUNDLED]
