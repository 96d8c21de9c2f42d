"""Bit-level model of the PE arithmetic datapath.

Every function accepts scalars or numpy arrays and returns float32 results.
The exponential is built by writing a fixed-point value straight into the
exponent/fraction fields of a binary32 word; inverse square root and division
start from magic-constant bit tricks and take one Newton step each.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np

BIAS = 127
FRACTION_BITS = 23

EXP_SAFE_RANGE: Tuple[float, float] = (-20.0, 20.0)

INV_SQRT_MAGIC = 0x5F3759DF
RECIP_MAGIC = 0x7EEF127F

# Reciprocal bit trick stays accurate only while 1/d is itself a normal
# number; these are the binary32 exponent fields for which that holds.
DIV_EXPONENT_RANGE: Tuple[int, int] = (3, 251)


def _f32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32)


def float_to_bits(x) -> np.ndarray:
    return _f32(x).view(np.uint32)


def bits_to_float(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.uint32).view(np.float32)


@dataclass(frozen=True)
class Binary32View:
    """Sign / biased exponent / fraction decomposition of a binary32 word."""

    sign: int
    ep: int
    fraction: int
    bias: int = BIAS

    def __post_init__(self) -> None:
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if not 0 <= self.ep < 256:
            raise ValueError(f"exponent field out of range: {self.ep}")
        if not 0 <= self.fraction < (1 << FRACTION_BITS):
            raise ValueError(f"fraction field out of range: {self.fraction}")

    @classmethod
    def from_bits(cls, bits: int) -> "Binary32View":
        bits = int(bits)
        if not 0 <= bits < (1 << 32):
            raise ValueError(f"not a 32-bit pattern: {bits:#x}")
        return cls((bits >> 31) & 1, (bits >> 23) & 0xFF, bits & 0x7FFFFF)

    @classmethod
    def from_float(cls, x: float) -> "Binary32View":
        return cls.from_bits(int(float_to_bits(x)))

    def to_bits(self) -> int:
        return (self.sign << 31) | (self.ep << 23) | self.fraction

    def to_float(self) -> float:
        return float(bits_to_float(np.uint32(self.to_bits())))


def decompose(bits) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized split of uint32 patterns into (sign, ep, fraction)."""
    b = np.asarray(bits, dtype=np.uint32)
    return b >> 31, (b >> 23) & 0xFF, b & 0x7FFFFF


def reassemble(sign, ep, fraction) -> np.ndarray:
    s = np.asarray(sign, dtype=np.uint32)
    e = np.asarray(ep, dtype=np.uint32)
    f = np.asarray(fraction, dtype=np.uint32)
    return (s << 31) | (e << 23) | f


@dataclass(frozen=True)
class ExpApproxParams:
    log2e: float = float(np.float32(1.0 / math.log(2.0)))
    # mean of (2^f - f) over f in [0, 1)
    avg: float = float(np.float32(1.0 / math.log(2.0) - 0.5))
    recovery_factor: float = 1.0

    def __post_init__(self) -> None:
        if not 0.94 < self.avg < 0.95:
            raise ValueError(f"avg constant {self.avg} outside (0.94, 0.95)")
        if not self.recovery_factor > 0:
            raise ValueError("recovery_factor must be positive")

    def to_json(self) -> str:
        def hexbits(v: float) -> str:
            return f"0x{int(float_to_bits(v)):08x}"

        return json.dumps(
            {
                "log2e": hexbits(self.log2e),
                "avg": hexbits(self.avg),
                "recovery_factor": hexbits(self.recovery_factor),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExpApproxParams":
        raw = json.loads(text)
        missing = {"log2e", "avg", "recovery_factor"} - set(raw)
        if missing:
            raise ValueError(f"calibration record missing keys: {sorted(missing)}")

        def unhex(key: str) -> float:
            value = raw[key]
            if not isinstance(value, str):
                raise ValueError(f"{key}: expected hex string, got {value!r}")
            return float(bits_to_float(np.uint32(int(value, 16))))

        return cls(unhex("log2e"), unhex("avg"), unhex("recovery_factor"))


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name}: non-finite input")


def approx_exp_raw(x, params: ExpApproxParams = ExpApproxParams()) -> np.ndarray:
    """Exponential by bit construction, before the recovery multiply."""
    xf = _f32(x)
    _check_finite("approx_exp", xf)
    lo, hi = EXP_SAFE_RANGE
    if np.any(xf < lo) or np.any(xf > hi):
        bad = xf[(xf < lo) | (xf > hi)].ravel()[0]
        raise ValueError(f"approx_exp: input {bad} outside safe range [{lo}, {hi}]")
    # z = log2e*x + avg + bias - 1, a real value; its fixed-point image with
    # 23 fractional bits is exactly the binary32 word we want.
    z = (
        np.float64(np.float32(params.log2e)) * xf.astype(np.float64)
        + np.float64(np.float32(params.avg))
        + (BIAS - 1)
    )
    word = np.floor(z * (1 << FRACTION_BITS)).astype(np.int64).astype(np.uint32)
    return bits_to_float(word)


def approx_exp(x, params: ExpApproxParams = ExpApproxParams()) -> np.ndarray:
    raw = approx_exp_raw(x, params)
    return (raw * np.float32(params.recovery_factor)).astype(np.float32)


def approx_inv_sqrt(x) -> np.ndarray:
    xf = _f32(x)
    _check_finite("approx_inv_sqrt", xf)
    if np.any(xf <= 0):
        raise ValueError("approx_inv_sqrt: input must be > 0")
    y = bits_to_float(np.uint32(INV_SQRT_MAGIC) - (float_to_bits(xf) >> 1))
    half = np.float32(0.5) * xf
    return (y * (np.float32(1.5) - half * y * y)).astype(np.float32)


def approx_reciprocal(d) -> np.ndarray:
    df = _f32(d)
    _check_finite("approx_div", df)
    if np.any(df <= 0):
        raise ValueError("approx_div: divisor must be > 0")
    r = bits_to_float(np.uint32(RECIP_MAGIC) - float_to_bits(df))
    return (r * (np.float32(2.0) - df * r)).astype(np.float32)


def approx_div(a, d) -> np.ndarray:
    af = _f32(a)
    _check_finite("approx_div", af)
    return (af * approx_reciprocal(d)).astype(np.float32)


def calibrate_exp_recovery(
    n_samples: int = 10_000,
    value_range: Tuple[float, float] = (-5.0, 5.0),
    seed: int = 0,
    params: ExpApproxParams = ExpApproxParams(),
) -> ExpApproxParams:
    """Set recovery_factor to the mean ratio exact/raw over uniform samples."""
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    lo, hi = value_range
    if not lo < hi:
        raise ValueError(f"empty or inverted range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, n_samples).astype(np.float32)
    raw = approx_exp_raw(x, replace(params, recovery_factor=1.0)).astype(np.float64)
    ratio = np.exp(x.astype(np.float64)) / raw
    factor = float(np.float32(ratio.mean()))
    return replace(params, recovery_factor=factor)


FLOW_STAGES: Dict[str, Tuple[int, ...]] = {
    # 1 = multiplier, 2 = adder, 3 = bit shifter
    "MAC": (1, 2),
    "EXP": (1, 2, 2, 3),
    "INVSQRT": (3, 2, 1, 2, 1),
    "DIV": (3, 1, 2),
}


@dataclass(frozen=True)
class PEConfig:
    stage_latency: int = 1
    flows: Dict[str, Tuple[int, ...]] = field(default_factory=lambda: dict(FLOW_STAGES))

    def __post_init__(self) -> None:
        if self.stage_latency < 1:
            raise ValueError("stage_latency must be >= 1")


def pe_flow_latency(kind: str, config: PEConfig = PEConfig()) -> int:
    try:
        stages = config.flows[kind]
    except KeyError:
        raise ValueError(
            f"unknown operation kind {kind!r}; expected one of {sorted(config.flows)}"
        ) from None
    return len(stages) * config.stage_latency


_DEFAULT_CALIBRATION: ExpApproxParams | None = None


def default_calibration() -> ExpApproxParams:
    """Calibrated parameters with the default range and seed, computed once."""
    global _DEFAULT_CALIBRATION
    if _DEFAULT_CALIBRATION is None:
        _DEFAULT_CALIBRATION = calibrate_exp_recovery()
    return _DEFAULT_CALIBRATION
