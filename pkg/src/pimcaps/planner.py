"""Closed-form cost model for spreading the routing procedure over vaults.

For each candidate distribution dimension (B = batch, L = low-level capsules,
H = high-level capsules) the model gives E, the operation count of the busiest
vault, and M, the bytes exchanged between vaults. The execution score
S = 1/(alpha*E + beta*M) ranks the candidates.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Iterable, List, Tuple

from .capsnet import NetworkConfig

DIMS: Tuple[str, ...] = ("B", "L", "H")

DEFAULT_FREQ_HZ = 312.5e6
DEFAULT_PES_PER_VAULT = 16
DEFAULT_INTERVAULT_BW = 512e9  # bytes/s
DEFAULT_SWEEP_HZ: Tuple[float, ...] = (312.5e6, 625e6, 937.5e6)

# Which routing stage may be split along which dimension.
_PARALLEL: Dict[str, FrozenSet[str]] = {
    "Eq1": frozenset("BLH"),
    "Eq2": frozenset("BH"),
    "Eq3": frozenset("BH"),
    "Eq4": frozenset("LH"),
    "Eq5": frozenset("L"),
}


def parallelizable_dims(eq_id: str) -> FrozenSet[str]:
    try:
        return _PARALLEL[eq_id]
    except KeyError:
        raise ValueError(f"unknown stage {eq_id!r}; expected Eq1..Eq5") from None


def _check_dim(dim: str) -> None:
    if dim not in DIMS:
        raise ValueError(f"unknown distribution dimension {dim!r}; expected B, L or H")


@dataclass(frozen=True)
class CostParams:
    n_vault: int = 32
    alpha: float = 1.0 / (DEFAULT_PES_PER_VAULT * DEFAULT_FREQ_HZ)
    beta: float = 1.0 / DEFAULT_INTERVAULT_BW
    size_b: int = 4
    size_c: int = 4
    size_s: int = 4
    size_v: int = 4
    size_pkt: int = 16

    def __post_init__(self) -> None:
        if self.n_vault < 1:
            raise ValueError("n_vault must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        for name in ("size_b", "size_c", "size_s", "size_v", "size_pkt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_hardware(
        cls,
        freq_hz: float = DEFAULT_FREQ_HZ,
        pes_per_vault: int = DEFAULT_PES_PER_VAULT,
        intervault_bw: float = DEFAULT_INTERVAULT_BW,
        n_vault: int = 32,
    ) -> "CostParams":
        if freq_hz <= 0:
            raise ValueError(f"frequency must be positive, got {freq_hz}")
        return cls(
            n_vault=n_vault,
            alpha=1.0 / (pes_per_vault * freq_hz),
            beta=1.0 / intervault_bw,
        )


def _log2_ceil(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


def compute_E(dim: str, cfg: NetworkConfig, p: CostParams) -> float:
    _check_dim(dim)
    V = p.n_vault
    NB, NL, NH, CL, CH, I = cfg.N_B, cfg.N_L, cfg.N_H, cfg.C_L, cfg.C_H, cfg.I
    if dim == "B":
        n = math.ceil(NB / V)
        per_iter = (
            n * NH * CH * (2 * NL - 1)
            + n * NH * (3 * CH + 19)
            + n * NL * NH * (2 * CH - 1)
            + _log2_ceil(V) / V
            + 4 * CH
        )
        return float(n * NL * NH * CH * (2 * CL - 1) + I * per_iter)
    if dim == "L":
        return float(NB * math.ceil(NL / V) * NH * (2 * I * (2 * CH - 1) + CH * (2 * CL - 1)))
    return float(NB * NL * math.ceil(NH / V) * CH * (2 * CL - 1 + 2 * I))


def compute_E_B_simplified(cfg: NetworkConfig, p: CostParams) -> float:
    n = math.ceil(cfg.N_B / p.n_vault)
    return float(n * cfg.N_L * cfg.N_H * ((4 * cfg.I - 1) * cfg.C_H + 2 * cfg.C_L * cfg.C_H - cfg.I))


def compute_M(dim: str, cfg: NetworkConfig, p: CostParams) -> float:
    _check_dim(dim)
    V, pkt = p.n_vault, p.size_pkt
    NB, NL, NH, I = cfg.N_B, cfg.N_L, cfg.N_H, cfg.I
    if dim == "B":
        return float(I * ((V - 1) * NL * NH * (p.size_b + pkt) + (V - 1) * NL * NH * (p.size_c + pkt)))
    if dim == "L":
        return float(I * (NB * (V - 1) * NH * (p.size_s + pkt) + NB * (V - 1) * NH * (p.size_v + pkt)))
    return float(I * ((V - 1) * NL * (p.size_b + pkt) + NL * (p.size_c + pkt)))


def execution_score(E: float, M: float, p: CostParams) -> float:
    if E < 0 or M < 0:
        raise ValueError("E and M must be non-negative")
    cost = p.alpha * E + p.beta * M
    if cost == 0:
        raise ValueError("alpha*E + beta*M is zero; score undefined")
    return 1.0 / cost


@dataclass(frozen=True)
class DimCost:
    dim: str
    E: float
    M: float
    S: float


@dataclass(frozen=True)
class CostReport:
    costs: Tuple[DimCost, ...]
    selected: str

    def by_dim(self) -> Dict[str, DimCost]:
        return {c.dim: c for c in self.costs}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dim", "E", "M", "S", "selected"])
        for c in self.costs:
            writer.writerow([c.dim, repr(c.E), repr(c.M), repr(c.S), int(c.dim == self.selected)])
        return buf.getvalue()


def select_dimension(cfg: NetworkConfig, p: CostParams) -> CostReport:
    costs = []
    for dim in DIMS:
        E = compute_E(dim, cfg, p)
        M = compute_M(dim, cfg, p)
        costs.append(DimCost(dim, E, M, execution_score(E, M, p)))
    # strict '>' keeps the earlier dimension on ties: B, then L, then H
    best = costs[0]
    for c in costs[1:]:
        if c.S > best.S:
            best = c
    return CostReport(tuple(costs), best.dim)


def frequency_sweep(
    cfg: NetworkConfig, p: CostParams, freqs: Iterable[float] = DEFAULT_SWEEP_HZ,
    base_freq: float = DEFAULT_FREQ_HZ,
) -> List[Tuple[float, CostReport]]:
    """Re-plan at each clock; alpha scales as base_freq/f, beta stays fixed."""
    freqs = list(freqs)
    if not freqs:
        raise ValueError("frequency list is empty")
    out = []
    for f in freqs:
        if f <= 0:
            raise ValueError(f"frequency must be positive, got {f}")
        scaled = replace(p, alpha=p.alpha * base_freq / f)
        out.append((f, select_dimension(cfg, scaled)))
    return out
