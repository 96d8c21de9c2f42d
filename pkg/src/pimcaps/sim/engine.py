"""Cycle-approximate execution of one routing pass on the cube.

Each vault runs its snippets in program order. A snippet costs
rounds x max(compute per round, memory per round), where the memory side
comes from replaying one representative wave through the bank model.
Messages between vaults go through a crossbar whose (src, dst) links are
serialized; a vault starts a snippet only after everything sent to it by
earlier snippets has arrived.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import hmc
from ..approx import PEConfig
from ..capsnet import EXACT, ApproxProvider, NetworkConfig, dynamic_routing, random_instance
from ..planner import CostParams, select_dimension
from . import host as hostmod
from .memory import FIXED, MATCHED, MemoryPolicy, wave_timing
from .workload import (
    WorkloadSnippet, _snippet, intra_vault_schedule, partition_workload, stage_shape,
)


class Scenario(str, Enum):
    BASELINE = "BaselineModel"
    PIM_INTRA = "PIMIntra"
    PIM_INTER = "PIMInter"
    PIM_CAPSNET = "PIMCapsNet"
    ALL_IN_PIM = "AllInPIM"
    RMAS_PIM_FIRST = "RMAS-PIM-first"
    RMAS_GPU_FIRST = "RMAS-GPU-first"
    RMAS_ADAPTIVE = "RMAS-Adaptive"

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        for s in cls:
            if s.value.lower() == str(name).lower():
                return s
        raise ValueError(f"unknown scenario {name!r}; expected one of {[s.value for s in cls]}")


# routing pass settings per scenario: (distributed, memory policy, PE re-split)
_RP_MODE = {
    Scenario.PIM_INTRA: (False, MemoryPolicy(hmc.DEFAULT, FIXED), True),
    Scenario.PIM_INTER: (True, MemoryPolicy(hmc.PROPOSED, FIXED), False),
}
_FULL_DESIGN = (True, MemoryPolicy(hmc.PROPOSED, MATCHED, pe_major=True), True)

_ARBITRATION = {
    Scenario.RMAS_PIM_FIRST: hostmod.PIM_FIRST,
    Scenario.RMAS_GPU_FIRST: hostmod.GPU_FIRST,
}


@dataclass(frozen=True)
class EnergyCoeffs:
    pe_op: float = 1.0
    bank_access: float = 4.0
    crossbar_byte: float = 0.5
    external_byte: float = 2.0

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"energy coefficient {k} must be >= 0")


@dataclass
class SimMetrics:
    scenario: str
    dim: str
    total_cycles: int = 0
    compute_cycles: float = 0.0
    memory_cycles: float = 0.0
    vrs_cycles: float = 0.0
    intervault_comm_cycles: float = 0.0
    intervault_bytes: int = 0
    pe_ops: int = 0
    bank_accesses: int = 0
    external_bytes: int = 0
    energy_rel: float = 0.0
    per_vault_busy: List[float] = field(default_factory=list)
    mean_queue_depth: float = 0.0
    seconds: float = 0.0

    def to_dict(self) -> Dict:
        return asdict(self)


def energy_model(m: SimMetrics, coeffs: EnergyCoeffs = EnergyCoeffs()) -> float:
    return (
        m.pe_ops * coeffs.pe_op
        + m.bank_accesses * coeffs.bank_access
        + m.intervault_bytes * coeffs.crossbar_byte
        + m.external_bytes * coeffs.external_byte
    )


@dataclass(frozen=True)
class SnippetCost:
    compute: float
    memory: float
    vrs: float
    bank_blocks: float
    requests: float
    rounds: float

    @property
    def total(self) -> float:
        return self.compute + self.memory + self.vrs


def snippet_cost(sn: WorkloadSnippet, cfg: NetworkConfig, plan_dim: str, hcfg: hmc.HMCConfig,
                 pe: PEConfig, policy: MemoryPolicy, refine: bool = True,
                 n_pes: Optional[int] = None, n_vaults: int = 1) -> SnippetCost:
    shape = stage_shape(sn.stage, cfg)
    n_pes = n_pes or hcfg.pes_per_vault
    n_fine = shape.n_subops(sn.extents)
    steps = sn.extents.get(shape.step_axis, 1) if shape.step_axis else 1
    if n_fine == 0 or steps == 0:
        return SnippetCost(0, 0, 0, 0, 0, 0)
    sched = intra_vault_schedule(sn.stage, sn.extents, cfg, plan_dim, n_pes, refine=refine)
    rounds = sched.waves * (n_fine // sched.n_subops) * steps
    c_round = sn.ops.cycles(pe) / (n_fine * steps)
    w = wave_timing(sn.stage, sn.extents, sched.width, cfg, policy, hcfg, n_vaults)
    memory = max(0.0, w.ideal - c_round)
    vrs = max(0.0, w.cycles - max(c_round, w.ideal))
    return SnippetCost(rounds * c_round, rounds * memory, rounds * vrs,
                       rounds * w.blocks, rounds * w.requests, rounds)


@dataclass
class _Vault:
    time: float = 0.0
    busy: float = 0.0
    path: np.ndarray = field(default_factory=lambda: np.zeros(4))


@dataclass(frozen=True)
class TraceRow:
    vault: int
    iteration: int
    stage: str
    start: float
    end: float
    kind: str  # "exec" or "xfer"


class _Crossbar:
    def __init__(self, hcfg: hmc.HMCConfig):
        self.hcfg = hcfg
        self.link_free: Dict[Tuple[int, int], float] = {}
        self.bytes = 0

    def send(self, src: int, dst: int, nbytes: int, t: float) -> float:
        start = max(t, self.link_free.get((src, dst), 0.0))
        end = start + hmc.crossbar_cost(nbytes, self.hcfg)
        self.link_free[(src, dst)] = end
        self.bytes += nbytes
        return end

    def multicast(self, src: int, dsts: Sequence[int], nbytes: int, t: float) -> float:
        start = max([t] + [self.link_free.get((src, d), 0.0) for d in dsts])
        end = start + hmc.crossbar_cost(nbytes, self.hcfg)
        for d in dsts:
            self.link_free[(src, d)] = end
        self.bytes += nbytes * len(dsts)
        return end


def _replay(snippets: Sequence[WorkloadSnippet], n_vaults: int, cost_of, hcfg: hmc.HMCConfig,
            trace: Optional[List[TraceRow]] = None):
    vaults = [_Vault() for _ in range(n_vaults)]
    xbar = _Crossbar(hcfg)
    pending: List[List[Tuple[float, np.ndarray]]] = [[] for _ in range(n_vaults)]
    totals = {"blocks": 0.0, "requests": 0.0, "rounds": 0.0}
    for sn in snippets:
        me = vaults[sn.vault]
        for arrival, path in pending[sn.vault]:
            if arrival > me.time:
                me.time, me.path = arrival, path
        pending[sn.vault] = []
        c = cost_of(sn)
        start = me.time
        me.time += c.total
        me.busy += c.total
        me.path = me.path + np.array([c.compute, c.memory, c.vrs, 0.0])
        totals["blocks"] += c.bank_blocks
        totals["requests"] += c.requests
        totals["rounds"] += c.rounds
        if trace is not None and c.total > 0:
            trace.append(TraceRow(sn.vault, sn.iteration, sn.stage, start, me.time, "exec"))
        for dst, nbytes in sn.sends:
            end = xbar.send(sn.vault, dst, nbytes, me.time)
            pending[dst].append((end, me.path + np.array([0, 0, 0, end - me.time])))
            if trace is not None:
                trace.append(TraceRow(dst, sn.iteration, sn.stage, me.time, end, "xfer"))
        if sn.multicast_bytes:
            dsts = [d for d in range(n_vaults) if d != sn.vault]
            end = xbar.multicast(sn.vault, dsts, sn.multicast_bytes, me.time)
            for d in dsts:
                pending[d].append((end, me.path + np.array([0, 0, 0, end - me.time])))
    for v, msgs in enumerate(pending):
        for arrival, path in msgs:
            if arrival > vaults[v].time:
                vaults[v].time, vaults[v].path = arrival, path
    return vaults, xbar, totals


def _centralized_snippets(cfg: NetworkConfig) -> List[WorkloadSnippet]:
    full = {"k": cfg.N_B, "i": cfg.N_L, "j": cfg.N_H}
    out = [_snippet("predict", -1, 0, "global", (0, cfg.N_B), full, cfg)]
    for it in range(cfg.I):
        for stage in ("softmax", "weighted_sum", "squash", "agreement"):
            out.append(_snippet(stage, it, 0, "global", (0, cfg.N_B), full, cfg))
    return out


def external_bytes(cfg: NetworkConfig) -> int:
    """u written in by the host plus v read back."""
    return cfg.N_B * cfg.N_L * cfg.C_L * 4 + cfg.N_B * cfg.N_H * cfg.C_H * 4


def _check(cfg: NetworkConfig, dim: str, hcfg: hmc.HMCConfig) -> None:
    if dim not in ("B", "L", "H"):
        raise ValueError(f"unknown distribution dimension {dim!r}")
    if cfg.N_B * cfg.N_L * cfg.N_H * cfg.C_H * 4 * 8 > hcfg.capacity:
        raise ValueError("routing state does not fit in the cube")


def run_rp(cfg: NetworkConfig, dim: Optional[str] = None, scenario=Scenario.PIM_CAPSNET,
           hcfg: hmc.HMCConfig = hmc.HMCConfig(), pe: PEConfig = PEConfig(), seed: int = 0,
           coeffs: EnergyCoeffs = EnergyCoeffs(), compute_values: bool = False,
           trace: Optional[List[TraceRow]] = None) -> Tuple[SimMetrics, Optional[np.ndarray]]:
    """Simulate one routing pass; returns the metrics and optionally the H capsules.

    dim=None lets the planner choose. With compute_values the H capsules of a
    random instance drawn from seed are produced with the arithmetic the
    scenario uses.
    """
    scenario = Scenario.parse(scenario.value if isinstance(scenario, Scenario) else scenario)
    params = CostParams.for_hardware(hcfg.vault_freq, hcfg.pes_per_vault, hcfg.internal_bw, hcfg.n_vaults)
    if dim is None:
        dim = select_dimension(cfg, params).selected
    _check(cfg, dim, hcfg)
    m = SimMetrics(scenario.value, dim, external_bytes=external_bytes(cfg))

    if scenario == Scenario.BASELINE:
        b = hostmod.baseline_rp(cfg)
        f = hcfg.vault_freq
        m.compute_cycles = b.compute_s * f
        m.memory_cycles = b.memory_s * f
        m.total_cycles = math.ceil(b.seconds * f - 1e-9)
        m.pe_ops = b.ops
        m.bank_accesses = math.ceil(b.bytes_moved / hcfg.block_bytes)
        m.external_bytes = b.bytes_moved
        m.seconds = b.seconds
        m.per_vault_busy = []
    elif scenario == Scenario.PIM_INTRA:
        _run_centralized(cfg, dim, hcfg, pe, m, trace)
    else:
        distributed, policy, refine = _RP_MODE.get(scenario, _FULL_DESIGN)
        snippets = partition_workload(cfg, dim, params)

        def cost_of(sn):
            return snippet_cost(sn, cfg, dim, hcfg, pe, policy, refine)

        vaults, xbar, totals = _replay(snippets, hcfg.n_vaults, cost_of, hcfg, trace)
        _finish(m, vaults, xbar.bytes, totals, snippets, hcfg)
    m.energy_rel = energy_model(m, coeffs)

    v = None
    if compute_values:
        u, W = random_instance(cfg, seed)
        provider = EXACT if scenario == Scenario.BASELINE else ApproxProvider()
        v, _ = dynamic_routing(u, W, cfg, provider)
    return m, v


def _finish(m: SimMetrics, vaults: List[_Vault], xbytes: int, totals, snippets, hcfg) -> None:
    crit = max(range(len(vaults)), key=lambda i: (vaults[i].time, -i))
    total = vaults[crit].time
    m.total_cycles = math.ceil(total - 1e-9)
    m.compute_cycles, m.memory_cycles, m.vrs_cycles, m.intervault_comm_cycles = (
        float(x) for x in vaults[crit].path)
    m.intervault_bytes = int(xbytes)
    m.pe_ops = int(sum(sn.op_count for sn in snippets))
    m.bank_accesses = int(round(totals["blocks"]))
    m.per_vault_busy = [round(float(v.busy / total), 6) if total else 0.0 for v in vaults]
    m.mean_queue_depth = float(totals["requests"] / totals["rounds"]) if totals["rounds"] else 0.0
    m.seconds = float(total / hcfg.vault_freq)


def _run_centralized(cfg, dim, hcfg, pe, m, trace) -> None:
    """All PEs pooled on the logic layer; every operand crosses the crossbar.

    Each round waits for its operands from the banks, ships them over the
    crossbar at the cube's aggregate internal bandwidth, then computes.
    """
    policy = _RP_MODE[Scenario.PIM_INTRA][1]
    n_pes = hcfg.pes_per_vault * hcfg.n_vaults
    per_cycle = hcfg.internal_bw / hcfg.vault_freq
    path = np.zeros(4)
    t = 0.0
    xbytes = 0
    totals = {"blocks": 0.0, "requests": 0.0, "rounds": 0.0}
    snippets = _centralized_snippets(cfg)
    for sn in snippets:
        shape = stage_shape(sn.stage, cfg)
        c = snippet_cost(sn, cfg, dim, hcfg, pe, policy, True, n_pes, hcfg.n_vaults)
        if c.rounds == 0:
            continue
        sched = intra_vault_schedule(sn.stage, sn.extents, cfg, dim, n_pes)
        wave_bytes = sched.width * sum(o.nbytes for o in shape.operands)
        comm = c.rounds * math.ceil(wave_bytes / per_cycle)
        start = t
        t += c.total + comm
        path += np.array([c.compute, c.memory, c.vrs, comm])
        xbytes += sn.bytes_in + sn.bytes_out
        totals["blocks"] += c.bank_blocks
        totals["requests"] += c.requests / hcfg.n_vaults
        totals["rounds"] += c.rounds
        if trace is not None:
            trace.append(TraceRow(0, sn.iteration, sn.stage, start, t, "exec"))
    v = _Vault(time=t, busy=t - path[3], path=path)
    _finish(m, [v], xbytes, totals, snippets, hcfg)
    m.per_vault_busy = [round(float(v.busy / t), 6) if t else 0.0] * hcfg.n_vaults


@dataclass
class PipelineResult:
    scenario: str
    n_batches: int
    host_cycles: float
    rp_cycles: float
    total_cycles: float
    seconds: float
    n_h: int = -1


def run_pipeline(cfg: NetworkConfig, rp: SimMetrics, hcfg: hmc.HMCConfig = hmc.HMCConfig(),
                 n_batches: int = 1, host_latency_s: Optional[float] = None,
                 n_max: int = 4) -> PipelineResult:
    """End-to-end estimate around a routing-pass result, in vault cycles."""
    scenario = Scenario.parse(rp.scenario)
    f = hcfg.vault_freq
    host_s = hostmod.host_latency_s(cfg) if host_latency_s is None else host_latency_s
    host_c = host_s * f
    if scenario == Scenario.BASELINE:
        total = n_batches * (host_c + rp.total_cycles)
        return PipelineResult(scenario.value, n_batches, host_c, rp.total_cycles, total, total / f)
    if scenario == Scenario.ALL_IN_PIM:
        pim_rate = hcfg.n_vaults * hcfg.pes_per_vault * f
        host_c = hostmod.host_layer_flops(cfg) / pim_rate * f
        total = n_batches * (host_c + rp.total_cycles)
        return PipelineResult(scenario.value, n_batches, host_c, rp.total_cycles, total, total / f)
    policy = _ARBITRATION.get(scenario, hostmod.ADAPTIVE)
    ct = hostmod.host_contention(policy, external_bytes(cfg), rp.mean_queue_depth,
                                 hcfg.access_latency, n_max)
    host_c += ct.host_extra_cycles
    rp_c = rp.total_cycles + ct.rp_extra_cycles
    total = hostmod.pipeline_model(host_c, rp_c, n_batches)
    return PipelineResult(scenario.value, n_batches, host_c, rp_c, total, total / f, ct.n_h)
