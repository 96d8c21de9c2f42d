"""Host-side models: the GPU reference for the routing pass, the latency of
the non-routing layers, the two-stage host/cube pipeline and the cost of
host requests competing with PE requests inside the cube.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..capsnet import NetworkConfig
from ..rmas import SchedulerInput, kappa, optimal_nh
from .workload import total_ops

HOST_FLOPS = 9.3e12  # single-precision peak of the reference GPU
HOST_MEM_BW = 320e9  # bytes/s streamed by the reference routing pass
# Conv + PrimeCaps + FC work per sample, scaled with the number of L capsules.
HOST_FLOPS_PER_SAMPLE = 0.4e9
HOST_REF_LOW_CAPS = 1152


@dataclass(frozen=True)
class BaselineCost:
    ops: int
    bytes_moved: int
    compute_s: float
    memory_s: float

    @property
    def seconds(self) -> float:
        return self.compute_s + self.memory_s


def baseline_rp(cfg: NetworkConfig, mem_bw: float = HOST_MEM_BW, flops: float = HOST_FLOPS) -> BaselineCost:
    """Routing pass on the host as off-chip streaming plus ALU time.

    W is re-read per batch element, u is read once, u_hat is written once,
    and every iteration streams u_hat twice plus the logits and coefficients.
    """
    NB, NL, NH, CL, CH, I = cfg.N_B, cfg.N_L, cfg.N_H, cfg.C_L, cfg.C_H, cfg.I
    U = NB * NL * NH * CH * 4
    w = NB * NL * NH * CL * CH * 4
    u = NB * NL * CL * 4
    per_iter = 6 * U + 2 * NB * NL * NH * 4
    nbytes = w + u + U + I * per_iter
    ops = total_ops(cfg)
    return BaselineCost(ops, nbytes, ops / flops, nbytes / mem_bw)


def host_latency_s(cfg: NetworkConfig, flops: float = HOST_FLOPS) -> float:
    """Roofline estimate for the layers that stay on the host, per batch."""
    per_sample = HOST_FLOPS_PER_SAMPLE * cfg.N_L / HOST_REF_LOW_CAPS
    return cfg.N_B * per_sample / flops


def host_layer_flops(cfg: NetworkConfig) -> float:
    return cfg.N_B * HOST_FLOPS_PER_SAMPLE * cfg.N_L / HOST_REF_LOW_CAPS


def pipeline_model(host_latency: float, rp_latency: float, n_batches: int) -> float:
    """Two-stage pipeline: the host works on batch n+1 while the cube routes batch n."""
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if host_latency < 0 or rp_latency < 0:
        raise ValueError("latencies must be non-negative")
    return host_latency + (n_batches - 1) * max(host_latency, rp_latency) + rp_latency


PIM_FIRST = "PIM-first"
GPU_FIRST = "GPU-first"
ADAPTIVE = "Adaptive"
POLICIES = (PIM_FIRST, GPU_FIRST, ADAPTIVE)


@dataclass(frozen=True)
class Contention:
    n_h: int
    rounds: int  # host access rounds per batch
    host_extra_cycles: float
    rp_extra_cycles: float


def host_contention(policy: str, host_bytes: int, q_bar: float, access_latency: int,
                    n_max: int = 4, gamma_v: float = 1.0, gamma_h: float = 1.0,
                    subpage_bytes: int = 256) -> Contention:
    """Cycles lost when host traffic meets busy PE queues.

    The host moves host_bytes per batch in rounds that each touch n_max
    vaults with one sub-page. A round costs the two terms of kappa, in
    units of one bank access: the host term lands on the host stage, the
    PE term on the routing stage.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown arbitration policy {policy!r}; expected one of {POLICIES}")
    s = SchedulerInput(n_max, q_bar, gamma_v, gamma_h)
    if policy == PIM_FIRST:
        n_h = 0
    elif policy == GPU_FIRST:
        n_h = n_max
    else:
        n_h = optimal_nh(s)
    rounds = math.ceil(host_bytes / (n_max * subpage_bytes)) if host_bytes > 0 else 0
    pe_term = gamma_v * n_h * q_bar
    host_term = kappa(n_h, s) - pe_term
    return Contention(n_h, rounds, rounds * host_term * access_latency, rounds * pe_term * access_latency)
