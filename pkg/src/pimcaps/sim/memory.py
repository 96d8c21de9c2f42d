"""Bank timing of one representative wave of concurrent PE requests.

All PEs of a vault step through their sub-operations in lockstep, so one
wave (the first `width` sub-operations, laid out in memory order) stands in
for every step of a snippet. Its requests are replayed through the vault
queues and the result is cached.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Tuple

from .. import hmc
from ..capsnet import NetworkConfig
from .workload import stage_shape

# Each array of the routing state lives in its own 4 MB-aligned region.
_REGION_BYTES = 1 << 22
_REGIONS = {name: n for n, name in enumerate(
    ("W", "u", "u_hat", "b", "c", "e", "s", "v", "partial", "acc"))}

MATCHED = "matched"  # sub-page sized to the request (dynamic indicator)
FIXED = "fixed"  # host-style 256 B sub-pages


@dataclass(frozen=True)
class MemoryPolicy:
    mode: str  # hmc.PROPOSED or hmc.DEFAULT
    subpage: str  # MATCHED or FIXED
    # Place the data that concurrent PEs touch in consecutive sub-pages
    # instead of plain row-major order.
    pe_major: bool = False


@dataclass(frozen=True)
class WaveTiming:
    cycles: int  # completion of the last request
    ideal: int  # same requests with no bank ever serving two
    requests: int
    blocks: int
    vrs_count: int  # summed per-request stall cycles


def _offsets(axes: Tuple[str, ...], idx: Dict[str, int], ext: Dict[str, int], name: str) -> int:
    """Element index of operand `name` in its row-major local array."""
    k, i, j, e = idx.get("k", 0), idx.get("i", 0), idx.get("j", 0), idx.get("e", 0)
    I, J = max(ext.get("i", 1), 1), max(ext.get("j", 1), 1)
    if name == "W":
        return i * J + j
    if name == "u":
        return k * I + i
    if name == "u_hat":
        return (k * I + i) * J + j
    if name in ("b", "c", "e"):
        return i * J + j
    if name in ("s", "v"):
        return k * J + j
    return e


def _unravel(n: int, axes: Tuple[str, ...], ext: Dict[str, int]) -> Dict[str, int]:
    idx = {}
    for ax in reversed(axes):
        size = max(ext.get(ax, 1), 1)
        idx[ax] = n % size
        n //= size
    return idx


def _split_request(start: int, nbytes: int, policy: MemoryPolicy) -> List[Tuple[int, int, int]]:
    """(address, n_blocks, indicator) pieces that each stay inside one sub-page."""
    if policy.subpage == MATCHED:
        ind = hmc.indicator_for(min(nbytes, 256))
    else:
        ind = hmc.HOST_INDICATOR
    page = 16 << ind
    first_block = start // 16
    last_block = (start + nbytes - 1) // 16
    out = []
    b = first_block
    while b <= last_block:
        page_end = ((b * 16) // page + 1) * page // 16  # first block of next sub-page
        stop = min(last_block + 1, page_end)
        out.append((b * 16, stop - b, ind))
        b = stop
    return out


def wave_requests(stage: str, ext: Dict[str, int], width: int, cfg: NetworkConfig,
                  policy: MemoryPolicy, n_vaults: int = 1) -> List[Tuple[int, int, int]]:
    shape = stage_shape(stage, cfg)
    seen = set()
    reqs = []
    for op in shape.operands:
        base = _REGIONS[op.name] * _REGION_BYTES
        slots: Dict[int, int] = {}
        for pe in range(width):
            idx = _unravel(pe, shape.sub_axes, ext)
            off = _offsets(shape.sub_axes, idx, ext, op.name)
            if policy.pe_major:
                # shared elements keep a single slot
                off = slots.setdefault(off, len(slots))
            addr = base + off * op.nbytes
            for piece in _split_request(addr, op.nbytes, policy):
                key = (op.name,) + piece
                if key in seen:
                    continue  # same block already requested by another PE
                seen.add(key)
                reqs.append(piece)
    return reqs


@lru_cache(maxsize=4096)
def _simulate(reqs: Tuple[Tuple[int, int, int], ...], mode: str, n_vaults: int, banks: int,
              latency: int, block_cycles: int) -> WaveTiming:
    vaults = [hmc.VaultState(v, banks, latency, block_cycles) for v in range(n_vaults)]
    layout = hmc.AddressLayout(hmc.DEFAULT, hmc.HOST_INDICATOR) if mode == hmc.DEFAULT else None
    per_vault_work = [0] * n_vaults
    max_burst = 0
    for addr, nblk, ind in reqs:
        req = hmc.MemoryRequest("PE", addr, nblk, ind)
        if layout is None:
            v, bank, _, _ = hmc.map_address_pim(addr, ind)
        else:
            v, bank, _, _ = hmc.map_address_default(addr, layout)
        v %= n_vaults
        req.vault_id, req.bank = v, bank % banks
        vaults[v].queue.append(req)
        burst = vaults[v].burst_cycles(req)
        per_vault_work[v] += burst
        max_burst = max(max_burst, burst)
    done = hmc.drain(vaults)
    cycles = max((r.done_cycle for r in done), default=0)
    ideal = max([max_burst] + [-(-w // banks) for w in per_vault_work])
    blocks = sum(n for _, n, _ in reqs)
    return WaveTiming(cycles, ideal, len(reqs), blocks, sum(v.vrs_count for v in vaults))


def wave_timing(stage: str, ext: Dict[str, int], width: int, cfg: NetworkConfig,
                policy: MemoryPolicy, hcfg: hmc.HMCConfig, n_vaults: int = 1) -> WaveTiming:
    if width == 0:
        return WaveTiming(0, 0, 0, 0, 0)
    reqs = tuple(wave_requests(stage, ext, width, cfg, policy, n_vaults))
    return _simulate(reqs, policy.mode, n_vaults, hcfg.banks_per_vault,
                     hcfg.access_latency, hcfg.block_cycles)
