"""Stacked-memory structure: address mapping, per-vault request queues and
bank timing, crossbar transfer cost.

Physical addresses are 33-bit byte addresses (8 GB). The low 4 bits select a
byte inside a 16-byte block, leaving a 29-bit block address that is split
into block-in-subpage, vault, bank and sub-page fields.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Tuple

ADDRESS_BITS = 33
BLOCK_OFFSET_BITS = 4
BLOCK_ADDRESS_BITS = ADDRESS_BITS - BLOCK_OFFSET_BITS  # 29
VAULT_BITS = 5
BANK_BITS = 4
MAX_INDICATOR = 4  # 0b100 -> 256 B sub-pages
HOST_INDICATOR = 4

DEFAULT = "Default"
PROPOSED = "Proposed"


@dataclass(frozen=True)
class HMCConfig:
    n_vaults: int = 32
    banks_per_vault: int = 16
    capacity: int = 8 * 2**30
    external_bw: float = 320e9
    internal_bw: float = 512e9
    pes_per_vault: int = 16
    vault_freq: float = 312.5e6
    block_bytes: int = 16
    # Bank timing is fixed in time; cycle counts follow the vault clock.
    bank_latency_ns: float = 25.6  # 8 cycles at 312.5 MHz
    block_transfer_ns: float = 3.2  # each extra block of a burst

    def __post_init__(self) -> None:
        if self.block_bytes != 16:
            raise ValueError("block_bytes is fixed at 16")
        if self.n_vaults < 1 or self.banks_per_vault < 1 or self.pes_per_vault < 1:
            raise ValueError("vault, bank and PE counts must be positive")
        if self.capacity % (self.n_vaults * self.banks_per_vault):
            raise ValueError("capacity must divide evenly into banks")
        if self.vault_freq <= 0 or self.internal_bw <= 0 or self.external_bw <= 0:
            raise ValueError("frequency and bandwidths must be positive")

    @property
    def bank_bytes(self) -> int:
        return self.capacity // (self.n_vaults * self.banks_per_vault)

    @property
    def access_latency(self) -> int:
        return max(1, math.ceil(self.bank_latency_ns * 1e-9 * self.vault_freq - 1e-9))

    @property
    def block_cycles(self) -> int:
        return max(1, math.ceil(self.block_transfer_ns * 1e-9 * self.vault_freq - 1e-9))


@dataclass(frozen=True)
class AddressLayout:
    mode: str = DEFAULT
    subpage_log2_blocks: int = HOST_INDICATOR

    def __post_init__(self) -> None:
        if self.mode not in (DEFAULT, PROPOSED):
            raise ValueError(f"unknown mapping mode {self.mode!r}")
        _check_indicator(self.subpage_log2_blocks)

    @property
    def field_widths(self) -> Dict[str, int]:
        k = self.subpage_log2_blocks
        return {
            "block": k,
            "vault": VAULT_BITS,
            "bank": BANK_BITS,
            "subpage": BLOCK_ADDRESS_BITS - k - VAULT_BITS - BANK_BITS,
        }


def _check_indicator(indicator: int) -> None:
    if not isinstance(indicator, int) or not 0 <= indicator <= MAX_INDICATOR:
        raise ValueError(f"sub-page indicator must be in 0..{MAX_INDICATOR}, got {indicator!r}")


def _block_address(addr: int) -> int:
    if not 0 <= addr < (1 << ADDRESS_BITS):
        raise ValueError(f"address {addr:#x} outside the {ADDRESS_BITS}-bit space")
    return addr >> BLOCK_OFFSET_BITS


def map_address_default(addr: int, layout: AddressLayout = AddressLayout()) -> Tuple[int, int, int, int]:
    """Fields low->high: block-in-subpage, vault, bank, sub-page."""
    if layout.mode != DEFAULT:
        raise ValueError("map_address_default needs a Default layout")
    k = layout.subpage_log2_blocks
    a = _block_address(addr)
    block = a & ((1 << k) - 1)
    a >>= k
    vault = a & ((1 << VAULT_BITS) - 1)
    a >>= VAULT_BITS
    bank = a & ((1 << BANK_BITS) - 1)
    subpage = a >> BANK_BITS
    return vault, bank, subpage, block


def map_address_pim(addr: int, indicator: int) -> Tuple[int, int, int, int]:
    """Fields low->high: block-in-subpage, bank, sub-page, vault (top)."""
    _check_indicator(indicator)
    k = indicator
    a = _block_address(addr)
    block = a & ((1 << k) - 1)
    a >>= k
    bank = a & ((1 << BANK_BITS) - 1)
    a >>= BANK_BITS
    sub_bits = BLOCK_ADDRESS_BITS - k - BANK_BITS - VAULT_BITS
    subpage = a & ((1 << sub_bits) - 1)
    vault = a >> sub_bits
    return vault, bank, subpage, block


def unmap_address_default(vault: int, bank: int, subpage: int, block: int, layout: AddressLayout) -> int:
    k = layout.subpage_log2_blocks
    a = (((subpage << BANK_BITS) | bank) << VAULT_BITS | vault) << k | block
    return a << BLOCK_OFFSET_BITS


def unmap_address_pim(vault: int, bank: int, subpage: int, block: int, indicator: int) -> int:
    k = indicator
    sub_bits = BLOCK_ADDRESS_BITS - k - BANK_BITS - VAULT_BITS
    a = (((vault << sub_bits) | subpage) << BANK_BITS | bank) << k | block
    return a << BLOCK_OFFSET_BITS


def map_address(addr: int, layout: AddressLayout) -> Tuple[int, int, int, int]:
    if layout.mode == DEFAULT:
        return map_address_default(addr, layout)
    return map_address_pim(addr, layout.subpage_log2_blocks)


def indicator_for(n_bytes: int, block_bytes: int = 16) -> int:
    """Smallest sub-page indicator whose sub-page holds n_bytes (capped at 256 B)."""
    blocks = max(1, math.ceil(n_bytes / block_bytes))
    return min(MAX_INDICATOR, math.ceil(math.log2(blocks)))


HOST = "Host"


@dataclass
class MemoryRequest:
    requester: str  # HOST or "PE"
    address: int
    n_blocks: int = 1
    indicator: int = 0
    issue_cycle: int = 0
    vault_id: int = 0
    pe_id: int = 0
    # filled in by the vault
    bank: int = -1
    start_cycle: int = -1
    done_cycle: int = -1
    stalled: int = 0

    def __post_init__(self) -> None:
        _check_indicator(self.indicator)
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.requester != HOST and self.n_blocks > (1 << self.indicator):
            raise ValueError(
                f"PE request of {self.n_blocks} blocks exceeds its {16 << self.indicator} B sub-page"
            )


@dataclass
class VaultState:
    vault_id: int
    n_banks: int = 16
    access_latency: int = 8
    block_cycles: int = 1
    host_first: bool = False
    queue: List[MemoryRequest] = field(default_factory=list)
    bank_busy_until: List[int] = field(default_factory=list)
    vrs_count: int = 0

    def __post_init__(self) -> None:
        if not self.bank_busy_until:
            self.bank_busy_until = [0] * self.n_banks

    @property
    def Q(self) -> int:
        return len(self.queue)

    def burst_cycles(self, req: MemoryRequest) -> int:
        return self.access_latency + (req.n_blocks - 1) * self.block_cycles


def make_vaults(cfg: HMCConfig) -> List[VaultState]:
    return [
        VaultState(v, cfg.banks_per_vault, cfg.access_latency, cfg.block_cycles)
        for v in range(cfg.n_vaults)
    ]


def enqueue(req: MemoryRequest, vaults: Sequence[VaultState], layout: Optional[AddressLayout] = None) -> None:
    """Route a request to its vault's queue.

    With a layout the vault and bank come from the address; without one the
    request is assumed to use the PIM mapping with its own indicator.
    """
    if layout is None:
        vault, bank, _, _ = map_address_pim(req.address, req.indicator)
    else:
        vault, bank, _, _ = map_address(req.address, layout)
    if not 0 <= vault < len(vaults):
        raise ValueError(f"request maps to vault {vault}, only {len(vaults)} present")
    req.vault_id = vault
    req.bank = bank % vaults[vault].n_banks
    vaults[vault].queue.append(req)


def _scan_order(v: VaultState) -> List[MemoryRequest]:
    if not v.host_first:
        return v.queue
    return [r for r in v.queue if r.requester == HOST] + [r for r in v.queue if r.requester != HOST]


def service_cycle(vaults: Iterable[VaultState], cycle: int) -> List[MemoryRequest]:
    """Advance every vault by one cycle.

    Each idle bank starts the oldest queued request targeting it (host
    requests first when the vault has granted host priority). Requests
    that find their bank busy accrue one stall cycle. Returns requests
    whose burst starts this cycle, with done_cycle set.
    """
    started: List[MemoryRequest] = []
    for v in vaults:
        remaining = []
        for req in _scan_order(v):
            if req.issue_cycle > cycle:
                remaining.append(req)
                continue
            if v.bank_busy_until[req.bank] <= cycle:
                req.start_cycle = cycle
                req.done_cycle = cycle + v.burst_cycles(req)
                v.bank_busy_until[req.bank] = req.done_cycle
                started.append(req)
            else:
                req.stalled += 1
                v.vrs_count += 1
                remaining.append(req)
        # keep arrival order for what is left
        left = set(map(id, remaining))
        v.queue = [r for r in v.queue if id(r) in left]
    return started


def drain(vaults: Sequence[VaultState], start_cycle: int = 0, limit: int = 10_000_000) -> List[MemoryRequest]:
    """Run service cycles until all queues are empty, skipping idle spans."""
    done: List[MemoryRequest] = []
    cycle = start_cycle
    while any(v.queue for v in vaults):
        if cycle - start_cycle > limit:
            raise RuntimeError("memory model did not drain")
        done.extend(service_cycle(vaults, cycle))
        # next cycle at which anything can change
        nxt = None
        for v in vaults:
            for req in v.queue:
                t = max(req.issue_cycle, v.bank_busy_until[req.bank])
                nxt = t if nxt is None else min(nxt, t)
        if nxt is None:
            break
        nxt = max(nxt, cycle + 1)
        if nxt > cycle + 1:
            # inside the gap every arrived request is blocked by a busy bank
            for v in vaults:
                for req in v.queue:
                    gap = nxt - max(cycle + 1, req.issue_cycle)
                    if gap > 0:
                        req.stalled += gap
                        v.vrs_count += gap
        cycle = nxt
    return done


def trace_rows(done: Iterable[MemoryRequest]) -> List[Tuple[int, int, str, int, int, int]]:
    return [
        (r.issue_cycle, r.done_cycle, r.requester, r.vault_id, r.bank, r.stalled)
        for r in sorted(done, key=lambda r: (r.done_cycle, r.vault_id, r.bank))
    ]


def crossbar_cost(n_bytes: float, cfg: HMCConfig = HMCConfig()) -> int:
    if n_bytes < 0:
        raise ValueError("byte count must be non-negative")
    per_cycle = cfg.internal_bw / cfg.vault_freq
    return math.ceil(n_bytes / per_cycle - 1e-12) if n_bytes else 0
