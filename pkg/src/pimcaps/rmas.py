"""Runtime arbitration between host and PE memory requests.

When a host operation touches n_max vaults, n_h of them serve the host before
their PE queues. The overhead model weighs the PE requests held back
(gamma_v * n_h * Q) against the host waiting on vaults that keep serving PEs
(gamma_h * n_max / n_h).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

# n_h = 0 means the host waits for the PE queues to drain; we price that as
# the host term evaluated at half a vault.
EPS_SERIAL = 0.5

GAMMA_MEMORY_BOUND_HOST = 2.0
GAMMA_COMPUTE_BOUND_HOST = 1.0


@dataclass(frozen=True)
class SchedulerInput:
    n_max: int
    q_bar: float
    gamma_v: float = 1.0
    gamma_h: float = 1.0
    q_per_vault: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.q_bar < 0:
            raise ValueError("average queue depth must be >= 0")
        if self.gamma_v < 0 or self.gamma_h < 0 or (self.gamma_v == 0 and self.gamma_h == 0):
            raise ValueError("impact factors must be >= 0 and not both zero")
        if self.q_per_vault and len(self.q_per_vault) != self.n_max:
            raise ValueError(
                f"q_per_vault has {len(self.q_per_vault)} entries, expected n_max={self.n_max}"
            )

    @classmethod
    def from_queues(cls, depths: Sequence[float], gamma_v: float = 1.0, gamma_h: float = 1.0) -> "SchedulerInput":
        depths = tuple(depths)
        q_bar = sum(depths) / len(depths) if depths else 0.0
        return cls(len(depths), q_bar, gamma_v, gamma_h, depths)


def kappa(n_h: int, s: SchedulerInput) -> float:
    if not 0 <= n_h <= s.n_max:
        raise ValueError(f"n_h={n_h} outside [0, {s.n_max}]")
    if n_h == 0:
        return s.gamma_h * s.n_max / EPS_SERIAL
    return s.gamma_v * n_h * s.q_bar + s.gamma_h * s.n_max / n_h


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def optimal_nh(s: SchedulerInput) -> int:
    """Integer minimizer of kappa.

    kappa is convex in n_h > 0, so the best integer is the floor or the
    ceiling of the continuous optimum sqrt(n_max*gamma_h / (Q*gamma_v)).
    Plain rounding of that value misses whenever the optimum lies between
    sqrt(n(n+1)) and n + 1/2, hence the explicit comparison; on a tie the
    rounded value wins. Host deferral (0) is chosen only when the host
    term carries no weight.
    """
    if s.n_max == 0 or s.gamma_h == 0:
        return 0
    denom = s.q_bar * s.gamma_v
    if denom == 0:
        return s.n_max
    x = math.sqrt(s.n_max * s.gamma_h / denom)
    rounded = max(1, min(s.n_max, _round_half_up(x)))
    lo = max(1, min(s.n_max, math.floor(x)))
    hi = max(1, min(s.n_max, math.ceil(x)))
    k_lo, k_hi = kappa(lo, s), kappa(hi, s)
    if k_lo == k_hi:
        return rounded
    return lo if k_lo < k_hi else hi


def grant_priority(
    s: SchedulerInput, vault_ids: Sequence[int] = (), n_h: Optional[int] = None
) -> List[int]:
    """IDs of the vaults that serve the host first: the n_h shallowest queues.

    n_h defaults to optimal_nh(s); ties in depth go to the lower vault ID.
    """
    depths = s.q_per_vault or tuple([s.q_bar] * s.n_max)
    ids = list(vault_ids) if vault_ids else list(range(s.n_max))
    if len(ids) != len(depths):
        raise ValueError("vault_ids and q_per_vault differ in length")
    if n_h is None:
        n_h = optimal_nh(s)
    elif not 0 <= n_h <= s.n_max:
        raise ValueError(f"n_h={n_h} outside [0, {s.n_max}]")
    order = sorted(range(len(ids)), key=lambda i: (depths[i], ids[i]))
    return sorted(ids[i] for i in order[:n_h])
