"""Splitting the routing procedure into per-vault snippets and PE waves.

A snippet is one stage's work on one vault. Stages that can be split along
the plan dimension get an even slice per vault; the rest become per-vault
partial results (pre-aggregation) that a binomial tree of vaults combines,
finishing on the designated vault 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..approx import PEConfig, pe_flow_latency
from ..capsnet import NetworkConfig
from ..hmc import HMCConfig
from ..planner import CostParams, parallelizable_dims

ROOT = 0


@dataclass(frozen=True)
class OpMix:
    mac: int = 0
    add: int = 0
    mul: int = 0
    exp: int = 0
    invsqrt: int = 0
    div: int = 0

    @property
    def ops(self) -> int:
        """Scalar operations; a MAC counts as a multiply plus an add."""
        return 2 * self.mac + self.add + self.mul + self.exp + self.invsqrt + self.div

    def cycles(self, pe: PEConfig) -> int:
        return (
            self.mac * pe_flow_latency("MAC", pe)
            + (self.add + self.mul) * pe.stage_latency
            + self.exp * pe_flow_latency("EXP", pe)
            + self.invsqrt * pe_flow_latency("INVSQRT", pe)
            + self.div * pe_flow_latency("DIV", pe)
        )

    def __add__(self, other: "OpMix") -> "OpMix":
        return OpMix(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self) -> Tuple[int, ...]:
        return (self.mac, self.add, self.mul, self.exp, self.invsqrt, self.div)


@dataclass(frozen=True)
class Operand:
    """One array touched per step of a sub-operation."""

    name: str
    nbytes: int
    write: bool = False


@dataclass(frozen=True)
class StageShape:
    """Index space of a stage on one vault.

    sub_axes lists the independent sub-operation axes, slowest first;
    step_axis is the reduction walked sequentially inside a sub-operation.
    """

    sub_axes: Tuple[str, ...]
    step_axis: Optional[str]
    operands: Tuple[Operand, ...]
    elems_per_subop: int = 1  # scalars a sub-operation covers along a flat axis

    def n_subops(self, ext: Dict[str, int]) -> int:
        n = 1
        for ax in self.sub_axes:
            n *= ext.get(ax, 0)
        return -(-n // self.elems_per_subop)


# axis names: k (batch), i (low caps), j (high caps), e (flat element)
def stage_shape(stage: str, cfg: NetworkConfig) -> StageShape:
    CL, CH = cfg.C_L, cfg.C_H
    vec_h = CH * 4
    if stage == "predict":
        return StageShape(("k", "i", "j"), None, (
            Operand("W", CL * CH * 4), Operand("u", CL * 4), Operand("u_hat", vec_h, True)))
    if stage in ("softmax", "softmax_exp"):
        ops = (Operand("b", 4), Operand("c", 4, True))
        return StageShape(("i",), "j", ops)
    if stage == "softmax_norm":
        return StageShape(("i", "j"), None, (Operand("e", 4), Operand("c", 4, True)))
    if stage == "weighted_sum":
        return StageShape(("k", "j"), "i", (Operand("u_hat", vec_h), Operand("c", 4)))
    if stage == "squash":
        return StageShape(("k", "j"), None, (Operand("s", vec_h), Operand("v", vec_h, True)))
    if stage == "agreement":
        return StageShape(("i", "j"), "k", (Operand("u_hat", vec_h), Operand("v", vec_h)))
    if stage.startswith("combine"):
        # partial sums are added one 16-byte block (4 scalars) at a time
        return StageShape(("e",), None, (Operand("partial", 16), Operand("acc", 16, True)), 4)
    raise ValueError(f"unknown stage {stage!r}")


STAGE_EQ = {
    "predict": "Eq1",
    "softmax": "Eq5",
    "softmax_exp": "Eq5",
    "softmax_norm": "Eq5",
    "combine_den": "Eq5",
    "weighted_sum": "Eq2",
    "combine_s": "Eq2",
    "squash": "Eq3",
    "agreement": "Eq4",
    "combine_b": "Eq4",
}

AXIS_DIM = {"k": "B", "i": "L", "j": "H"}


@dataclass
class WorkloadSnippet:
    eq_id: str
    stage: str
    iteration: int  # -1 for the prediction stage
    vault: int
    role: str  # "parallel", "pre-aggregation" or "global"
    slice: Tuple[int, int]  # index range along the plan dimension
    extents: Dict[str, int]  # local extent per axis k, i, j (and e for combines)
    ops: OpMix
    bytes_in: int
    bytes_out: int
    sends: List[Tuple[int, int]] = field(default_factory=list)  # (dest vault, bytes)
    multicast_bytes: int = 0

    @property
    def op_count(self) -> int:
        return self.ops.ops

    @property
    def xfer_bytes(self) -> int:
        return sum(b for _, b in self.sends) + self.multicast_bytes


def split_even(n: int, parts: int) -> List[Tuple[int, int]]:
    """Ceiling split: the first vaults get ceil(n/parts) items until n runs out."""
    per = math.ceil(n / parts)
    out = []
    start = 0
    for _ in range(parts):
        stop = min(n, start + per)
        out.append((start, stop))
        start = stop
    return out


def tree_edges(n_vaults: int) -> List[List[Tuple[int, int]]]:
    """Binomial reduction tree toward vault 0, one list of (src, dst) per level."""
    levels = []
    step = 1
    while step < n_vaults:
        levels.append([(x, x - step) for x in range(step, n_vaults, 2 * step)])
        step *= 2
    return levels


def stage_ops(stage: str, ext: Dict[str, int], cfg: NetworkConfig, full_batch: bool = True) -> OpMix:
    k, i, j = ext.get("k", 0), ext.get("i", 0), ext.get("j", 0)
    CL, CH = cfg.C_L, cfg.C_H
    if stage == "predict":
        n = k * i * j
        return OpMix(mac=n * CH * (CL - 1), mul=n * CH)
    if stage == "softmax":
        return OpMix(exp=i * j, add=i * max(j - 1, 0), div=i * j)
    if stage == "softmax_exp":
        return OpMix(exp=i * j, add=i * max(j - 1, 0))
    if stage == "softmax_norm":
        return OpMix(div=i * j)
    if stage == "weighted_sum":
        if i == 0:
            return OpMix()
        return OpMix(mac=k * j * CH * (i - 1), mul=k * j * CH)
    if stage == "squash":
        n = k * j
        return OpMix(mac=n * (CH - 1), mul=n * (CH + 2), add=n, invsqrt=n, div=n)
    if stage == "agreement":
        n = i * j
        if k == 0:
            return OpMix()
        # batch sum of the dot products, plus the previous logit when the
        # whole batch is local; a partial sum otherwise
        adds = n * k if full_batch else n * (k - 1)
        return OpMix(mac=n * k * (CH - 1), mul=n * k, add=adds)
    if stage.startswith("combine"):
        return OpMix(add=ext.get("e", 0))
    raise ValueError(f"unknown stage {stage!r}")


def stage_bytes(stage: str, ext: Dict[str, int], cfg: NetworkConfig) -> Tuple[int, int]:
    shape = stage_shape(stage, cfg)
    n_sub = shape.n_subops(ext)
    steps = ext.get(shape.step_axis, 1) if shape.step_axis else 1
    rd = sum(o.nbytes for o in shape.operands if not o.write) * n_sub * steps
    wr = sum(o.nbytes for o in shape.operands if o.write) * n_sub * steps
    return rd, wr


def total_ops(cfg: NetworkConfig) -> int:
    """Scalar operations of one routing pass, independent of distribution."""
    NB, NL, NH, CL, CH, I = cfg.N_B, cfg.N_L, cfg.N_H, cfg.C_L, cfg.C_H, cfg.I
    eq1 = NB * NL * NH * CH * (2 * CL - 1)
    eq5 = NL * (3 * NH - 1)
    eq2 = NB * NH * CH * (2 * NL - 1)
    eq3 = NB * NH * (3 * CH + 3)
    eq4 = NL * NH * NB * 2 * CH
    return eq1 + I * (eq5 + eq2 + eq3 + eq4)


def _snippet(stage, it, vault, role, sl, ext, cfg, full_batch=True) -> WorkloadSnippet:
    ops = stage_ops(stage, ext, cfg, full_batch)
    rd, wr = stage_bytes(stage, ext, cfg)
    return WorkloadSnippet(STAGE_EQ[stage], stage, it, vault, role, sl, dict(ext), ops, rd, wr)


def _combine_tree(stage, it, n_elem, active, cfg, V) -> List[WorkloadSnippet]:
    """Tree reduction of per-vault partials of n_elem scalars.

    Every non-root vault forwards its (accumulated) partial once, so the
    bytes moved are (V-1) * payload no matter how many vaults hold data.
    Additions are performed only where both sides carry data.
    """
    has = list(active)
    out = []
    for level in tree_edges(V):
        for src, dst in level:
            adds = n_elem if (has[src] and has[dst]) else 0
            role = "global" if dst == ROOT else "pre-aggregation"
            sn = _snippet(stage, it, dst, role, (0, n_elem), {"e": adds}, cfg)
            sn.extents["from"] = src
            out.append(sn)
            has[dst] = has[dst] or has[src]
    return out


def partition_workload(cfg: NetworkConfig, dim: str, p: Union[CostParams, HMCConfig]) -> List[WorkloadSnippet]:
    """All snippets of one routing pass, in program order per vault.

    Inter-vault transfers are attached to the snippet that produces the
    data: partial results go up the tree, broadcasts leave from vault 0.
    """
    if dim not in ("B", "L", "H"):
        raise ValueError(f"unknown distribution dimension {dim!r}")
    if isinstance(p, HMCConfig):
        p = CostParams(n_vault=p.n_vaults)
    V = p.n_vault
    NB, NL, NH = cfg.N_B, cfg.N_L, cfg.N_H
    extent = {"B": NB, "L": NL, "H": NH}[dim]
    slices = split_even(extent, V)
    active = [b > a for a, b in slices]
    pkt = p.size_pkt
    snippets: List[WorkloadSnippet] = []

    def local_ext(sl: Tuple[int, int]) -> Dict[str, int]:
        n = sl[1] - sl[0]
        return {"k": n if dim == "B" else NB, "i": n if dim == "L" else NL, "j": n if dim == "H" else NH}

    for v, sl in enumerate(slices):
        snippets.append(_snippet("predict", -1, v, "parallel", sl, local_ext(sl), cfg))

    def broadcast_from_root(sn: WorkloadSnippet, payload: int) -> None:
        sn.sends.extend((d, payload) for d in range(1, V))

    full = {"k": NB, "i": NL, "j": NH}
    for it in range(cfg.I):
        if dim == "B":
            # vault 0 holds b: normalize, then hand c to everyone
            sm = _snippet("softmax", it, ROOT, "global", (0, NL), full, cfg)
            broadcast_from_root(sm, NL * NH * (p.size_c + pkt))
            snippets.append(sm)
            last = []
            for v, sl in enumerate(slices):
                ext = local_ext(sl)
                snippets.append(_snippet("weighted_sum", it, v, "parallel", sl, ext, cfg))
                snippets.append(_snippet("squash", it, v, "parallel", sl, ext, cfg))
                ag = _snippet("agreement", it, v, "pre-aggregation", sl, ext, cfg, full_batch=False)
                snippets.append(ag)
                last.append(ag)
            tree = _combine_tree("combine_b", it, NL * NH, active, cfg, V)
            attach_gather_tree(tree, last, NL * NH * (p.size_b + pkt))
            snippets.extend(tree)
            # fold the previous logits in on vault 0
            snippets.append(_snippet("combine_b", it, ROOT, "global", (0, NL * NH), {"e": NL * NH}, cfg))
        elif dim == "L":
            last = []
            for v, sl in enumerate(slices):
                ext = local_ext(sl)
                snippets.append(_snippet("softmax", it, v, "parallel", sl, ext, cfg))
                ws = _snippet("weighted_sum", it, v, "pre-aggregation", sl, ext, cfg)
                snippets.append(ws)
                last.append(ws)
            tree = _combine_tree("combine_s", it, NB * NH * cfg.C_H, active, cfg, V)
            attach_gather_tree(tree, last, NB * NH * (p.size_s + pkt))
            snippets.extend(tree)
            sq = _snippet("squash", it, ROOT, "global", (0, NB), {"k": NB, "j": NH}, cfg)
            broadcast_from_root(sq, NB * NH * (p.size_v + pkt))
            snippets.append(sq)
            for v, sl in enumerate(slices):
                snippets.append(_snippet("agreement", it, v, "parallel", sl, local_ext(sl), cfg))
        else:
            last = []
            for v, sl in enumerate(slices):
                sn = _snippet("softmax_exp", it, v, "pre-aggregation", sl, local_ext(sl), cfg)
                snippets.append(sn)
                last.append(sn)
            tree = _combine_tree("combine_den", it, NL, active, cfg, V)
            attach_gather_tree(tree, last, NL * (p.size_b + pkt))
            snippets.extend(tree)
            # vault 0 multicasts the denominators once to every vault
            mc = _snippet("combine_den", it, ROOT, "global", (0, NL), {"e": 0}, cfg)
            mc.multicast_bytes = NL * (p.size_c + pkt)
            snippets.append(mc)
            for v, sl in enumerate(slices):
                ext = local_ext(sl)
                snippets.append(_snippet("softmax_norm", it, v, "parallel", sl, ext, cfg))
                snippets.append(_snippet("weighted_sum", it, v, "parallel", sl, ext, cfg))
                snippets.append(_snippet("squash", it, v, "parallel", sl, ext, cfg))
                snippets.append(_snippet("agreement", it, v, "parallel", sl, ext, cfg))
    return snippets


def attach_gather_tree(tree: List[WorkloadSnippet], producers: List[WorkloadSnippet], payload: int) -> None:
    """Record tree messages on the snippet that last touched the sender's partial.

    A vault forwards its partial after its own local work and after
    absorbing its children, so the send hangs on the sender's final
    combine snippet when it has one, else on its producer snippet.
    """
    last_combine: Dict[int, WorkloadSnippet] = {}
    for sn in tree:
        src = sn.extents["from"]
        holder = last_combine.get(src, producers[src])
        holder.sends.append((sn.vault, payload))
        last_combine[sn.vault] = sn


@dataclass(frozen=True)
class PESchedule:
    n_subops: int
    width: int  # PEs that receive work
    waves: int
    split_axes: Tuple[str, ...]
    per_pe: Tuple[int, ...]  # sub-ops per PE


def intra_vault_schedule(
    stage: str, ext: Dict[str, int], cfg: NetworkConfig, plan_dim: str, n_pes: int = 16,
    min_efficiency: float = 1.0, refine: bool = True,
) -> PESchedule:
    """Spread a snippet's sub-operations over the vault's PEs.

    Work is first split along the plan dimension when the stage allows it.
    If that leaves PEs idle, or the last wave badly underfilled, the split
    is refined along the other axes the stage can run in parallel.
    With refine=False the first axis is kept whatever the occupancy.
    """
    shape = stage_shape(stage, cfg)
    axes = list(shape.sub_axes)
    if axes == ["e"]:
        order = ["e"]
    else:
        allowed = parallelizable_dims(STAGE_EQ[stage])
        plan_axis = {"B": "k", "L": "i", "H": "j"}[plan_dim]
        first = plan_axis if plan_axis in axes and AXIS_DIM[plan_axis] in allowed else axes[0]
        order = [first] + [a for a in axes if a != first]
    n = 0
    used: List[str] = []
    for ax in order:
        e = shape.n_subops(ext) if ax == "e" else ext.get(ax, 0)
        n = e if not used else n * e
        used.append(ax)
        if n == 0:
            break
        waves = math.ceil(n / n_pes)
        if not refine or (n >= n_pes and n / (waves * n_pes) >= min_efficiency):
            break
    if n == 0:
        return PESchedule(0, 0, 0, tuple(used), tuple([0] * n_pes))
    width = min(n, n_pes)
    waves = math.ceil(n / n_pes)
    base, extra = divmod(n, n_pes)
    per_pe = tuple(base + (1 if p < extra else 0) for p in range(n_pes))
    return PESchedule(n, width, waves, tuple(used), per_pe)
