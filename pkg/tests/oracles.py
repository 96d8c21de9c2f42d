"""Independent reference implementations used by the tests.

Nothing here imports pimcaps; each oracle is written from the defining
formulas with plain Python loops or the struct module.
"""
from __future__ import annotations

import math
import struct
from typing import List, Sequence, Tuple

BENCHMARKS = {
    "caps-mn1": (100, 1152, 10, 3),
    "caps-mn2": (200, 1152, 10, 3),
    "caps-mn3": (300, 1152, 10, 3),
    "caps-cf1": (100, 2304, 11, 3),
    "caps-cf2": (100, 3456, 11, 3),
    "caps-cf3": (100, 4608, 11, 3),
    "caps-en1": (100, 1152, 26, 3),
    "caps-en2": (100, 1152, 47, 3),
    "caps-en3": (100, 1152, 62, 3),
    "caps-sv1": (100, 576, 10, 3),
    "caps-sv2": (100, 576, 10, 6),
    "caps-sv3": (100, 576, 10, 9),
}


# routing ---------------------------------------------------------------

def naive_routing(u, W, iterations: int) -> List:
    """Quadruple-loop dynamic routing in double precision.

    u[k][i][a], W[i][j][a][c]; returns v[k][j][c]. Softmax runs over j for
    each i; b is shared across the batch.
    """
    NB, NL, CL = len(u), len(u[0]), len(u[0][0])
    NH, CH = len(W[0]), len(W[0][0][0])
    uh = [[[[sum(float(u[k][i][a]) * float(W[i][j][a][c]) for a in range(CL)) for c in range(CH)]
            for j in range(NH)] for i in range(NL)] for k in range(NB)]
    b = [[0.0] * NH for _ in range(NL)]
    v = None
    for _ in range(iterations):
        c = []
        for i in range(NL):
            ex = [math.exp(b[i][j]) for j in range(NH)]
            tot = sum(ex)
            c.append([e / tot for e in ex])
        v = []
        for k in range(NB):
            vk = []
            for j in range(NH):
                s = [sum(c[i][j] * uh[k][i][j][x] for i in range(NL)) for x in range(CH)]
                n2 = sum(x * x for x in s)
                f = 0.0 if n2 == 0 else n2 / (1 + n2) / math.sqrt(n2)
                vk.append([f * x for x in s])
            v.append(vk)
        for i in range(NL):
            for j in range(NH):
                b[i][j] += sum(sum(v[k][j][x] * uh[k][i][j][x] for x in range(CH)) for k in range(NB))
    return v


# binary32 tricks ---------------------------------------------------------

def f2u(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def u2f(n: int) -> float:
    return struct.unpack("<f", struct.pack("<I", n & 0xFFFFFFFF))[0]


def f32(x: float) -> float:
    return u2f(f2u(x))


LOG2E_F32 = f32(1 / math.log(2))
AVG_F32 = f32(1 / math.log(2) - 0.5)


def exp_raw(x: float) -> float:
    z = LOG2E_F32 * f32(x) + AVG_F32 + 126
    return u2f(math.floor(z * 2**23))


def inv_sqrt(x: float) -> float:
    y = u2f(0x5F3759DF - (f2u(x) >> 1))
    return y * (1.5 - 0.5 * x * y * y)


def reciprocal(d: float) -> float:
    r = u2f(0x7EEF127F - f2u(d))
    return r * (2 - d * r)


# scheduler -------------------------------------------------------------

def kappa(n_h: int, n_max: int, q: float, gv: float, gh: float) -> float:
    return gv * n_h * q + gh * n_max / n_h


def brute_nh(n_max: int, q: float, gv: float, gh: float) -> Tuple[int, float]:
    """Smallest-kappa n_h over 1..n_max, with all minimizers."""
    vals = {n: kappa(n, n_max, q, gv, gh) for n in range(1, n_max + 1)}
    best = min(vals.values())
    return [n for n, k in vals.items() if k == best], best


# cost model ------------------------------------------------------------

def hand_E(dim: str, NB, NL, NH, CL, CH, I, V) -> float:
    cdiv = lambda a, b: -(-a // b)
    if dim == "H":
        return NB * NL * cdiv(NH, V) * CH * (2 * CL - 1 + 2 * I)
    if dim == "L":
        return NB * cdiv(NL, V) * NH * (2 * I * (2 * CH - 1) + CH * (2 * CL - 1))
    n = cdiv(NB, V)
    lg = math.ceil(math.log2(V)) if V > 1 else 0
    return n * NL * NH * CH * (2 * CL - 1) + I * (
        n * NH * CH * (2 * NL - 1) + n * NH * (3 * CH + 19) + n * NL * NH * (2 * CH - 1) + lg / V + 4 * CH)


def hand_M(dim: str, NB, NL, NH, I, V, sb=4, sc=4, ss=4, sv=4, pkt=16) -> float:
    if dim == "B":
        return I * ((V - 1) * NL * NH * (sb + pkt) + (V - 1) * NL * NH * (sc + pkt))
    if dim == "L":
        return I * (NB * (V - 1) * NH * (ss + pkt) + NB * (V - 1) * NH * (sv + pkt))
    return I * ((V - 1) * NL * (sb + pkt) + NL * (sc + pkt))


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0 and nb == 0:
        return 1.0
    return dot / (na * nb)
