"""Dynamic routing between capsule layers with pluggable scalar arithmetic.

Tensors are float32 numpy arrays in row-major order with fixed axis layouts:

    u      [k, i, C_L]        low-level capsule outputs (k = batch)
    W      [i, j, C_L, C_H]   transformation matrices
    u_hat  [k, i, j, C_H]     prediction vectors
    b, c   [i, j]             routing logits / coefficients, shared over k
    s, v   [k, j, C_H]        weighted sums / squashed outputs
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import approx


@dataclass(frozen=True)
class NetworkConfig:
    batch_size: int
    low_caps: int
    high_caps: int
    low_dim: int = 8
    high_dim: int = 16
    iterations: int = 3

    def __post_init__(self) -> None:
        for name in ("batch_size", "low_caps", "high_caps", "low_dim", "high_dim", "iterations"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    # short aliases matching the usual symbols
    @property
    def N_B(self) -> int:
        return self.batch_size

    @property
    def N_L(self) -> int:
        return self.low_caps

    @property
    def N_H(self) -> int:
        return self.high_caps

    @property
    def C_L(self) -> int:
        return self.low_dim

    @property
    def C_H(self) -> int:
        return self.high_dim

    @property
    def I(self) -> int:  # noqa: E743
        return self.iterations


class ScalarProvider:
    """Elementwise arithmetic used by the routing stages."""

    name = "abstract"

    def add(self, a, b) -> np.ndarray:
        return np.add(a, b, dtype=np.float32)

    def multiply(self, a, b) -> np.ndarray:
        return np.multiply(a, b, dtype=np.float32)

    def divide(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def inv_sqrt(self, x) -> np.ndarray:
        raise NotImplementedError

    def exp(self, x) -> np.ndarray:
        raise NotImplementedError


class ExactProvider(ScalarProvider):
    name = "exact"

    def divide(self, a, b) -> np.ndarray:
        return np.divide(a, b, dtype=np.float32)

    def inv_sqrt(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        return (np.float32(1.0) / np.sqrt(x)).astype(np.float32)

    def exp(self, x) -> np.ndarray:
        return np.exp(np.asarray(x, dtype=np.float32)).astype(np.float32)


class ApproxProvider(ScalarProvider):
    """PE datapath arithmetic; calibration constants are fixed at construction."""

    name = "approx"

    def __init__(self, params: Optional[approx.ExpApproxParams] = None):
        self.params = params if params is not None else approx.default_calibration()

    def divide(self, a, b) -> np.ndarray:
        return approx.approx_div(a, b)

    def inv_sqrt(self, x) -> np.ndarray:
        return approx.approx_inv_sqrt(x)

    def exp(self, x) -> np.ndarray:
        return approx.approx_exp(x, self.params)


EXACT = ExactProvider()


@dataclass
class RoutingState:
    u_hat: np.ndarray
    b: np.ndarray
    c: np.ndarray
    s: np.ndarray
    v: np.ndarray


def _as_f32(name: str, x, ndim: int, axes: Sequence[str]) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != ndim:
        raise ValueError(f"{name}: expected {ndim} axes [{', '.join(axes)}], got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite values")
    return arr


def _match(axis: str, left: Tuple[str, int], right: Tuple[str, int]) -> None:
    if left[1] != right[1]:
        raise ValueError(
            f"shape mismatch on axis {axis}: {left[0]} has {left[1]}, {right[0]} has {right[1]}"
        )


def predict(u, W, provider: ScalarProvider = EXACT) -> np.ndarray:
    u = _as_f32("u", u, 3, ("k", "i", "C_L"))
    W = _as_f32("W", W, 4, ("i", "j", "C_L", "C_H"))
    _match("i", ("u", u.shape[1]), ("W", W.shape[0]))
    _match("C_L", ("u", u.shape[2]), ("W", W.shape[2]))
    # products then a sum over C_L, both in binary32
    prod = provider.multiply(u[:, :, None, :, None], W[None, :, :, :, :])
    return prod.sum(axis=3, dtype=np.float32)


def routing_softmax(b, provider: ScalarProvider = EXACT) -> np.ndarray:
    """Normalize each row of b over the high-level capsule axis."""
    b = _as_f32("b", b, 2, ("i", "j"))
    if isinstance(provider, ExactProvider):
        e = provider.exp(b - b.max(axis=1, keepdims=True))
    else:
        e = provider.exp(b)
    denom = e.sum(axis=1, keepdims=True, dtype=np.float32)
    return provider.divide(e, np.broadcast_to(denom, e.shape))


def weighted_sum(u_hat, c, provider: ScalarProvider = EXACT) -> np.ndarray:
    u_hat = _as_f32("u_hat", u_hat, 4, ("k", "i", "j", "C_H"))
    c = _as_f32("c", c, 2, ("i", "j"))
    _match("i", ("u_hat", u_hat.shape[1]), ("c", c.shape[0]))
    _match("j", ("u_hat", u_hat.shape[2]), ("c", c.shape[1]))
    return provider.multiply(u_hat, c[None, :, :, None]).sum(axis=1, dtype=np.float32)


def squash(s, provider: ScalarProvider = EXACT) -> np.ndarray:
    """Norm-bounding nonlinearity; the zero vector maps to zero."""
    s = _as_f32("s", s, 3, ("k", "j", "C_H"))
    n2 = provider.multiply(s, s).sum(axis=-1, dtype=np.float32)
    factor = np.zeros_like(n2)
    nz = n2 > 0
    if np.any(nz):
        n2_nz = n2[nz]
        norm = provider.multiply(n2_nz, provider.inv_sqrt(n2_nz))
        factor[nz] = provider.divide(norm, provider.add(np.float32(1.0), n2_nz))
    return provider.multiply(s, factor[..., None])


def agreement_update(v, u_hat, b, provider: ScalarProvider = EXACT) -> np.ndarray:
    v = _as_f32("v", v, 3, ("k", "j", "C_H"))
    u_hat = _as_f32("u_hat", u_hat, 4, ("k", "i", "j", "C_H"))
    b = _as_f32("b", b, 2, ("i", "j"))
    _match("k", ("v", v.shape[0]), ("u_hat", u_hat.shape[0]))
    _match("j", ("v", v.shape[1]), ("u_hat", u_hat.shape[2]))
    _match("C_H", ("v", v.shape[2]), ("u_hat", u_hat.shape[3]))
    _match("i", ("u_hat", u_hat.shape[1]), ("b", b.shape[0]))
    _match("j", ("u_hat", u_hat.shape[2]), ("b", b.shape[1]))
    dots = provider.multiply(u_hat, v[:, None, :, :]).sum(axis=-1, dtype=np.float32)
    return provider.add(dots.sum(axis=0, dtype=np.float32), b)


def dynamic_routing(
    u,
    W,
    config: NetworkConfig,
    provider: ScalarProvider = EXACT,
    on_iteration: Optional[Callable[[int, RoutingState], None]] = None,
) -> Tuple[np.ndarray, RoutingState]:
    u = np.asarray(u, dtype=np.float32)
    W = np.asarray(W, dtype=np.float32)
    expected_u = (config.N_B, config.N_L, config.C_L)
    expected_W = (config.N_L, config.N_H, config.C_L, config.C_H)
    if u.shape != expected_u:
        raise ValueError(f"u shape {u.shape} does not match config {expected_u}")
    if W.shape != expected_W:
        raise ValueError(f"W shape {W.shape} does not match config {expected_W}")

    u_hat = predict(u, W, provider)
    b = np.zeros((config.N_L, config.N_H), dtype=np.float32)
    state = None
    for it in range(config.I):
        c = routing_softmax(b, provider)
        s = weighted_sum(u_hat, c, provider)
        v = squash(s, provider)
        b = agreement_update(v, u_hat, b, provider)
        state = RoutingState(u_hat=u_hat, b=b, c=c, s=s, v=v)
        if on_iteration is not None:
            on_iteration(it, state)
    assert state is not None
    return state.v, state


def random_instance(config: NetworkConfig, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded test inputs: u = squash(N(0, 1)), W ~ N(0, std 1/sqrt(C_L)).

    u is squashed like the output of a primary capsule layer, which keeps
    the logits small enough for the approximate exponential.
    """
    rng = np.random.default_rng(seed)
    u = squash(rng.standard_normal((config.N_B, config.N_L, config.C_L)).astype(np.float32))
    W = (
        rng.standard_normal((config.N_L, config.N_H, config.C_L, config.C_H))
        / np.sqrt(config.C_L)
    ).astype(np.float32)
    return u, W
