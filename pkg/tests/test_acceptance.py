"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities before asserting, so the run log doubles as a results table.
"""
import math
import time

import numpy as np
import pytest

from pimcaps import approx
from pimcaps.capsnet import EXACT, ApproxProvider, NetworkConfig, dynamic_routing, random_instance
from pimcaps.config import BUNDLED, bundled
from pimcaps.hmc import (
    DEFAULT, AddressLayout, map_address_default, map_address_pim, unmap_address_default,
    unmap_address_pim,
)
from pimcaps.planner import CostParams, compute_E, compute_E_B_simplified, compute_M
from pimcaps import report
from pimcaps.rmas import SchedulerInput, kappa, optimal_nh
from pimcaps.sim import Scenario, run_rp

import oracles


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: [{'PASS' if ok else 'FAIL'}] {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def scenario_runs():
    out = {}
    for name in BUNDLED:
        cfg = bundled(name).network
        out[name] = {s: run_rp(cfg, scenario=s)[0] for s in
                     (Scenario.BASELINE, Scenario.PIM_INTRA, Scenario.PIM_INTER, Scenario.PIM_CAPSNET)}
    return out


def test_c1_routing_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_err, worst_sum, max_norm = 0.0, 0.0, 0.0
    for seed in range(100):
        NB, NL, NH, CL, CH = (int(x) for x in rng.integers(1, 9, 5))
        I = int(rng.integers(1, 4))
        cfg = NetworkConfig(NB, NL, NH, CL, CH, I)
        u, W = random_instance(cfg, seed)
        v, st = dynamic_routing(u, W, cfg, EXACT)
        ref = np.array(oracles.naive_routing(u.tolist(), W.tolist(), I))
        worst_err = max(worst_err, float(np.abs(v - ref).max()))
        worst_sum = max(worst_sum, float(np.abs(st.c.sum(axis=1) - 1).max()))
        max_norm = max(max_norm, float(np.linalg.norm(v, axis=-1).max()))
    dt = time.perf_counter() - t0
    ok = worst_err <= 1e-6 and worst_sum <= 1e-6 and max_norm < 1 and dt < 60
    verdict(1, ok, f"max |v - oracle| {worst_err:.2e}, max |sum c - 1| {worst_sum:.2e}, "
                   f"max |v| {max_norm:.6f}, {dt:.1f}s")
    assert ok


def _fidelity_instances():
    # bundled benchmark shapes scaled down 16x along batch and low capsules
    for seed in range(100):
        name = BUNDLED[seed % len(BUNDLED)]
        NB, NL, NH, _ = oracles.BENCHMARKS[name]
        yield seed, NetworkConfig(math.ceil(NB / 16), math.ceil(NL / 16), NH, 8, 16, 3)


def test_c2_approx_fidelity(verdict):
    t0 = time.perf_counter()
    x = np.random.default_rng(0).uniform(-5, 5, 10_000).astype(np.float32)
    exact = np.exp(x.astype(np.float64))
    raw_err = float((np.abs(approx.approx_exp_raw(x) - exact) / exact).mean())
    params = approx.calibrate_exp_recovery(10_000, (-5, 5), 0)
    x2 = np.random.default_rng(99).uniform(-5, 5, 10_000).astype(np.float32)
    e2 = np.exp(x2.astype(np.float64))
    signed = float(((approx.approx_exp(x2, params) - e2) / e2).mean())

    rng = np.random.default_rng(11)
    bits = (rng.integers(1, 255, 1_000_000, dtype=np.uint32) << 23) | rng.integers(0, 1 << 23, 1_000_000, dtype=np.uint32)
    d = approx.bits_to_float(bits).astype(np.float32)
    isq = 1 / np.sqrt(d.astype(np.float64))
    isq_err = float((np.abs(approx.approx_inv_sqrt(d) - isq) / isq).max())
    lo, hi = approx.DIV_EXPONENT_RANGE
    dbits = (rng.integers(lo, hi + 1, 1_000_000, dtype=np.uint32) << 23) | rng.integers(0, 1 << 23, 1_000_000, dtype=np.uint32)
    dd = approx.bits_to_float(dbits).astype(np.float32)
    q = 1 / dd.astype(np.float64)
    div_err = float((np.abs(approx.approx_div(np.float32(1), dd) - q) / q).max())

    cos, agree, total = [], 0, 0
    provider = ApproxProvider(params)
    for seed, cfg in _fidelity_instances():
        u, W = random_instance(cfg, seed)
        ve, _ = dynamic_routing(u, W, cfg, EXACT)
        va, _ = dynamic_routing(u, W, cfg, provider)
        cos.append(oracles.cosine(ve.ravel().tolist(), va.ravel().tolist()))
        ne, na = np.linalg.norm(ve, axis=-1), np.linalg.norm(va, axis=-1)
        agree += int((ne.argmax(axis=1) == na.argmax(axis=1)).sum())
        total += cfg.N_B
    min_cos, agreement = min(cos), agree / total
    dt = time.perf_counter() - t0
    checks = {
        "raw exp err": raw_err <= 0.05, "calibrated signed err": abs(signed) <= 0.01,
        "inv_sqrt": isq_err <= 0.002, "div": div_err <= 0.005,
        "cosine": min_cos >= 0.99, "argmax": agreement >= 0.99, "runtime": dt < 120,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(2, ok, f"exp raw {raw_err:.4f}, calibrated signed {signed:+.5f}, inv_sqrt {isq_err:.5f}, "
                   f"div {div_err:.5f}, min cosine {min_cos:.5f}, argmax agreement {agreement:.4f} "
                   f"({agree}/{total}), {dt:.1f}s" + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


def test_c3_cost_model(verdict):
    p2 = CostParams(n_vault=2)
    got = {
        "E_H": compute_E("H", NetworkConfig(2, 4, 2, 2, 2, 1), p2),
        "E_L": compute_E("L", NetworkConfig(2, 2, 2, 2, 2, 1), p2),
        "E_B": compute_E("B", NetworkConfig(2, 2, 2, 2, 2, 1), p2),
        "M_B": compute_M("B", NetworkConfig(1, 4, 2, iterations=1), p2),
        "M_H": compute_M("H", NetworkConfig(1, 4, 2, iterations=1), p2),
    }
    want = {"E_H": 80, "E_L": 48, "E_B": 106.5, "M_B": 320, "M_H": 160}
    worst = 0.0
    for NL in (256, 512, 576, 1152, 2304, 3456, 4608):
        for NB, NH in ((1, 10), (100, 10), (100, 62), (300, 11)):
            cfg = NetworkConfig(NB, NL, NH)
            e6 = compute_E("B", cfg, CostParams())
            worst = max(worst, abs(compute_E_B_simplified(cfg, CostParams()) - e6) / e6)
    ok = got == want and worst <= 0.02
    verdict(3, ok, f"{got}; simplified vs exact E_B worst {worst:.4%}")
    assert ok


def test_c4_rmas(verdict):
    anchor = SchedulerInput(4, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(4)
    draws = [(4, 1.0, 1.0, 1.0)]
    while len(draws) < 1000:
        q = float(rng.uniform(0, 64))
        if q == 0:
            continue
        draws.append((int(rng.integers(1, 33)), q, float(10 ** rng.uniform(-2, 2)), float(10 ** rng.uniform(-2, 2))))
    misses = [d for d in draws if optimal_nh(SchedulerInput(*d)) not in oracles.brute_nh(*d)[0]]
    ok = optimal_nh(anchor) == 2 and kappa(2, anchor) == 4 and not misses
    verdict(4, ok, f"anchor n_h={optimal_nh(anchor)} kappa={kappa(2, anchor)}; "
                   f"{len(draws) - len(misses)}/{len(draws)} draws match brute force")
    assert ok


def test_c5_address_mapping(verdict):
    rng = np.random.default_rng(5)
    addrs = rng.integers(0, 1 << 33, 1 << 20, dtype=np.int64).tolist()
    bad_round_trip = 0
    for k in range(5):
        lay = AddressLayout(DEFAULT, k)
        for a in addrs:
            blk = a & ~0xF
            bad_round_trip += unmap_address_default(*map_address_default(a, lay), lay) != blk
            bad_round_trip += unmap_address_pim(*map_address_pim(a, k), k) != blk
    interleave = all(
        [map_address_default(i * (16 << k), AddressLayout(DEFAULT, k))[0] for i in range(64)]
        == [i % 32 for i in range(64)] for k in range(5))
    one_bank, rotation = True, True
    for k in range(5):
        span = 16 << k
        for base in rng.integers(0, (1 << 33) // span - 16, 200).tolist():
            start = base * span
            n = int(rng.integers(1, (1 << k) + 1))
            first = int(rng.integers(0, (1 << k) - n + 1))
            one_bank &= len({map_address_pim(start + (first + b) * 16, k)[:2] for b in range(n)}) == 1
            hits = [map_address_pim(start + i * span, k) for i in range(16)]
            if (start >> 28) == ((start + 15 * span) >> 28):
                rotation &= len({h[0] for h in hits}) == 1 and sorted(h[1] for h in hits) == list(range(16))
    ok = bad_round_trip == 0 and interleave and one_bank and rotation
    verdict(5, ok, f"round-trip failures {bad_round_trip} over 10 x 2^20; default interleave {interleave}; "
                   f"single-bank requests {one_bank}; 16-sub-page bank rotation {rotation}")
    assert ok


def test_c6_scenario_ordering(verdict, scenario_runs):
    t0 = time.perf_counter()
    bad = []
    for name, r in scenario_runs.items():
        full = r[Scenario.PIM_CAPSNET]
        conds = {
            "<Inter": full.total_cycles < r[Scenario.PIM_INTER].total_cycles,
            "<Intra": full.total_cycles < r[Scenario.PIM_INTRA].total_cycles,
            "bytes<Intra": full.intervault_bytes < r[Scenario.PIM_INTRA].intervault_bytes,
            "energy<Baseline": full.energy_rel < r[Scenario.BASELINE].energy_rel,
        }
        bad += [f"{name}:{k}" for k, v in conds.items() if not v]
    ratios = [r[Scenario.PIM_INTRA].total_cycles / r[Scenario.PIM_CAPSNET].total_cycles
              for r in scenario_runs.values()]
    ok = not bad
    verdict(6, ok, f"{12 * 4 - len(bad)}/48 orderings hold; PIMIntra/PIMCapsNet cycles "
                   f"{min(ratios):.2f}..{max(ratios):.2f}" + (f"; violations {bad}" if bad else ""))
    assert ok


def test_c7_planner_and_sweep(verdict):
    freqs = (312.5e6, 625e6, 937.5e6)
    agree, flips, non_monotone = 0, [], []
    detail = []
    for name in BUNDLED:
        rows, _ = report.cmd_sweep(bundled(name), freqs)
        best = {}
        for f in freqs:
            cells = [r for r in rows if r["freq_hz"] == f]
            top = max(cells, key=lambda r: r["speedup"])
            best[f] = (top["dim"], top["speedup"], top["planner_choice"])
        if best[312.5e6][0] == best[312.5e6][2]:
            agree += 1
        else:
            detail.append(f"{name}: planner {best[312.5e6][2]} sim {best[312.5e6][0]}")
        if best[312.5e6][0] != best[937.5e6][0]:
            flips.append(name)
        speeds = [best[f][1] for f in freqs]
        if any(b < a for a, b in zip(speeds, speeds[1:])):
            non_monotone.append(name)
    ok = agree >= 10 and bool(flips) and not non_monotone
    verdict(7, ok, f"planner matches sim-best on {agree}/12 ({'; '.join(detail) or 'all'}); "
                   f"configs whose best dimension changes 312.5->937.5 MHz: {flips or 'none'}; "
                   f"non-monotone best-cell speedup: {non_monotone or 'none'}")
    assert ok


def test_c8_scalability(verdict, scenario_runs):
    def ratio(name):
        r = scenario_runs[name]
        return r[Scenario.BASELINE].total_cycles / r[Scenario.PIM_CAPSNET].total_cycles

    cf = [ratio(f"caps-cf{i}") for i in (1, 2, 3)]
    en = [ratio(f"caps-en{i}") for i in (1, 2, 3)]
    mono = lambda xs: all(b >= a for a, b in zip(xs, xs[1:]))
    ok = mono(cf) and mono(en)
    verdict(8, ok, "CF1-3 " + ", ".join(f"{x:.3f}" for x in cf) + "; EN1-3 " + ", ".join(f"{x:.3f}" for x in en))
    assert ok
