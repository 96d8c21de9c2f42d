"""Experiment orchestration and serialization of the command outputs."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import approx, hmc
from .config import BenchmarkConfig
from .planner import DEFAULT_SWEEP_HZ, CostParams, CostReport, select_dimension
from .sim.engine import Scenario, SimMetrics, TraceRow, run_pipeline, run_rp

SCHEMAS = ("plan", "simulate", "calibrate", "compare", "sweep", "trace")


class SimulationError(RuntimeError):
    pass


def load_schema(name: str) -> Dict:
    if name not in SCHEMAS:
        raise ValueError(f"no schema named {name!r}")
    return json.loads(resources.files("pimcaps").joinpath("schemas", f"{name}.schema.json").read_text())


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def hardware(bc: BenchmarkConfig, freq: Optional[float] = None) -> hmc.HMCConfig:
    return hmc.HMCConfig(vault_freq=freq or bc.vault_freq)


def cost_params(hw: hmc.HMCConfig) -> CostParams:
    return CostParams.for_hardware(hw.vault_freq, hw.pes_per_vault, hw.internal_bw, hw.n_vaults)


# plan ------------------------------------------------------------------

def cmd_plan(bc: BenchmarkConfig, params: Optional[CostParams] = None) -> Tuple[CostReport, str]:
    params = params or cost_params(hardware(bc))
    rep = select_dimension(bc.network, params)
    return rep, rep.to_csv()


# simulate --------------------------------------------------------------

def _simulate(bc: BenchmarkConfig, scenario: str, seed: int = 0, freq: Optional[float] = None,
              dim: Optional[str] = None, trace: Optional[List[TraceRow]] = None):
    hw = hardware(bc, freq)
    try:
        m, _ = run_rp(bc.network, dim, scenario, hw, seed=seed, trace=trace)
        pipe = run_pipeline(bc.network, m, hw, bc.n_batches, bc.host_latency_s)
    except ValueError as e:
        raise SimulationError(f"{bc.name} / {scenario}: {e}") from e
    return m, pipe


def cmd_simulate(bc: BenchmarkConfig, scenario: str, seed: int = 0, freq: Optional[float] = None,
                 dim: Optional[str] = None, trace: Optional[List[TraceRow]] = None) -> Tuple[Dict, str]:
    try:
        scenario = Scenario.parse(scenario).value
    except ValueError as e:
        raise SimulationError(str(e)) from e
    m, pipe = _simulate(bc, scenario, seed, freq, dim, trace)
    out = {
        "config": bc.name,
        "scenario": scenario,
        "seed": seed,
        "freq_hz": hardware(bc, freq).vault_freq,
        "metrics": m.to_dict(),
        "pipeline": {
            "n_batches": pipe.n_batches,
            "host_cycles": pipe.host_cycles,
            "rp_cycles": pipe.rp_cycles,
            "total_cycles": pipe.total_cycles,
            "seconds": pipe.seconds,
            "host_priority_vaults": pipe.n_h,
        },
    }
    return out, dump_json(out)


def trace_csv(rows: Sequence[TraceRow]) -> str:
    return _csv(["vault", "iteration", "stage", "kind", "start_cycle", "end_cycle"],
                ((r.vault, r.iteration, r.stage, r.kind, _fmt(r.start), _fmt(r.end)) for r in rows))


# calibrate -------------------------------------------------------------

def cmd_calibrate(seed: int = 0, n_samples: int = 10_000, lo: float = -5.0, hi: float = 5.0) -> Tuple[Dict, str]:
    params = approx.calibrate_exp_recovery(n_samples, (lo, hi), seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(lo, hi, n_samples).astype(np.float32)
    exact = np.exp(x.astype(np.float64))
    raw = approx.approx_exp_raw(x, params).astype(np.float64)
    cal = approx.approx_exp(x, params).astype(np.float64)
    out = {
        "seed": seed,
        "n_samples": n_samples,
        "range": [lo, hi],
        "params": json.loads(params.to_json()),
        "recovery_factor": float(params.recovery_factor),
        "raw_mean_rel_error": float(np.mean(np.abs(raw - exact) / exact)),
        "calibrated_mean_signed_rel_error": float(np.mean((cal - exact) / exact)),
    }
    return out, dump_json(out)


# compare ---------------------------------------------------------------

COMPARE_METRICS = ("speedup_rp", "speedup_e2e", "energy_rel_norm")


@dataclass(frozen=True)
class CompareCell:
    config: str
    scenario: str
    rp_cycles: int
    e2e_seconds: float
    energy_rel: float


def cmd_compare(configs: Sequence[BenchmarkConfig], scenarios: Sequence[str], seed: int = 0,
                freq: Optional[float] = None) -> Tuple[List[Dict], str]:
    """Speedup and energy of each scenario normalized to BaselineModel.

    One row per (config, metric); one column per requested scenario.
    """
    names = [Scenario.parse(s).value for s in scenarios]
    if not names:
        raise SimulationError("no scenarios requested")
    rows: List[Dict] = []
    for bc in configs:
        cells = {}
        for s in dict.fromkeys([Scenario.BASELINE.value] + names):
            m, pipe = _simulate(bc, s, seed, freq)
            cells[s] = CompareCell(bc.name, s, m.total_cycles, pipe.seconds, m.energy_rel)
        base = cells[Scenario.BASELINE.value]
        values = {
            "speedup_rp": lambda c: base.rp_cycles / c.rp_cycles,
            "speedup_e2e": lambda c: base.e2e_seconds / c.e2e_seconds,
            "energy_rel_norm": lambda c: c.energy_rel / base.energy_rel,
        }
        for metric in COMPARE_METRICS:
            row = {"config": bc.name, "metric": metric}
            row.update({s: float(values[metric](cells[s])) for s in names})
            rows.append(row)
    text = _csv(["config", "metric"] + names,
                ([r["config"], r["metric"]] + [_fmt(r[s]) for s in names] for r in rows))
    return rows, text


# sweep -----------------------------------------------------------------

def cmd_sweep(bc: BenchmarkConfig, freqs: Sequence[float] = DEFAULT_SWEEP_HZ, seed: int = 0) -> Tuple[List[Dict], str]:
    """Routing-pass speedup over BaselineModel per (frequency, dimension) cell."""
    freqs = list(freqs)
    if not freqs:
        raise SimulationError("frequency list is empty")
    rows: List[Dict] = []
    for f in freqs:
        if f <= 0:
            raise SimulationError(f"frequency must be positive, got {f}")
        base, _ = _simulate(bc, Scenario.BASELINE.value, seed, f)
        planned = select_dimension(bc.network, cost_params(hardware(bc, f))).selected
        cells = []
        for d in ("B", "L", "H"):
            m, _ = _simulate(bc, Scenario.PIM_CAPSNET.value, seed, f, d)
            cells.append({"config": bc.name, "freq_hz": float(f), "dim": d,
                          "speedup": base.seconds / m.seconds, "planner_choice": planned})
        best = max(cells, key=lambda c: c["speedup"])
        for c in cells:
            c["sim_best"] = int(c is best)
        rows.extend(cells)
    text = _csv(["config", "freq_hz", "dim", "speedup", "planner_choice", "sim_best"],
                ([r["config"], _fmt(r["freq_hz"]), r["dim"], _fmt(r["speedup"]), r["planner_choice"],
                  r["sim_best"]] for r in rows))
    return rows, text


def read_csv(text: str) -> List[Dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))
