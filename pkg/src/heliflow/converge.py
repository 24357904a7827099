"""Refinement studies: rerun a scenario at doubled resolutions and tabulate
invariant drifts with their observed convergence orders.

Each level doubles every grid axis; the step size follows through the CFL
rule, so drifts from a convergent scheme shrink at its combined order.
Levels are independent simulations; a failed level is reported and the
remaining levels still run.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import dynamics, outputs, scenario as scenario_mod

DRIFT_KEYS = ("mass", "energy", "helicity_omega", "helicity_E")
_FLOOR = 1e-12


@dataclass
class LevelResult:
    n: tuple
    status: str = "ok"
    error: str = ""
    steps: int = 0
    drifts: Dict[str, float] = field(default_factory=dict)


def refine_resolved(resolved: dict, factor: int) -> dict:
    out = copy.deepcopy(resolved)
    out["grid"]["n"] = [v * factor for v in resolved["grid"]["n"]]
    return out


def record_drifts(records) -> Dict[str, float]:
    """Worst relative drift of each tracked invariant over a record list.

    Normalization is max(|initial|, |final|, 1e-8) per quantity, so
    identically-zero invariants read as absolute drifts.
    """
    first, last = records[0], records[-1]

    def rel(get):
        ref = max(abs(get(first)), abs(get(last)), 1e-8)
        return max(abs(get(r) - get(first)) for r in records) / ref

    out = {
        "mass": rel(lambda r: r.mass),
        "energy": rel(lambda r: r.energy),
        "helicity_omega": rel(lambda r: r.helicity_omega),
    }
    dim = len(first.helicity_Ei)
    out["helicity_E"] = max(
        rel(lambda r, i=i: r.helicity_Ei[i]) for i in range(dim))
    return out


def run_levels(base_resolved: dict, levels: int,
               out_dir: Optional[str] = None) -> List[LevelResult]:
    """Run the scenario at `levels` successively doubled resolutions."""
    if levels < 2:
        raise ValueError("a refinement study needs at least 2 levels")
    results = []
    for lv in range(levels):
        resolved = refine_resolved(base_resolved, 2 ** lv)
        scn = scenario_mod.scenario_from_dict(resolved)
        row = LevelResult(n=tuple(resolved["grid"]["n"]))
        try:
            res = dynamics.run(scn)
        except dynamics.SimulationAborted as exc:
            row.status = "aborted"
            row.error = str(exc)
            results.append(row)
            continue
        row.steps = res.stats.steps
        row.drifts = record_drifts(res.records)
        if out_dir is not None:
            level_dir = os.path.join(out_dir, f"level{lv}")
            outputs.write_run_outputs(level_dir, scn, res.records,
                                      res.final_state, res.stats)
        results.append(row)
    return results


def observed_orders(results: List[LevelResult]) -> List[Dict[str, str]]:
    """Per-gap convergence orders, 'n/a at floor' when a drift sits at
    roundoff and 'n/a' across a failed level."""
    orders = []
    for a, b in zip(results, results[1:]):
        row = {}
        for key in DRIFT_KEYS:
            if a.status != "ok" or b.status != "ok":
                row[key] = "n/a"
            elif a.drifts[key] < _FLOOR or b.drifts[key] < _FLOOR:
                row[key] = "n/a at floor"
            else:
                row[key] = "%.2f" % float(np.log2(a.drifts[key] / b.drifts[key]))
        orders.append(row)
    return orders


def format_table(results: List[LevelResult]) -> str:
    """Human-readable drift table with interleaved order rows."""
    orders = observed_orders(results)
    header = ("level", "n", "steps") + DRIFT_KEYS
    lines = ["  ".join(f"{h:>15}" for h in header)]
    for i, row in enumerate(results):
        if row.status != "ok":
            cells = [str(i), "x".join(map(str, row.n)), row.status] + \
                ["-"] * len(DRIFT_KEYS)
        else:
            cells = [str(i), "x".join(map(str, row.n)), str(row.steps)] + \
                ["%.3e" % row.drifts[k] for k in DRIFT_KEYS]
        lines.append("  ".join(f"{c:>15}" for c in cells))
        if i < len(orders):
            ocells = ["", "order", ""] + [orders[i][k] for k in DRIFT_KEYS]
            lines.append("  ".join(f"{c:>15}" for c in ocells))
    return "\n".join(lines)
