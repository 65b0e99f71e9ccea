"""
Desk-scale scaling benchmark: both connectivity algorithms on a phantom swept
over source-grid resolutions, coarse to fine.
"""

from __future__ import annotations

import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import pandas as pd
from tqdm import tqdm

from tractconn.connectivity import proposed_connectivity, traditional_connectivity
from tractconn.errors import InvalidArgumentError
from tractconn.phantoms import make_phantom
from tractconn.tracking import RunParams, TrackParams

_log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "phantom",
    "resolution_mm",
    "algorithm",
    "repeat",
    "n_source_voxels",
    "n_regions",
    "k",
    "k_star",
    "streamlines_generated",
    "attempts",
    "mean_passthrough",
    "wall_time_s",
    "threads",
    "cpu_model",
    "python_version",
]
ALGORITHMS = ("traditional", "proposed")

# an 8x larger source region must cost the traditional run at least 4x more time
TRADITIONAL_MIN_GROWTH_PER_N = 0.5
PROPOSED_MAX_GROWTH = 2.0


def cpu_model() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text(encoding="utf-8", errors="replace").splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or "unknown"


def check_resolutions(resolutions: Sequence[float]) -> List[float]:
    values = [float(r) for r in resolutions]
    if not values:
        raise InvalidArgumentError("at least one resolution is required")
    if any(not r > 0 for r in values):
        raise InvalidArgumentError(f"resolutions must be positive, got {values}")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise InvalidArgumentError(f"resolutions must be strictly descending (coarse to fine), got {values}")
    return values


def run_bench(
    phantom: str = "slab",
    resolutions: Sequence[float] = (2.0, 1.0, 0.5),
    k: int = 20,
    k_star: int = 2000,
    repeat: int = 1,
    tp: TrackParams = TrackParams(),
    endpoint_mode: str = "both",
    workers: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """One report row per (resolution, algorithm, repeat), columns REPORT_COLUMNS."""
    values = check_resolutions(resolutions)
    if int(repeat) < 1:
        raise InvalidArgumentError(f"repeat must be >= 1, got {repeat}")
    rp = RunParams(k=k, k_star=k_star, endpoint_mode=endpoint_mode)
    machine = cpu_model()
    python_version = platform.python_version()

    rows = []
    runs = [(res, rep, algo) for res in values for rep in range(int(repeat)) for algo in ALGORITHMS]
    for res, rep, algo in tqdm(runs, desc="Benchmark", unit="run", disable=not progress):
        ph = make_phantom(phantom, res)
        run = traditional_connectivity if algo == "traditional" else proposed_connectivity
        start = time.perf_counter()
        C = run(ph.region, ph.targets, ph.field, tp, rp, workers=workers)
        elapsed = time.perf_counter() - start
        prov = C.provenance
        rows.append(
            {
                "phantom": phantom,
                "resolution_mm": res,
                "algorithm": algo,
                "repeat": rep,
                "n_source_voxels": C.n_rows,
                "n_regions": C.n_regions,
                "k": rp.k,
                "k_star": rp.k_star,
                "streamlines_generated": prov.streamlines,
                "attempts": prov.attempts,
                "mean_passthrough": prov.mean_passthrough,
                "wall_time_s": elapsed,
                "threads": workers,
                "cpu_model": machine,
                "python_version": python_version,
            }
        )
        _log.info("%s @ %.3g mm (N=%d): %.3fs", algo, res, C.n_rows, elapsed)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


@dataclass
class BenchSummary:
    table: pd.DataFrame
    traditional_growth: List[float]
    n_growth: List[float]
    proposed_growth: float

    @property
    def traditional_ok(self) -> bool:
        return all(t >= TRADITIONAL_MIN_GROWTH_PER_N * n for t, n in zip(self.traditional_growth, self.n_growth))

    @property
    def proposed_ok(self) -> bool:
        return self.proposed_growth <= PROPOSED_MAX_GROWTH

    @property
    def speedup_increasing(self) -> bool:
        speedups = self.table["speedup"].tolist()
        return all(b > a for a, b in zip(speedups, speedups[1:]))

    @property
    def passed(self) -> bool:
        return self.traditional_ok and self.proposed_ok and self.speedup_increasing


def summarize(report: pd.DataFrame) -> BenchSummary:
    """Median wall time per (resolution, algorithm), speedups and growth ratios."""
    missing = [c for c in REPORT_COLUMNS if c not in report.columns]
    if missing:
        raise InvalidArgumentError(f"benchmark report lacks columns {missing}")
    if set(report["algorithm"]) != set(ALGORITHMS):
        raise InvalidArgumentError(f"benchmark report must cover both algorithms {ALGORITHMS}")

    medians = report.pivot_table(index="resolution_mm", columns="algorithm", values="wall_time_s", aggfunc="median")
    voxels = report.groupby("resolution_mm")["n_source_voxels"].first()
    table = pd.DataFrame(
        {
            "resolution_mm": medians.index,
            "n_source_voxels": voxels.reindex(medians.index).to_numpy(),
            "traditional_s": medians["traditional"].to_numpy(),
            "proposed_s": medians["proposed"].to_numpy(),
        }
    )
    table = table.sort_values("resolution_mm", ascending=False).reset_index(drop=True)
    table["speedup"] = table["traditional_s"] / table["proposed_s"]

    trad = table["traditional_s"].tolist()
    n = table["n_source_voxels"].tolist()
    prop = table["proposed_s"].tolist()
    return BenchSummary(
        table=table,
        traditional_growth=[b / a for a, b in zip(trad, trad[1:])],
        n_growth=[b / a for a, b in zip(n, n[1:])],
        proposed_growth=prop[-1] / prop[0],
    )
