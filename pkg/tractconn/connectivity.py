"""
Voxel-to-region connectivity accumulation.

Two seeding strategies fill the same N x (M + 1) count matrix:

  traditional: K generated streamlines per source voxel; each adds to its own
               seed voxel's row only.
  proposed:    K* generated streamlines seeded anywhere in the source region;
               each adds to every source voxel it passes through.

Column 0 collects streamlines with no endpoint in any target region; columns
1..M follow the ascending target labels.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from tractconn.errors import InvalidArgumentError
from tractconn.grid import LabelVolume, SourceRegion
from tractconn.streamline import EndpointMode, Streamline, Tractogram, endpoint_region, passthrough_rows
from tractconn.tracking import (
    ATTEMPT_FACTOR,
    DirectionField,
    RunParams,
    TrackParams,
    attempt_region,
    region_batches,
    track_voxel,
)
from tractconn.utils.parallel import chunk_ranges, run_chunks

_log = logging.getLogger(__name__)

UNASSIGNED = 0


def grid_record(vol: LabelVolume) -> Dict[str, list]:
    return {
        "dims": list(vol.shape.dims),
        "voxel_size": [round(s, 6) for s in vol.shape.voxel_size],
        "affine": [[float(x) for x in row] for row in vol.affine.matrix],
    }


@dataclass(frozen=True)
class Provenance:
    algorithm: str
    endpoint_mode: str
    k: Optional[int] = None
    k_star: Optional[int] = None
    rng_seed: Optional[int] = None
    streamlines: int = 0
    attempts: int = 0
    passthrough_total: int = 0
    passed_streamlines: int = 0
    flagged_rows: Tuple[int, ...] = ()
    source_grid: Dict[str, list] = dataclasses.field(default_factory=dict)
    target_grid: Dict[str, list] = dataclasses.field(default_factory=dict)

    @property
    def mean_passthrough(self) -> float:
        """Average number of source voxels passed per streamline."""
        return self.passthrough_total / self.streamlines if self.streamlines else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flagged_rows"] = list(self.flagged_rows)
        out["mean_passthrough"] = self.mean_passthrough
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        kwargs["flagged_rows"] = tuple(kwargs.get("flagged_rows", ()))
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    counts: np.ndarray
    row_voxels: np.ndarray
    col_labels: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        rows = np.array(self.row_voxels, dtype=np.int64).reshape(-1, 3)
        cols = np.array(self.col_labels, dtype=np.int64).reshape(-1)
        if counts.shape != (len(rows), len(cols) + 1):
            raise InvalidArgumentError(
                f"counts shape {counts.shape} does not match {len(rows)} rows x {len(cols)} regions + 1"
            )
        if counts.size and counts.min() < 0:
            raise InvalidArgumentError("connectivity counts must be non-negative")
        if len(np.unique(cols)) != len(cols) or np.any(np.diff(cols) <= 0) or np.any(cols <= 0):
            raise InvalidArgumentError("column labels must be distinct, positive and ascending")
        for arr, name in ((counts, "counts"), (rows, "row_voxels"), (cols, "col_labels")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_rows(self) -> int:
        return len(self.row_voxels)

    @property
    def n_regions(self) -> int:
        return len(self.col_labels)

    @property
    def target_counts(self) -> np.ndarray:
        return self.counts[:, 1:]

    def column_of(self, label: int) -> int:
        hits = np.flatnonzero(self.col_labels == label)
        if len(hits) == 0:
            raise InvalidArgumentError(f"label {label} is not a column of this matrix")
        return int(hits[0]) + 1

    def same_index(self, other: "ConnectivityMatrix") -> bool:
        return np.array_equal(self.row_voxels, other.row_voxels) and np.array_equal(self.col_labels, other.col_labels)

    def __add__(self, other: "ConnectivityMatrix") -> "ConnectivityMatrix":
        if not self.same_index(other):
            raise InvalidArgumentError("cannot add matrices with different row or column indices")
        p, q = self.provenance, other.provenance
        merged = replace(
            p,
            streamlines=p.streamlines + q.streamlines,
            attempts=p.attempts + q.attempts,
            passthrough_total=p.passthrough_total + q.passthrough_total,
            passed_streamlines=p.passed_streamlines + q.passed_streamlines,
            flagged_rows=tuple(sorted(set(p.flagged_rows) | set(q.flagged_rows))),
        )
        return ConnectivityMatrix(self.counts + other.counts, self.row_voxels, self.col_labels, merged)


class _Accumulator:
    """Dense count block plus the bookkeeping one worker reports back."""

    def __init__(self, n_rows: int, col_labels: np.ndarray):
        self.counts = np.zeros((n_rows, len(col_labels) + 1), dtype=np.int64)
        self.col_of = {int(label): c for c, label in enumerate(col_labels, start=1)}
        self.streamlines = 0
        self.passthrough_total = 0
        self.passed = 0

    def columns(self, l: Streamline, targets: LabelVolume, mode: EndpointMode) -> List[int]:
        regions = endpoint_region(l, targets, mode)
        return [self.col_of[r] for r in regions] or [UNASSIGNED]

    def add(self, rows: np.ndarray, columns: Sequence[int]) -> None:
        for c in columns:
            self.counts[rows, c] += 1


def _proposed_chunk(region, targets, field, params, mode, col_labels, start: int, stop: int):
    acc = _Accumulator(region.n_voxels, col_labels)
    for ordinal in range(start, stop):
        l = attempt_region(region, field, params, ordinal)
        if l is None:
            continue
        _accumulate_passthrough(acc, l, region, targets, mode)
    return acc.counts, acc.streamlines, acc.passthrough_total, acc.passed


def _offline_chunk(region, targets, mode, col_labels, streamlines: Sequence[Streamline]):
    acc = _Accumulator(region.n_voxels, col_labels)
    for l in streamlines:
        _accumulate_passthrough(acc, l, region, targets, mode)
    return acc.counts, acc.streamlines, acc.passthrough_total, acc.passed


def _accumulate_passthrough(acc: _Accumulator, l: Streamline, region, targets, mode) -> None:
    acc.streamlines += 1
    rows = passthrough_rows(l, region)
    if not rows:
        return
    acc.passthrough_total += len(rows)
    acc.passed += 1
    acc.add(np.fromiter(rows, dtype=np.int64, count=len(rows)), acc.columns(l, targets, mode))


def _traditional_chunk(region, targets, field, params, k: int, mode, col_labels, rows: range):
    acc = _Accumulator(len(rows), col_labels)
    attempts = 0
    flagged: List[int] = []
    for local, row in enumerate(rows):
        streamlines, spent = track_voxel(region, field, params, row, k)
        for l in streamlines:
            acc.add(np.array([local]), acc.columns(l, targets, mode))
        acc.streamlines += len(streamlines)
        attempts += spent
        if len(streamlines) < k:
            flagged.append(row)
    return rows.start, acc.counts, acc.streamlines, attempts, flagged


def traditional_connectivity(
    region: SourceRegion,
    targets: LabelVolume,
    field: DirectionField,
    tp: TrackParams,
    rp: RunParams,
    workers: int = 1,
    progress: bool = False,
) -> ConnectivityMatrix:
    """Per-voxel seeding: K generated streamlines per source voxel, credited to that voxel only."""
    col_labels = targets.labels
    counts = np.zeros((region.n_voxels, len(col_labels) + 1), dtype=np.int64)
    mode = rp.endpoint_mode
    _log.info("Traditional connectivity: N=%d voxels, M=%d regions, K=%d, mode=%s",
              region.n_voxels, len(col_labels), rp.k, mode.value)

    chunks = chunk_ranges(0, region.n_voxels, workers)
    args = [(region, targets, field, tp, int(rp.k), mode, col_labels, range(a, b)) for a, b in chunks]
    streamlines = attempts = 0
    flagged: List[int] = []
    for start, block, n_generated, n_attempts, short in run_chunks(_traditional_chunk, args, workers, progress, "Seeding voxels"):
        counts[start : start + len(block)] = block
        streamlines += n_generated
        attempts += n_attempts
        flagged.extend(short)

    for row in flagged:
        _log.warning("voxel %s hit the %dxK attempt cap; its row is partial", tuple(region.voxels[row]), ATTEMPT_FACTOR)

    provenance = Provenance(
        algorithm="traditional",
        endpoint_mode=mode.value,
        k=int(rp.k),
        rng_seed=int(tp.rng_seed),
        streamlines=streamlines,
        attempts=attempts,
        flagged_rows=tuple(flagged),
        source_grid=grid_record(region.volume),
        target_grid=grid_record(targets),
    )
    _log.info("Traditional connectivity done: %d streamlines from %d attempts", streamlines, attempts)
    return ConnectivityMatrix(counts, region.voxels, col_labels, provenance)


def proposed_connectivity(
    region: SourceRegion,
    targets: LabelVolume,
    field: DirectionField,
    tp: TrackParams,
    rp: RunParams,
    workers: int = 1,
    progress: bool = False,
) -> ConnectivityMatrix:
    """
    Region seeding: K* generated streamlines, each credited to every source
    voxel it passes through. Raises AttemptCapError after 50 x K* attempts.
    """
    col_labels = targets.labels
    counts = np.zeros((region.n_voxels, len(col_labels) + 1), dtype=np.int64)
    mode = rp.endpoint_mode
    _log.info("Proposed connectivity: N=%d voxels, M=%d regions, K*=%d, mode=%s",
              region.n_voxels, len(col_labels), rp.k_star, mode.value)

    streamlines = passthrough_total = passed = attempts = 0
    schedule = region_batches(int(rp.k_star))
    try:
        start, stop = next(schedule)
        while True:
            args = [
                (region, targets, field, tp, mode, col_labels, a, b)
                for a, b in chunk_ranges(start, stop, workers)
            ]
            batch = 0
            for block, n_generated, n_passed, n_hit in run_chunks(_proposed_chunk, args, workers, progress, "Accumulating"):
                counts += block
                batch += n_generated
                passthrough_total += n_passed
                passed += n_hit
            streamlines += batch
            attempts = stop
            _log.debug("attempts [%d, %d) generated %d streamlines", start, stop, batch)
            start, stop = schedule.send(batch)
    except StopIteration:
        pass

    provenance = Provenance(
        algorithm="proposed",
        endpoint_mode=mode.value,
        k_star=int(rp.k_star),
        rng_seed=int(tp.rng_seed),
        streamlines=streamlines,
        attempts=attempts,
        passthrough_total=passthrough_total,
        passed_streamlines=passed,
        source_grid=grid_record(region.volume),
        target_grid=grid_record(targets),
    )
    _log.info("Proposed connectivity done: %d streamlines from %d attempts, mean pass-through %.2f voxels",
              streamlines, attempts, provenance.mean_passthrough)
    return ConnectivityMatrix(counts, region.voxels, col_labels, provenance)


def connectivity_from_tractogram(
    tg: Tractogram,
    region: SourceRegion,
    targets: LabelVolume,
    endpoint_mode=EndpointMode.BOTH,
    workers: int = 1,
    progress: bool = False,
    algorithm: str = "from-tck",
) -> ConnectivityMatrix:
    """Pass-through accumulation over precomputed streamlines."""
    if len(tg) == 0:
        raise InvalidArgumentError("tractogram holds no streamlines")
    mode = EndpointMode.parse(endpoint_mode)
    col_labels = targets.labels
    counts = np.zeros((region.n_voxels, len(col_labels) + 1), dtype=np.int64)

    args = [(region, targets, mode, col_labels, tg.streamlines[a:b]) for a, b in chunk_ranges(0, len(tg), workers)]
    streamlines = passthrough_total = passed = 0
    for block, n_used, n_passed, n_hit in run_chunks(_offline_chunk, args, workers, progress, "Accumulating"):
        counts += block
        streamlines += n_used
        passthrough_total += n_passed
        passed += n_hit

    seed = tg.metadata.get("rng_seed")
    provenance = Provenance(
        algorithm=algorithm,
        endpoint_mode=mode.value,
        rng_seed=int(seed) if seed is not None and seed.isdigit() else None,
        streamlines=streamlines,
        passthrough_total=passthrough_total,
        passed_streamlines=passed,
        source_grid=grid_record(region.volume),
        target_grid=grid_record(targets),
    )
    _log.info("Accumulated %d streamlines on %d source voxels", streamlines, region.n_voxels)
    return ConnectivityMatrix(counts, region.voxels, col_labels, provenance)


class NormalizedRows(NamedTuple):
    values: np.ndarray
    zero_rows: np.ndarray


def normalize_rows(C: ConnectivityMatrix) -> NormalizedRows:
    """Row-stochastic N x M matrix over target columns; all-zero rows stay zero and are flagged."""
    target = C.target_counts.astype(np.float64)
    sums = target.sum(axis=1)
    zero = sums == 0
    values = np.divide(target, sums[:, None], out=np.zeros_like(target), where=~zero[:, None])
    if zero.any():
        _log.warning("%d of %d rows have no target connections", int(zero.sum()), C.n_rows)
    return NormalizedRows(values, zero)


def parcellate(C: ConnectivityMatrix, region: SourceRegion) -> LabelVolume:
    """Label every source voxel with its strongest target; ties go to the smallest label."""
    if not np.array_equal(C.row_voxels, region.voxels):
        raise InvalidArgumentError("matrix rows do not match the source region's voxels")
    target = C.target_counts
    labels = np.zeros(C.n_rows, dtype=np.int64)
    if C.n_regions:
        best = np.argmax(target, axis=1)
        has_any = target.max(axis=1) > 0
        labels[has_any] = C.col_labels[best[has_any]]
    data = np.zeros(region.volume.shape.dims, dtype=np.uint32)
    v = C.row_voxels
    data[v[:, 0], v[:, 1], v[:, 2]] = labels
    return region.volume.with_data(data)
