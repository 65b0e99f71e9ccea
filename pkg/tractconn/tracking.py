"""
Synthetic probabilistic tractography over a piecewise-constant direction field,
plus the seed samplers shared by both connectivity algorithms.

Every seed attempt owns its random stream, derived from the master seed and
the attempt's key through numpy's SeedSequence spawn keys. Results therefore
depend only on (seed, key), never on how attempts are spread over workers.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from tractconn.errors import AttemptCapError, ConfigurationError, InvalidArgumentError
from tractconn.formats.nifti import load_vector_volume, save_vector_volume
from tractconn.grid import Affine, GridShape, SourceRegion, VoxelIndex
from tractconn.streamline import EndpointMode, Streamline, Tractogram
from tractconn.utils.parallel import chunk_ranges, run_chunks

_log = logging.getLogger(__name__)

# failed generations are retried up to this multiple of the requested count
ATTEMPT_FACTOR = 50
_UNIT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DirectionField:
    """One unit vector per voxel; zero vectors mark untrackable voxels."""

    vectors: np.ndarray
    affine: Affine
    shape: GridShape = dataclasses.field(init=False)

    def __post_init__(self) -> None:
        vec = np.array(self.vectors, dtype=np.float64)
        if vec.ndim != 4 or vec.shape[3] != 3:
            raise ConfigurationError(f"direction field must have shape (nx, ny, nz, 3), got {vec.shape}")
        norms = np.linalg.norm(vec, axis=3)
        nonzero = norms > 0
        if np.any(np.abs(norms[nonzero] - 1.0) > _UNIT_TOL):
            raise ConfigurationError("direction field holds non-unit, non-zero vectors")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "shape", GridShape.from_affine(vec.shape[:3], self.affine))

    @classmethod
    def normalized(cls, vectors: np.ndarray, affine: Affine) -> "DirectionField":
        """Build from arbitrary vectors: rescale to unit length, zero out norms below 1e-6."""
        vec = np.array(vectors, dtype=np.float64)
        norms = np.linalg.norm(vec, axis=-1, keepdims=True)
        safe = np.where(norms > _UNIT_TOL, norms, 1.0)
        vec = np.where(norms > _UNIT_TOL, vec / safe, 0.0)
        return cls(vec, affine)

    def vector_at(self, point: np.ndarray) -> Optional[np.ndarray]:
        """Nearest-neighbour field vector; None outside the grid or in a zero voxel."""
        inv = self.affine.inverse
        cell = np.floor(inv[:3, :3] @ point + inv[:3, 3] + 0.5)
        i, j, k = int(cell[0]), int(cell[1]), int(cell[2])
        nx, ny, nz = self.shape.dims
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            return None
        vec = self.vectors[i, j, k]
        if not vec.any():
            return None
        return vec


@dataclass(frozen=True)
class TrackParams:
    step_size: float = 0.5
    max_steps: int = 1000
    angular_noise_deg: float = 0.0
    min_length_mm: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.step_size > 0:
            raise ConfigurationError(f"step_size must be > 0, got {self.step_size}")
        if int(self.max_steps) < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps}")
        if not self.angular_noise_deg >= 0:
            raise ConfigurationError(f"angular_noise_deg must be >= 0, got {self.angular_noise_deg}")
        if not self.min_length_mm >= 0:
            raise ConfigurationError(f"min_length_mm must be >= 0, got {self.min_length_mm}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigurationError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")


@dataclass(frozen=True)
class RunParams:
    k: int = 200
    k_star: int = 100_000
    endpoint_mode: EndpointMode = EndpointMode.BOTH

    def __post_init__(self) -> None:
        if int(self.k) < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.k}")
        if int(self.k_star) < 1:
            raise ConfigurationError(f"K* must be >= 1, got {self.k_star}")
        object.__setattr__(self, "endpoint_mode", EndpointMode.parse(self.endpoint_mode))


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one seed attempt."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)))


def sample_seed_in_voxel(v: VoxelIndex, affine: Affine, rng: np.random.Generator) -> np.ndarray:
    """Uniform point in the cell of voxel `v`, in world mm."""
    coord = np.asarray(v, dtype=np.float64) + rng.random(3) - 0.5
    return affine.to_world(coord)


def sample_seed_in_region(region: SourceRegion, rng: np.random.Generator) -> np.ndarray:
    """Uniform point over the union of the region's cells."""
    voxels = region.voxels
    if len(voxels) == 0:
        raise InvalidArgumentError(f"source label {region.label} has no voxels")
    index = 0 if len(voxels) == 1 else int(rng.integers(len(voxels)))
    return sample_seed_in_voxel(tuple(voxels[index]), region.volume.affine, rng)


def _perturb(direction: np.ndarray, sigma_rad: float, rng: np.random.Generator) -> np.ndarray:
    """Tilt `direction` by a Gaussian angle about a uniformly random perpendicular axis."""
    theta = rng.normal(0.0, sigma_rad)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    helper = np.array([1.0, 0.0, 0.0]) if abs(direction[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(direction, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)
    tilted = math.cos(theta) * direction + math.sin(theta) * (math.cos(phi) * e1 + math.sin(phi) * e2)
    return tilted / np.linalg.norm(tilted)


def _propagate(
    seed: np.ndarray,
    heading: np.ndarray,
    field: DirectionField,
    params: TrackParams,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Points after the seed along one direction; the terminating point is kept."""
    sigma = math.radians(params.angular_noise_deg)
    pos, prev = seed, heading
    points: List[np.ndarray] = []
    vec = field.vector_at(pos)
    for _ in range(int(params.max_steps)):
        if vec is None:
            break
        direction = -vec if float(vec @ prev) < 0.0 else vec
        if sigma > 0.0:
            direction = _perturb(direction, sigma, rng)
        pos = pos + params.step_size * direction
        points.append(pos)
        prev = direction
        vec = field.vector_at(pos)
    return points


def trac(seed, field: DirectionField, params: TrackParams, rng: np.random.Generator) -> Optional[Streamline]:
    """
    Bidirectional streamline from `seed`, or None when none can be generated
    (untrackable seed, fewer than 2 points, or shorter than min_length_mm).
    """
    seed = np.asarray(seed, dtype=np.float64)
    initial = field.vector_at(seed)
    if initial is None:
        return None
    forward = _propagate(seed, initial, field, params, rng)
    backward = _propagate(seed, -initial, field, params, rng)
    points = backward[::-1] + [seed] + forward
    if len(points) < 2:
        return None
    l = Streamline(np.vstack(points))
    if l.length < params.min_length_mm:
        return None
    return l


def attempt_region(region: SourceRegion, field: DirectionField, params: TrackParams, ordinal: int) -> Optional[Streamline]:
    """One region-seeded attempt; keyed by its global ordinal."""
    rng = stream_rng(params.rng_seed, ordinal)
    return trac(sample_seed_in_region(region, rng), field, params, rng)


def attempt_voxel(region: SourceRegion, field: DirectionField, params: TrackParams, row: int, attempt: int) -> Optional[Streamline]:
    """One voxel-seeded attempt for matrix row `row`."""
    rng = stream_rng(params.rng_seed, row, attempt)
    voxel = tuple(int(c) for c in region.voxels[row])
    return trac(sample_seed_in_voxel(voxel, region.volume.affine, rng), field, params, rng)


def _track_ordinals(region, field, params, start: int, stop: int) -> List[Streamline]:
    out = []
    for ordinal in range(start, stop):
        l = attempt_region(region, field, params, ordinal)
        if l is not None:
            out.append(l)
    return out


def region_batches(k_star: int):
    """
    Deterministic attempt schedule for K* region-seeded streamlines.

    Yields (start, stop) ordinal ranges; the caller sends back how many of
    them generated a streamline. Each batch is exactly as large as the
    remaining deficit, so every success in it is kept.
    """
    cap = ATTEMPT_FACTOR * k_star
    generated, next_ordinal = 0, 0
    while generated < k_star:
        if next_ordinal >= cap:
            raise AttemptCapError(generated, k_star, next_ordinal)
        stop = min(next_ordinal + (k_star - generated), cap)
        generated += yield (next_ordinal, stop)
        next_ordinal = stop


def _metadata(params: TrackParams, algorithm: str, **extra) -> dict:
    meta = {
        "step_size_mm": repr(float(params.step_size)),
        "max_steps": str(int(params.max_steps)),
        "angular_noise_deg": repr(float(params.angular_noise_deg)),
        "min_length_mm": repr(float(params.min_length_mm)),
        "rng_seed": str(int(params.rng_seed)),
        "seeding": algorithm,
    }
    meta.update({k: str(v) for k, v in extra.items()})
    return meta


def track_region(
    region: SourceRegion,
    field: DirectionField,
    params: TrackParams,
    k_star: int,
    workers: int = 1,
    progress: bool = False,
) -> Tractogram:
    """Exactly K* streamlines seeded uniformly in the region, ordered by attempt ordinal."""
    if int(k_star) < 1:
        raise ConfigurationError(f"K* must be >= 1, got {k_star}")
    streamlines: List[Streamline] = []
    schedule = region_batches(int(k_star))
    try:
        start, stop = next(schedule)
        while True:
            chunks = chunk_ranges(start, stop, workers)
            results = run_chunks(_track_ordinals, [(region, field, params, a, b) for a, b in chunks], workers, progress, "Tracking")
            batch = [l for part in results for l in part]
            streamlines.extend(batch)
            start, stop = schedule.send(len(batch))
    except StopIteration:
        pass
    _log.info("Tracked %d streamlines from region label %d", len(streamlines), region.label)
    return Tractogram(streamlines, _metadata(params, "region", k_star=k_star))


def track_voxel(region: SourceRegion, field: DirectionField, params: TrackParams, row: int, k: int) -> Tuple[List[Streamline], int]:
    """
    Up to K streamlines seeded inside voxel `row` and the attempts spent;
    fewer than K means the 50 x K attempt cap was reached.
    """
    cap = ATTEMPT_FACTOR * k
    out: List[Streamline] = []
    attempt = 0
    while len(out) < k and attempt < cap:
        l = attempt_voxel(region, field, params, row, attempt)
        attempt += 1
        if l is not None:
            out.append(l)
    return out, attempt


def _track_rows(region, field, params, k: int, rows: Sequence[int]) -> Tuple[List[Streamline], List[int]]:
    out: List[Streamline] = []
    short: List[int] = []
    for row in rows:
        streamlines, _ = track_voxel(region, field, params, row, k)
        out.extend(streamlines)
        if len(streamlines) < k:
            short.append(row)
    return out, short


def track_per_voxel(
    region: SourceRegion,
    field: DirectionField,
    params: TrackParams,
    k: int,
    workers: int = 1,
    progress: bool = False,
) -> Tractogram:
    """K streamlines seeded inside every source voxel, in row order."""
    if int(k) < 1:
        raise ConfigurationError(f"K must be >= 1, got {k}")
    chunks = chunk_ranges(0, region.n_voxels, workers)
    results = run_chunks(
        _track_rows, [(region, field, params, int(k), range(a, b)) for a, b in chunks], workers, progress, "Tracking voxels"
    )
    streamlines: List[Streamline] = []
    for part, short in results:
        streamlines.extend(part)
        for row in short:
            _log.warning("voxel %s reached the attempt cap before K=%d streamlines", tuple(region.voxels[row]), k)
    return Tractogram(streamlines, _metadata(params, "per-voxel", k=k))


def load_direction_field(path) -> DirectionField:
    vectors, affine = load_vector_volume(path)
    field = DirectionField.normalized(vectors, affine)
    _log.info("Loaded direction field %s: dims=%s voxel=%s", path, field.shape.dims, field.shape.voxel_size)
    return field


def save_direction_field(field: DirectionField, path) -> None:
    save_vector_volume(field.vectors, field.affine, path)
