"""
Synthetic vehicular scene: a straight road passing a base station.

The BS sits at the origin with its linear array along the x axis (broadside
is +y). Vehicles drive along the line ``y = lateral_offset`` at constant
speed. Each slot produces

* a LiDAR-like feature frame (range, bearing, velocity and a ring of
  Gaussian bearing bins), and
* the exhaustive-search best beam of the noiseless multipath channel.

Windows of ``obs_len`` frames plus ``horizon`` zero frames are labelled with
the best beams at offsets ``0 .. horizon`` from the last observed slot.
Trajectories (not windows) are split into train/val/test.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .container import read_container, read_header, write_container
from .errors import ConfigMismatchError, FormatError, ParameterError
from .mmwave import Path, PathSet, channel_realize, dft_codebook, optimal_beam

logger = logging.getLogger(__name__)

MAGIC = b"DFKDDSET"
SPLITS = ("train", "val", "test")
SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ScenarioConfig:
    num_antennas: int = 16
    num_beams: int = 64
    feature_dim: int = 32
    obs_len: int = 8
    horizon: int = 3
    speed_min_kmh: float = 3.0
    speed_max_kmh: float = 18.0
    slot_duration: float = 0.1
    lateral_offset: float = 8.0
    road_half_length: float = 20.0
    slots_per_trajectory: int = 50
    num_trajectories: int = 200
    clutter_paths: int = 2
    clutter_rel_gain: float = 0.2
    feature_noise: float = 0.02
    carrier_ghz: float = 60.0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.speed_min_kmh <= self.speed_max_kmh:
            raise ParameterError("speed range must be positive and ordered")
        if self.feature_dim < 4:
            raise ParameterError(f"feature_dim must be >= 4, got {self.feature_dim}")
        if self.slot_duration <= 0:
            raise ParameterError("slot_duration must be positive")
        if self.num_beams < self.num_antennas:
            raise ParameterError("num_beams must be >= num_antennas")
        if not 0 <= self.clutter_rel_gain <= 0.3:
            raise ParameterError("clutter_rel_gain must lie in [0, 0.3]")
        if self.lateral_offset <= 0 or self.road_half_length <= 0:
            raise ParameterError("road geometry must be positive")
        if self.obs_len < 1 or self.horizon < 0 or self.num_trajectories < 1:
            raise ParameterError("obs_len and num_trajectories must be positive, horizon non-negative")
        fr = tuple(float(f) for f in self.split_fractions)
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ParameterError(f"split_fractions must be three non-negative numbers summing to 1, got {fr}")
        object.__setattr__(self, "split_fractions", fr)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown scenario fields: {sorted(unknown)}")
        d = dict(d)
        if "split_fractions" in d:
            d["split_fractions"] = tuple(d["split_fractions"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)

    @property
    def max_range(self) -> float:
        return float(np.hypot(self.road_half_length, self.lateral_offset))


def config_hash(config: ScenarioConfig) -> str:
    """Hash of the scene physics; seed and trajectory count are excluded so shards can merge."""
    d = config.to_dict()
    d.pop("seed")
    d.pop("num_trajectories")
    blob = json.dumps(d, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Clutter:
    azimuth: float
    rel_gain: float
    phase: float


@dataclass(frozen=True)
class VehicleState:
    slot: int
    x: float
    y: float
    velocity: float  # signed, m/s along the road
    clutter: tuple[Clutter, ...] = ()

    @property
    def speed_kmh(self) -> float:
        return abs(self.velocity) * 3.6

    @property
    def distance(self) -> float:
        return float(np.hypot(self.x, self.y))

    @property
    def bearing(self) -> float:
        return float(np.arctan2(self.x, self.y))


def trajectory_seed(seed: int, index: int, stream: int = 0) -> list[int]:
    # stream 0 drives motion and clutter, stream 1 feature noise
    return [int(seed), int(index), int(stream)]


def simulate_trajectory(config: ScenarioConfig, seed) -> list[VehicleState]:
    rng = np.random.default_rng(seed)
    speed = rng.uniform(config.speed_min_kmh, config.speed_max_kmh) / 3.6
    direction = 1.0 if rng.random() < 0.5 else -1.0
    n = config.slots_per_trajectory
    travel = speed * config.slot_duration * (n - 1)
    half = config.road_half_length
    lo, hi = -half, max(half - travel, -half)
    start = rng.uniform(lo, hi)
    if direction < 0:
        start = -start
    clutter = tuple(
        Clutter(azimuth=float(rng.uniform(-0.45 * np.pi, 0.45 * np.pi)),
                rel_gain=float(config.clutter_rel_gain * rng.uniform(0.5, 1.0)),
                phase=float(rng.uniform(0, 2 * np.pi)))
        for _ in range(config.clutter_paths))
    step = direction * speed * config.slot_duration
    return [VehicleState(slot=k, x=start + k * step, y=config.lateral_offset,
                         velocity=direction * speed, clutter=clutter)
            for k in range(n)]


def paths_from_state(state: VehicleState, config: ScenarioConfig) -> PathSet:
    """LOS path (inverse-distance amplitude, carrier phase) plus static clutter."""
    d = state.distance
    amp = 1.0 / d
    los = Path(gain=amp * np.exp(-2j * np.pi * d / config.wavelength), azimuth=state.bearing)
    extra = [Path(gain=c.rel_gain * amp * np.exp(1j * c.phase), azimuth=c.azimuth)
             for c in state.clutter]
    return PathSet((los, *extra))


def _ring_centers(config: ScenarioConfig) -> np.ndarray:
    return np.linspace(-np.pi / 2, np.pi / 2, config.feature_dim - 4)


def lidar_features(state: VehicleState, config: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Feature frame in [-1, 1]; ``rng=None`` or zero noise gives a deterministic frame."""
    d, theta = state.distance, state.bearing
    rng_span = config.max_range - config.lateral_offset
    frame = np.empty(config.feature_dim)
    frame[0] = 2.0 * (d - config.lateral_offset) / rng_span - 1.0
    frame[1] = np.sin(theta)
    frame[2] = 2.0 * np.cos(theta) - 1.0
    frame[3] = state.velocity / (config.speed_max_kmh / 3.6)
    centers = _ring_centers(config)
    width = np.pi / max(len(centers) - 1, 1)
    frame[4:] = np.exp(-0.5 * ((theta - centers) / width) ** 2)
    if rng is not None and config.feature_noise > 0:
        frame += rng.normal(0.0, config.feature_noise, size=frame.shape)
    return np.clip(frame, -1.0, 1.0)


def slot_labels(states: list[VehicleState], config: ScenarioConfig, codebook: np.ndarray | None = None) -> np.ndarray:
    if codebook is None:
        codebook = dft_codebook(config.num_antennas, config.num_beams)
    return np.array([optimal_beam(channel_realize(paths_from_state(s, config), config.num_antennas).h, codebook)
                     for s in states], dtype=np.int32)


@dataclass
class Dataset:
    """Windows ``x`` (N×(L+V)×D), labels (N×(V+1)) and trajectory-level splits."""

    config: ScenarioConfig
    x: np.ndarray
    labels: np.ndarray
    trajectory: np.ndarray
    start_slot: np.ndarray
    splits: dict[str, np.ndarray]
    skipped: int = 0
    provenance: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def __len__(self) -> int:
        return len(self.x)

    def mask(self, split: str) -> np.ndarray:
        if split not in self.splits:
            raise ParameterError(f"unknown split {split!r}; have {sorted(self.splits)}")
        return np.isin(self.trajectory, self.splits[split])

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        m = self.mask(name)
        return self.x[m], self.labels[m]

    def counts(self) -> dict[str, int]:
        return {s: int(self.mask(s).sum()) for s in self.splits}


def _split_trajectories(config: ScenarioConfig, ids: np.ndarray) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([int(config.seed), 0x5EED])
    perm = rng.permutation(ids)
    n = len(perm)
    n_train = int(round(config.split_fractions[0] * n))
    n_val = int(round(config.split_fractions[1] * n))
    return {
        "train": np.sort(perm[:n_train]).astype(np.int32),
        "val": np.sort(perm[n_train:n_train + n_val]).astype(np.int32),
        "test": np.sort(perm[n_train + n_val:]).astype(np.int32),
    }


def make_dataset(config: ScenarioConfig) -> Dataset:
    L, V = config.obs_len, config.horizon
    codebook = dft_codebook(config.num_antennas, config.num_beams)
    xs, ys, traj, starts = [], [], [], []
    skipped = 0
    for idx in range(config.num_trajectories):
        states = simulate_trajectory(config, trajectory_seed(config.seed, idx, 0))
        if len(states) < L + V:
            skipped += 1
            continue
        feat_rng = np.random.default_rng(trajectory_seed(config.seed, idx, 1))
        frames = np.stack([lidar_features(s, config, feat_rng) for s in states])
        labels = slot_labels(states, config, codebook)
        pad = np.zeros((V, config.feature_dim))
        for s in range(len(states) - (L + V) + 1):
            xs.append(np.concatenate([frames[s:s + L], pad]))
            ys.append(labels[s + L - 1:s + L + V])
            traj.append(idx)
            starts.append(s)
    if skipped:
        logger.warning("skipped %d trajectories shorter than %d slots", skipped, L + V)
    ids = np.array(sorted(set(traj)), dtype=np.int32)
    return Dataset(
        config=config,
        x=np.array(xs, dtype=np.float64).reshape(-1, L + V, config.feature_dim),
        labels=np.array(ys, dtype=np.int32).reshape(-1, V + 1),
        trajectory=np.array(traj, dtype=np.int32),
        start_slot=np.array(starts, dtype=np.int32),
        splits=_split_trajectories(config, ids),
        skipped=skipped,
        provenance={"seed": int(config.seed), "config_hash": config_hash(config)},
    )


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "config": ds.config.to_dict(),
        "config_hash": ds.config_hash,
        "counts": {"samples": len(ds), **ds.counts()},
        "skipped": ds.skipped,
        "provenance": ds.provenance,
    }
    arrays = {"x": ds.x, "labels": ds.labels.astype(np.int32),
              "trajectory": ds.trajectory.astype(np.int32), "start_slot": ds.start_slot.astype(np.int32)}
    for s in SPLITS:
        arrays[f"split/{s}"] = ds.splits[s].astype(np.int32)
    write_container(path, MAGIC, header, arrays)


def read_dataset_header(path) -> dict:
    """Config, config hash and sample counts without reading any payload."""
    return read_header(path, MAGIC)


def load_dataset(path) -> Dataset:
    header, arrays = read_container(path, MAGIC)
    try:
        config = ScenarioConfig.from_dict(header["config"])
        ds = Dataset(config=config, x=arrays["x"], labels=arrays["labels"],
                     trajectory=arrays["trajectory"], start_slot=arrays["start_slot"],
                     splits={s: arrays[f"split/{s}"] for s in SPLITS},
                     skipped=int(header.get("skipped", 0)), provenance=header.get("provenance", {}))
    except (KeyError, TypeError, ParameterError) as exc:
        raise FormatError(f"{path}: incomplete dataset file ({exc})") from None
    n = len(ds.x)
    if ds.x.shape[1:] != (config.obs_len + config.horizon, config.feature_dim) or \
            ds.labels.shape != (n, config.horizon + 1) or len(ds.trajectory) != n:
        raise FormatError(f"{path}: payload shapes disagree with the stored config")
    if header.get("config_hash") != ds.config_hash:
        raise FormatError(f"{path}: stored config hash does not match its config")
    return ds


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two shards of the same scene; trajectory ids of ``b`` are shifted."""
    if a.config_hash != b.config_hash:
        raise ConfigMismatchError(f"cannot merge datasets with config hashes {a.config_hash} and {b.config_hash}")
    offset = int(max(a.trajectory.max(initial=-1), max((s.max(initial=-1) for s in a.splits.values()), default=-1))) + 1
    config = replace(a.config, num_trajectories=a.config.num_trajectories + b.config.num_trajectories)
    return Dataset(
        config=config,
        x=np.concatenate([a.x, b.x]),
        labels=np.concatenate([a.labels, b.labels]),
        trajectory=np.concatenate([a.trajectory, b.trajectory + offset]).astype(np.int32),
        start_slot=np.concatenate([a.start_slot, b.start_slot]),
        splits={s: np.concatenate([a.splits[s], b.splits[s] + offset]).astype(np.int32) for s in SPLITS},
        skipped=a.skipped + b.skipped,
        provenance={"merged": [a.provenance, b.provenance], "config_hash": a.config_hash},
    )
