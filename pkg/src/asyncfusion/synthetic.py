"""Synthetic scenes with known cross-modal structure, plus calibrated presets.

The linear scene has one front-facing slow sensor whose payload is a fixed
linear mix of two fast sensors' features (0.7 front camera, 0.3 left camera
by default; ``POINT_MIX`` for point-set payloads) plus small noise. A right camera overlaps the slow sensor's view but carries
unrelated features; a rear camera neither overlaps nor relates.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, FeatureFrame, PayloadKind, Role, SensorSpec
from .simulator import Policy, Scenario

SLOW_ID = "lidar_front"
FAST_IDS = ("cam_front", "cam_left", "cam_right", "cam_rear")
MIX = {"cam_front": 0.7, "cam_left": 0.3, "cam_right": 0.0, "cam_rear": 0.0}
# point-set scenes need a stronger secondary contributor to be ranked reliably
POINT_MIX = {"cam_front": 0.7, "cam_left": 0.5, "cam_right": 0.0, "cam_rear": 0.0}

FOVS = {
    "lidar_front": ((300.0, 60.0),),
    "cam_front": ((315.0, 45.0),),
    "cam_left": ((30.0, 120.0),),
    "cam_right": ((240.0, 330.0),),
    "cam_rear": ((135.0, 225.0),),
}

CAMERA_BYTES = 166_667  # 1:4 against LIDAR_BYTES
LIDAR_BYTES = 666_667
SLOW_FRAME_BYTES_10MBIT = 1_300_000  # 10.4 Mbit


def _ar1(rng: np.random.Generator, ticks: int, dim: int, rho: float) -> np.ndarray:
    z = np.empty((ticks, dim))
    z[0] = rng.normal(size=dim)
    scale = np.sqrt(1.0 - rho * rho)
    for t in range(1, ticks):
        z[t] = rho * z[t - 1] + scale * rng.normal(size=dim)
    return z


def ring_template(n_points: int, radius: float = 10.0) -> np.ndarray:
    """Points on a circle in sweep (angle) order, so a missing tail is a contiguous sector."""
    ang = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


def linear_scene(
    seed: int = 0,
    tick_count: int = 200,
    payload: str = "vector",
    dim: int = 8,
    n_points: int = 64,
    rho: float = 0.6,
    noise: float = 0.01,
    displacement: float = 0.5,
    sample_interval_ms: float = 100.0,
    slow_bytes: int = SLOW_FRAME_BYTES_10MBIT,
    fast_bytes: int = CAMERA_BYTES,
    clock_offsets: dict[str, float] | None = None,
    mix: dict[str, float] | None = None,
) -> Dataset:
    rng = np.random.default_rng(seed)
    offsets = clock_offsets or {}
    mix = MIX if mix is None else {fid: mix.get(fid, 0.0) for fid in FAST_IDS}
    fast = {fid: _ar1(rng, tick_count, dim, rho) for fid in FAST_IDS}
    mixed = sum(mix[fid] * fast[fid] for fid in FAST_IDS)

    if payload == "vector":
        slow = mixed + noise * rng.normal(size=mixed.shape)
        slow_frames = [slow[t] for t in range(tick_count)]
        slow_kind, slow_dim = PayloadKind.VECTOR, dim
    elif payload == "points":
        template = ring_template(n_points)
        lift = rng.normal(size=(dim, 2 * n_points)) / np.sqrt(dim)
        disp = displacement * (mixed / np.sqrt(sum(w * w for w in mix.values()))) @ lift
        slow_frames = [
            template + disp[t].reshape(n_points, 2) + noise * rng.normal(size=(n_points, 2)) for t in range(tick_count)
        ]
        slow_kind, slow_dim = PayloadKind.POINTS, 2
    else:
        raise ValueError(f"unknown payload {payload!r}")

    sensors = [
        SensorSpec(
            SLOW_ID, Role.SLOW, FOVS[SLOW_ID], slow_bytes, sample_interval_ms,
            offsets.get(SLOW_ID, 0.0), payload=slow_kind, dim=slow_dim,
        )
    ]
    sensors += [
        SensorSpec(fid, Role.FAST, FOVS[fid], fast_bytes, sample_interval_ms, offsets.get(fid, 0.0), dim=dim)
        for fid in FAST_IDS
    ]
    frames = {}
    for spec in sensors:
        series = slow_frames if spec.id == SLOW_ID else fast[spec.id]
        frames[spec.id] = tuple(
            FeatureFrame(spec.id, t, t * sample_interval_ms + spec.clock_offset_ms, series[t]) for t in range(tick_count)
        )
    return Dataset(tuple(sensors), frames, tick_count)


def monte_carlo_affinity(
    ds: Dataset,
    slow_id: str,
    trials: int = 20,
    seed: int = 0,
    train_fraction: float = 0.5,
) -> dict[str, float]:
    """Reference affinity weights from repeated random-split imputation trials.

    Each fast sensor alone is regressed (ordinary least squares with
    intercept) onto the slow payload on a random training split; its weight is
    the held-out error reduction over predicting the training mean, averaged
    over trials and normalized to sum to 1.
    """
    rng = np.random.default_rng(seed)
    Y = ds.payload_matrix(slow_id)
    n = ds.tick_count
    n_train = int(round(train_fraction * n))
    gains = {f.id: 0.0 for f in ds.fast}
    for _ in range(trials):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        base = np.mean((Y[te] - Y[tr].mean(axis=0)) ** 2)
        for f in ds.fast:
            X = np.hstack([np.ones((n, 1)), ds.payload_matrix(f.id)])
            coef, *_ = np.linalg.lstsq(X[tr], Y[tr], rcond=None)
            err = np.mean((Y[te] - X[te] @ coef) ** 2)
            gains[f.id] += max(base - err, 0.0) / trials
    total = sum(gains.values())
    if total <= 0:
        return {fid: 1.0 / len(gains) for fid in gains}
    return {fid: g / total for fid, g in gains.items()}


def two_clusters(seed: int = 0, n: int = 40, dim: int = 5, gap: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Two isotropic Gaussian clusters ``gap`` apart along the first axis; returns points and 0/1 labels."""
    rng = np.random.default_rng(seed)
    half = n // 2
    X = rng.normal(size=(n, dim))
    X[half:, 0] += gap
    labels = np.r_[np.zeros(half, dtype=int), np.ones(n - half, dtype=int)]
    return X, labels


# ---------------------------------------------------------------------------
# latency calibration: 81 frames, 1.0 s non-blocking vs 4.3 s blocking

CALIBRATED_TICKS = 81
CALIBRATED_BANDWIDTH_MBPS = 100.0
CALIBRATED_INTERVAL_MS = 4000.0 / CALIBRATED_TICKS
_CAMERA_MS = 1000.0 / CALIBRATED_TICKS  # per-frame camera transfer for a 1.0 s total
CALIBRATED_CAMERA_BYTES = round(_CAMERA_MS * CALIBRATED_BANDWIDTH_MBPS * 1000.0 / 8.0)
CALIBRATED_LIDAR_BYTES = 4 * CALIBRATED_CAMERA_BYTES
# the remaining 0.3x of lag beyond the 1:4 size ratio comes from clock skew
CALIBRATED_LIDAR_OFFSET_MS = 4.3 * _CAMERA_MS - 4 * _CAMERA_MS


def calibrated_latency_scenario(seed: int = 0, policy: Policy = Policy.DROP) -> tuple[Dataset, Scenario]:
    """Six cameras and one LiDAR whose per-frame lag reproduces a 4.3:1 blocking latency ratio."""
    rng = np.random.default_rng(seed)
    dim = 4
    sensors = [
        SensorSpec(
            "lidar", Role.SLOW, ((0.0, 360.0),), CALIBRATED_LIDAR_BYTES, CALIBRATED_INTERVAL_MS,
            CALIBRATED_LIDAR_OFFSET_MS, dim=dim,
        )
    ]
    for i in range(6):
        lo = 60.0 * i
        sensors.append(
            SensorSpec(f"camera_{i}", Role.FAST, ((lo - 40.0, lo + 40.0),), CALIBRATED_CAMERA_BYTES, CALIBRATED_INTERVAL_MS, dim=dim)
        )
    frames = {
        s.id: tuple(
            FeatureFrame(s.id, t, t * s.sample_interval_ms + s.clock_offset_ms, rng.normal(size=dim))
            for t in range(CALIBRATED_TICKS)
        )
        for s in sensors
    }
    ds = Dataset(tuple(sensors), frames, CALIBRATED_TICKS)
    return ds, Scenario(bandwidth_mbps=CALIBRATED_BANDWIDTH_MBPS, policy=policy, seed=seed)


def random_sweep_scenario(seed: int, tick_count: int = 100, payload: str = "vector") -> tuple[Dataset, Scenario]:
    """Linear scene with randomized frame sizes, clock skews, bandwidth and jitter."""
    rng = np.random.default_rng(10_000 + seed)
    offsets = {sid: float(rng.uniform(-10.0, 10.0)) for sid in (SLOW_ID, *FAST_IDS)}
    ds = linear_scene(
        seed=seed,
        tick_count=tick_count,
        payload=payload,
        slow_bytes=int(rng.integers(300_000, 2_000_000)),
        fast_bytes=int(rng.integers(50_000, 300_000)),
        clock_offsets=offsets,
    )
    scen = Scenario(
        bandwidth_mbps=float(rng.uniform(50.0, 200.0)),
        seed=seed,
        jitter_ms=float(rng.uniform(0.0, 20.0)),
        imputation_cost_ms=float(rng.uniform(0.0, 15.0)),
    )
    return ds, scen
