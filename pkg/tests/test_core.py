import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asyncfusion.core import (
    Dataset,
    FeatureFrame,
    PayloadKind,
    Role,
    SensorSpec,
    ValidationError,
    as_missing_rate,
    fov_arc_length,
    load_dataset,
    normalize_fov,
    save_dataset,
    validate_fov,
)
from asyncfusion.synthetic import linear_scene

angles = st.floats(min_value=-720.0, max_value=720.0, allow_nan=False)


def test_wraparound_interval_splits():
    assert normalize_fov([(350.0, 10.0)]) == ((0.0, 10.0), (350.0, 360.0))


def test_full_circle_is_full_view():
    spec = SensorSpec("l", Role.SLOW, ((0.0, 360.0),), 10, 100.0)
    assert spec.is_full_view
    assert spec.fov == ((0.0, 360.0),)


def test_empty_interval_rejected():
    with pytest.raises(ValidationError, match="empty"):
        normalize_fov([(90.0, 90.0)])


def test_overlapping_intervals_merge():
    assert normalize_fov([(0.0, 50.0), (40.0, 90.0)]) == ((0.0, 90.0),)


@given(angles, st.floats(min_value=1e-3, max_value=359.0))
def test_normalized_fov_is_disjoint_and_keeps_length(lo, width):
    fov = normalize_fov([(lo, lo + width)])
    assert fov_arc_length(fov) == pytest.approx(width, abs=1e-6)
    for (a, b), (c, _) in zip(fov, fov[1:]):
        assert a < b <= c
    assert all(0.0 <= a < b <= 360.0 for a, b in fov)


@given(angles, st.floats(min_value=1e-3, max_value=359.0))
def test_validate_fov_is_idempotent(lo, width):
    spec = SensorSpec("c", Role.FAST, ((lo, lo + width),), 10, 100.0)
    assert validate_fov(validate_fov(spec)) == spec


def test_sensor_spec_round_trip():
    spec = SensorSpec("c", Role.FAST, ((350.0, 10.0),), 100, 50.0, 1.5, 80.0, PayloadKind.POINTS, 3)
    assert SensorSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_sensor_spec_rejects_bad_values():
    with pytest.raises(ValidationError):
        SensorSpec("c", Role.FAST, ((0.0, 10.0),), -1, 100.0)
    with pytest.raises(ValidationError):
        SensorSpec("c", Role.FAST, ((0.0, 10.0),), 1, 0.0)


def test_frame_payload_is_read_only():
    fr = FeatureFrame("a", 0, 0.0, np.zeros(3))
    with pytest.raises(ValueError):
        fr.payload[0] = 1.0


def test_missing_frames_named(tiny):
    frames = dict(tiny.frames)
    frames["fast0"] = frames["fast0"][:-1]
    with pytest.raises(ValidationError, match="fast0"):
        Dataset(tiny.sensors, frames, tiny.tick_count)


def test_all_fast_rejected(tiny):
    sensors = tuple(SensorSpec(s.id, Role.FAST, s.fov, s.frame_bytes, s.sample_interval_ms, dim=s.dim) for s in tiny.sensors)
    with pytest.raises(ValidationError, match="no slow modality"):
        Dataset(sensors, tiny.frames, tiny.tick_count)


def test_dimension_mismatch_rejected(tiny):
    frames = dict(tiny.frames)
    frames["slow"] = (FeatureFrame("slow", 0, 0.0, np.zeros(5)),) + frames["slow"][1:]
    with pytest.raises(ValidationError, match="slow"):
        Dataset(tiny.sensors, frames, tiny.tick_count)


@pytest.mark.parametrize("payload", ["vector", "points"])
def test_dataset_disk_round_trip(tmp_path, payload):
    ds = linear_scene(seed=2, tick_count=12, payload=payload, n_points=5)
    save_dataset(ds, tmp_path)
    assert load_dataset(tmp_path) == ds


def test_loader_reads_tick_count_from_manifest(tmp_path):
    save_dataset(linear_scene(seed=0, tick_count=7), tmp_path)
    ds = load_dataset(tmp_path)
    assert ds.tick_count == 7
    assert [s.id for s in ds.slow] == ["lidar_front"]
    assert len(ds.fast) == 4


def test_loader_reports_short_sensor(tmp_path):
    save_dataset(linear_scene(seed=0, tick_count=10), tmp_path)
    path = tmp_path / "cam_left.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValidationError, match="cam_left"):
        load_dataset(tmp_path)


def test_loader_missing_manifest(tmp_path):
    with pytest.raises(ValidationError, match="manifest"):
        load_dataset(tmp_path)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_missing_rate_accepts_unit_interval(r):
    assert as_missing_rate(r) == r


@pytest.mark.parametrize("r", [-0.1, 1.1, float("nan")])
def test_missing_rate_rejects(r):
    with pytest.raises(ValidationError):
        as_missing_rate(r)
