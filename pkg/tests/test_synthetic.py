import numpy as np
import pytest

from asyncfusion.selection import Criterion, affinity_criterion
from asyncfusion.simulator import transfer_ms
from asyncfusion.synthetic import (
    CALIBRATED_CAMERA_BYTES,
    CALIBRATED_LIDAR_BYTES,
    FAST_IDS,
    SLOW_ID,
    calibrated_latency_scenario,
    linear_scene,
    monte_carlo_affinity,
    random_sweep_scenario,
)


def test_scene_geometry_gives_consistency_with_three_candidates():
    ds = linear_scene(seed=0, tick_count=5)
    d = affinity_criterion(ds.sensor(SLOW_ID), ds.fast)
    assert d.criterion is Criterion.CONSISTENCY
    assert d.overlapping == ("cam_front", "cam_left", "cam_right")


def test_scene_is_reproducible():
    assert linear_scene(seed=4, tick_count=10) == linear_scene(seed=4, tick_count=10)
    assert linear_scene(seed=4, tick_count=10) != linear_scene(seed=5, tick_count=10)


def test_point_scene_shapes():
    ds = linear_scene(seed=0, tick_count=6, payload="points", n_points=10)
    assert ds.frame(SLOW_ID, 3).payload.shape == (10, 2)
    with pytest.raises(ValueError):
        linear_scene(payload="voxels")


def test_oracle_follows_generative_mix():
    w = monte_carlo_affinity(linear_scene(seed=0), SLOW_ID)
    assert sum(w.values()) == pytest.approx(1.0)
    assert w["cam_front"] > w["cam_left"] > max(w["cam_right"], w["cam_rear"])


def test_calibrated_constants():
    assert CALIBRATED_LIDAR_BYTES == 4 * CALIBRATED_CAMERA_BYTES
    assert 81 * transfer_ms(CALIBRATED_CAMERA_BYTES, 100.0) == pytest.approx(1000.0, rel=1e-4)
    ds, scen = calibrated_latency_scenario()
    assert len(ds.fast) == 6 and ds.tick_count == 81
    assert scen.bandwidth_mbps == 100.0


def test_random_sweep_is_seeded():
    a = random_sweep_scenario(3, tick_count=5)
    b = random_sweep_scenario(3, tick_count=5)
    assert a[1] == b[1] and a[0] == b[0]
    assert set(FAST_IDS) <= {s.id for s in a[0].sensors}
    assert np.isfinite(a[1].bandwidth_mbps)
