import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asyncfusion.core import Dataset, FeatureFrame, PayloadKind, Role, SensorSpec, ValidationError
from asyncfusion.imputation import (
    ImputerKind,
    ProjectionStore,
    arrived_count,
    attention_weights,
    chamfer_distance,
    chamfer_distance_normalized,
    fit_projection,
    fit_projections,
    impute,
    median_bandwidth,
    mmd,
    requires_wait,
)
from asyncfusion.selection import Criterion, FusionPlan

clouds = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-10, 10))


def _brute_chamfer(X, Y):
    D = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    return D.min(axis=1).sum() + D.min(axis=0).sum()


def test_chamfer_hand_values():
    assert chamfer_distance([[0.0, 0.0]], [[3.0, 4.0]]) == 50.0
    assert chamfer_distance([[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0]]) == 1.0
    assert chamfer_distance_normalized([[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0]]) == pytest.approx(0.5)


@given(clouds, clouds)
def test_chamfer_matches_brute_force_and_is_symmetric(X, Y):
    d = chamfer_distance(X, Y)
    assert d == pytest.approx(_brute_chamfer(X, Y), rel=1e-9, abs=1e-9)
    assert d == pytest.approx(chamfer_distance(Y, X), rel=1e-9, abs=1e-9)
    assert chamfer_distance(X, X) == 0.0


def test_chamfer_rejects_empty():
    with pytest.raises(ValidationError):
        chamfer_distance(np.zeros((0, 2)), [[1.0, 1.0]])


def test_mmd_identity_and_separation():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 1))
    X2 = rng.normal(size=(200, 1))
    Y = rng.normal(5.0, 1.0, size=(200, 1))
    assert mmd(X, X) == pytest.approx(0.0, abs=1e-12)
    assert mmd(X, Y) > mmd(X, X2)


def test_mmd_vanishes_for_huge_bandwidth():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(30, 2)), rng.normal(3.0, 1.0, size=(30, 2))
    assert mmd(X, Y, bandwidth=1e8) < 1e-10


@given(clouds, clouds)
def test_mmd_nonnegative_and_symmetric(X, Y):
    v = mmd(X, Y)
    assert v >= -1e-12
    assert v == pytest.approx(mmd(Y, X), abs=1e-12)


def test_median_bandwidth_hand_value():
    # pooled points 0, 1, 3: pairwise distances 1, 2, 3
    assert median_bandwidth([[0.0]], [[1.0], [3.0]]) == pytest.approx(2.0)


def _plan(selected, affinities):
    return FusionPlan("s", Criterion.CONSISTENCY, tuple(selected), tuple(affinities), len(selected), sum(affinities))


def test_attention_weights():
    assert attention_weights(_plan(["a"], [0.3])) == {"a": 1.0}
    assert attention_weights(_plan(["a", "b"], [0.2, 0.2])) == {"a": 0.5, "b": 0.5}
    w = attention_weights(_plan(["a", "b"], [0.530, 0.272]))
    assert w["a"] == pytest.approx(0.661, abs=1e-3)
    with pytest.raises(ValidationError):
        attention_weights(_plan([], []))


def test_requires_wait_only_for_block():
    assert [k for k in ImputerKind if requires_wait(k)] == [ImputerKind.BLOCK]


def _linear_dataset(ticks=40, fast_dims=(3, 2), noise=0.0, constant=False, seed=0, slow_points=None):
    rng = np.random.default_rng(seed)
    fast = {f"f{i}": rng.normal(size=(ticks, d)) for i, d in enumerate(fast_dims)}
    if constant:
        fast["f0"][:] = 1.0
    X = np.hstack(list(fast.values()))
    M = rng.normal(size=(X.shape[1], 4 if slow_points is None else 2 * slow_points))
    slow = 0.5 + X @ M + noise * rng.normal(size=(ticks, M.shape[1]))
    kind = PayloadKind.VECTOR if slow_points is None else PayloadKind.POINTS
    sensors = [SensorSpec("s", Role.SLOW, ((0.0, 90.0),), 1000, 100.0, payload=kind, dim=4 if slow_points is None else 2)]
    sensors += [SensorSpec(fid, Role.FAST, ((0.0, 90.0),), 100, 100.0, dim=v.shape[1]) for fid, v in fast.items()]
    series = {"s": slow if slow_points is None else slow.reshape(ticks, slow_points, 2), **fast}
    frames = {sid: tuple(FeatureFrame(sid, t, 100.0 * t, v[t]) for t in range(ticks)) for sid, v in series.items()}
    return Dataset(tuple(sensors), frames, ticks)


def test_exact_linear_map_recovered():
    ds = _linear_dataset()
    proj = fit_projection(ds, "s", {"f0": 0.7, "f1": 0.3})
    assert proj.residual < 1e-8
    assert not proj.ridge
    fr = {fid: ds.frame(fid, 5).payload for fid in ("f0", "f1")}
    np.testing.assert_allclose(proj.predict(fr), ds.frame("s", 5).payload, atol=1e-8)


def test_constant_features_trigger_ridge():
    ds = _linear_dataset(constant=True)
    assert fit_projection(ds, "s", {"f0": 0.5, "f1": 0.5}).ridge


def test_residual_matches_normal_equations():
    ds = _linear_dataset(ticks=100, fast_dims=(4,), noise=0.5, seed=3)
    proj = fit_projection(ds, "s", {"f0": 1.0})
    X = np.hstack([np.ones((100, 1)), ds.payload_matrix("f0")])
    Y = ds.payload_matrix("s")
    beta = np.linalg.solve(X.T @ X, X.T @ Y)
    expected = np.linalg.norm(Y - X @ beta) / np.linalg.norm(Y)
    assert proj.residual == pytest.approx(expected, abs=1e-8)


def test_too_few_ticks_rejected():
    with pytest.raises(ValidationError, match="training ticks"):
        fit_projection(_linear_dataset(ticks=8), "s", {"f0": 0.5, "f1": 0.5})


def test_store_fits_subsets_and_round_trips(tmp_path):
    ds = _linear_dataset()
    store = fit_projections(ds, [_plan(["f0", "f1"], [0.6, 0.4])])
    assert len(store) == 3
    assert ("s", ["f1", "f0"]) in store
    store.save(tmp_path)
    again = ProjectionStore.load(tmp_path)
    for key, proj in store.projections.items():
        np.testing.assert_array_equal(again.projections[key].coef, proj.coef)
        assert again.projections[key].fusion_weights == proj.fusion_weights


def test_missing_projection_says_fit():
    with pytest.raises(ValidationError, match="fit"):
        ProjectionStore().get("s", ["f0"])
    with pytest.raises(ValidationError, match="fit"):
        impute(ImputerKind.AFFINITY_FUSION, _plan(["f0"], [1.0]), {}, projections=None)


@given(st.integers(0, 500), st.floats(0, 1))
def test_arrived_count_bounds(total, r):
    n = arrived_count(total, r)
    assert 0 <= n <= total
    assert arrived_count(total, 0.0) == total and arrived_count(total, 1.0) == 0


def test_drop_and_block_return_none():
    plan = _plan(["f0"], [1.0])
    assert impute(ImputerKind.DROP, plan, {}) is None
    assert impute(ImputerKind.BLOCK, plan, {}) is None


def test_nearest_tick_echoes_latest_history():
    hist = [FeatureFrame("s", t, 100.0 * t, np.full(2, float(t))) for t in (3, 9, 8)]
    out = impute(ImputerKind.NEAREST_TICK, _plan([], []), {}, history=hist, tick=10)
    assert out.source is ImputerKind.NEAREST_TICK and out.tick == 10
    np.testing.assert_array_equal(out.payload, [9.0, 9.0])
    assert impute(ImputerKind.NEAREST_TICK, _plan([], []), {}, history=[]) is None


def test_affinity_fusion_keeps_received_prefix():
    ds = _linear_dataset(noise=0.1)
    store = fit_projections(ds, [_plan(["f0", "f1"], [0.7, 0.3])])
    t = 7
    truth = ds.frame("s", t).payload
    partial = FeatureFrame("s", t, 700.0, truth[:2])
    fast = {fid: ds.frame(fid, t) for fid in ("f0", "f1")}
    out = impute(ImputerKind.AFFINITY_FUSION, _plan(["f0", "f1"], [0.7, 0.3]), fast, partial, projections=store)
    np.testing.assert_array_equal(out.payload[:2], truth[:2])
    assert out.fusion_weights == pytest.approx({"f0": 0.7, "f1": 0.3})
    # one selected sensor missing: falls back to the subset projection
    out1 = impute(ImputerKind.AFFINITY_FUSION, _plan(["f0", "f1"], [0.7, 0.3]), {"f1": fast["f1"]}, projections=store)
    assert out1.fusion_weights == {"f1": 1.0}


def test_affinity_fusion_point_sets_append_pseudo_points():
    ds = _linear_dataset(slow_points=6)
    store = fit_projections(ds, [_plan(["f0"], [1.0])])
    truth = ds.frame("s", 4).payload
    partial = FeatureFrame("s", 4, 400.0, truth[:4])
    out = impute(ImputerKind.AFFINITY_FUSION, _plan(["f0"], [1.0]), {"f0": ds.frame("f0", 4)}, partial, projections=store)
    assert out.payload.shape == truth.shape
    np.testing.assert_array_equal(out.payload[:4], truth[:4])
