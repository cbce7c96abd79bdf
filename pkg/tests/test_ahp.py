import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asyncfusion.ahp import (
    AHPConfig,
    AffinityMatrix,
    ConsistencyError,
    Direction,
    PairwiseComparisonMatrix,
    affinity_from_matrices,
    build_affinity_matrix,
    check_consistency,
    composite_weights,
    hierarchy_weights,
    priority_vector,
    relational_features,
    scores_to_comparisons,
    worked_example,
)
from asyncfusion.core import ValidationError
from asyncfusion.embedding import EmbeddingConfig
from asyncfusion.selection import Criterion
from asyncfusion.synthetic import FAST_IDS, SLOW_ID, linear_scene, monte_carlo_affinity

scores = st.lists(st.floats(min_value=0.01, max_value=100.0), min_size=2, max_size=8)


def _consistent(w):
    w = np.asarray(w, dtype=float)
    return w[:, None] / w[None, :]


def test_worked_example_vectors():
    A, (B1, B2) = worked_example()
    np.testing.assert_allclose(priority_vector(A), [0.875, 0.125], atol=1e-12)
    np.testing.assert_allclose(priority_vector(B1), [0.594, 0.277, 0.129], atol=0.001)
    np.testing.assert_allclose(priority_vector(B2), [0.082, 0.236, 0.682], atol=0.001)


def test_worked_example_ranks_first_sensor_highest():
    A, Bs = worked_example()
    W = hierarchy_weights(A, Bs).W
    assert list(np.argsort(-W)) == [0, 1, 2]
    assert W.sum() == pytest.approx(1.0)


@given(st.floats(1 / 9, 9))
def test_two_by_two_always_consistent(a):
    rep = check_consistency(np.array([[1.0, a], [1.0 / a, 1.0]]))
    assert rep.CR == 0.0 and rep.passed


def test_rank_one_matrix_lambda_equals_n():
    rep = check_consistency([[1, 2, 4], [1 / 2, 1, 2], [1 / 4, 1 / 2, 1]])
    assert rep.lambda_max == pytest.approx(3.0, abs=1e-6)
    assert rep.CI == pytest.approx(0.0, abs=1e-6)
    assert rep.passed


def test_worked_example_matrices_pass_and_match_eigenvalue():
    A, Bs = worked_example()
    for pcm in (A, *Bs):
        rep = check_consistency(pcm)
        assert rep.passed
        principal = max(np.linalg.eigvals(pcm.m).real)
        assert rep.lambda_max == pytest.approx(principal, abs=0.01)


def test_inconsistent_matrix_fails_and_is_named():
    bad = PairwiseComparisonMatrix([[1, 9, 1 / 9], [1 / 9, 1, 9], [9, 1 / 9, 1]])
    assert not check_consistency(bad).passed
    A, (B1, _) = worked_example()
    with pytest.raises(ConsistencyError, match="B2"):
        hierarchy_weights(A, [B1, bad])


@given(st.lists(st.floats(0.2, 1.0), min_size=2, max_size=9))
def test_priority_vector_recovers_consistent_weights(w):
    m = _consistent(w)
    pv = priority_vector(m)
    np.testing.assert_allclose(pv, np.asarray(w) / np.sum(w), rtol=1e-9)
    assert check_consistency(m).CI == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize(
    "m",
    [
        [[1, 2], [0.4, 1]],  # not reciprocal
        [[2, 1], [1, 1]],  # diagonal
        [[1, 12], [1 / 12, 1]],  # off scale
        [[1, -1], [-1, 1]],
        [[1, 2, 3]],
    ],
)
def test_matrix_validation(m):
    with pytest.raises(ValidationError):
        PairwiseComparisonMatrix(m)


def test_composite_weights_example():
    W2 = np.array([[0.594, 0.082], [0.277, 0.236], [0.129, 0.682]])
    np.testing.assert_allclose(composite_weights([0.875, 0.125], W2), [0.530, 0.272, 0.198], atol=0.002)


def test_composite_single_criterion_and_uniform():
    col = np.array([[0.2], [0.5], [0.3]])
    np.testing.assert_allclose(composite_weights([1.0], col), col[:, 0])
    np.testing.assert_allclose(composite_weights([0.6, 0.4], np.full((4, 2), 0.25)), 0.25)
    with pytest.raises(ValidationError):
        composite_weights([0.5, 0.5], col)


def test_equal_scores_all_ones():
    np.testing.assert_array_equal(scores_to_comparisons([0.3, 0.3, 0.3]).m, np.ones((3, 3)))


def test_extreme_ratio_clamped_to_nine():
    m = scores_to_comparisons([0.9, 0.1], Direction.HIGHER_BETTER).m
    assert m[0, 1] == 9.0 and m[1, 0] == pytest.approx(1 / 9)
    assert scores_to_comparisons([0.9, 0.1], Direction.LOWER_BETTER).m[0, 1] == pytest.approx(1 / 9)


def test_all_zero_scores_rejected():
    with pytest.raises(ValidationError, match="zero"):
        scores_to_comparisons([0.0, 0.0])


def test_nonpositive_scores_are_shifted():
    m = scores_to_comparisons([-0.2, 0.0, 0.4]).m
    assert m[2, 0] > m[1, 0] > 1.0


@given(scores, st.integers(-10, 10))
def test_scale_invariance(s, k):
    # power-of-two scaling keeps every ratio bit-exact
    a = scores_to_comparisons(s).m
    b = scores_to_comparisons([2.0**k * x for x in s]).m
    np.testing.assert_array_equal(a, b)


@given(scores, st.sampled_from(list(Direction)))
def test_comparisons_are_reciprocal_monotone_and_bounded(s, direction):
    m = scores_to_comparisons(s, direction).m
    np.testing.assert_allclose(m * m.T, 1.0)
    assert m.max() <= 9.0 and m.min() >= 1 / 9
    sign = 1 if direction is Direction.HIGHER_BETTER else -1
    for i in range(len(s)):
        for j in range(len(s)):
            if sign * (s[i] - s[j]) > 0:
                assert m[i, j] >= 1.0


def test_affinity_from_matrices_bypass():
    A, Bs = worked_example()
    am = affinity_from_matrices("lidar", A, Bs)
    w = am.weights["lidar"]
    assert [round(w[k], 3) for k in ("sensor_1", "sensor_2", "sensor_3")] == [0.531, 0.272, 0.198]
    assert am.criterion["lidar"] is Criterion.CONSISTENCY


def test_affinity_matrix_rejects_unnormalized():
    with pytest.raises(ValidationError):
        AffinityMatrix({"s": {"a": 0.7, "b": 0.7}}, {"s": Criterion.CONSISTENCY}, {"s": ("a", "b")})


def test_relational_features_shape_and_diagonal():
    F = np.random.default_rng(0).normal(size=(7, 3))
    R = relational_features(F)
    assert R.shape == (7, 7)
    np.testing.assert_allclose(np.diag(R), 1.0)
    np.testing.assert_allclose(R, R.T)


@pytest.fixture(scope="module")
def scene_affinity():
    ds = linear_scene(seed=1, tick_count=120)
    return ds, build_affinity_matrix(ds, EmbeddingConfig(seed=1))


def test_built_matrix_structure(scene_affinity):
    ds, am = scene_affinity
    w = am.weights[SLOW_ID]
    assert set(w) == set(FAST_IDS)
    assert sum(w.values()) == pytest.approx(1.0)
    assert am.criterion[SLOW_ID] is Criterion.CONSISTENCY
    assert am.overlapping[SLOW_ID] == ("cam_front", "cam_left", "cam_right")
    ev = am.evidence[SLOW_ID]
    assert ev["cam_rear"]["fov_iou"] == 0.0
    assert all(e["embedding_cost"] < e["embedding_initial_cost"] for e in ev.values())
    assert all(rep.passed for rep in am.consistency[SLOW_ID].values())


def test_top_weight_matches_oracle_pick(scene_affinity):
    ds, am = scene_affinity
    oracle = monte_carlo_affinity(ds, SLOW_ID, seed=1)
    w = am.weights[SLOW_ID]
    assert max(w, key=w.get) == max(oracle, key=oracle.get) == "cam_front"


def test_json_round_trip(scene_affinity):
    _, am = scene_affinity
    again = AffinityMatrix.from_dict(json.loads(am.to_json()))
    assert again.to_json() == am.to_json()


def test_single_fast_candidate_gets_full_weight(tiny):
    am = build_affinity_matrix(tiny, EmbeddingConfig(iterations=20), AHPConfig(representation="relational"))
    assert am.weights["slow"] == {"fast0": 1.0}


def test_config_validation():
    with pytest.raises(ValidationError):
        AHPConfig(criteria_ratio=12)
    with pytest.raises(ValidationError):
        AHPConfig(representation="pixels")
