"""Three-layer AHP normalization of cross-modal affinity evidence.

Focus: one slow sensor. Criteria: embedded cosine similarity and FOV IoU.
Alternatives: the fast sensors. Pairwise comparison matrices are reduced to
priority vectors by column-normalized averaging.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import Dataset, PayloadKind, ValidationError
from .embedding import AffinitySample, EmbeddingConfig, cosine_summary, embed, squared_distances
from .selection import Criterion, affinity_criterion

SCALE_MAX = 9.0
RECIPROCITY_TOL = 1e-9
CR_THRESHOLD = 0.1

# Saaty's random consistency index by matrix order
RANDOM_INDEX = {
    1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45,
    10: 1.49, 11: 1.51, 12: 1.48, 13: 1.56, 14: 1.57, 15: 1.59,
}


class ConsistencyError(ValidationError):
    pass


class Direction(str, enum.Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


@dataclass(frozen=True, eq=False)
class PairwiseComparisonMatrix:
    m: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValidationError("comparison matrix must be square")
        if not np.all(m > 0):
            raise ValidationError("comparison matrix entries must be positive")
        if not np.allclose(np.diag(m), 1.0, atol=RECIPROCITY_TOL, rtol=0):
            raise ValidationError("comparison matrix diagonal must be 1")
        if not np.allclose(m * m.T, 1.0, atol=RECIPROCITY_TOL, rtol=0):
            raise ValidationError("comparison matrix is not reciprocal")
        if m.min() < 1 / SCALE_MAX - 1e-12 or m.max() > SCALE_MAX + 1e-12:
            raise ValidationError("comparison entries must lie in [1/9, 9]")
        labels = tuple(self.labels) or tuple(f"x{i}" for i in range(m.shape[0]))
        if len(labels) != m.shape[0]:
            raise ValidationError("one label per row required")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class ConsistencyReport:
    lambda_max: float
    CI: float
    RI: float
    CR: float
    passed: bool

    def to_dict(self) -> dict:
        return {"lambda_max": self.lambda_max, "CI": self.CI, "RI": self.RI, "CR": self.CR, "pass": self.passed}


def priority_vector(pcm: PairwiseComparisonMatrix | np.ndarray) -> np.ndarray:
    """Normalize each column to sum 1 and average across columns."""
    if not isinstance(pcm, PairwiseComparisonMatrix):
        pcm = PairwiseComparisonMatrix(pcm)
    m = pcm.m
    return (m / m.sum(axis=0, keepdims=True)).mean(axis=1)


def check_consistency(pcm: PairwiseComparisonMatrix | np.ndarray) -> ConsistencyReport:
    if not isinstance(pcm, PairwiseComparisonMatrix):
        pcm = PairwiseComparisonMatrix(pcm)
    n = pcm.n
    w = priority_vector(pcm)
    lambda_max = float(np.mean((pcm.m @ w) / w))
    ci = (lambda_max - n) / (n - 1) if n >= 2 else 0.0
    ri = RANDOM_INDEX.get(n, RANDOM_INDEX[15])
    cr = ci / ri if n > 2 else 0.0
    return ConsistencyReport(lambda_max, ci, ri, cr, cr < CR_THRESHOLD)


def composite_weights(W1: Sequence[float], W2: np.ndarray) -> np.ndarray:
    """Alternative weights ``W2 @ W1``; ``W2`` has alternatives as rows, criteria as columns."""
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    if W2.ndim != 2 or W1.ndim != 1 or W2.shape[1] != W1.shape[0]:
        raise ValidationError(f"shape mismatch: W1 {W1.shape} vs W2 {W2.shape}")
    return W2 @ W1


def _to_scale(x: float) -> float:
    """Nearest integer intensity on the 1..9 scale (or its reciprocal)."""
    if x >= 1.0:
        return min(SCALE_MAX, math.floor(x + 0.5))
    return 1.0 / min(SCALE_MAX, math.floor(1.0 / x + 0.5))


def scores_to_comparisons(
    scores: Sequence[float],
    direction: Direction = Direction.HIGHER_BETTER,
    labels: Sequence[str] = (),
) -> PairwiseComparisonMatrix:
    """Map empirical scores to a reciprocal 1-9 comparison matrix.

    Score ratios are raised to a common power so the largest ratio fits the
    scale (ratios already within 9 are left alone), then rounded to integer
    intensities. If any score is non-positive all scores are shifted so the
    smallest becomes 1/8 of the score span.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise ValidationError("need at least two scores")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    if np.all(s == 0):
        raise ValidationError("all scores equal zero")
    if np.any(s <= 0):
        span = s.max() - s.min()
        s = np.ones_like(s) if span == 0 else s - s.min() + span / 8.0
    if direction is Direction.LOWER_BETTER:
        s = 1.0 / s
    log_s = np.log(s)
    top = log_s.max() - log_s.min()
    alpha = 1.0 if top <= math.log(SCALE_MAX) else math.log(SCALE_MAX) / top

    n = s.size
    m = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = _to_scale(math.exp(alpha * (log_s[i] - log_s[j])))
            m[j, i] = 1.0 / m[i, j]
    return PairwiseComparisonMatrix(m, tuple(labels))


@dataclass(frozen=True)
class HierarchyResult:
    W: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    reports: dict[str, ConsistencyReport]


def hierarchy_weights(
    criteria: PairwiseComparisonMatrix,
    alternatives: Sequence[PairwiseComparisonMatrix],
    require_consistency: bool = True,
) -> HierarchyResult:
    if len(alternatives) != criteria.n:
        raise ValidationError("one alternatives matrix per criterion required")
    sizes = {b.n for b in alternatives}
    if len(sizes) != 1:
        raise ValidationError("alternatives matrices differ in size")
    reports = {"A": check_consistency(criteria)}
    for c, b in enumerate(alternatives, start=1):
        reports[f"B{c}"] = check_consistency(b)
    if require_consistency:
        for name, rep in reports.items():
            if not rep.passed:
                raise ConsistencyError(f"matrix {name} fails the consistency test (CR={rep.CR:.3f})")
    W1 = priority_vector(criteria)
    W2 = np.column_stack([priority_vector(b) for b in alternatives])
    return HierarchyResult(composite_weights(W1, W2), W1, W2, reports)


def worked_example() -> tuple[PairwiseComparisonMatrix, list[PairwiseComparisonMatrix]]:
    """Criteria matrix (cosine 7x more important than FOV) and two 3-sensor matrices."""
    A = PairwiseComparisonMatrix([[1, 7], [1 / 7, 1]], ("cosine", "fov_iou"))
    alts = ("sensor_1", "sensor_2", "sensor_3")
    B1 = PairwiseComparisonMatrix([[1, 2, 5], [1 / 2, 1, 2], [1 / 5, 1 / 2, 1]], alts)
    B2 = PairwiseComparisonMatrix([[1, 1 / 3, 1 / 8], [3, 1, 1 / 3], [8, 3, 1]], alts)
    return A, [B1, B2]


# ---------------------------------------------------------------------------
# affinity matrix


@dataclass(frozen=True)
class AHPConfig:
    criteria_ratio: float = 7.0  # cosine over FOV importance
    threshold: float | None = None  # cosine split between consistent/complementary; None = median
    max_frames: int = 60
    representation: str = "auto"  # "raw", "relational" or "auto"

    def __post_init__(self):
        if not 1 / SCALE_MAX <= self.criteria_ratio <= SCALE_MAX:
            raise ValidationError("criteria_ratio must lie in [1/9, 9]")
        if self.max_frames < 2:
            raise ValidationError("max_frames must be >= 2")
        if self.representation not in ("auto", "raw", "relational"):
            raise ValidationError(f"unknown representation {self.representation!r}")

    def criteria_matrix(self) -> PairwiseComparisonMatrix:
        a = self.criteria_ratio
        return PairwiseComparisonMatrix([[1.0, a], [1.0 / a, 1.0]], ("cosine", "fov_iou"))


@dataclass(frozen=True)
class AffinityMatrix:
    """Normalized slow x fast affinity weights with the evidence behind them."""

    weights: Mapping[str, Mapping[str, float]]
    criterion: Mapping[str, Criterion]
    overlapping: Mapping[str, tuple[str, ...]]
    evidence: Mapping[str, Mapping[str, Mapping[str, object]]] = field(default_factory=dict)
    consistency: Mapping[str, Mapping[str, ConsistencyReport]] = field(default_factory=dict)
    threshold: float | None = None

    def __post_init__(self):
        for slow_id, w in self.weights.items():
            total = sum(w.values())
            if w and abs(total - 1.0) > 1e-6:
                raise ValidationError(f"weights sum to {total}, expected 1", sensor_id=slow_id)
            if any(v < 0 or v > 1 for v in w.values()):
                raise ValidationError("weights must lie in [0, 1]", sensor_id=slow_id)

    def to_dict(self) -> dict:
        return {
            "weights": {s: dict(sorted(w.items())) for s, w in sorted(self.weights.items())},
            "criterion": {s: c.value for s, c in sorted(self.criterion.items())},
            "overlapping": {s: list(v) for s, v in sorted(self.overlapping.items())},
            "evidence": {s: {f: dict(e) for f, e in sorted(ev.items())} for s, ev in sorted(self.evidence.items())},
            "consistency": {
                s: {name: rep.to_dict() for name, rep in sorted(reps.items())}
                for s, reps in sorted(self.consistency.items())
            },
            "threshold": self.threshold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "AffinityMatrix":
        return cls(
            weights={s: {f: float(v) for f, v in w.items()} for s, w in d["weights"].items()},
            criterion={s: Criterion(c) for s, c in d["criterion"].items()},
            overlapping={s: tuple(v) for s, v in d["overlapping"].items()},
            evidence=d.get("evidence", {}),
            consistency={
                s: {
                    name: ConsistencyReport(r["lambda_max"], r["CI"], r["RI"], r["CR"], r["pass"])
                    for name, r in reps.items()
                }
                for s, reps in d.get("consistency", {}).items()
            },
            threshold=d.get("threshold"),
        )


def affinity_from_matrices(
    slow_id: str,
    criteria: PairwiseComparisonMatrix,
    alternatives: Sequence[PairwiseComparisonMatrix],
    criterion: Criterion = Criterion.CONSISTENCY,
) -> AffinityMatrix:
    """Build a one-focus affinity matrix straight from given comparison matrices."""
    res = hierarchy_weights(criteria, alternatives)
    labels = alternatives[0].labels
    return AffinityMatrix(
        weights={slow_id: {lab: float(w) for lab, w in zip(labels, res.W)}},
        criterion={slow_id: criterion},
        overlapping={slow_id: tuple(labels)},
        consistency={slow_id: res.reports},
    )


def _sample_ticks(tick_count: int, max_frames: int) -> list[int]:
    if tick_count <= max_frames:
        return list(range(tick_count))
    return sorted(set(np.linspace(0, tick_count - 1, max_frames).round().astype(int).tolist()))


def _zscore(F: np.ndarray) -> np.ndarray:
    sd = F.std(axis=0)
    sd[sd == 0] = 1.0
    return (F - F.mean(axis=0)) / sd


def _frame_features(ds: Dataset, sensor_id: str, ticks: Sequence[int]) -> np.ndarray:
    spec = ds.sensor(sensor_id)
    if spec.payload is PayloadKind.VECTOR:
        return ds.payload_matrix(sensor_id, ticks)
    sizes = {ds.frame(sensor_id, t).payload.shape[0] for t in ticks}
    if len(sizes) == 1:
        return ds.payload_matrix(sensor_id, ticks)
    # variable-size clouds: centroid + covariance descriptor
    rows = []
    for t in ticks:
        pts = ds.frame(sensor_id, t).payload
        cov = np.cov(pts.T) if len(pts) > 1 else np.zeros((spec.dim, spec.dim))
        rows.append(np.concatenate([pts.mean(axis=0), cov[np.triu_indices(spec.dim)]]))
    return np.vstack(rows)


def relational_features(F: np.ndarray) -> np.ndarray:
    """Represent each frame by its Gaussian similarity to every frame of the same modality.

    Gives all modalities a common, tick-indexed coordinate system regardless of
    their native dimensionality.
    """
    D = squared_distances(_zscore(F))
    off = D[~np.eye(len(D), dtype=bool)]
    scale = np.median(off) if off.size and np.median(off) > 0 else 1.0
    return np.exp(-D / scale)


def modality_representation(ds: Dataset, config: AHPConfig) -> str:
    if config.representation != "auto":
        return config.representation
    shapes = {(s.payload, ds.payload_matrix(s.id, [0]).shape[1]) for s in ds.sensors}
    return "raw" if len(shapes) == 1 else "relational"


def pair_cosine(
    ds: Dataset,
    slow_id: str,
    fast_id: str,
    embed_config: EmbeddingConfig,
    ahp_config: AHPConfig,
    representation: str | None = None,
) -> dict:
    """Embed one slow/fast pair jointly and return its mean cosine evidence."""
    ticks = _sample_ticks(ds.tick_count, ahp_config.max_frames)
    Fs = _frame_features(ds, slow_id, ticks)
    Ff = _frame_features(ds, fast_id, ticks)
    rep = representation or modality_representation(ds, ahp_config)
    if rep == "raw":
        if Fs.shape[1] != Ff.shape[1]:
            raise ValidationError(f"raw representation needs equal dims ({slow_id}: {Fs.shape[1]}, {fast_id}: {Ff.shape[1]})")
        Fs, Ff = _zscore(Fs), _zscore(Ff)
    else:
        Fs, Ff = relational_features(Fs), relational_features(Ff)
    n = len(ticks)
    sample = AffinitySample(np.vstack([Fs, Ff]), (slow_id,) * n + (fast_id,) * n)
    sol = embed(sample, embed_config)
    Y = sol.Y - sol.Y.mean(axis=0)
    summary = cosine_summary(Y[:n], Y[n:])
    return {
        "cosine": summary.value,
        "skipped_pairs": summary.skipped,
        "embedding_cost": sol.final_cost,
        "embedding_initial_cost": sol.cost_trace[0],
        "cost_trace": sol.cost_trace,
    }


def build_affinity_matrix(
    ds: Dataset,
    embed_config: EmbeddingConfig = EmbeddingConfig(),
    ahp_config: AHPConfig = AHPConfig(),
    traces: dict | None = None,
) -> AffinityMatrix:
    """Run the embedding and AHP stages for every slow sensor of ``ds``.

    If ``traces`` is a dict it receives each pair's embedding cost trace,
    keyed by ``(slow_id, fast_id)``.
    """
    fasts = ds.fast
    if not fasts:
        raise ValidationError("no fast candidates")
    rep = modality_representation(ds, ahp_config)
    A = ahp_config.criteria_matrix()

    weights, criterion, overlapping, evidence, consistency = {}, {}, {}, {}, {}
    for slow in ds.slow:
        decision = affinity_criterion(slow, fasts)
        ev = {}
        for f in fasts:
            ev[f.id] = pair_cosine(ds, slow.id, f.id, embed_config, ahp_config, rep)
            trace = ev[f.id].pop("cost_trace")
            if traces is not None:
                traces[(slow.id, f.id)] = trace
            ev[f.id]["fov_iou"] = decision.iou[f.id]
        evidence[slow.id] = ev
        criterion[slow.id] = decision.criterion
        overlapping[slow.id] = decision.overlapping

        ids = [f.id for f in fasts]
        if len(ids) == 1:
            weights[slow.id] = {ids[0]: 1.0}
            consistency[slow.id] = {"A": check_consistency(A)}
            continue
        direction = (
            Direction.HIGHER_BETTER if decision.criterion is Criterion.CONSISTENCY else Direction.LOWER_BETTER
        )
        mats = []
        for key in ("cosine", "fov_iou"):
            scores = np.array([ev[fid][key] for fid in ids])
            if np.ptp(scores) == 0:
                mats.append(PairwiseComparisonMatrix(np.ones((len(ids), len(ids))), tuple(ids)))
            else:
                mats.append(scores_to_comparisons(scores, direction, ids))
        try:
            res = hierarchy_weights(A, mats)
        except ConsistencyError as exc:
            raise ConsistencyError(str(exc), sensor_id=slow.id) from None
        weights[slow.id] = {fid: float(w) for fid, w in zip(ids, res.W)}
        consistency[slow.id] = res.reports

    all_cos = [e["cosine"] for ev in evidence.values() for e in ev.values()]
    threshold = ahp_config.threshold if ahp_config.threshold is not None else float(np.median(all_cos))
    for ev in evidence.values():
        for e in ev.values():
            e["label"] = "consistent" if e["cosine"] >= threshold else "complementary"
    return AffinityMatrix(weights, criterion, overlapping, evidence, consistency, threshold)
