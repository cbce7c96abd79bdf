"""Stand-in imputation of late slow-modality payloads and quality metrics."""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import Dataset, FeatureFrame, PayloadKind, ValidationError
from .selection import FusionPlan

RIDGE_LAMBDA = 1e-6


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError("point sets must be 2-D arrays")
    return X


def chamfer_distance(X, Y) -> float:
    """Sum of squared nearest-neighbour distances in both directions (un-normalized)."""
    X, Y = _as_points(X), _as_points(Y)
    if len(X) == 0 or len(Y) == 0:
        raise ValidationError("chamfer distance of an empty point set")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    dx, _ = cKDTree(Y).query(X)
    dy, _ = cKDTree(X).query(Y)
    return float(np.sum(dx**2) + np.sum(dy**2))


def chamfer_distance_normalized(X, Y) -> float:
    """Chamfer with each direction averaged over its set size, for clouds of unequal size."""
    X, Y = _as_points(X), _as_points(Y)
    if len(X) == 0 or len(Y) == 0:
        raise ValidationError("chamfer distance of an empty point set")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    dx, _ = cKDTree(Y).query(X)
    dy, _ = cKDTree(X).query(Y)
    return float(np.mean(dx**2) + np.mean(dy**2))


def median_bandwidth(X, Y) -> float:
    Z = np.vstack([_as_points(X), _as_points(Y)])
    sq = np.sum(Z * Z, axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * Z @ Z.T, 0.0))
    iu = np.triu_indices(len(Z), k=1)
    med = float(np.median(D[iu])) if iu[0].size else 0.0
    return med if med > 0 else 1.0


def _mean_kernel(A: np.ndarray, B: np.ndarray, bw: float) -> float:
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2 * A @ B.T
    return float(np.mean(np.exp(-np.maximum(sq, 0.0) / (2 * bw * bw))))


def mmd(X, Y, bandwidth: float | str = "auto") -> float:
    """Biased (V-statistic) squared MMD with a Gaussian kernel.

    ``bandwidth="auto"`` uses the median pairwise distance over the pooled sample.
    """
    X, Y = _as_points(X), _as_points(Y)
    if len(X) == 0 or len(Y) == 0:
        raise ValidationError("MMD of an empty sample")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    bw = median_bandwidth(X, Y) if bandwidth == "auto" else float(bandwidth)
    if not bw > 0:
        raise ValidationError("bandwidth must be positive")
    value = _mean_kernel(X, X, bw) + _mean_kernel(Y, Y, bw) - 2 * _mean_kernel(X, Y, bw)
    return max(0.0, value)


class ImputerKind(str, enum.Enum):
    DROP = "drop"
    BLOCK = "block"
    NEAREST_TICK = "nearest_tick"
    AFFINITY_FUSION = "affinity_fusion"


def requires_wait(kind: ImputerKind) -> bool:
    """Block never imputes; the caller must wait for the complete slow frame."""
    return kind is ImputerKind.BLOCK


@dataclass(frozen=True, eq=False)
class ImputedFrame:
    slow_id: str
    tick: int
    payload: np.ndarray
    source: ImputerKind
    fusion_weights: Mapping[str, float] | None = None


def attention_weights(plan: FusionPlan) -> dict[str, float]:
    if not plan.selected:
        raise ValidationError("plan selects no fast sensors", sensor_id=plan.slow_id)
    return plan.weights


# ---------------------------------------------------------------------------
# projections


@dataclass(frozen=True, eq=False)
class Projection:
    """Affine map from affinity-weighted, concatenated fast payloads to a slow payload."""

    slow_id: str
    fast_ids: tuple[str, ...]
    fusion_weights: tuple[float, ...]
    coef: np.ndarray  # (1 + input_dim) x output_size, intercept first
    out_shape: tuple[int, ...]
    residual: float
    ridge: bool

    def design(self, fast_payloads: Sequence[np.ndarray]) -> np.ndarray:
        parts = [w * np.asarray(p, dtype=float).reshape(len(p), -1) for w, p in zip(self.fusion_weights, fast_payloads)]
        X = np.hstack(parts)
        return np.hstack([np.ones((len(X), 1)), X])

    def predict(self, fast_payloads: Mapping[str, np.ndarray]) -> np.ndarray:
        rows = [np.asarray(fast_payloads[fid], dtype=float).reshape(1, -1) for fid in self.fast_ids]
        return (self.design(rows) @ self.coef).reshape(self.out_shape)


def _solve(design: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, bool]:
    if np.linalg.matrix_rank(design) < design.shape[1]:
        gram = design.T @ design + RIDGE_LAMBDA * np.eye(design.shape[1])
        return np.linalg.solve(gram, design.T @ target), True
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef, False


def _key(slow_id: str, fast_ids: Iterable[str]) -> tuple[str, tuple[str, ...]]:
    return slow_id, tuple(sorted(fast_ids))


@dataclass(frozen=True)
class ProjectionStore:
    projections: Mapping[tuple[str, tuple[str, ...]], Projection] = field(default_factory=dict)

    def get(self, slow_id: str, fast_ids: Iterable[str]) -> Projection:
        key = _key(slow_id, fast_ids)
        try:
            return self.projections[key]
        except KeyError:
            raise ValidationError(
                f"no fitted projection for fast sensors {list(key[1])}; run `fit` first", sensor_id=slow_id
            ) from None

    def __contains__(self, key) -> bool:
        return _key(*key) in self.projections

    def __len__(self) -> int:
        return len(self.projections)

    def save(self, directory: str | Path) -> None:
        """Write one ``.npy`` per map plus ``index.json`` (pair -> file, shape, residual)."""
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        index = []
        for (slow_id, fast_ids), proj in sorted(self.projections.items()):
            fname = f"{slow_id}__{'+'.join(fast_ids)}.npy"
            np.save(root / fname, proj.coef)
            index.append(
                {
                    "slow": slow_id,
                    "fast": list(proj.fast_ids),
                    "fusion_weights": list(proj.fusion_weights),
                    "file": fname,
                    "shape": list(proj.coef.shape),
                    "out_shape": list(proj.out_shape),
                    "residual": proj.residual,
                    "ridge": proj.ridge,
                }
            )
        (root / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "ProjectionStore":
        root = Path(directory)
        index_path = root / "index.json"
        if not index_path.is_file():
            raise ValidationError(f"missing projection index {index_path}; run `fit` first")
        store = {}
        for e in json.loads(index_path.read_text(encoding="utf-8")):
            coef = np.load(root / e["file"])
            if list(coef.shape) != e["shape"]:
                raise ValidationError(f"projection file {e['file']} has shape {coef.shape}, index says {e['shape']}")
            proj = Projection(
                e["slow"], tuple(e["fast"]), tuple(e["fusion_weights"]), coef, tuple(e["out_shape"]), e["residual"], e["ridge"]
            )
            store[_key(proj.slow_id, proj.fast_ids)] = proj
        return cls(store)


def fit_projection(
    ds: Dataset,
    slow_id: str,
    fast_weights: Mapping[str, float],
    ticks: Sequence[int] | None = None,
) -> Projection:
    """Least-squares affine map from the weighted fast payloads to the slow payload."""
    ticks = list(range(ds.tick_count)) if ticks is None else list(ticks)
    fast_ids = tuple(sorted(fast_weights))
    weights = tuple(float(fast_weights[f]) for f in fast_ids)
    inputs = [ds.payload_matrix(f, ticks) for f in fast_ids]
    try:
        target = ds.payload_matrix(slow_id, ticks)
    except ValidationError:
        raise ValidationError("point count varies across training ticks; cannot fit", sensor_id=slow_id) from None
    input_dim = sum(x.shape[1] for x in inputs)
    if len(ticks) < 2 * input_dim:
        raise ValidationError(
            f"{len(ticks)} training ticks < 2 x input dim {input_dim} for {list(fast_ids)}", sensor_id=slow_id
        )
    out_shape = ds.frame(slow_id, ticks[0]).payload.shape
    proto = Projection(slow_id, fast_ids, weights, np.empty((0, 0)), out_shape, 0.0, False)
    design = proto.design(inputs)
    coef, ridge = _solve(design, target)
    norm = np.linalg.norm(target)
    residual = float(np.linalg.norm(target - design @ coef) / (norm if norm > 0 else 1.0))
    return Projection(slow_id, fast_ids, weights, coef, out_shape, residual, ridge)


def fit_projections(
    ds: Dataset,
    plans: Iterable[FusionPlan],
    ticks: Sequence[int] | None = None,
    subsets: bool = True,
) -> ProjectionStore:
    """Fit projections for every plan's selection.

    With ``subsets`` each non-empty subset of a selection is fitted too, so a
    tick where some selected fast sensor has not arrived can still be imputed.
    """
    store: dict = {}
    for plan in plans:
        if not plan.selected:
            continue
        raw = dict(zip(plan.selected, plan.affinities))
        sizes = range(1, len(plan.selected) + 1) if subsets else [len(plan.selected)]
        for size in sizes:
            for combo in itertools.combinations(plan.selected, size):
                key = _key(plan.slow_id, combo)
                if key in store:
                    continue
                store[key] = fit_projection(ds, plan.slow_id, _renormalize(raw, combo), ticks)
    return ProjectionStore(store)


def _renormalize(raw: Mapping[str, float], ids: Iterable[str]) -> dict[str, float]:
    ids = list(ids)
    total = sum(raw[i] for i in ids)
    if total <= 0:
        return {i: 1.0 / len(ids) for i in ids}
    return {i: raw[i] / total for i in ids}


def arrived_count(total: int, r: float) -> int:
    """Elements (vector components or points) fully received when a fraction ``r`` is missing."""
    return min(total, max(0, math.floor((1.0 - r) * total + 1e-9)))


def impute(
    kind: ImputerKind,
    plan: FusionPlan,
    fast_frames: Mapping[str, FeatureFrame],
    partial_slow: FeatureFrame | None = None,
    history: Sequence[FeatureFrame] = (),
    projections: ProjectionStore | None = None,
    tick: int | None = None,
) -> ImputedFrame | None:
    """Produce a stand-in slow payload for one tick, or ``None`` (Drop, Block, nothing usable).

    AffinityFusion feeds the affinity-weighted fast payloads of the selected
    sensors that are present through the fitted projection, then keeps the
    slow data that did arrive: the received vector prefix, or the received
    points plus projected pseudo-points for the missing ones.
    """
    if tick is None:
        tick = partial_slow.tick if partial_slow is not None else 0
    if kind in (ImputerKind.DROP, ImputerKind.BLOCK):
        return None

    if kind is ImputerKind.NEAREST_TICK:
        if not history:
            return None
        last = max(history, key=lambda fr: fr.tick)
        return ImputedFrame(plan.slow_id, tick, last.payload, kind)

    if projections is None:
        raise ValidationError("AffinityFusion needs fitted projections; run `fit` first", sensor_id=plan.slow_id)
    present = [fid for fid in plan.selected if fid in fast_frames]
    if not present:
        return None
    proj = projections.get(plan.slow_id, present)
    weights = _renormalize(dict(zip(plan.selected, plan.affinities)), present)
    pred = proj.predict({fid: fast_frames[fid].payload for fid in present})

    if partial_slow is not None and partial_slow.payload.size:
        part = partial_slow.payload
        if pred.ndim == 1:
            pred = pred.copy()
            pred[: part.size] = part
        else:
            pred = np.vstack([part, pred[len(part):]])
    return ImputedFrame(plan.slow_id, tick, pred, kind, weights)
