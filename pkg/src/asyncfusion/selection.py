"""Fusion criterion and affinity sub-graph selection for each slow modality."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .core import SensorSpec, ValidationError, as_missing_rate, fov_arc_length

if TYPE_CHECKING:
    from .ahp import AffinityMatrix


class Criterion(str, enum.Enum):
    CONSISTENCY = "consistency"
    COMPLEMENTARITY = "complementarity"


def _intersection_length(a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]) -> float:
    total = 0.0
    for lo_a, hi_a in a:
        for lo_b, hi_b in b:
            total += max(0.0, min(hi_a, hi_b) - max(lo_a, lo_b))
    return total


def fov_iou(a: SensorSpec, b: SensorSpec) -> float:
    """Angular intersection-over-union of two sensors' fields of view, in [0, 1]."""
    inter = _intersection_length(a.fov, b.fov)
    union = fov_arc_length(a.fov) + fov_arc_length(b.fov) - inter
    if union <= 0:
        raise ValidationError(f"empty FOVs for {a.id} and {b.id}")
    return min(1.0, max(0.0, inter / union))


@dataclass(frozen=True)
class CriterionDecision:
    criterion: Criterion
    overlapping: tuple[str, ...]  # fast ids with non-zero IoU
    iou: dict


def affinity_criterion(slow: SensorSpec, fasts: Sequence[SensorSpec]) -> CriterionDecision:
    """Consistency if any fast sensor has zero overlap with ``slow``, else Complementarity."""
    if not fasts:
        raise ValidationError("no fast sensors", sensor_id=slow.id)
    iou = {f.id: fov_iou(slow, f) for f in fasts}
    overlapping = tuple(fid for fid, v in iou.items() if v != 0.0)
    crit = Criterion.CONSISTENCY if any(v == 0.0 for v in iou.values()) else Criterion.COMPLEMENTARITY
    return CriterionDecision(crit, overlapping, iou)


def select_k(v_count: int, r: float) -> int:
    if v_count < 0:
        raise ValidationError("v_count must be non-negative")
    r = as_missing_rate(r)
    if v_count == 0:
        return 0
    # tolerance guards products like 3 * 0.7 landing just below an integer
    k = math.floor(v_count * r + 1e-9)
    return k if k > 0 else 1


@dataclass(frozen=True)
class FusionPlan:
    """Fast sensors chosen to stand in for one slow sensor.

    ``affinities`` keeps the raw affinity weights of ``selected`` (same order);
    ``weights`` renormalizes them over the selection.
    """

    slow_id: str
    criterion: Criterion
    selected: tuple[str, ...]
    affinities: tuple[float, ...]
    k: int
    objective: float

    @property
    def weights(self) -> dict[str, float]:
        total = sum(self.affinities)
        if not self.selected:
            return {}
        if total <= 0:
            return {fid: 1.0 / len(self.selected) for fid in self.selected}
        return {fid: a / total for fid, a in zip(self.selected, self.affinities)}

    def to_dict(self) -> dict:
        return {
            "slow_id": self.slow_id,
            "criterion": self.criterion.value,
            "selected": list(self.selected),
            "affinities": list(self.affinities),
            "weights": self.weights,
            "k": self.k,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d) -> "FusionPlan":
        return cls(
            slow_id=d["slow_id"],
            criterion=Criterion(d["criterion"]),
            selected=tuple(d["selected"]),
            affinities=tuple(float(a) for a in d["affinities"]),
            k=int(d["k"]),
            objective=float(d["objective"]),
        )


def top_k(weights: dict[str, float], candidates: Iterable[str], k: int) -> tuple[str, ...]:
    """Largest ``k`` weights among ``candidates``; ties broken by ascending id."""
    ranked = sorted(candidates, key=lambda fid: (-weights[fid], fid))
    return tuple(ranked[:k])


def select_subgraph(affinity: "AffinityMatrix", slow_id: str, r: float) -> FusionPlan:
    """Choose the ``k`` highest-affinity overlapping fast sensors for ``slow_id``.

    Candidates are the fast sensors whose FOV overlaps the slow sensor's; ``k``
    follows :func:`select_k`. For a sum objective over non-negative weights the
    top-k choice is optimal.
    """
    if slow_id not in affinity.weights:
        raise ValidationError("unknown slow sensor", sensor_id=slow_id)
    weights = affinity.weights[slow_id]
    candidates = [fid for fid in affinity.overlapping[slow_id] if fid in weights]
    k = select_k(len(candidates), r)
    chosen = top_k(weights, candidates, k)
    affinities = tuple(weights[fid] for fid in chosen)
    return FusionPlan(
        slow_id=slow_id,
        criterion=affinity.criterion[slow_id],
        selected=chosen,
        affinities=affinities,
        k=k,
        objective=float(sum(affinities)),
    )


def nested_plans(affinity: "AffinityMatrix", slow_id: str) -> list[FusionPlan]:
    """Every plan :func:`select_subgraph` can return for ``slow_id`` as ``r`` sweeps [0, 1]."""
    n = len(affinity.overlapping[slow_id])
    if n == 0:
        return []
    plans = {}
    for k in range(1, n + 1):
        plan = select_subgraph(affinity, slow_id, k / n)
        plans[plan.selected] = plan
    return list(plans.values())
