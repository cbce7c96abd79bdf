"""Deterministic event-driven simulation of asynchronous frame arrivals.

Every sensor ships each frame as one bulk transfer over its own link at the
scenario bandwidth. Per tick the scheduler picks a decision time according
to the policy, and the slow payload it works with (complete, partial,
imputed, or dropped) is scored against the ground-truth frame.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .ahp import AffinityMatrix
from .core import Dataset, FeatureFrame, PayloadKind, Role, SensorSpec, ValidationError, as_missing_rate
from .imputation import (
    ImputerKind,
    ProjectionStore,
    arrived_count,
    chamfer_distance,
    impute,
    mmd,
)
from .selection import Criterion, FusionPlan, select_subgraph


class Policy(str, enum.Enum):
    BLOCK = "block"
    DROP = "drop"
    NEAREST_TICK = "nearest_tick"
    AFFINITY = "affinity"


IMPUTER = {
    Policy.BLOCK: ImputerKind.BLOCK,
    Policy.DROP: ImputerKind.DROP,
    Policy.NEAREST_TICK: ImputerKind.NEAREST_TICK,
    Policy.AFFINITY: ImputerKind.AFFINITY_FUSION,
}


@dataclass(frozen=True)
class Deadline:
    """``on_fastest_arrival``: once every fast frame of the tick is in. ``fixed_budget``: origin + budget."""

    kind: str = "on_fastest_arrival"
    budget_ms: float | None = None

    def __post_init__(self):
        if self.kind not in ("on_fastest_arrival", "fixed_budget"):
            raise ValidationError(f"unknown deadline kind {self.kind!r}")
        if self.kind == "fixed_budget" and not (self.budget_ms is not None and self.budget_ms > 0):
            raise ValidationError("fixed budget must be positive")

    @classmethod
    def fixed_budget(cls, ms: float) -> "Deadline":
        return cls("fixed_budget", float(ms))

    def to_config(self):
        return self.kind if self.kind == "on_fastest_arrival" else {"fixed_budget_ms": self.budget_ms}

    @classmethod
    def from_config(cls, value) -> "Deadline":
        if value is None or value == "on_fastest_arrival":
            return cls()
        if isinstance(value, Mapping) and "fixed_budget_ms" in value:
            return cls.fixed_budget(value["fixed_budget_ms"])
        raise ValidationError(f"bad deadline config {value!r}")


@dataclass(frozen=True)
class Scenario:
    bandwidth_mbps: float
    policy: Policy = Policy.AFFINITY
    deadline: Deadline = field(default_factory=Deadline)
    frame_bytes: Mapping[str, int] = field(default_factory=dict)
    clock_offsets_ms: Mapping[str, float] = field(default_factory=dict)
    window_s: float | None = None
    seed: int = 0
    imputation_cost_ms: float = 0.0
    jitter_ms: float = 0.0
    first_tick: int = 0
    tick_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if not self.bandwidth_mbps > 0:
            raise ValidationError("bandwidth_mbps must be positive")
        if any(b < 0 for b in self.frame_bytes.values()):
            raise ValidationError("frame_bytes overrides must be non-negative")
        if self.imputation_cost_ms < 0 or self.jitter_ms < 0:
            raise ValidationError("imputation_cost_ms and jitter_ms must be non-negative")
        if self.window_s is not None and not self.window_s > 0:
            raise ValidationError("window_s must be positive")

    def to_dict(self) -> dict:
        return {
            "bandwidth_mbps": self.bandwidth_mbps,
            "policy": self.policy.value,
            "deadline": self.deadline.to_config(),
            "sensor_overrides": {
                sid: {k: v for k, v in (("frame_bytes", self.frame_bytes.get(sid)), ("clock_offset_ms", self.clock_offsets_ms.get(sid))) if v is not None}
                for sid in sorted(set(self.frame_bytes) | set(self.clock_offsets_ms))
            },
            "window_s": self.window_s,
            "seed": self.seed,
            "imputation_cost_ms": self.imputation_cost_ms,
            "jitter_ms": self.jitter_ms,
            "first_tick": self.first_tick,
            "tick_count": self.tick_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        known = {
            "bandwidth_mbps", "policy", "deadline", "sensor_overrides", "window_s", "seed",
            "imputation_cost_ms", "jitter_ms", "first_tick", "tick_count", "dataset",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario keys {sorted(unknown)}")
        if "bandwidth_mbps" not in d:
            raise ValidationError("scenario needs bandwidth_mbps")
        overrides = d.get("sensor_overrides", {})
        return cls(
            bandwidth_mbps=float(d["bandwidth_mbps"]),
            policy=Policy(d.get("policy", "affinity")),
            deadline=Deadline.from_config(d.get("deadline")),
            frame_bytes={s: int(o["frame_bytes"]) for s, o in overrides.items() if "frame_bytes" in o},
            clock_offsets_ms={s: float(o["clock_offset_ms"]) for s, o in overrides.items() if "clock_offset_ms" in o},
            window_s=d.get("window_s"),
            seed=int(d.get("seed", 0)),
            imputation_cost_ms=float(d.get("imputation_cost_ms", 0.0)),
            jitter_ms=float(d.get("jitter_ms", 0.0)),
            first_tick=int(d.get("first_tick", 0)),
            tick_count=d.get("tick_count"),
        )


@dataclass(frozen=True)
class ArrivalEvent:
    sensor_id: str
    tick: int
    start_ms: float
    complete_ms: float
    bytes: int

    @property
    def duration_ms(self) -> float:
        return self.complete_ms - self.start_ms


def transfer_ms(n_bytes: int, bandwidth_mbps: float) -> float:
    return 8.0 * n_bytes / (bandwidth_mbps * 1000.0)


def arrival_time(sensor: SensorSpec, tick: int, scenario: Scenario, extra_delay_ms: float = 0.0) -> ArrivalEvent:
    """Capture at ``tick * interval + clock offset``, then a bulk transfer at the scenario bandwidth."""
    n_bytes = scenario.frame_bytes.get(sensor.id, sensor.frame_bytes)
    offset = scenario.clock_offsets_ms.get(sensor.id, sensor.clock_offset_ms)
    start = tick * sensor.sample_interval_ms + offset
    complete = start + transfer_ms(n_bytes, scenario.bandwidth_mbps) + extra_delay_ms
    return ArrivalEvent(sensor.id, tick, start, complete, n_bytes)


def missing_rate(slow_arrival: ArrivalEvent, deadline_ms: float) -> float:
    """Fraction of the slow frame's bits still in flight at ``deadline_ms``."""
    dur = slow_arrival.duration_ms
    if dur <= 0:
        return 0.0
    return as_missing_rate(min(1.0, max(0.0, (slow_arrival.complete_ms - deadline_ms) / dur)))


@dataclass
class SlowOutcome:
    r: float
    source: str
    selected: list[str] = field(default_factory=list)
    k: int = 0
    mse: float | None = None
    chamfer: float | None = None
    mmd: float | None = None


@dataclass
class TickRecord:
    tick: int
    origin_ms: float
    deadline_ms: float
    decision_ms: float
    decision_latency_ms: float
    waited: bool
    slow: dict[str, SlowOutcome]


@dataclass
class ScenarioMetrics:
    policy: Policy
    ticks: list[TickRecord]
    aggregates: dict

    def latencies(self) -> np.ndarray:
        return np.array([t.decision_latency_ms for t in self.ticks])

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "aggregates": self.aggregates,
            "ticks": [
                {**{k: v for k, v in asdict(t).items() if k != "slow"}, "slow": {s: asdict(o) for s, o in sorted(t.slow.items())}}
                for t in self.ticks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list[dict]:
        rows = []
        for t in self.ticks:
            for sid, o in sorted(t.slow.items()):
                rows.append(
                    {
                        "policy": self.policy.value,
                        "tick": t.tick,
                        "slow_id": sid,
                        "decision_latency_ms": t.decision_latency_ms,
                        "waited": int(t.waited),
                        "missing_rate": o.r,
                        "source": o.source,
                        "k": o.k,
                        "selected": "+".join(o.selected),
                        "mse": "" if o.mse is None else o.mse,
                        "chamfer": "" if o.chamfer is None else o.chamfer,
                        "mmd": "" if o.mmd is None else o.mmd,
                    }
                )
        return rows


CSV_FIELDS = [
    "policy", "tick", "slow_id", "decision_latency_ms", "waited", "missing_rate",
    "source", "k", "selected", "mse", "chamfer", "mmd",
]


def metrics_to_csv(all_metrics: list[ScenarioMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for m in all_metrics:
        writer.writerows(m.csv_rows())
    return buf.getvalue()


def _partial_frame(truth: FeatureFrame, r: float) -> FeatureFrame:
    n = arrived_count(truth.payload.shape[0], r)
    return FeatureFrame(truth.sensor_id, truth.tick, truth.timestamp_ms, truth.payload[:n])


def _drop_payload(truth: np.ndarray, r: float) -> np.ndarray | None:
    """What inference sees without imputation: the received part, missing vector entries zeroed."""
    n = arrived_count(truth.shape[0], r)
    if truth.ndim == 1:
        out = np.zeros_like(truth)
        out[:n] = truth[:n]
        return out
    return truth[:n] if n > 0 else None


def _score(outcome: SlowOutcome, recon: np.ndarray | None, truth: np.ndarray, kind: PayloadKind) -> None:
    if recon is None:
        return
    if recon.shape == truth.shape:
        outcome.mse = float(np.mean((recon - truth) ** 2))
    if kind is PayloadKind.POINTS:
        outcome.chamfer = chamfer_distance(recon, truth)
        outcome.mmd = mmd(recon, truth)


def run(
    scenario: Scenario,
    dataset: Dataset,
    affinity: AffinityMatrix | None = None,
    projections: ProjectionStore | None = None,
) -> ScenarioMetrics:
    policy = scenario.policy
    if policy is Policy.AFFINITY and (affinity is None or projections is None):
        raise ValidationError("affinity policy needs an affinity matrix and fitted projections")
    for sid in set(scenario.frame_bytes) | set(scenario.clock_offsets_ms):
        dataset.sensor(sid)

    first = scenario.first_tick
    count = dataset.tick_count - first if scenario.tick_count is None else int(scenario.tick_count)
    if first < 0 or count < 1 or first + count > dataset.tick_count:
        raise ValidationError(f"tick range [{first}, {first + count}) outside dataset of {dataset.tick_count} ticks")

    rng = np.random.default_rng(scenario.seed)
    sensors = sorted(dataset.sensors, key=lambda s: s.id)
    slow_specs = [s for s in sensors if s.role is Role.SLOW]
    fast_specs = [s for s in sensors if s.role is Role.FAST]
    completions: dict[str, list[tuple[int, float]]] = {s.id: [] for s in slow_specs}
    r_history: dict[str, list[tuple[float, float]]] = {s.id: [] for s in slow_specs}
    pooled: dict[str, tuple[list, list]] = {s.id: ([], []) for s in slow_specs if s.payload is PayloadKind.VECTOR}
    records = []

    for tick in range(first, first + count):
        jitter = rng.uniform(0.0, scenario.jitter_ms, size=len(sensors)) if scenario.jitter_ms > 0 else np.zeros(len(sensors))
        events = {s.id: arrival_time(s, tick, scenario, float(j)) for s, j in zip(sensors, jitter)}
        origin = min(e.start_ms for e in events.values())
        block_time = max(e.complete_ms for e in events.values())
        if scenario.deadline.kind == "on_fastest_arrival":
            nominal = max(events[f.id].complete_ms for f in fast_specs)
        else:
            nominal = origin + scenario.deadline.budget_ms
        deadline = min(nominal, block_time)

        rates = {s.id: missing_rate(events[s.id], deadline) for s in slow_specs}
        lagging = any(r > 0 for r in rates.values())
        imputing = policy in (Policy.NEAREST_TICK, Policy.AFFINITY)
        if policy is Policy.BLOCK or not lagging:
            decision = block_time if policy is Policy.BLOCK else deadline
        elif imputing:
            decision = min(deadline + scenario.imputation_cost_ms, block_time)
        else:
            decision = deadline
        waited = decision >= block_time and lagging
        # data still in flight at the decision point
        effective = {sid: (0.0 if waited or policy is Policy.BLOCK else r) for sid, r in rates.items()}

        fast_frames = {
            f.id: dataset.frame(f.id, tick) for f in fast_specs if events[f.id].complete_ms <= decision
        }
        outcomes = {}
        for s in slow_specs:
            truth = dataset.frame(s.id, tick)
            r = effective[s.id]
            r_history[s.id].append((origin, r))
            out = SlowOutcome(r=r, source="complete")
            if r == 0.0:
                recon = truth.payload
            elif policy is Policy.DROP:
                out.source = "drop"
                recon = _drop_payload(truth.payload, r)
            else:
                recon = None
                if policy is Policy.NEAREST_TICK:
                    history = [
                        dataset.frame(s.id, t) for t, done in completions[s.id] if done <= decision
                    ]
                    plan = FusionPlan(s.id, Criterion.CONSISTENCY, (), (), 0, 0.0)
                    imputed = impute(ImputerKind.NEAREST_TICK, plan, fast_frames, history=history, tick=tick)
                else:
                    plan = select_subgraph(affinity, s.id, _selection_rate(r_history[s.id], origin, scenario.window_s))
                    out.selected, out.k = list(plan.selected), plan.k
                    imputed = impute(
                        ImputerKind.AFFINITY_FUSION, plan, fast_frames, _partial_frame(truth, r), (), projections, tick
                    )
                if imputed is not None:
                    out.source = IMPUTER[policy].value
                    recon = imputed.payload
                else:
                    out.source = "drop"
                    recon = _drop_payload(truth.payload, r)
            _score(out, recon, truth.payload, s.payload)
            if s.id in pooled and recon is not None:
                pooled[s.id][0].append(recon)
                pooled[s.id][1].append(truth.payload)
            outcomes[s.id] = out
            completions[s.id].append((tick, events[s.id].complete_ms))

        records.append(TickRecord(tick, origin, deadline, decision, decision - origin, waited, outcomes))

    agg = _aggregate(records, slow_specs)
    for sid, (recon, truth) in pooled.items():
        agg["slow"][sid]["pooled_mmd"] = mmd(np.vstack(recon), np.vstack(truth)) if recon else None
    return ScenarioMetrics(policy, records, agg)


def _selection_rate(history: list[tuple[float, float]], now_ms: float, window_s: float | None) -> float:
    if window_s is None:
        return history[-1][1]
    lo = now_ms - window_s * 1000.0
    vals = [r for t, r in history if t >= lo]
    return float(np.mean(vals))


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _aggregate(records: list[TickRecord], slow_specs: list[SensorSpec]) -> dict:
    lat = np.array([r.decision_latency_ms for r in records])
    agg = {
        "ticks": len(records),
        "mean_latency_ms": float(lat.mean()),
        "p95_latency_ms": float(np.percentile(lat, 95)),
        "total_latency_ms": float(lat.sum()),
        "slow": {},
    }
    for s in slow_specs:
        outs = [r.slow[s.id] for r in records]
        agg["slow"][s.id] = {
            "mean_missing_rate": float(np.mean([o.r for o in outs])),
            "mean_mse": _mean(o.mse for o in outs),
            "mean_chamfer": _mean(o.chamfer for o in outs),
            "mean_mmd": _mean(o.mmd for o in outs),
            "absent_frames": sum(1 for o in outs if o.mse is None and o.chamfer is None),
        }
    return agg
