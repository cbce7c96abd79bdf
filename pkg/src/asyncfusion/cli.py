"""Command-line front end: ``fit``, ``affinity``, ``select``, ``simulate``, ``report``.

Config files (``--config``) are JSON with optional sections::

    {
      "embedding": {"target_dim": 2, "iterations": 500, "perplexity": 30.0,
                    "learning_rate": 0.2, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
      "ahp": {"criteria_ratio": 7.0, "threshold": null, "max_frames": 60,
              "representation": "auto"},
      "fit": {"train_fraction": 0.5}
    }

Scenario files are JSON with the keys read by :meth:`Scenario.from_dict`.
Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import traceback
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .ahp import AHPConfig, AffinityMatrix, affinity_from_matrices, build_affinity_matrix, worked_example
from .core import AsyncFusionError, Dataset, NumericalError, ValidationError, load_dataset
from .embedding import AdamConfig, EmbeddingConfig
from .imputation import ProjectionStore, fit_projections
from .selection import nested_plans, select_subgraph
from .simulator import Policy, Scenario, ScenarioMetrics, metrics_to_csv, run

log = logging.getLogger("asyncfusion")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
NON_BLOCKING = (Policy.DROP, Policy.AFFINITY, Policy.NEAREST_TICK)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class FitConfig:
    train_fraction: float = 0.5  # projections are fitted on the leading share of ticks

    def __post_init__(self):
        if not 0 < self.train_fraction <= 1:
            raise ValidationError("fit.train_fraction must lie in (0, 1]")

    def train_ticks(self, tick_count: int) -> range:
        return range(max(1, math.floor(self.train_fraction * tick_count)))


@dataclass(frozen=True)
class RunConfig:
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    ahp: AHPConfig = field(default_factory=AHPConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        _check_keys(d, {"embedding", "ahp", "fit"}, "config")
        emb = dict(d.get("embedding", {}))
        _check_keys(
            emb,
            {"target_dim", "iterations", "perplexity", "seed", "learning_rate", "beta1", "beta2", "epsilon"},
            "embedding",
        )
        adam = AdamConfig(**{k: float(emb.pop(k)) for k in ("learning_rate", "beta1", "beta2", "epsilon") if k in emb})
        ahp = dict(d.get("ahp", {}))
        _check_keys(ahp, {"criteria_ratio", "threshold", "max_frames", "representation"}, "ahp")
        fit = dict(d.get("fit", {}))
        _check_keys(fit, {"train_fraction"}, "fit")
        return cls(EmbeddingConfig(adam=adam, **emb), AHPConfig(**ahp), FitConfig(**fit))

    def to_dict(self) -> dict:
        emb = asdict(self.embedding)
        emb.update(emb.pop("adam"))
        return {"embedding": emb, "ahp": asdict(self.ahp), "fit": asdict(self.fit)}

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else replace(self, embedding=replace(self.embedding, seed=seed))


def _check_keys(d: Mapping, allowed: set, where: str) -> None:
    if not isinstance(d, Mapping):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")


def _read_json(path: str | Path, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"cannot read {what}: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed {what} {p}: {exc}") from None


def _write(path: str | Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")
    log.info("wrote %s", p)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_dict(_read_json(args.config, "config")) if args.config else RunConfig()
    return cfg.with_seed(args.seed)


def _load_dataset(path: str) -> Dataset:
    if not Path(path).is_dir():
        raise ValidationError(f"cannot read dataset directory: {path}")
    return load_dataset(path)


def _load_affinity(path: str | None, policy_needs: bool = True) -> AffinityMatrix | None:
    if path is None:
        if policy_needs:
            raise ValidationError(
                "the affinity policy needs an affinity report: run `asyncfusion affinity` and pass --affinity"
            )
        return None
    return AffinityMatrix.from_dict(_read_json(path, "affinity report"))


def _load_projections(path: str | None) -> ProjectionStore:
    if path is None or not (Path(path) / "index.json").is_file():
        raise ValidationError("the affinity policy needs fitted projections: run `asyncfusion fit` and pass --projections")
    return ProjectionStore.load(path)


def _traces_csv(traces: Mapping[tuple[str, str], Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slow_id", "fast_id", "iteration", "cost"])
    for (slow_id, fast_id), trace in sorted(traces.items()):
        for i, c in enumerate(trace):
            writer.writerow([slow_id, fast_id, i, repr(float(c))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def cmd_affinity(args) -> int:
    if args.bypass_ahp_example:
        A, Bs = worked_example()
        am = affinity_from_matrices("slow", A, Bs)
        _write(args.out, am.to_json())
        return EXIT_OK
    if args.dataset is None:
        raise UsageError("affinity: a dataset path is required unless --bypass-ahp-example is given")
    cfg = _load_config(args)
    ds = _load_dataset(args.dataset)
    traces: dict = {}
    am = build_affinity_matrix(ds, cfg.embedding, cfg.ahp, traces=traces)
    _write(args.out, am.to_json())
    if args.cost_trace:
        _write(args.cost_trace, _traces_csv(traces))
    return EXIT_OK


def cmd_select(args) -> int:
    am = _load_affinity(args.affinity)
    slow_ids = sorted(am.weights) if args.slow is None else [args.slow]
    if args.missing_rate is None:
        plans = {s: [p.to_dict() for p in nested_plans(am, s)] for s in slow_ids}
    else:
        plans = {s: select_subgraph(am, s, args.missing_rate).to_dict() for s in slow_ids}
    _write(args.out, _dumps({"missing_rate": args.missing_rate, "plans": plans}))
    return EXIT_OK


def _fit_store(ds: Dataset, am: AffinityMatrix, cfg: RunConfig) -> ProjectionStore:
    plans = [p for s in sorted(am.weights) if s in {x.id for x in ds.slow} for p in nested_plans(am, s)]
    return fit_projections(ds, plans, ticks=cfg.fit.train_ticks(ds.tick_count))


def cmd_fit(args) -> int:
    if args.out is None:
        raise UsageError("fit: --out DIR is required")
    cfg = _load_config(args)
    ds = _load_dataset(args.dataset)
    am = _load_affinity(args.affinity)
    _fit_store(ds, am, cfg).save(args.out)
    log.info("saved projections to %s", args.out)
    return EXIT_OK


def _policies(arg: str | None, scenario: Scenario) -> list[Policy]:
    if arg is None:
        return [scenario.policy]
    if arg == "sweep":
        return [Policy.BLOCK, Policy.DROP, Policy.NEAREST_TICK, Policy.AFFINITY]
    names = [x.strip() for x in arg.split(",") if x.strip()]
    valid = {p.value for p in Policy}
    bad = [x for x in names if x not in valid]
    if bad or not names:
        raise UsageError(f"--policy: unknown policy {bad or arg!r}; choose from {sorted(valid)} or 'sweep'")
    return [Policy(x) for x in dict.fromkeys(names)]


def _summary(metrics: Sequence[ScenarioMetrics]) -> dict:
    totals = {m.policy.value: m.aggregates["total_latency_ms"] for m in metrics}
    out = {"total_latency_ms": totals}
    reference = next((p.value for p in NON_BLOCKING if p.value in totals), None)
    if Policy.BLOCK.value in totals and reference is not None and totals[reference] > 0:
        out["block_to_nonblocking_ratio"] = totals[Policy.BLOCK.value] / totals[reference]
        out["nonblocking_reference"] = reference
    return out


def _simulate(ds: Dataset, scenario: Scenario, policies: Sequence[Policy], am, store) -> list[ScenarioMetrics]:
    out = []
    for p in policies:
        log.info("simulating policy %s", p.value)
        out.append(run(replace(scenario, policy=p), ds, am, store if p is Policy.AFFINITY else None))
    return out


def _scenario(args) -> Scenario:
    scenario = Scenario.from_dict(_read_json(args.scenario, "scenario"))
    return scenario if args.seed is None else replace(scenario, seed=args.seed)


def cmd_simulate(args) -> int:
    ds = _load_dataset(args.dataset)
    scenario = _scenario(args)
    policies = _policies(args.policy, scenario)
    needs = Policy.AFFINITY in policies
    am = _load_affinity(args.affinity, needs) if needs or args.affinity else None
    store = _load_projections(args.projections) if needs else None
    metrics = _simulate(ds, scenario, policies, am, store)
    report = {
        "scenario": scenario.to_dict(),
        "policies": {m.policy.value: m.to_dict() for m in metrics},
        "summary": _summary(metrics),
    }
    _write(args.out, _dumps(report))
    csv_path = Path(args.out).with_suffix(".csv") if args.out else None
    if csv_path is not None:
        _write(csv_path, metrics_to_csv(metrics))
    return EXIT_OK


def _affinity_summary(am: AffinityMatrix) -> dict:
    return {
        s: {
            "criterion": am.criterion[s].value,
            "weights": dict(sorted(am.weights[s].items())),
            "ranking": sorted(am.weights[s], key=lambda f: (-am.weights[s][f], f)),
            "consistent": all(r.passed for r in am.consistency.get(s, {}).values()),
        }
        for s in sorted(am.weights)
    }


def cmd_report(args) -> int:
    """Run the whole pipeline (affinity, fit, all policies) and write one report."""
    cfg = _load_config(args)
    ds = _load_dataset(args.dataset)
    scenario = _scenario(args)
    am = _load_affinity(args.affinity) if args.affinity else build_affinity_matrix(ds, cfg.embedding, cfg.ahp)
    store = _fit_store(ds, am, cfg)
    metrics = _simulate(ds, scenario, _policies("sweep", scenario), am, store)
    report = {
        "version": __version__,
        "seed": scenario.seed if args.seed is None else args.seed,
        "config": cfg.to_dict(),
        "scenario": scenario.to_dict(),
        "affinity": _affinity_summary(am),
        "policies": {m.policy.value: m.aggregates for m in metrics},
        "summary": _summary(metrics),
    }
    _write(args.out, _dumps(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the embedding / scenario seed")
    common.add_argument("--config", default=None, help="JSON run config (embedding, ahp, fit sections)")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="asyncfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("affinity", parents=[common], help="build the cross-modal affinity matrix")
    p.add_argument("dataset", nargs="?", default=None)
    p.add_argument("--bypass-ahp-example", action="store_true", help="use the fixed three-sensor comparison matrices")
    p.add_argument("--cost-trace", default=None, help="write per-pair embedding cost traces as CSV")
    p.set_defaults(func=cmd_affinity)

    p = sub.add_parser("select", parents=[common], help="choose fast sensors for each slow sensor")
    p.add_argument("affinity")
    p.add_argument("--missing-rate", "-r", type=float, default=None, help="omit to list every nested plan")
    p.add_argument("--slow", default=None, help="restrict to one slow sensor id")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fit", parents=[common], help="fit imputation projections for every selectable subset")
    p.add_argument("dataset")
    p.add_argument("--affinity", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="run the event-driven scheduler simulation")
    p.add_argument("dataset")
    p.add_argument("scenario")
    p.add_argument(
        "--policy", default=None, help="one policy, a comma-separated list, or 'sweep' for all four (default: scenario's)"
    )
    p.add_argument("--affinity", default=None)
    p.add_argument("--projections", default=None, help="directory written by `fit`")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="affinity + fit + all-policy simulation in one report")
    p.add_argument("dataset")
    p.add_argument("scenario")
    p.add_argument("--affinity", default=None, help="reuse an affinity report instead of building one")
    p.set_defaults(func=cmd_report)
    return parser


def _origin_module(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    for fr in reversed(frames):
        name = Path(fr.filename).stem
        if "asyncfusion" in fr.filename and name != "cli":
            return name
    return "cli"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error [{_origin_module(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AsyncFusionError, ValueError, KeyError) as exc:
        print(f"validation error [{_origin_module(exc)}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
