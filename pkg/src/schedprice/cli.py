"""Command-line entry points: train / quote / serve / simulate / evaluate / ab-test.

Reports go to stdout as JSON; progress and warnings go to stderr.  Daily
retraining is a cron-style ``train`` invocation, so the serving process
stays read-only and picks replacements up by hot reload.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from .artifact import ModelArtifact
from .mnl import single_bucket_map
from .pricing import GridConfig, Guardrails
from .predictors import TableCostModel
from .quotelog import ingest, write_training_set
from .service import QuoteRequest, TrainSettings, quote, serve, train
from .simulate import (
    PRESET_NAMES,
    ExplorationPricing,
    FrameworkPolicy,
    LegacyPerOptionPricer,
    NaiveFrequencyModel,
    SegmentedChoiceModel,
    SimLog,
    VanillaMnlModel,
    ab_compare,
    evaluate_models,
    generate_quotes,
    make_preset,
)
from .tree import TreeConfig

logger = logging.getLogger("schedprice")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-weeks", type=float, default=8.0)
    p.add_argument("--subsample", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-leaf", type=int, default=200)
    p.add_argument("--min-gain", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--bucket-scheme", choices=("default", "single"), default="default")
    p.add_argument("--floor", type=float, default=0.0)
    p.add_argument("--ceiling", type=float, default=10_000.0)
    p.add_argument("--guardrail-file", help="JSON {floor: [..]|x, ceiling: [..]|x}")
    p.add_argument("--grid-points", type=int, default=41)
    p.add_argument("--second-level", action="store_true")


def _guardrails(args, num_options: int) -> Guardrails:
    if args.guardrail_file:
        with open(args.guardrail_file) as fh:
            doc = json.load(fh)
        floor = doc["floor"]
        ceiling = doc["ceiling"]
        if not isinstance(floor, list):
            floor = [floor] * num_options
        if not isinstance(ceiling, list):
            ceiling = [ceiling] * num_options
        return Guardrails(tuple(floor), tuple(ceiling))
    return Guardrails.uniform(args.floor, args.ceiling, num_options)


def _settings(args, num_options: int) -> TrainSettings:
    return TrainSettings(
        guardrails=_guardrails(args, num_options),
        window_weeks=args.window_weeks,
        subsample_fraction=args.subsample,
        seed=args.seed,
        tree=TreeConfig(
            max_depth=args.max_depth,
            min_leaf_samples=args.min_leaf,
            min_split_gain=args.min_gain,
        ),
        objective_alpha=args.alpha,
        bucket_scheme=args.bucket_scheme,
        second_level=args.second_level,
        serving_grid=GridConfig(m1_points=args.grid_points, m2_points=args.grid_points),
    )


def cmd_train(args) -> int:
    data = ingest(args.log)
    artifact = train(data, _settings(args, data.num_options))
    artifact.save(args.out)
    print(
        json.dumps(
            {
                "artifact": args.out,
                "version": artifact.version,
                "segments": artifact.tree.num_segments,
                "trained_at": artifact.trained_at,
                "training_rows": artifact.tree.metadata.get("training_rows"),
            },
            indent=2,
        )
    )
    return 0


def cmd_quote(args) -> int:
    artifact = ModelArtifact.load(args.artifact)
    if args.request.strip().startswith("{"):
        doc = json.loads(args.request)
    else:
        with open(args.request) as fh:
            doc = json.load(fh)
    cost_model = (
        TableCostModel.from_csv(args.cost_table, artifact.num_options)
        if args.cost_table
        else None
    )
    result = quote(artifact, QuoteRequest.from_dict(doc), cost_model)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    artifact = ModelArtifact.load(args.artifact)
    cost_model = (
        TableCostModel.from_csv(args.cost_table, artifact.num_options)
        if args.cost_table
        else None
    )
    serve(args.artifact, args.host, args.port, cost_model)
    return 0


def _exploration_log(preset: str, n: int, seed: int) -> SimLog:
    truth = make_preset(preset)
    pricing = ExplorationPricing(
        price_grid=tuple(float(p) for p in range(6, 31)), seed=seed + 1
    )
    return generate_quotes(truth, n, pricing, seed)


def cmd_simulate(args) -> int:
    log = _exploration_log(args.preset, args.n, args.seed)
    write_training_set(log.data, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "quotes": log.num_quotes,
                "conversions": log.num_conversions,
                "cancellations": log.num_cancellations,
            },
            indent=2,
        )
    )
    return 0


def cmd_evaluate(args) -> int:
    train_log = _exploration_log(args.preset, args.train_n, args.seed)
    holdout = _exploration_log(args.preset, args.test_n, args.seed + 1000)
    settings = _settings(args, train_log.data.num_options)
    artifact = train(train_log.data, settings)
    models = {
        "naive": NaiveFrequencyModel.fit(train_log),
        "vanilla_mnl": VanillaMnlModel.fit(
            train_log, single_bucket_map(train_log.data.num_options)
        ),
        "framework": SegmentedChoiceModel(artifact.tree),
    }
    reports = evaluate_models(holdout, models)
    print(json.dumps([dataclasses.asdict(r) for r in reports], indent=2))
    return 0


def cmd_ab_test(args) -> int:
    truth = make_preset(args.preset)
    train_log = _exploration_log(args.preset, args.train_n, args.seed)
    settings = _settings(args, train_log.data.num_options)
    artifact = train(train_log.data, settings)
    guardrails = settings.guardrails
    framework = FrameworkPolicy.from_tree(artifact.tree, guardrails)
    legacy = LegacyPerOptionPricer.fit(
        train_log, tuple(float(p) for p in range(6, 31)), guardrails
    )
    report = ab_compare(
        truth, framework, legacy, n=args.n, split=args.split, seed=args.seed + 2000
    )
    print(
        json.dumps(
            {
                "framework": dataclasses.asdict(report.arm_a),
                "legacy": dataclasses.asdict(report.arm_b),
                "difference": report.difference,
                "se_difference": report.se_difference,
                "t_stat": report.t_stat,
                "p_value": report.p_value,
            },
            indent=2,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schedprice",
        description="Choice modeling and price optimization for scheduled services",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model artifact from a quote log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("quote", help="price one request against an artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--request", required=True, help="JSON file or inline JSON")
    p.add_argument("--cost-table", help="CSV cost table")
    p.set_defaults(fn=cmd_quote)

    p = sub.add_parser("serve", help="run the quote endpoint")
    p.add_argument("--artifact", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--cost-table")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("simulate", help="emit a synthetic quote log")
    p.add_argument("--preset", choices=PRESET_NAMES, default="ref-effect")
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("evaluate", help="holdout NLL/Brier of the model lineup")
    p.add_argument("--preset", choices=PRESET_NAMES, default="two-segment")
    p.add_argument("--train-n", type=int, default=20_000)
    p.add_argument("--test-n", type=int, default=10_000)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ab-test", help="framework vs legacy pricing on a planted truth")
    p.add_argument("--preset", choices=PRESET_NAMES, default="ref-effect")
    p.add_argument("--train-n", type=int, default=20_000)
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--split", type=float, default=0.5)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_ab_test)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
