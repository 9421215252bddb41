"""Command-line entry point.

    pometric run --config cfg.txt [--seed-override N] [--out DIR]
    pometric compare --reports a.json b.json
    pometric synth --spec spec.txt --out data.jsonl

Errors print one machine-readable JSON object to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset, experiment, rings


def _run(args) -> int:
    cfg = experiment.load_config(args.config)
    if args.seed_override is not None:
        cfg = cfg.replaced(seeds=(args.seed_override,))
        cfg.validate()
    report = experiment.run_experiment(cfg)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json() + "\n")
        (out_dir / "report.txt").write_text(report.table_text() + "\n")
        print(f"wrote {out_dir / 'report.json'}")
        print(report.table_text())
    else:
        print(report.to_json())
    return 0


def _compare(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            reports.append(json.load(fh))
    summary = experiment.compare_losses(reports)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


_SYNTH_FIELDS = {
    "inner_radius": (float, 1.0),
    "groups": (int, 4),
    "train_points": (int, 100),
    "test_points_per_class": (int, 20),
    "seed": (int, 0),
}


def _synth(args) -> int:
    values = {key: default for key, (_, default) in _SYNTH_FIELDS.items()}
    text = Path(args.spec).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{args.spec}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SYNTH_FIELDS:
            raise ValueError(f"{args.spec}:{lineno}: unknown key {key!r}")
        caster, _ = _SYNTH_FIELDS[key]
        values[key] = caster(value)
    spec = rings.RingSpec(
        inner_radius=values["inner_radius"],
        n_groups=values["groups"],
        points_per_class_train=rings.split_budget(
            values["train_points"], 2 * values["groups"]
        ),
        points_per_class_test=values["test_points_per_class"],
        seed=values["seed"],
    )
    train, test = rings.generate_rings(spec)
    dataset.write_jsonl(rings.to_records(train, test), args.out)
    print(f"wrote {len(train)} train / {len(test)} test points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pometric",
        description="Metric-learning experiments with partial-order losses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and evaluate one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_run)

    p_cmp = sub.add_parser("compare", help="significance test over run reports")
    p_cmp.add_argument("--reports", nargs="+", required=True)
    p_cmp.set_defaults(func=_compare)

    p_syn = sub.add_parser("synth", help="emit a synthetic ring dataset as JSONL")
    p_syn.add_argument("--spec", required=True)
    p_syn.add_argument("--out", required=True)
    p_syn.set_defaults(func=_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error funnel
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
