"""Command-line interface: train, bound, verify, and report subcommands.

Every emitted record embeds the resolved configuration and a content hash
of the input data, so any reported number can be recomputed from the
record plus the dataset files. Exit codes: 0 success, 2 configuration or
usage error, 3 data error, 4 verification failure, 5 divergence.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, verify
from .data import (
    Dataset,
    SplitSpec,
    load_csv,
    load_heart,
    load_mnist_pair,
    make_toy_dataset,
    split,
    standardize,
    standardize_within_split,
)
from .model import LdpConfig, load_model, save_model
from .numerics import RandomSource
from .train import TrainConfig, run_experiment

__all__ = ["main", "entrypoint"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4
EXIT_DIVERGED = 5

RECORD_VERSION = 1

log = logging.getLogger("moecert.cli")


class ConfigError(ValueError):
    pass


def _sha256_files(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _sha256_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def _parse_epsilons(text: str) -> list[LdpConfig]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part.lower() in ("none", "inf", "unconstrained"):
            out.append(LdpConfig.unconstrained())
        else:
            out.append(LdpConfig.constrained(float(part)))
    if not out:
        raise ConfigError("epsilon list is empty")
    return out


def _load_dataset(args) -> tuple[Dataset, str]:
    """Build the dataset named by the CLI flags; returns it with a content hash."""
    kind = args.dataset
    if kind == "csv":
        if not args.path or not args.label_column:
            raise ConfigError("csv dataset needs --path and --label-column")
        if (args.positive_label is None) == (args.negative_label is None):
            raise ConfigError("csv dataset needs exactly one of --positive-label / --negative-label")
        data = load_csv(
            args.path,
            label_column=args.label_column,
            positive_label=args.positive_label,
            negative_label=args.negative_label,
            delimiter=args.delimiter,
        )
        return data, _sha256_files([args.path])
    if kind == "heart":
        if not args.path:
            raise ConfigError("heart dataset needs --path")
        return load_heart(args.path), _sha256_files([args.path])
    if kind == "mnist":
        if not args.images or not args.labels:
            raise ConfigError("mnist dataset needs --images and --labels")
        data = load_mnist_pair(args.images, args.labels, args.digit_a, args.digit_b)
        return data, _sha256_files([args.images, args.labels])
    if kind == "toy":
        data = make_toy_dataset(m=args.toy_size, d=args.toy_dim, seed=args.toy_seed)
        return data, _sha256_arrays(data.features, data.labels)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _should_standardize(args) -> bool:
    if args.standardize == "on":
        return True
    if args.standardize == "off":
        return False
    return args.dataset in ("csv", "heart")  # pixel/toy features are already well-scaled


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("MOECERT_OUT") or "moecert-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolved_config(args, skip=("func",)) -> dict:
    return {k: v for k, v in vars(args).items() if k not in skip and not k.startswith("_")}


def _fmt_pm(mean: float, std: float) -> str:
    return f"{mean:.5f} ± {std:.5f}"


def cmd_train(args) -> int:
    data, content_hash = _load_dataset(args)
    out = _out_dir(args)
    settings = _parse_epsilons(args.epsilon)
    batch = "full" if args.batch_size == "full" else int(args.batch_size)
    use_std = _should_standardize(args)

    records = []
    diverged = False
    for ldp in settings:
        config = TrainConfig(
            ldp=ldp,
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=batch,
            runs=args.runs,
            base_seed=args.seed,
            init_scale=args.init_scale,
            n_experts=args.experts,
            hidden=args.hidden,
            train_fraction=args.train_fraction,
            resplit_per_run=args.resplit,
        )
        work = data
        if use_std:
            work = standardize_within_split(data, SplitSpec(args.train_fraction, seed=args.seed))
        summary = run_experiment(config, work, keep_models=args.save_models)
        models = None
        if args.save_models:
            summary, models = summary
        tag = ldp.tag()
        record = {
            "record": "run-summary",
            "record_version": RECORD_VERSION,
            "dataset": data.source_tag,
            "ldp": tag,
            "input_sha256": content_hash,
            "config": {
                "learning_rate": args.lr, "epochs": args.epochs, "batch_size": args.batch_size,
                "runs": args.runs, "base_seed": args.seed, "init_scale": args.init_scale,
                "n_experts": args.experts, "hidden": args.hidden,
                "train_fraction": args.train_fraction, "resplit_per_run": args.resplit,
                "standardized": use_std, "ldp": tag,
            },
            "summary": summary.to_record(),
        }
        records.append(record)
        if any(r["status"] != "ok" for r in record["summary"]["runs"]):
            diverged = True
        if models is not None:
            model_dir = out / "models"
            model_dir.mkdir(exist_ok=True)
            for rec, model in zip(summary.records, models):
                if model is not None:
                    save_model(model, model_dir / f"{tag}-run{rec.seed}.npz")

    summary_path = out / "summaries.jsonl"
    with open(summary_path, "a") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    _print_summary_table(records, stream=sys.stdout)
    print(f"wrote {len(records)} summary record(s) to {summary_path}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def _print_summary_table(records: list[dict], stream) -> None:
    if not records:
        return
    best = min(range(len(records)), key=lambda k: records[k]["summary"]["mean_test"])
    print(f"{'setting':<14}{'train risk':<22}{'test risk':<22}", file=stream)
    for k, record in enumerate(records):
        s = record["summary"]
        star = " *" if k == best else ""
        print(
            f"{record['ldp']:<14}"
            f"{_fmt_pm(s['mean_train'], s['std_train']):<22}"
            f"{_fmt_pm(s['mean_test'], s['std_test']):<22}{star}",
            file=stream,
        )


def cmd_bound(args) -> int:
    model = load_model(args.model)
    data, content_hash = _load_dataset(args)
    use_std = _should_standardize(args)
    train_part, test_part = split(data, SplitSpec(args.train_fraction, seed=args.seed))
    if use_std:
        train_part, test_part, _ = standardize(train_part, test_part)

    if not model.ldp.is_constrained and args.epsilon_override is None:
        raise ConfigError("model is unconstrained; supply --epsilon-override")
    if model.ldp.is_constrained and args.epsilon_override is not None:
        log.warning(
            "overriding the model's recorded epsilon %s with %s",
            model.ldp.epsilon, args.epsilon_override,
        )
        model.ldp = LdpConfig.constrained(args.epsilon_override)

    lam_grid = tuple(float(v) for v in args.lambda_grid.split(","))
    report = bounds.certificate(
        model, train_part.features, train_part.labels,
        delta=args.delta, lam_grid=lam_grid,
        rademacher_cap=args.cap,
        epsilon=args.epsilon_override if not model.ldp.is_constrained else None,
    )

    out = _out_dir(args)
    record = {
        "record": "bound-report",
        "record_version": RECORD_VERSION,
        "model": str(args.model),
        "dataset": data.source_tag,
        "input_sha256": content_hash,
        "config": _resolved_config(args),
        "report": report.to_record(),
    }
    path = out / "bound-report.json"
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2)

    for name, value in report.values().items():
        flag = "  (vacuous)" if value > 1.0 else ""
        print(f"{name:<16}{value:.6f}{flag}")
    print(f"naive comparison {report.naive_comparison:.6f}")
    print(f"headline         {report.headline():.6f}")
    if report.notes:
        for note in report.notes:
            print(f"note: {note}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rng = RandomSource(args.seed)
    failures = 0
    lines = []

    epsilons = [float(v) for v in args.epsilons.split(",")] if args.epsilons else []
    for eps in epsilons:
        for kind in ("linear", "catoni", "kl"):
            worst = math.inf
            applicable = 0
            violations = 0
            for _ in range(args.trials):
                inst = verify.random_instance(rng, eps)
                lam = 0.5 + float(rng.uniform(0.1, 4.5))
                check = verify.check_lemma_delta(inst, eps, kind, lam=lam)
                if not check.applicable:
                    continue
                applicable += 1
                slack = check.rhs - check.lhs
                if math.isfinite(slack):
                    worst = min(worst, slack)
                if not check.holds:
                    violations += 1
            ok = violations == 0
            failures += violations
            worst_text = "n/a" if worst is math.inf else f"{worst:+.3e}"
            lines.append(
                f"[{'ok' if ok else 'FAIL'}] lemma {kind:<7} eps={eps:<4g} "
                f"applicable={applicable}/{args.trials} worst_slack={worst_text}"
            )

    if args.softmax_trials > 0:
        worst_margin = math.inf
        exceeded = 0
        beta, cap = 0.7, 1.3
        for _ in range(args.softmax_trials):
            k = int(rng.integers(2, 11))
            n = int(rng.integers(2, 7))
            table = rng.uniform(-cap, cap, size=(k, n))
            biases = rng.normal(0.0, 1.0, size=n)
            try:
                span = verify.check_softmax_ldp(table, beta, biases, b=cap)
            except RuntimeError:
                exceeded += 1
                continue
            worst_margin = min(worst_margin, 4.0 * beta * cap - span)
        failures += exceeded
        lines.append(
            f"[{'ok' if exceeded == 0 else 'FAIL'}] softmax ratio guarantee "
            f"trials={args.softmax_trials} min_margin={worst_margin:.3e}"
        )

    if args.demo_m > 0:
        for eps in (0.0, 1.0):
            demo = verify.nonadaptive_vacuousness_demo(eps, args.demo_m, rng)
            lower_ok = demo.empirical_risk_lower >= 0.45 * math.exp(-eps)
            bound_ok = demo.bound_value >= math.exp(eps) / 2.0 - 0.05
            risk_ok = demo.empirical_risk >= demo.empirical_risk_lower - 1e-12
            ok = lower_ok and bound_ok and risk_ok
            if not ok:
                failures += 1
            lines.append(
                f"[{'ok' if ok else 'FAIL'}] constant-experts demo eps={eps:g} "
                f"risk_lower={demo.empirical_risk_lower:.4f} bound={demo.bound_value:.4f}"
            )

    if args.selftest_negative:
        bad = np.array([[0.9, 0.1], [0.01, 0.99]])
        span = verify.gate_table_ldp_span(bad)
        ok = span <= 1.0  # claimed eps=1; this table breaks it by construction
        if not ok:
            failures += 1
        lines.append(f"[{'ok' if ok else 'FAIL'}] injected faulty gate span={span:.3f} (expected FAIL)")

    for line in lines:
        print(line)
    if failures:
        print(f"{failures} verification failure(s)")
        return EXIT_VERIFY
    print("all verification suites passed")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.summaries:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    if record.get("record") != "run-summary":
                        raise KeyError("record kind")
                    rows.append(record)
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ConfigError(f"{path}:{lineno}: not a run-summary record ({exc})") from exc
    if not rows:
        raise ConfigError("no summary records found")

    datasets = sorted({r["dataset"] for r in rows})
    settings = list(dict.fromkeys(r["ldp"] for r in rows))  # keep first-seen order
    out = _out_dir(args)
    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["dataset", "ldp", "mean_train", "std_train", "mean_test", "std_test"])
        for r in rows:
            s = r["summary"]
            writer.writerow([r["dataset"], r["ldp"], s["mean_train"], s["std_train"],
                             s["mean_test"], s["std_test"]])

    for ds in datasets:
        ds_rows = [r for r in rows if r["dataset"] == ds]
        by_tag = {r["ldp"]: r["summary"] for r in ds_rows}
        present = [t for t in settings if t in by_tag]
        best = min(present, key=lambda t: by_tag[t]["mean_test"])
        print(f"dataset: {ds}")
        print(f"  {'setting':<14}{'train risk':<22}{'test risk':<22}")
        for tag in present:
            s = by_tag[tag]
            star = " *" if tag == best else ""
            print(f"  {tag:<14}{_fmt_pm(s['mean_train'], s['std_train']):<22}"
                  f"{_fmt_pm(s['mean_test'], s['std_test']):<22}{star}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("csv", "heart", "mnist", "toy"), default="toy")
    p.add_argument("--path", help="csv/heart file path")
    p.add_argument("--label-column", help="csv label column name")
    p.add_argument("--positive-label", help="csv label value mapped to +1")
    p.add_argument("--negative-label", help="csv label value mapped to -1 (others become +1)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--images", help="mnist images IDX file")
    p.add_argument("--labels", help="mnist labels IDX file")
    p.add_argument("--digit-a", type=int, default=0, help="mnist digit mapped to +1")
    p.add_argument("--digit-b", type=int, default=8, help="mnist digit mapped to -1")
    p.add_argument("--toy-size", type=int, default=200)
    p.add_argument("--toy-dim", type=int, default=2)
    p.add_argument("--toy-seed", type=int, default=0)
    p.add_argument("--standardize", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0, help="split and base run seed")
    p.add_argument("--out", help="output directory (default $MOECERT_OUT or ./moecert-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moecert",
        description="Train privacy-gated mixtures of linear experts and certify their risk.",
    )
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the multi-seed training protocol")
    _add_dataset_flags(p_train)
    p_train.add_argument("--epsilon", default="none,0.5,2,4,5,10",
                         help='comma list; "none" means unconstrained')
    p_train.add_argument("--runs", type=int, default=10)
    p_train.add_argument("--epochs", type=int, default=1000)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--batch-size", default="64")
    p_train.add_argument("--experts", type=int, default=100)
    p_train.add_argument("--hidden", type=int, default=64)
    p_train.add_argument("--init-scale", type=float, default=1.0)
    p_train.add_argument("--resplit", action="store_true",
                         help="draw a fresh split per run instead of one fixed split")
    p_train.add_argument("--save-models", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_bound = sub.add_parser("bound", help="evaluate risk certificates for a trained model")
    _add_dataset_flags(p_bound)
    p_bound.add_argument("--model", required=True, help="model file written by training")
    p_bound.add_argument("--delta", type=float, default=0.05)
    p_bound.add_argument("--lambda-grid", default="0.6,0.8,1,2,5")
    p_bound.add_argument("--cap", type=float, help="a-priori expert weight norm cap")
    p_bound.add_argument("--epsilon-override", type=float,
                         help="epsilon to trust for an unconstrained model")
    p_bound.set_defaults(func=cmd_bound)

    p_verify = sub.add_parser("verify", help="run the executable math checks")
    p_verify.add_argument("--trials", type=int, default=1000)
    p_verify.add_argument("--softmax-trials", type=int, default=1000)
    p_verify.add_argument("--epsilons", default="0,0.1,1,3")
    p_verify.add_argument("--demo-m", type=int, default=10000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--selftest-negative", action="store_true",
                          help="inject a faulty gate table; the run must then fail")
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="render summary records as a table plus CSV")
    p_report.add_argument("summaries", nargs="+", help="summary .jsonl files")
    p_report.add_argument("--out")
    p_report.set_defaults(func=cmd_report)

    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, defaults: dict) -> set:
    """Push config values into every (sub)parser defining the key.

    Subparsers re-apply their own defaults when they run, so setting
    defaults only on the root parser would be silently undone for any
    subcommand flag. Returns the set of keys that landed somewhere.
    """
    known = {action.dest for action in parser._actions}
    hits = {k for k in defaults if k in known}
    if hits:
        parser.set_defaults(**{k: defaults[k] for k in hits})
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                hits |= _apply_config_defaults(sub, defaults)
    return hits


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    # First pass only extracts --config so its values become defaults.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(defaults, dict):
            print("config error: config file must hold a JSON object", file=sys.stderr)
            return EXIT_CONFIG
        normalized = {k.replace("-", "_"): v for k, v in defaults.items()}
        applied = _apply_config_defaults(parser, normalized)
        unknown = sorted(set(normalized) - applied)
        if unknown:
            print(f"config error: unknown config key(s): {', '.join(unknown)}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def entrypoint() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
