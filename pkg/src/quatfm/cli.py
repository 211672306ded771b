"""Command-line entry points.

Usage::

    quatfm gen-synthetic --fields 10 --features-per-field 100 --instances 50000 --seed 7 --out data/
    quatfm train --model qnfm --d 8 --l 1 --rho 0.1 --lr 1e-3 --train data/train.libsvm \\
        --val data/val.libsvm --out model.npz
    quatfm evaluate --checkpoint model.npz --test data/test.libsvm
    quatfm param-count --n 1000 --d 8 --l 2
    quatfm grad-check --model qnfm
    quatfm scaling --model qfm --d 8 --train data/train.libsvm --out scaling.csv

Data goes to stdout or files; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import data, gradients, metrics, models, training

log = logging.getLogger("quatfm")

FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)

_VARIANT_FLAGS = {
    "variant_interaction": ("interaction", {"hamilton": "hamilton", "dot": "dot_product"}),
    "variant_direction": ("directionality", {"two-way": "two_way", "one-way": "one_way"}),
    "variant_pooling": ("pooling", {"hamilton": "hamilton", "elementwise": "elementwise_real"}),
    "variant_residual": ("residual", {"on": True, "off": False}),
}

# CLI flag dest -> TrainConfig field
_CONFIG_FLAGS = {
    "model": "model_kind",
    "d": "d",
    "l": "l",
    "rho": "rho",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "epochs": "max_epochs",
    "patience": "patience",
    "seed": "seed",
    "workers": "workers",
}


def _rho(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"rho must lie in [0, 1), got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of TrainConfig fields")
    p.add_argument("--model", choices=models.MODEL_KINDS)
    p.add_argument("--d", type=_positive_int)
    p.add_argument("--l", type=_positive_int)
    p.add_argument("--rho", type=_rho)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int, help="defaults to $QUATFM_THREADS or 1")
    p.add_argument("--variant-interaction", choices=["hamilton", "dot"])
    p.add_argument("--variant-direction", choices=["two-way", "one-way"])
    p.add_argument("--variant-pooling", choices=["hamilton", "elementwise"])
    p.add_argument("--variant-residual", choices=["on", "off"])


def build_config(args: argparse.Namespace) -> training.TrainConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    variant: dict = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        known = {f.name for f in fields(training.TrainConfig)}
        unknown = set(raw) - known - set(_variant_fields())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        variant.update({k: raw.pop(k) for k in list(raw) if k in _variant_fields()})
        variant.update(raw.pop("variant", {}) or {})
        values.update(raw)
    values.setdefault("workers", training.threads_from_env())
    for dest, name in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[name] = value
    for dest, (name, mapping) in _VARIANT_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            variant[name] = mapping[value]
    return training.TrainConfig(**values, variant=models.VariantConfig(**variant))


def _variant_fields():
    return [f.name for f in fields(models.VariantConfig)]


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_synthetic(args) -> int:
    if args.instances < 1 or args.fields < 1 or args.features_per_field < 1:
        print("error: counts must be >= 1", file=sys.stderr)
        return 2
    ds, teacher = data.generate_synthetic(
        args.fields, args.features_per_field, args.instances, args.seed, rank=args.rank
    )
    parts = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        data.save_libsvm(part, out / f"{name}.libsvm")
    (out / "planted.txt").write_text(teacher.to_text(), encoding="utf-8")
    print(f"train={len(parts[0])} val={len(parts[1])} test={len(parts[2])} n={ds.n} out={out}")
    return 0


def _load_splits(args):
    n = None
    sets = {}
    for name in ("train", "val", "test"):
        path = getattr(args, name, None)
        if path:
            sets[name] = data.load_libsvm(path)
    if sets:
        n = max(ds.n for ds in sets.values())
        sets = {k: data.Dataset(v.instances, n, v.field_count) for k, v in sets.items()}
    return sets


def cmd_train(args) -> int:
    config = build_config(args)
    sets = _load_splits(args)
    if "train" not in sets or "val" not in sets:
        print("error: --train and --val are required", file=sys.stderr)
        return 2
    result = training.train(config, sets["train"], sets["val"])
    out = Path(args.out)
    models.save_checkpoint(out, result.params, config.variant)
    history = Path(args.history) if args.history else out.with_suffix(".history.csv")
    training.write_history(history, result)
    report = metrics.evaluate(result.params, sets["val"], config.variant)
    print(f"split=val {report.to_text()} best_epoch={result.best_epoch} epochs={len(result.history)}")
    if "test" in sets:
        print(f"split=test {metrics.evaluate(result.params, sets['test'], config.variant).to_text()}")
    return 0


def cmd_evaluate(args) -> int:
    params, variant = models.load_checkpoint(args.checkpoint)
    ds = data.load_libsvm(args.test, n=params.n)
    print(metrics.evaluate(params, ds, variant).to_text())
    return 0


def cmd_param_count(args) -> int:
    n, d, l = args.n, args.d, args.l
    rows = []
    for kind, dim in (("fm", 4 * d), ("qfm", d), ("qnfm", d)):
        formula = models.param_count(kind, n, dim, l)
        structural = models.param_skeleton(kind, n, dim, l).size
        rows.append((kind, dim, formula, structural))
    fm_total = rows[0][2]
    print("model,d,formula_total,structural_total,extra_vs_fm")
    for kind, dim, formula, structural in rows:
        print(f"{kind},{dim},{formula},{structural},{formula - fm_total}")
    print(f"# real ffn layer (width 4d): {models.real_ffn_layer_count(d)}; quaternion layer: {4 * d * d + 4 * d}")
    bad = [r for r in rows if r[2] != r[3]]
    if bad:
        for kind, _, formula, structural in bad:
            print(f"error: {kind} formula {formula} != structural {structural}", file=sys.stderr)
        return 1
    return 0


def cmd_grad_check(args) -> int:
    config = build_config(args)
    report = gradients.gradient_sweep(config.model_kind, cases=args.cases, seed=config.seed, variant=config.variant)
    print(f"model={config.model_kind} cases={report.cases}")
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def scaling_rows(config: training.TrainConfig, ds: data.Dataset, fractions=FRACTIONS, repeats: int = 3):
    """Best-of-``repeats`` one-epoch wall-clock at each data fraction."""
    order = np.random.default_rng(config.seed).permutation(len(ds))
    rows = []
    for frac in fractions:
        part = ds.subset(sorted(order[: max(1, int(round(frac * len(ds))))].tolist()))
        part.arrays()
        seconds = min(training.run_one_epoch(config, part) for _ in range(repeats))
        rows.append((frac, seconds))
    return rows


def cmd_scaling(args) -> int:
    config = build_config(args)
    sets = _load_splits(args)
    if "train" not in sets:
        print("error: --train is required", file=sys.stderr)
        return 2
    rows = scaling_rows(config, sets["train"], repeats=args.repeats)
    lines = [f"# fractions={','.join(str(f) for f, _ in rows)}", "fraction,seconds"]
    lines += [f"{f},{s!r}" for f, s in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quatfm", description="Quaternion factorization machines")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write synthetic train/val/test files")
    p.add_argument("--fields", type=int, default=10)
    p.add_argument("--features-per-field", type=int, default=100)
    p.add_argument("--instances", type=int, default=50000)
    p.add_argument("--rank", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="report AUC/LE/RMSE of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("param-count", help="parameter accounting table")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--l", type=_positive_int, default=1)
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    _add_model_flags(p)
    p.add_argument("--cases", type=_positive_int, default=20)
    p.set_defaults(model="qnfm")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("scaling", help="one-epoch time across data fractions")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scaling)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
