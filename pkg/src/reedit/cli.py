"""Operator entry point: dataset simulation, feature extraction, training,
calibration, evaluation, and single-pair verdicts.

Every command writes one artifact (its header embeds the registry
fingerprint and seed) and prints a single run-log line with the seed,
package version, and input digests. Errors exit with code 1 and one
machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, classifier, evaluate, features, synth
from .backends import load_registry
from .core import FingerprintMismatch, load_image, load_manifest, save_manifest, sha256_file


def _runlog(cmd: str, seed, inputs: dict, artifact) -> None:
    digests = " ".join(f"{k}={sha256_file(v)[:12]}" for k, v in inputs.items())
    print(f"run cmd={cmd} version={__version__} seed={seed} {digests} artifact={artifact}")


def _registry(args):
    return load_registry(args.registry)


def _require_fingerprint(expected: str, actual: str, what: str) -> None:
    if expected != actual:
        raise FingerprintMismatch(f"{what} was built for registry {actual}, expected {expected}")


def cmd_simulate_dataset(args) -> None:
    registry = _registry(args)
    manifest = synth.simulate_dataset(
        registry,
        args.out,
        seed=args.seed,
        pos_per_model=args.pos_per_model,
        neg_per_mode=args.neg_per_mode,
        sources=tuple(args.sources.split(",")) if args.sources else synth.POSITIVE_SOURCES,
        neg_modes=tuple(args.neg_modes.split(",")) if args.neg_modes else synth.NEGATIVE_MODES,
        prefix=args.prefix,
    )
    out_path = Path(args.out) / "manifest.tsv"
    save_manifest(manifest, out_path)
    _runlog("simulate-dataset", args.seed, {"registry": args.registry}, out_path)


def cmd_extract(args) -> None:
    registry = _registry(args)
    manifest = load_manifest(args.manifest, expected_n=registry.n)
    _require_fingerprint(registry.fingerprint, manifest.registry_fingerprint, "manifest")
    cache = features.ReEditCache(args.cache) if args.cache else None
    table = features.build_feature_table(
        manifest, registry, seed=args.seed, cache=cache, jobs=args.jobs
    )
    features.save_feature_table(table, args.out)
    _runlog(
        "extract", args.seed,
        {"registry": args.registry, "manifest": args.manifest},
        args.out,
    )


def _train_config(args) -> classifier.TrainConfig:
    return classifier.TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        dropout=args.dropout,
        seed=args.seed,
    )


def cmd_train(args) -> None:
    table = features.load_feature_table(args.features)
    cfg = _train_config(args)
    if args.variant == "multiclass":
        model = classifier.train_multiclass(table, cfg, group=args.group, metrics_k=args.metrics_k)
        classifier.save_model(model, args.out)
    elif args.variant == "bin":
        model = classifier.train_bin(table, cfg)
        classifier.save_model(model, args.out)
    else:
        models = classifier.train_bin_multiple(table, cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, model in enumerate(models, start=1):
            classifier.save_model(model, out / f"bin-{i}.txt")
    _runlog("train", args.seed, {"features": args.features}, args.out)


def cmd_calibrate(args) -> None:
    model = classifier.load_model(args.model)
    negatives = features.load_feature_table(args.features)
    _require_fingerprint(model.registry_fingerprint, negatives.registry_fingerprint, "features")
    threshold = classifier.calibrate_unseen(model, negatives, target=args.unseen_target)
    model.tau = threshold.tau
    model.tau_warning = threshold.unachievable
    classifier.save_model(model, args.out)
    print(
        f"calibrated tau={threshold.tau:.9g} "
        f"achieved={threshold.achieved_accuracy:.9g} "
        f"unachievable={int(threshold.unachievable)}"
    )
    _runlog(
        "calibrate", args.seed,
        {"model": args.model, "features": args.features},
        args.out,
    )


def _verdict_labels(table, unseen_sources, tags):
    labels = []
    for label, tag in zip(table.labels, tags):
        if tag in unseen_sources or tag.endswith("-unseen"):
            labels.append(evaluate.UNSEEN_LABEL)
        else:
            labels.append(label)
    return labels


def cmd_evaluate(args) -> None:
    model = classifier.load_model(args.model)
    table = features.load_feature_table(args.features)
    _require_fingerprint(model.registry_fingerprint, table.registry_fingerprint, "features")
    manifest = load_manifest(args.manifest, check_files=False) if args.manifest else None
    tags = (
        [r.source_tag for r in manifest.records]
        if manifest is not None
        else ["all"] * len(table)
    )
    if manifest is not None:
        _require_fingerprint(table.registry_fingerprint, manifest.registry_fingerprint, "manifest")
        if [r.pair_id for r in manifest.records] != list(table.pair_ids):
            raise FingerprintMismatch("manifest rows do not match the feature table")
    unseen_sources = set(args.unseen_source or [])
    labels = _verdict_labels(table, unseen_sources, tags)
    verdicts = evaluate.evaluate_table(model, table)
    include_unseen = model.tau is not None or any(l == evaluate.UNSEEN_LABEL for l in labels)
    report = evaluate.build_report(verdicts, labels, tags, model.n, include_unseen)
    header = [
        f"!report registry={table.registry_fingerprint} seed={args.seed} model={Path(args.model).name}",
        "",
    ]
    evaluate.write_report(report, args.out, header)
    _runlog(
        "evaluate", args.seed,
        {"model": args.model, "features": args.features},
        args.out,
    )


def cmd_detect(args) -> None:
    registry = _registry(args)
    model = classifier.load_model(args.model)
    _require_fingerprint(registry.fingerprint, model.registry_fingerprint, "model")
    base = load_image(args.base)
    suspicious = load_image(args.suspicious)
    cache = features.ReEditCache(args.cache) if args.cache else None
    vector = features.extract_features(base, suspicious, registry, args.seed, cache)
    sliced = features.slice_features(vector.values, model.group, model.metrics_k)
    if model.tau is not None:
        verdict = classifier.predict_with_unseen(model, sliced)
    else:
        verdict = classifier.predict(model, sliced)
    print(f"verdict {verdict.describe()}")
    names = ["non-edited"] + [e.name for e in registry.editors]
    for name, prob in zip(names, verdict.probabilities):
        print(f"p[{name}] {prob:.9g}")
    if args.out:
        lines = [
            f"!verdict registry={registry.fingerprint} seed={args.seed}",
            f"decision {verdict.describe()}",
        ]
        lines += [f"p[{name}] {prob:.9g}" for name, prob in zip(names, verdict.probabilities)]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        _runlog(
            "detect", args.seed,
            {"registry": args.registry, "base": args.base, "suspicious": args.suspicious},
            args.out,
        )


def cmd_observe(args) -> None:
    registry = _registry(args)
    positives = load_manifest(args.manifest, expected_n=registry.n)
    negatives = load_manifest(args.negatives, expected_n=registry.n)
    for m, what in ((positives, "positives"), (negatives, "negatives")):
        _require_fingerprint(registry.fingerprint, m.registry_fingerprint, what)
    report = evaluate.observation_report(
        positives, negatives, registry, args.same_model, args.other_model, seed=args.seed
    )
    report.write_csv(args.out)
    _runlog(
        "observe", args.seed,
        {"registry": args.registry, "manifest": args.manifest, "negatives": args.negatives},
        args.out,
    )


def cmd_ablate(args) -> None:
    train_table = features.load_feature_table(args.features)
    test_table = features.load_feature_table(args.test_features)
    _require_fingerprint(
        train_table.registry_fingerprint, test_table.registry_fingerprint, "test features"
    )
    rows = evaluate.ablation_run(train_table, test_table, _train_config(args))
    evaluate.write_ablation_csv(rows, args.out)
    _runlog(
        "ablate", args.seed,
        {"features": args.features, "test": args.test_features},
        args.out,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reedit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=True, jobs=False, train=False):
        p.add_argument("--seed", type=int, default=0)
        if jobs:
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--cache", default=None)
        if train:
            p.add_argument("--epochs", type=int, default=1000)
            p.add_argument("--lr", type=float, default=0.001)
            p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
            p.add_argument("--dropout", type=float, default=0.1)

    p = sub.add_parser("simulate-dataset", help="synthesize a labeled pair dataset")
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pos-per-model", dest="pos_per_model", type=int, default=10)
    p.add_argument("--neg-per-mode", dest="neg_per_mode", type=int, default=20)
    p.add_argument("--sources", default=None, help="comma-separated positive source tags")
    p.add_argument("--neg-modes", dest="neg_modes", default=None,
                   help="comma-separated subset of content,style,frames,unrelated")
    p.add_argument("--prefix", default="pair")
    common(p)
    p.set_defaults(func=cmd_simulate_dataset)

    p = sub.add_parser("extract", help="build the 12n feature table for a manifest")
    p.add_argument("--registry", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    common(p, jobs=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier on a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("multiclass", "bin", "bin-multiple"),
                   default="multiclass")
    p.add_argument("--group", choices=features.GROUPS, default="combined")
    p.add_argument("--metrics-k", dest="metrics_k", type=int, choices=range(1, 7), default=6)
    common(p, train=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit the unseen-model threshold on held-out negatives")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="feature table of validation negatives")
    p.add_argument("--out", required=True)
    p.add_argument("--unseen-target", dest="unseen_target", type=float, default=0.9)
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="score a feature table and write the report")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", default=None, help="for per-dataset breakdown by source tag")
    p.add_argument("--out", required=True)
    p.add_argument("--unseen-source", dest="unseen_source", action="append",
                   help="source tag holding unseen-model positives")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect", help="verdict for one base/suspicious pair")
    p.add_argument("--registry", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--suspicious", required=True)
    p.add_argument("--out", default=None)
    common(p, jobs=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("observe", help="four-group observation distribution report")
    p.add_argument("--registry", required=True)
    p.add_argument("--manifest", required=True, help="positive pairs of one editor")
    p.add_argument("--negatives", required=True)
    p.add_argument("--same-model", dest="same_model", type=int, required=True)
    p.add_argument("--other-model", dest="other_model", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_observe)

    p = sub.add_parser("ablate", help="accuracy curves over feature slices")
    p.add_argument("--features", required=True)
    p.add_argument("--test-features", dest="test_features", required=True)
    p.add_argument("--out", required=True)
    common(p, train=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
