"""Accuracy metrics, confusion matrices, observation-distribution reports,
and ablation runs.

Labels here follow the manifest convention (0 = negative, i >= 1 = edited
by editor i) with one evaluation-only extension: -1 marks a positive pair
generated by a model outside the registry (the unseen-model protocol).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifier, features, metrics
from .backends import BackendRegistry
from .core import Decision, ImageBuffer, Manifest, Verdict, load_image, resize_canonical

UNSEEN_LABEL = -1


class LengthMismatch(Exception):
    pass


class ContainsNegatives(Exception):
    pass


def _is_detected_edited(v: Verdict) -> bool:
    return v.decision is not Decision.NON_EDITED


def detection_accuracy(verdicts, labels) -> float:
    """Fraction of pairs whose edited-vs-not status is right. A positive
    counts as detected under any edited verdict, wrong model included."""
    if len(verdicts) != len(labels):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(labels)} labels")
    correct = 0
    for v, label in zip(verdicts, labels):
        if label == 0:
            correct += not _is_detected_edited(v)
        else:
            correct += _is_detected_edited(v)
    return correct / len(labels)


def attribution_accuracy(verdicts, labels) -> float:
    """Fraction of positive pairs assigned to their generating model."""
    if len(verdicts) != len(labels):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(labels)} labels")
    if any(label == 0 for label in labels):
        raise ContainsNegatives("attribution accuracy is defined on positives only")
    correct = 0
    for v, label in zip(verdicts, labels):
        if label == UNSEEN_LABEL:
            correct += v.decision is Decision.EDITED_BY_UNSEEN
        else:
            correct += v.decision is Decision.EDITED_BY and v.model_index == label
    return correct / len(labels)


def pair_correct(verdict: Verdict, label: int, mode: str) -> bool:
    """Per-pair correctness: negatives must be NonEdited in both modes;
    positives need any edited verdict for detection, the exact model (or
    Unseen for unseen-generated pairs) for attribution."""
    if label == 0:
        return not _is_detected_edited(verdict)
    if mode == "detection":
        return _is_detected_edited(verdict)
    if label == UNSEEN_LABEL:
        return verdict.decision is Decision.EDITED_BY_UNSEEN
    return verdict.decision is Decision.EDITED_BY and verdict.model_index == label


def overall_accuracy(verdicts, labels, mode: str = "detection") -> float:
    """Unweighted mean of per-pair correctness over every test pair."""
    if len(verdicts) != len(labels):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(labels)} labels")
    return float(np.mean([pair_correct(v, l, mode) for v, l in zip(verdicts, labels)]))


def confusion_matrix(verdicts, labels, n: int, include_unseen: bool = False):
    """Row-normalized confusion matrix.

    Rows: editor 1..n, negatives, and (with include_unseen) unseen-generated
    positives. Columns: editor 1..n, NonEdited, and (with include_unseen)
    Unseen. Returns (normalized, counts, row_names, col_names).
    """
    if len(verdicts) != len(labels):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(labels)} labels")
    rows = n + 1 + (1 if include_unseen else 0)
    cols = n + 1 + (1 if include_unseen else 0)
    counts = np.zeros((rows, cols), dtype=np.float64)
    for v, label in zip(verdicts, labels):
        if label == UNSEEN_LABEL:
            if not include_unseen:
                raise ValueError("unseen-generated labels need include_unseen=True")
            r = n + 1
        elif label == 0:
            r = n
        else:
            r = label - 1
        if v.decision is Decision.EDITED_BY:
            c = v.model_index - 1
        elif v.decision is Decision.NON_EDITED:
            c = n
        else:
            if not include_unseen:
                raise ValueError("EditedByUnseen verdicts need include_unseen=True")
            c = n + 1
        counts[r, c] += 1
    sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
    row_names = [f"editor{i}" for i in range(1, n + 1)] + ["negatives"]
    col_names = [f"editor{i}" for i in range(1, n + 1)] + ["non-edited"]
    if include_unseen:
        row_names.append("unseen")
        col_names.append("unseen")
    return normalized, counts, row_names, col_names


# ---------------------------------------------------------------------------
# evaluation report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    per_dataset: dict  # tag -> {"count", "detection", "attribution" (or None)}
    overall_detection: float
    overall_attribution: float
    confusion: np.ndarray
    confusion_counts: np.ndarray
    row_names: list
    col_names: list


def build_report(verdicts, labels, tags, n: int, include_unseen: bool = False) -> EvalReport:
    labels = list(labels)
    tags = list(tags)
    per_dataset = {}
    for tag in dict.fromkeys(tags):  # preserve first-seen order
        idx = [i for i, t in enumerate(tags) if t == tag]
        vs = [verdicts[i] for i in idx]
        ls = [labels[i] for i in idx]
        entry = {"count": len(idx), "detection": detection_accuracy(vs, ls)}
        positives = [i for i in idx if labels[i] != 0]
        if positives:
            entry["attribution"] = attribution_accuracy(
                [verdicts[i] for i in positives], [labels[i] for i in positives]
            )
        else:
            entry["attribution"] = None
        per_dataset[tag] = entry
    normalized, counts, row_names, col_names = confusion_matrix(
        verdicts, labels, n, include_unseen
    )
    return EvalReport(
        per_dataset=per_dataset,
        overall_detection=overall_accuracy(verdicts, labels, "detection"),
        overall_attribution=overall_accuracy(verdicts, labels, "attribution"),
        confusion=normalized,
        confusion_counts=counts,
        row_names=row_names,
        col_names=col_names,
    )


def write_report(report: EvalReport, path, header_lines=()) -> None:
    """Sectioned plain-text report plus a sibling confusion.csv."""
    p = Path(path)
    lines = list(header_lines)
    lines.append("== per-dataset accuracy ==")
    for tag, entry in report.per_dataset.items():
        attr = "-" if entry["attribution"] is None else f"{entry['attribution']:.9g}"
        lines.append(
            f"{tag}\tcount={entry['count']}\tdetection={entry['detection']:.9g}\tattribution={attr}"
        )
    lines.append("")
    lines.append("== overall ==")
    lines.append(f"overall_detection\t{report.overall_detection:.9g}")
    lines.append(f"overall_attribution\t{report.overall_attribution:.9g}")
    lines.append("")
    lines.append("== confusion (row-normalized) ==")
    lines.append("true\\pred\t" + "\t".join(report.col_names))
    for name, row in zip(report.row_names, report.confusion):
        lines.append(name + "\t" + "\t".join(f"{x:.9g}" for x in row))
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")

    csv_path = p.with_name("confusion.csv")
    rows = ["true," + ",".join(report.col_names)]
    for name, row in zip(report.row_names, report.confusion):
        rows.append(name + "," + ",".join(f"{x:.9g}" for x in row))
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# observation-distribution report
# ---------------------------------------------------------------------------

OBSERVATION_GROUPS = (
    "positive-base-same",
    "positive-suspicious-same",
    "positive-base-other",
    "negative-base-same",
)


@dataclass
class DistributionReport:
    """Per metric, per re-editing group: the raw similarity values."""

    values: dict  # group -> (pairs, 6) array in canonical metric order

    def group_means(self, metric: metrics.MetricId) -> dict:
        return {g: float(v[:, metric.value].mean()) for g, v in self.values.items()}

    def summary_rows(self):
        rows = []
        for group, mat in self.values.items():
            for mid in metrics.METRIC_ORDER:
                col = mat[:, mid.value]
                rows.append(
                    (group, metrics.METRIC_NAMES[mid.value], len(col),
                     float(col.mean()), float(col.std()), float(col.min()), float(col.max()))
                )
        return rows

    def write_csv(self, path):
        lines = ["group,metric,pair_index,value"]
        for group, mat in self.values.items():
            for idx, row in enumerate(mat):
                for mid in metrics.METRIC_ORDER:
                    lines.append(
                        f"{group},{metrics.METRIC_NAMES[mid.value]},{idx},{row[mid.value]:.9g}"
                    )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pair_images(manifest: Manifest, record) -> tuple[ImageBuffer, ImageBuffer]:
    base_path, susp_path = manifest.resolve(record)
    return load_image(base_path), load_image(susp_path)


def observation_report(
    positives: Manifest,
    negatives: Manifest,
    registry: BackendRegistry,
    same_model_index: int,
    other_model_index: int,
    seed: int = 0,
) -> DistributionReport:
    """The four-group re-editing experiment behind the editing-process
    observations.

    Positives must all be generated by editor `same_model_index`. Groups:
    same-model re-edit of the base, same-model re-edit of the suspicious,
    other-model re-edit of the base (all on positive pairs), and same-model
    re-edit of the base of negative pairs. Each re-edited image is compared
    to its pair's suspicious image under all six metrics.
    """
    from .features import build_proxy_prompt, pair_seed

    values = {g: [] for g in OBSERVATION_GROUPS}

    def metric_row(edited: ImageBuffer, suspicious_profile) -> np.ndarray:
        prof = metrics.MetricProfile(resize_canonical(edited, features.CANONICAL_SIDE), registry)
        return metrics.compute_all_from_profiles(prof, suspicious_profile)

    for record in positives.records:
        if record.label != same_model_index:
            raise ValueError(
                f"positive pair {record.pair_id} has label {record.label}, "
                f"expected {same_model_index}"
            )
        base, susp = _pair_images(positives, record)
        prompt = build_proxy_prompt(registry.caption(base), registry.caption(susp)).rendered
        s = pair_seed(seed, record.pair_id)
        susp_prof = metrics.MetricProfile(
            resize_canonical(susp, features.CANONICAL_SIDE), registry
        )
        values["positive-base-same"].append(
            metric_row(registry.edit(same_model_index, base, prompt, s), susp_prof)
        )
        values["positive-suspicious-same"].append(
            metric_row(registry.edit(same_model_index, susp, prompt, s), susp_prof)
        )
        values["positive-base-other"].append(
            metric_row(registry.edit(other_model_index, base, prompt, s), susp_prof)
        )

    for record in negatives.records:
        base, susp = _pair_images(negatives, record)
        prompt = build_proxy_prompt(registry.caption(base), registry.caption(susp)).rendered
        s = pair_seed(seed, record.pair_id)
        susp_prof = metrics.MetricProfile(
            resize_canonical(susp, features.CANONICAL_SIDE), registry
        )
        values["negative-base-same"].append(
            metric_row(registry.edit(same_model_index, base, prompt, s), susp_prof)
        )

    return DistributionReport(values={g: np.stack(v) for g, v in values.items()})


# ---------------------------------------------------------------------------
# ablation runs
# ---------------------------------------------------------------------------

def evaluate_table(model, test_table: features.FeatureTable):
    """Verdicts for every row of a test table under a trained model."""
    x = classifier.slice_features(test_table.matrix, model.group, model.metrics_k)
    verdicts = []
    use_unseen = model.tau is not None
    for row in x:
        if use_unseen:
            verdicts.append(classifier.predict_with_unseen(model, row))
        else:
            verdicts.append(classifier.predict(model, row))
    return verdicts


def ablation_run(
    train_table: features.FeatureTable,
    test_table: features.FeatureTable,
    cfg: classifier.TrainConfig,
    configs=None,
):
    """Train/evaluate the multiclass model over feature-slice configurations.

    Default sweep: every group at k=6, plus combined at k=1..6. Returns rows
    of (group, k, overall detection, overall attribution).
    """
    if configs is None:
        configs = [(g, 6) for g in features.GROUPS] + [("combined", k) for k in range(1, 6)]
    results = []
    for group, k in configs:
        model = classifier.train_multiclass(train_table, cfg, group=group, metrics_k=k)
        verdicts = evaluate_table(model, test_table)
        labels = list(test_table.labels)
        results.append(
            {
                "group": group,
                "k": k,
                "detection": overall_accuracy(verdicts, labels, "detection"),
                "attribution": overall_accuracy(verdicts, labels, "attribution"),
            }
        )
    return results


def write_ablation_csv(rows, path) -> None:
    lines = ["group,k,overall_detection,overall_attribution"]
    for r in rows:
        lines.append(f"{r['group']},{r['k']},{r['detection']:.9g},{r['attribution']:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
