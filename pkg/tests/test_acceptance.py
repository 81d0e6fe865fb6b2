"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers. Paper-scale GPU results are out of reach on a desk
machine, so accuracy criteria run against the simulated editing backends at
the documented dataset shape.
"""

import time

import numpy as np
import pytest

from reedit import classifier as C
from reedit import evaluate as E
from reedit.backends import make_simulated_registry
from reedit.core import ImageBuffer, Manifest, load_manifest, save_manifest
from reedit.features import (
    ReEditCache,
    build_feature_table,
    extract_features,
    load_feature_table,
    save_feature_table,
)
from reedit.metrics import MetricProfile, compute_all_from_profiles
from reedit.synth import simulate_dataset, synth_base

JOBS = 4


def ok(name: str, detail: str):
    print(f"[PASS] {name}: {detail}")


# ---------------------------------------------------------------------------
# shared pipeline artifacts (built once)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Table-1-shaped training data (n=5, 600 positives + 600 negatives over
    three modes) plus a held-out four-mode test set, with feature tables."""
    root = tmp_path_factory.mktemp("acceptance")
    registry = make_simulated_registry(5)
    train_m = simulate_dataset(
        registry, root / "train", seed=101, pos_per_model=60, neg_per_mode=200,
        neg_modes=("content", "style", "frames"), prefix="tr",
    )
    test_m = simulate_dataset(
        registry, root / "test", seed=202, pos_per_model=6, neg_per_mode=20, prefix="te",
    )
    train_t = build_feature_table(train_m, registry, seed=1101, jobs=JOBS)
    test_t = build_feature_table(test_m, registry, seed=1202, jobs=JOBS)
    return {
        "root": root,
        "registry": registry,
        "train_m": train_m,
        "test_m": test_m,
        "train_t": train_t,
        "test_t": test_t,
    }


# ---------------------------------------------------------------------------
# metric suite
# ---------------------------------------------------------------------------

def test_metric_identity_symmetry_range_suite(sim_registry):
    started = time.time()
    rng = np.random.default_rng(424)
    for trial in range(200):
        if trial % 3 == 0:
            a = ImageBuffer(rng.integers(0, 256, size=(256, 256, 3)).astype(np.uint8))
            b = ImageBuffer(rng.integers(0, 256, size=(256, 256, 3)).astype(np.uint8))
        else:
            a = synth_base(int(rng.integers(24)), int(rng.integers(2**31)))
            b = synth_base(int(rng.integers(24)), int(rng.integers(2**31)))
        pa = MetricProfile(a, sim_registry)
        pb = MetricProfile(b, sim_registry)
        ab = compute_all_from_profiles(pa, pb)
        ba = compute_all_from_profiles(pb, pa)
        ident = compute_all_from_profiles(pa, pa)
        assert np.allclose(ab, ba, atol=1e-9), "symmetry"
        assert np.allclose(ident, [0, 1, 0, 1, 0, 0], atol=1e-6), "identity"
        assert 0 <= ab[0] <= 1 and 0 <= ab[1] <= 1 and 0 <= ab[4] <= 1, "unit ranges"
        assert -1 <= ab[3] <= 1 and ab[2] >= 0 and ab[5] >= 0, "open ranges"
    elapsed = time.time() - started
    assert elapsed < 30.0
    ok("metric identity/symmetry/range", f"200 randomized pairs in {elapsed:.1f}s (< 30s)")


def test_phash_golden_vectors():
    from conftest import hash_fixture_images
    from test_metrics import GOLDEN_PHASHES
    from reedit.metrics import phash

    images = hash_fixture_images()
    for name, img in images.items():
        assert phash(img) == GOLDEN_PHASHES[name], name
    ok("pHash golden vectors", f"{len(images)} fixtures bit-exact")


def test_gradient_check_criterion():
    from test_classifier import numeric_gradients, random_params, relative_error
    from reedit.classifier import cross_entropy_gradients

    started = time.time()
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(20):
        params = random_params(rng)  # input 8, hidden 5, out 3
        x = rng.normal(size=(5, 8))
        y = rng.integers(0, 3, size=5)
        analytic = cross_entropy_gradients(params, x, y)
        numeric = numeric_gradients(params, x, y, step=1e-4)
        for ga, gn in zip(analytic, numeric):
            worst = max(worst, relative_error(ga, gn))
    elapsed = time.time() - started
    assert worst < 1e-4
    assert elapsed < 5.0
    ok("gradient check", f"20 models, worst relative error {worst:.2e} in {elapsed:.1f}s")


def test_xor_separability_criterion():
    from test_classifier import best_linear_accuracy, xor_table, _train_accuracy

    rng = np.random.default_rng(88)
    table = xor_table(rng)
    linear = best_linear_accuracy(table.matrix[:, :2], np.asarray(table.labels))
    assert linear <= 0.75
    model = C.train_multiclass(table, C.TrainConfig(epochs=250, seed=5))
    acc = _train_accuracy(model, table)
    assert acc >= 0.99
    ok("XOR separability", f"MLP {acc:.3f} vs best linear {linear:.3f}")


# ---------------------------------------------------------------------------
# observation separation (50/100 protocol)
# ---------------------------------------------------------------------------

def test_observation_separation(tmp_path):
    started = time.time()
    registry = make_simulated_registry(5)
    pos_all = simulate_dataset(
        registry, tmp_path / "obs-pos", seed=301, pos_per_model=50, neg_per_mode=1,
        sources=("sim-photo",), neg_modes=("content",), prefix="op",
    )
    positives = Manifest(
        tuple(r for r in pos_all.records if r.label == 1)[:50],
        registry.fingerprint, root=pos_all.root,
    )
    neg_all = simulate_dataset(
        registry, tmp_path / "obs-neg", seed=302, pos_per_model=1, neg_per_mode=25,
        sources=("sim-photo",), prefix="on",
    )
    negatives = Manifest(
        tuple(r for r in neg_all.records if r.label == 0)[:100],
        registry.fingerprint, root=neg_all.root,
    )
    assert len(positives.records) == 50 and len(negatives.records) == 100

    report = E.observation_report(positives, negatives, registry, 1, 2, seed=303)
    sizes = {g: len(v) for g, v in report.values.items()}
    assert sizes == {
        "positive-base-same": 50,
        "positive-suspicious-same": 50,
        "positive-base-other": 50,
        "negative-base-same": 100,
    }

    from reedit.metrics import MetricId

    inter = report.group_means(MetricId.INTERSECTION)
    bhat = report.group_means(MetricId.BHATTACHARYYA)
    # strict ordering: same-model groups most similar, other-model next,
    # negatives least
    assert min(inter["positive-base-same"], inter["positive-suspicious-same"]) > inter["positive-base-other"]
    assert inter["positive-base-other"] > inter["negative-base-same"]
    assert max(bhat["positive-base-same"], bhat["positive-suspicious-same"]) < bhat["positive-base-other"]
    assert bhat["positive-base-other"] < bhat["negative-base-same"]
    elapsed = time.time() - started
    assert elapsed < 300.0
    ok(
        "observation separation",
        "intersection "
        + " > ".join(f"{inter[g]:.3f}" for g in (
            "positive-base-same", "positive-suspicious-same",
            "positive-base-other", "negative-base-same"))
        + f"; bhattacharyya reversed; {elapsed:.0f}s (< 300s)",
    )


# ---------------------------------------------------------------------------
# end-to-end accuracy and variant ordering
# ---------------------------------------------------------------------------

def test_end_to_end_simulated_accuracy(pipeline):
    started = time.time()
    train_t, test_t = pipeline["train_t"], pipeline["test_t"]
    labels = list(test_t.labels)
    assert len(train_t) == 1200  # 600 positive + 600 negative
    cfg = C.TrainConfig(epochs=1000, seed=7)

    model = C.train_multiclass(train_t, cfg)
    verdicts = E.evaluate_table(model, test_t)
    det = E.overall_accuracy(verdicts, labels, "detection")
    att = E.overall_accuracy(verdicts, labels, "attribution")
    assert det >= 0.95
    assert att >= 0.95

    bin_model = C.train_bin(train_t, cfg)
    bin_v = [C.predict_bin(bin_model, row) for row in test_t.matrix]
    bin_att = E.overall_accuracy(bin_v, labels, "attribution")

    bm_models = C.train_bin_multiple(train_t, cfg)
    bm_v = [C.predict_bin(bm_models, row) for row in test_t.matrix]
    bm_att = E.overall_accuracy(bm_v, labels, "attribution")

    assert bm_att > bin_att
    elapsed = time.time() - started
    assert elapsed < 1200.0
    ok(
        "end-to-end simulated accuracy",
        f"multiclass det={det:.3f} att={att:.3f} (>= 0.95); "
        f"bin-multiple att={bm_att:.3f} > bin att={bin_att:.3f}; {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# unseen-model calibration
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def unseen_run(pipeline, tmp_path_factory):
    """Exclude editor 5 from training; calibrate tau on held-out negatives."""
    root = tmp_path_factory.mktemp("unseen")
    seen = make_simulated_registry(4)
    train_m = simulate_dataset(
        seen, root / "train", seed=401, pos_per_model=60, neg_per_mode=200,
        neg_modes=("content", "style", "frames"), prefix="ur",
    )
    # held-out test generated with all five editors; the fifth is unseen
    full = make_simulated_registry(5)
    test_full = simulate_dataset(
        full, root / "test", seed=402, pos_per_model=6, neg_per_mode=20,
        prefix="ue", unseen_positive_indices=(5,),
    )
    test_m = Manifest(test_full.records, seen.fingerprint, root=test_full.root)

    # reserve 20% of training negatives for calibration
    records = list(train_m.records)
    negatives = [r for r in records if r.label == 0]
    val_count = len(negatives) // 5
    val_ids = {r.pair_id for r in negatives[-val_count:]}
    fit_m = Manifest(
        tuple(r for r in records if r.pair_id not in val_ids), seen.fingerprint, root=train_m.root
    )
    val_m = Manifest(
        tuple(r for r in records if r.pair_id in val_ids), seen.fingerprint, root=train_m.root
    )

    fit_t = build_feature_table(fit_m, seen, seed=1401, jobs=JOBS)
    val_t = build_feature_table(val_m, seen, seed=1401, jobs=JOBS)
    test_t = build_feature_table(test_m, seen, seed=1402, jobs=JOBS)

    model = C.train_multiclass(fit_t, C.TrainConfig(epochs=1000, seed=9))
    threshold = C.calibrate_unseen(model, val_t, target=0.9)
    model.tau = threshold.tau
    return {
        "seen": seen,
        "model": model,
        "threshold": threshold,
        "val_t": val_t,
        "test_t": test_t,
        "test_m": test_m,
    }


def test_unseen_calibration_target(unseen_run):
    threshold = unseen_run["threshold"]
    assert not threshold.unachievable
    assert abs(threshold.achieved_accuracy - 0.9) <= 0.02
    ok(
        "unseen calibration",
        f"tau={threshold.tau:.4f}, validation-negative accuracy "
        f"{threshold.achieved_accuracy:.3f} within 0.9 +/- 0.02",
    )


def test_unseen_confusion_mass(unseen_run):
    model = unseen_run["model"]
    test_t = unseen_run["test_t"]
    tags = [r.source_tag for r in unseen_run["test_m"].records]
    labels = [
        E.UNSEEN_LABEL if tag.endswith("-unseen") else label
        for label, tag in zip(test_t.labels, tags)
    ]
    verdicts = E.evaluate_table(model, test_t)
    normalized, counts, row_names, col_names = E.confusion_matrix(
        verdicts, labels, n=4, include_unseen=True
    )
    unseen_row = normalized[row_names.index("unseen")]
    mass = unseen_row[col_names.index("unseen")]
    assert counts[row_names.index("unseen")].sum() >= 10
    assert mass >= 0.7
    det = E.overall_accuracy(verdicts, labels, "detection")
    ok("unseen attribution", f"unseen-row mass in Unseen column {mass:.3f} (>= 0.7), detection {det:.3f}")


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def test_pipeline_determinism(tmp_path):
    registry = make_simulated_registry(3)

    def run(tag):
        out = tmp_path / tag
        manifest = simulate_dataset(
            registry, out, seed=17, pos_per_model=2, neg_per_mode=4,
            sources=("sim-photo",), prefix="d",
        )
        save_manifest(manifest, out / "manifest.tsv")
        table = build_feature_table(manifest, registry, seed=117, jobs=2)
        save_feature_table(table, out / "features.csv")
        model = C.train_multiclass(table, C.TrainConfig(epochs=80, seed=3))
        C.save_model(model, out / "model.txt")
        reloaded = C.load_model(out / "model.txt")
        verdicts = E.evaluate_table(reloaded, table)
        report = E.build_report(verdicts, list(table.labels),
                                [r.source_tag for r in manifest.records], n=3)
        E.write_report(report, out / "report.txt")
        return out

    a = run("run-a")
    b = run("run-b")
    for name in ("manifest.tsv", "features.csv", "model.txt", "report.txt", "confusion.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ok("determinism", "manifest, features, checkpoint, and reports byte-identical across runs")


# ---------------------------------------------------------------------------
# feature contract
# ---------------------------------------------------------------------------

def test_feature_contract_12n():
    for n in (1, 3, 5):
        registry = make_simulated_registry(n)
        base = synth_base(0, 42)
        susp = registry.edit(1, base, "dog park", 5)
        vec = extract_features(base, susp, registry, seed=6)
        assert vec.values.shape == (12 * n,)
    ok("feature contract", "vector length exactly 12n for n in {1, 3, 5}")
