import numpy as np
import pytest

import reedit.backends as backends
from reedit.backends import BackendError, make_simulated_registry
from reedit.core import FingerprintMismatch, Manifest, PairRecord, save_image
from reedit.features import (
    EmptyCaption,
    FeatureTable,
    FeatureVector,
    ReEditCache,
    build_feature_table,
    build_proxy_prompt,
    extract_features,
    load_feature_table,
    pair_seed,
    re_edit_pair,
    save_feature_table,
    slice_features,
)
from reedit.synth import synth_base


def test_proxy_prompt_template():
    p = build_proxy_prompt("a dog", "a cat")
    assert p.rendered == "Do the image editing task; original prompt: a dog, editing prompt: a cat"
    assert p.base_caption == "a dog"
    assert p.suspicious_caption == "a cat"


def test_proxy_prompt_same_captions():
    p = build_proxy_prompt("x", "x")
    assert p.rendered == "Do the image editing task; original prompt: x, editing prompt: x"


def test_proxy_prompt_empty_caption():
    with pytest.raises(EmptyCaption):
        build_proxy_prompt("", "a cat")


def test_re_edit_pair_returns_2n_images(sim_registry):
    base = synth_base(0, 1)
    susp = sim_registry.edit(2, base, "dog park", 5)
    rb, rs, prompt = re_edit_pair(base, susp, sim_registry, seed=9)
    assert len(rb) == sim_registry.n
    assert len(rs) == sim_registry.n
    assert prompt.startswith("Do the image editing task;")


def test_re_edit_pair_cache_hits(tmp_path, sim_registry, monkeypatch):
    base = synth_base(1, 2)
    susp = sim_registry.edit(1, base, "boat harbor", 5)
    cache = ReEditCache(tmp_path / "cache")
    first = re_edit_pair(base, susp, sim_registry, seed=4, cache=cache)

    calls = {"n": 0}
    real = backends.sim_edit

    def counting(*args, **kwargs):
        calls["n"] += 1
        return real(*args, **kwargs)

    monkeypatch.setattr(backends, "sim_edit", counting)
    second = re_edit_pair(base, susp, sim_registry, seed=4, cache=cache)
    assert calls["n"] == 0
    assert first[2] == second[2]
    assert all(a == b for a, b in zip(first[0], second[0]))


def test_re_edit_pair_atomic_failure(sim_registry, monkeypatch):
    base = synth_base(2, 3)
    susp = synth_base(2, 4)
    real = backends.sim_edit

    def failing(params, img, tokens, seed, **kwargs):
        if params.model_id == 2:
            raise BackendError("boom")
        return real(params, img, tokens, seed, **kwargs)

    monkeypatch.setattr(backends, "sim_edit", failing)
    with pytest.raises(BackendError, match="sim-edit-2"):
        re_edit_pair(base, susp, sim_registry, seed=4)


def test_extract_features_length_12n():
    for n in (1, 3, 5):
        reg = make_simulated_registry(n)
        base = synth_base(0, 10)
        susp = reg.edit(1, base, "dog park", 3)
        vec = extract_features(base, susp, reg, seed=1)
        assert vec.values.shape == (12 * n,)
        assert vec.n == n
        assert np.all(np.isfinite(vec.values))


def test_extract_features_degenerate_near_identity():
    # zero-strength editors editing toward the image's own scene are
    # near-identity up to the base texture they strip; tolerances frozen
    # from a verified run (bhat ~0.14, inter ~0.87, lpips ~0.0017,
    # clip ~0.999999, phash 0, structural ~0.12)
    reg = make_simulated_registry(1, strengths=(0.0,))
    base = synth_base(0, 55)  # scene "cat, meadow"
    vec = extract_features(base, base, reg, seed=2).values
    bhat, inter, lpips, clip, ph, struct = vec[:6]
    assert bhat <= 0.18
    assert inter >= 0.82
    assert lpips <= 0.003
    assert clip >= 0.999
    assert ph == 0.0
    assert struct <= 0.16
    # base-side and suspicious-side blocks coincide when suspicious == base
    assert np.allclose(vec[:6], vec[6:])


def _tiny_manifest(tmp_path, registry, count=3):
    records = []
    for i in range(count):
        base = synth_base(i % 4, 100 + i)
        susp = registry.edit(1 + i % registry.n, base, "dog park", 7 + i)
        bp = tmp_path / f"b{i}.png"
        sp = tmp_path / f"s{i}.png"
        save_image(base, bp)
        save_image(susp, sp)
        records.append(PairRecord(f"p{i}", bp.name, sp.name, 1 + i % registry.n, "t"))
    return Manifest(tuple(records), registry.fingerprint, root=tmp_path)


def test_build_feature_table_order_and_determinism(tmp_path, sim_registry):
    manifest = _tiny_manifest(tmp_path, sim_registry)
    t1 = build_feature_table(manifest, sim_registry, seed=5)
    t2 = build_feature_table(manifest, sim_registry, seed=5, jobs=3)
    assert t1.pair_ids == ("p0", "p1", "p2")
    assert np.array_equal(t1.matrix, t2.matrix)
    assert t1.labels == t2.labels


def test_build_feature_table_fingerprint_mismatch(tmp_path, sim_registry):
    manifest = _tiny_manifest(tmp_path, sim_registry)
    bad = Manifest(manifest.records, "deadbeef", root=tmp_path)
    with pytest.raises(FingerprintMismatch):
        build_feature_table(bad, sim_registry, seed=5)


def test_build_feature_table_names_failing_pair(tmp_path, sim_registry, monkeypatch):
    manifest = _tiny_manifest(tmp_path, sim_registry)

    def exploding(img):
        raise BackendError("captioner down")

    monkeypatch.setattr(type(sim_registry), "caption", lambda self, img: exploding(img))
    with pytest.raises(BackendError, match="p0"):
        build_feature_table(manifest, sim_registry, seed=5)


def test_feature_table_roundtrip(tmp_path, sim_registry):
    manifest = _tiny_manifest(tmp_path, sim_registry)
    table = build_feature_table(manifest, sim_registry, seed=5)
    path = tmp_path / "features.csv"
    save_feature_table(table, path)
    loaded = load_feature_table(path)
    assert loaded.pair_ids == table.pair_ids
    assert loaded.labels == table.labels
    assert loaded.registry_fingerprint == table.registry_fingerprint
    # 9 significant digits round-trip
    assert np.allclose(loaded.matrix, table.matrix, rtol=1e-8, atol=1e-12)
    # a second save is byte-identical (format fixed point)
    path2 = tmp_path / "features2.csv"
    save_feature_table(loaded, path2)
    assert path.read_text() == path2.read_text()


# ---------------------------------------------------------------------------
# slicing
# ---------------------------------------------------------------------------

def test_slice_combined_k6_identity():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 60))
    out = slice_features(m, "combined", 6)
    assert np.array_equal(out, m)


def test_slice_base_only_length():
    m = np.arange(60, dtype=np.float64)[None, :]
    out = slice_features(m, "base", 6)
    assert out.shape == (1, 30)


def test_slice_suspicious_k2_entries():
    # per 12-block: entries 7-8 (1-indexed), i.e. positions 6,7
    m = np.arange(60, dtype=np.float64)[None, :]
    out = slice_features(m, "suspicious", 2)[0]
    assert out.shape == (10,)
    expected = []
    for block in range(5):
        expected.extend([block * 12 + 6, block * 12 + 7])
    assert out.tolist() == expected


def test_slice_reconstruction_property():
    # base and suspicious slices at k=6 interleave back into the original
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        m = rng.normal(size=(3, 12 * n))
        base = slice_features(m, "base", 6)
        susp = slice_features(m, "suspicious", 6)
        rebuilt = np.empty_like(m)
        for i in range(n):
            rebuilt[:, i * 12: i * 12 + 6] = base[:, i * 6: (i + 1) * 6]
            rebuilt[:, i * 12 + 6: (i + 1) * 12] = susp[:, i * 6: (i + 1) * 6]
        assert np.array_equal(rebuilt, m)


def test_slice_validation():
    m = np.zeros((1, 24))
    with pytest.raises(ValueError):
        slice_features(m, "nope", 6)
    with pytest.raises(ValueError):
        slice_features(m, "base", 0)
    with pytest.raises(ValueError):
        slice_features(np.zeros((1, 13)), "base", 6)


def test_pair_seed_stable():
    assert pair_seed(7, "p1") == pair_seed(7, "p1")
    assert pair_seed(7, "p1") != pair_seed(8, "p1")
    assert pair_seed(7, "p1") != pair_seed(7, "p2")


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(13), "fp")
    with pytest.raises(ValueError):
        FeatureVector(np.array([np.nan] * 12), "fp")
