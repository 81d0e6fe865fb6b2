import numpy as np
import pytest
from PIL import Image

from reedit.core import (
    DecodeError,
    ImageBuffer,
    Manifest,
    MissingFileError,
    PairRecord,
    ParseError,
    load_image,
    load_manifest,
    resize_bilinear,
    resize_canonical,
    save_manifest,
)


def test_load_image_1x1_white(tmp_path):
    path = tmp_path / "white.png"
    Image.fromarray(np.full((1, 1, 3), 255, dtype=np.uint8)).save(path)
    img = load_image(path)
    assert (img.width, img.height) == (1, 1)
    assert img.array.tolist() == [[[255, 255, 255]]]


def test_load_image_drops_alpha(tmp_path):
    path = tmp_path / "red.png"
    rgba = np.zeros((2, 2, 4), dtype=np.uint8)
    rgba[:, :, 0] = 255
    rgba[:, :, 3] = 255
    Image.fromarray(rgba, mode="RGBA").save(path)
    img = load_image(path)
    assert img.array.shape == (2, 2, 3)
    assert np.all(img.array == np.array([255, 0, 0], dtype=np.uint8))


def test_load_image_expands_grayscale(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.full((3, 3), 77, dtype=np.uint8), mode="L").save(path)
    img = load_image(path)
    assert img.array.shape == (3, 3, 3)
    assert np.all(img.array == 77)


def test_load_image_truncated_is_decode_error(tmp_path):
    path = tmp_path / "ok.png"
    Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8)).save(path)
    data = path.read_bytes()
    bad = tmp_path / "trunc.png"
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(DecodeError):
        load_image(bad)


def test_load_image_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")


def test_image_buffer_immutable():
    img = ImageBuffer(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.array[0, 0, 0] = 1
    with pytest.raises(AttributeError):
        img.array = None


def test_resize_uniform_stays_uniform():
    img = ImageBuffer(np.full((37, 37, 3), 128, dtype=np.uint8))
    out = resize_canonical(img, 256)
    assert out.array.shape == (256, 256, 3)
    assert np.all(out.array == 128)


def test_resize_identity_is_bit_identical():
    rng = np.random.default_rng(5)
    img = ImageBuffer(rng.integers(0, 256, size=(256, 256, 3)).astype(np.uint8))
    out = resize_canonical(img, 256)
    assert out is img


def test_resize_checkerboard_to_one_pixel():
    # bilinear at the half-pixel center of a 2x2 (0,255) checkerboard:
    # all four corners weighted 0.25 -> 127.5, rint rounds half to even -> 128
    arr = np.array(
        [[[0, 0, 0], [255, 255, 255]], [[255, 255, 255], [0, 0, 0]]], dtype=np.uint8
    )
    out = resize_bilinear(arr, 1, 1)
    assert out.shape == (1, 1, 3)
    assert np.allclose(out, 127.5)
    img = resize_canonical(ImageBuffer(arr), 8)  # side >= 8 precondition
    assert img.array.shape == (8, 8, 3)


def test_resize_idempotent_at_target():
    rng = np.random.default_rng(11)
    for _ in range(5):
        h, w = rng.integers(20, 120, size=2)
        img = ImageBuffer(rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8))
        once = resize_canonical(img, 64)
        twice = resize_canonical(once, 64)
        assert once == twice


def test_resize_side_precondition():
    img = ImageBuffer(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        resize_canonical(img, 7)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def _write_images(tmp_path, names):
    for name in names:
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / name)


def test_manifest_roundtrip(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png", "c.png", "d.png"])
    manifest = Manifest(
        (
            PairRecord("p1", "a.png", "b.png", 0, "setA"),
            PairRecord("p2", "c.png", "d.png", 2, "setB"),
        ),
        "cafebabe",
    )
    path = tmp_path / "m.tsv"
    save_manifest(manifest, path)
    loaded = load_manifest(path, expected_n=3)
    assert loaded == manifest
    # byte-stability of save(load(p))
    path2 = tmp_path / "m2.tsv"
    save_manifest(loaded, path2)
    assert path.read_text() == path2.read_text()


def test_manifest_roundtrip_randomized(tmp_path):
    _write_images(tmp_path, ["x.png"])
    rng = np.random.default_rng(3)
    for trial in range(20):
        count = int(rng.integers(1, 8))
        records = tuple(
            PairRecord(f"pair-{trial}-{i}", "x.png", "x.png", int(rng.integers(0, 6)), f"tag{i%3}")
            for i in range(count)
        )
        manifest = Manifest(records, f"fp{trial}")
        path = tmp_path / f"m{trial}.tsv"
        save_manifest(manifest, path)
        assert load_manifest(path, expected_n=5) == manifest


def test_manifest_empty_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    with pytest.raises(ParseError, match="empty manifest"):
        load_manifest(path)


def test_manifest_single_record(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png"])
    path = tmp_path / "m.tsv"
    path.write_text("# comment\n!registry=abc\np1\ta.png\tb.png\t1\ttag\n")
    manifest = load_manifest(path)
    assert len(manifest.records) == 1
    assert manifest.registry_fingerprint == "abc"


def test_manifest_label_exceeds_registry(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png"])
    path = tmp_path / "m.tsv"
    path.write_text("!registry=abc\np1\ta.png\tb.png\t7\ttag\n")
    with pytest.raises(ParseError, match="label 7"):
        load_manifest(path, expected_n=5)


def test_manifest_missing_files(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("!registry=abc\np1\tgone.png\talso-gone.png\t0\ttag\n")
    with pytest.raises(MissingFileError) as err:
        load_manifest(path)
    assert len(err.value.paths) == 2


def test_manifest_duplicate_pair_id(tmp_path):
    _write_images(tmp_path, ["a.png"])
    path = tmp_path / "m.tsv"
    path.write_text("!registry=abc\np1\ta.png\ta.png\t0\tt\np1\ta.png\ta.png\t0\tt\n")
    with pytest.raises(ParseError, match="duplicate"):
        load_manifest(path)


def test_manifest_parse_error_has_line_number(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("!registry=abc\nnot enough fields\n")
    with pytest.raises(ParseError, match="line 2"):
        load_manifest(path)
