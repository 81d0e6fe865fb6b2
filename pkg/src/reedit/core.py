"""Core domain types: images, base/suspicious pair manifests, verdicts.

Everything here is immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(Exception):
    """Image file exists but its contents cannot be decoded."""


class ParseError(Exception):
    """Manifest (or other text artifact) is malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingFileError(Exception):
    """One or more files referenced by a manifest do not exist."""

    def __init__(self, paths):
        self.paths = list(paths)
        super().__init__("missing files: " + ", ".join(str(p) for p in self.paths))


class FingerprintMismatch(Exception):
    """An artifact was produced against a different backend registry."""


class ImageBuffer:
    """Immutable 8-bit RGB image, row-major H x W x 3."""

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.array(array, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ImageBuffer is immutable")

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    def to_float(self) -> np.ndarray:
        """H x W x 3 float64 copy in [0, 255]."""
        return self.array.astype(np.float64)

    def digest(self) -> str:
        return hashlib.sha256(self.array.tobytes()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(self.array, other.array)

    def __hash__(self):
        return hash((self.array.shape, self.array.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


def load_image(path) -> ImageBuffer:
    """Decode a PNG or JPEG into RGB; alpha dropped, grayscale expanded."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    try:
        with Image.open(p) as img:
            img.load()
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{p}: {exc}") from exc
    return ImageBuffer(arr)


def save_image(img: ImageBuffer, path) -> None:
    Image.fromarray(img.array, mode="RGB").save(Path(path), format="PNG")


def encode_png(img: ImageBuffer) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(img.array, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    import io

    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(str(exc)) from exc
    return ImageBuffer(arr)


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center sampling.

    Accepts HxW or HxWxC float/uint8 input, returns float64. Output pixel
    centers map to input coordinates (i + 0.5) * scale - 0.5 with edge clamp,
    so a same-size resize is an exact copy.
    """
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape[0], a.shape[1]
    if (out_h, out_w) == (h, w):
        return a.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    if a.ndim == 3:
        wy = wy[:, :, None]
        wx = wx[:, :, None]
    top = a[y0][:, x0] * (1 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1 - wx) + a[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize_canonical(img: ImageBuffer, side: int) -> ImageBuffer:
    """Deterministic bilinear resize to side x side (identity if already there)."""
    if side < 8:
        raise ValueError(f"side must be >= 8, got {side}")
    if img.height == side and img.width == side:
        return img
    out = resize_bilinear(img.array, side, side)
    return ImageBuffer(np.rint(out).clip(0, 255).astype(np.uint8))


@dataclass(frozen=True)
class PairRecord:
    """One base/suspicious image pair with its ground-truth label.

    label 0 means the suspicious image was not edited from the base;
    label i >= 1 names the i-th editor of the registry the manifest was
    built against. Paths are kept verbatim as written in the manifest.
    """

    pair_id: str
    base_path: str
    suspicious_path: str
    label: int
    source_tag: str


@dataclass(frozen=True)
class Manifest:
    records: tuple[PairRecord, ...]
    registry_fingerprint: str
    root: Path | None = None  # directory record paths are relative to; not serialized

    def __eq__(self, other):
        if not isinstance(other, Manifest):
            return NotImplemented
        return (
            self.records == other.records
            and self.registry_fingerprint == other.registry_fingerprint
        )

    def resolve(self, record: PairRecord) -> tuple[Path, Path]:
        root = self.root or Path(".")
        base = Path(record.base_path)
        susp = Path(record.suspicious_path)
        return (
            base if base.is_absolute() else root / base,
            susp if susp.is_absolute() else root / susp,
        )


def load_manifest(path, expected_n: int | None = None, check_files: bool = True) -> Manifest:
    """Parse a tab-separated pair manifest.

    Format: first non-comment line is ``!registry=<fingerprint>``, then one
    record per line ``pair_id<TAB>base<TAB>suspicious<TAB>label<TAB>tag``.
    ``#`` starts a comment line. When expected_n is given, labels outside
    {0..n} are rejected.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    text = p.read_text(encoding="utf-8")
    fingerprint = None
    records = []
    seen_ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if fingerprint is None:
            if not line.startswith("!registry="):
                raise ParseError("expected '!registry=<fingerprint>' header", lineno)
            fingerprint = line[len("!registry="):].strip()
            if not fingerprint:
                raise ParseError("empty registry fingerprint", lineno)
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(parts)}", lineno)
        pair_id, base_path, susp_path, label_s, tag = parts
        try:
            label = int(label_s)
        except ValueError:
            raise ParseError(f"label is not an integer: {label_s!r}", lineno) from None
        if label < 0:
            raise ParseError(f"label must be >= 0, got {label}", lineno)
        if expected_n is not None and label > expected_n:
            raise ParseError(f"label {label} exceeds registry size n={expected_n}", lineno)
        if pair_id in seen_ids:
            raise ParseError(f"duplicate pair_id {pair_id!r}", lineno)
        seen_ids.add(pair_id)
        records.append(PairRecord(pair_id, base_path, susp_path, label, tag))
    if fingerprint is None or not records:
        raise ParseError("empty manifest")
    manifest = Manifest(tuple(records), fingerprint, root=p.parent)
    if check_files:
        missing = []
        for rec in manifest.records:
            for resolved in manifest.resolve(rec):
                if not resolved.exists():
                    missing.append(resolved)
        if missing:
            raise MissingFileError(missing)
    return manifest


def save_manifest(manifest: Manifest, path) -> None:
    lines = [f"!registry={manifest.registry_fingerprint}"]
    for rec in manifest.records:
        lines.append(
            f"{rec.pair_id}\t{rec.base_path}\t{rec.suspicious_path}\t{rec.label}\t{rec.source_tag}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class Decision(Enum):
    NON_EDITED = "NonEdited"
    EDITED_BY = "EditedBy"
    EDITED_BY_UNSEEN = "EditedByUnseen"


class Verdict:
    """Classifier output for one pair: a decision plus per-label probabilities."""

    __slots__ = ("decision", "model_index", "probabilities")

    def __init__(self, decision: Decision, probabilities, model_index: int | None = None):
        probs = np.asarray(probabilities, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("probabilities must be a 1-D vector")
        if np.any(probs < -1e-9) or np.any(probs > 1 + 1e-9):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(probs.sum()) - 1.0) > 1e-6:
            raise ValueError(f"probabilities must sum to 1, got {probs.sum()}")
        if decision is Decision.EDITED_BY:
            if model_index is None or model_index < 1 or model_index > probs.size - 1:
                raise ValueError(f"EditedBy index out of range: {model_index}")
        else:
            model_index = None
        probs.setflags(write=False)
        object.__setattr__(self, "decision", decision)
        object.__setattr__(self, "model_index", model_index)
        object.__setattr__(self, "probabilities", probs)

    def __setattr__(self, name, value):
        raise AttributeError("Verdict is immutable")

    def describe(self) -> str:
        if self.decision is Decision.EDITED_BY:
            return f"EditedBy({self.model_index})"
        return self.decision.value

    def __repr__(self):
        return f"Verdict({self.describe()})"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
