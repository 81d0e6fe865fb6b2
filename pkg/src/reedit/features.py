"""Proxy prompts, re-editing orchestration, and 12n-dimensional feature
vectors.

For a pair (base, suspicious) and a registry of n editors, every editor
re-edits both images with the caption-derived proxy prompt; the six metrics
between each re-edited image and the suspicious image give, per editor,
block_i = [6 metrics(re-edited base vs suspicious), 6 metrics(re-edited
suspicious vs suspicious)], concatenated in registry order.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .backends import BackendError, BackendRegistry
from .core import (
    FingerprintMismatch,
    ImageBuffer,
    Manifest,
    PairRecord,
    ParseError,
    load_image,
    resize_canonical,
)

CANONICAL_SIDE = 256
PROMPT_TEMPLATE = "Do the image editing task; original prompt: {pb}, editing prompt: {ps}"


class EmptyCaption(Exception):
    """A caption required for the proxy prompt was empty."""


@dataclass(frozen=True)
class ProxyPrompt:
    base_caption: str
    suspicious_caption: str
    rendered: str


def build_proxy_prompt(p_b: str, p_s: str) -> ProxyPrompt:
    """Render the fixed proxy-prompt template from the two captions."""
    if not p_b or not p_s:
        raise EmptyCaption("both captions must be non-empty")
    return ProxyPrompt(p_b, p_s, PROMPT_TEMPLATE.format(pb=p_b, ps=p_s))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # length 12n, float64
    registry_fingerprint: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size % 12 != 0:
            raise ValueError(f"feature vector length must be 12n, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature vector contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size // 12


@dataclass(frozen=True)
class FeatureTable:
    pair_ids: tuple[str, ...]
    labels: tuple[int, ...]
    matrix: np.ndarray  # rows x 12n
    registry_fingerprint: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.pair_ids) or len(self.labels) != m.shape[0]:
            raise ValueError("inconsistent table dimensions")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[1] // 12

    def __len__(self) -> int:
        return self.matrix.shape[0]


class ReEditCache:
    """Disk cache of re-edited images, keyed by the content hashes of the
    pair plus registry fingerprint and seed. Safe for concurrent readers;
    writes go through a per-process lock via atomic rename."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _key(self, base: ImageBuffer, susp: ImageBuffer, fingerprint: str, seed: int) -> str:
        h = hashlib.sha256()
        h.update(fingerprint.encode())
        h.update(str(seed).encode())
        h.update(base.array.tobytes())
        h.update(str(base.array.shape).encode())
        h.update(susp.array.tobytes())
        h.update(str(susp.array.shape).encode())
        return h.hexdigest()

    def load(self, base, susp, fingerprint, seed):
        path = self.directory / (self._key(base, susp, fingerprint, seed) + ".npz")
        if not path.exists():
            return None
        with np.load(path, allow_pickle=False) as data:
            count = int(data["count"])
            rb = [ImageBuffer(data[f"rb{i}"]) for i in range(count)]
            rs = [ImageBuffer(data[f"rs{i}"]) for i in range(count)]
            prompt = str(data["prompt"])
        return rb, rs, prompt

    def store(self, base, susp, fingerprint, seed, rb, rs, prompt):
        import threading

        path = self.directory / (self._key(base, susp, fingerprint, seed) + ".npz")
        tmp = path.with_name(f"{path.stem}.{threading.get_ident()}.tmp.npz")
        arrays = {"count": np.array(len(rb)), "prompt": np.array(prompt)}
        for i, img in enumerate(rb):
            arrays[f"rb{i}"] = img.array
        for i, img in enumerate(rs):
            arrays[f"rs{i}"] = img.array
        with open(tmp, "wb") as f:
            np.savez(f, **arrays)
        tmp.replace(path)


def pair_seed(run_seed: int, pair_id: str) -> int:
    """Stable per-pair seed so results do not depend on processing order."""
    digest = hashlib.sha256(f"{run_seed}|{pair_id}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def re_edit_pair(
    base: ImageBuffer,
    suspicious: ImageBuffer,
    registry: BackendRegistry,
    seed: int,
    cache: ReEditCache | None = None,
) -> tuple[list[ImageBuffer], list[ImageBuffer], str]:
    """Caption both images, build the proxy prompt, and run all 2n re-edits.

    Returns (re-edited bases, re-edited suspicious, rendered prompt) in
    registry order. Either every editor succeeds or the whole pair fails
    with the offending editor named; partial results are never returned.
    """
    if cache is not None:
        hit = cache.load(base, suspicious, registry.fingerprint, seed)
        if hit is not None:
            return hit
    p_b = registry.caption(base)
    p_s = registry.caption(suspicious)
    prompt = build_proxy_prompt(p_b, p_s).rendered
    rb, rs = [], []
    for i in range(1, registry.n + 1):
        try:
            rb.append(registry.edit(i, base, prompt, seed))
            rs.append(registry.edit(i, suspicious, prompt, seed))
        except BackendError as exc:
            name = registry.editors[i - 1].name
            raise BackendError(f"editor {name!r} failed: {exc}") from exc
    if cache is not None:
        cache.store(base, suspicious, registry.fingerprint, seed, rb, rs, prompt)
    return rb, rs, prompt


def extract_features(
    base: ImageBuffer,
    suspicious: ImageBuffer,
    registry: BackendRegistry,
    seed: int,
    cache: ReEditCache | None = None,
) -> FeatureVector:
    """The 12n-vector for one pair: per editor, six metrics for the
    re-edited base and six for the re-edited suspicious, vs the suspicious
    image, all at the canonical resolution."""
    rb, rs, _ = re_edit_pair(base, suspicious, registry, seed, cache)
    susp_canon = resize_canonical(suspicious, CANONICAL_SIDE)
    susp_profile = metrics.MetricProfile(susp_canon, registry)
    blocks = []
    for img_rb, img_rs in zip(rb, rs):
        prof_rb = metrics.MetricProfile(resize_canonical(img_rb, CANONICAL_SIDE), registry)
        prof_rs = metrics.MetricProfile(resize_canonical(img_rs, CANONICAL_SIDE), registry)
        blocks.append(metrics.compute_all_from_profiles(prof_rb, susp_profile))
        blocks.append(metrics.compute_all_from_profiles(prof_rs, susp_profile))
    return FeatureVector(np.concatenate(blocks), registry.fingerprint)


def _extract_record(manifest: Manifest, record: PairRecord, registry, seed, cache):
    base_path, susp_path = manifest.resolve(record)
    base = load_image(base_path)
    susp = load_image(susp_path)
    return extract_features(base, susp, registry, pair_seed(seed, record.pair_id), cache)


def build_feature_table(
    manifest: Manifest,
    registry: BackendRegistry,
    seed: int,
    cache: ReEditCache | None = None,
    jobs: int = 1,
) -> FeatureTable:
    """One feature row per manifest record, in manifest order.

    Rows are computed concurrently up to `jobs` workers but assembled
    deterministically; any per-pair failure aborts the whole table with the
    offending pair named.
    """
    if manifest.registry_fingerprint != registry.fingerprint:
        raise FingerprintMismatch(
            f"manifest was built for registry {manifest.registry_fingerprint}, "
            f"got {registry.fingerprint}"
        )
    records = manifest.records

    def work(record):
        try:
            return _extract_record(manifest, record, registry, seed, cache)
        except Exception as exc:
            raise BackendError(f"pair {record.pair_id!r}: {exc}") from exc

    if jobs <= 1:
        vectors = [work(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vectors = list(pool.map(work, records))
    matrix = np.stack([v.values for v in vectors])
    return FeatureTable(
        pair_ids=tuple(r.pair_id for r in records),
        labels=tuple(r.label for r in records),
        matrix=matrix,
        registry_fingerprint=registry.fingerprint,
    )


GROUPS = ("combined", "base", "suspicious")


def slice_features(matrix: np.ndarray, group: str, first_k_metrics: int = 6) -> np.ndarray:
    """Reduce feature columns to a re-edit group and the first k metrics.

    'base' keeps the first six entries of each 12-entry block, 'suspicious'
    the second six, 'combined' both; each kept half is then truncated to its
    first k metric entries (canonical metric order).
    """
    if group not in GROUPS:
        raise ValueError(f"group must be one of {GROUPS}")
    if not 1 <= first_k_metrics <= 6:
        raise ValueError("first_k_metrics must lie in 1..6")
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if m.shape[1] % 12 != 0:
        raise ValueError("feature width must be 12n")
    n = m.shape[1] // 12
    cols = []
    for i in range(n):
        start = i * 12
        if group in ("combined", "base"):
            cols.extend(range(start, start + first_k_metrics))
        if group in ("combined", "suspicious"):
            cols.extend(range(start + 6, start + 6 + first_k_metrics))
    out = m[:, cols]
    return out if np.asarray(matrix).ndim == 2 else out[0]


def save_feature_table(table: FeatureTable, path) -> None:
    """Write the feature-table artifact: a header line then CSV rows with
    values at 9 significant digits."""
    lines = [f"!features registry={table.registry_fingerprint} n={table.n} k=6 layout=v1"]
    for pid, label, row in zip(table.pair_ids, table.labels, table.matrix):
        values = ",".join(f"{v:.9g}" for v in row)
        lines.append(f"{pid},{label},{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_feature_table(path) -> FeatureTable:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("!features "):
        raise ParseError("missing !features header", 1)
    header = dict(part.split("=", 1) for part in lines[0].split()[1:])
    n = int(header["n"])
    pair_ids, labels, rows = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2 + 12 * n:
            raise ParseError(f"expected {2 + 12 * n} fields, got {len(parts)}", lineno)
        pair_ids.append(parts[0])
        labels.append(int(parts[1]))
        rows.append(np.array([float(x) for x in parts[2:]]))
    if not rows:
        raise ParseError("feature table has no rows")
    return FeatureTable(
        pair_ids=tuple(pair_ids),
        labels=tuple(labels),
        matrix=np.stack(rows),
        registry_fingerprint=header["registry"],
    )
