"""Editing, captioning, and embedding backends.

Two kinds are supported behind one interface: deterministic in-process
simulated backends (the desk-scale verification vehicle), and remote
backends speaking the JSON-over-HTTP wire protocol:

    POST /v1/edit     {"image": b64-PNG, "prompt": str, "seed": int} -> {"image": b64-PNG}
    POST /v1/caption  {"image": b64-PNG}                             -> {"caption": str}
    POST /v1/embed    {"image": b64-PNG, "space": "semantic"|"perceptual"} -> {"vector": [...]}
    GET  /v1/info                                                     -> {"name", "kind", "version"}

Error responses carry 4xx/5xx with a JSON body {"error": string}. A remote
rejection whose error string starts with "prompt" maps to PromptError.

The simulated editors are built so the four editing-process observations
hold by construction:

* robustness  - prompt token sets that resolve to the same scene target
                produce the same output;
* stability   - re-editing an edited image with a similar prompt moves it
                by strictly less than contraction_factor of the first
                edit's displacement;
* variety     - each model_id stamps a distinct zero-mean texture
                fingerprint (per-channel gains give it a color character);
* dissimilarity - an edit keeps only a low-frequency content summary of
                its input, so re-edits of a base can never reproduce the
                instance detail of an unrelated suspicious image.
"""

from __future__ import annotations

import base64
import hashlib
import re
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .core import ImageBuffer, ParseError, decode_png, encode_png, resize_bilinear


class BackendError(Exception):
    """Transport or remote-side failure after retries."""


class PromptError(BackendError):
    """Remote editor rejected the prompt."""


class UnsupportedSpace(BackendError):
    """Embedder does not provide the requested embedding space."""


# ---------------------------------------------------------------------------
# scene library shared by the simulated editors and captioner
# ---------------------------------------------------------------------------

SCENES: tuple[tuple[str, ...], ...] = (
    ("cat", "meadow"),
    ("dog", "park"),
    ("boat", "harbor"),
    ("mountain", "lake"),
    ("city", "skyline"),
    ("desert", "dune"),
    ("forest", "trail"),
    ("rose", "garden"),
    ("snow", "cabin"),
    ("beach", "sunset"),
    ("river", "bridge"),
    ("castle", "hill"),
    ("train", "station"),
    ("market", "street"),
    ("lighthouse", "cliff"),
    ("owl", "branch"),
    ("horse", "field"),
    ("windmill", "farm"),
    ("canyon", "ridge"),
    ("waterfall", "pool"),
    ("library", "hall"),
    ("temple", "courtyard"),
    ("glacier", "bay"),
    ("vineyard", "valley"),
)

_LIBRARY_SEED = 7193
PATTERN_RMS = 22.0  # per-cell RMS amplitude of a rendered scene pattern
CAPTION_THRESHOLD = 0.25  # frozen; below this correlation the captioner gives up
UNKNOWN_CAPTION = "unknown scene"

_pattern_cache: dict[int, np.ndarray] = {}
_pattern_lock = threading.Lock()


def scene_patterns(grid: int) -> np.ndarray:
    """K x grid x grid x 3 orthonormal (unit L2, zero mean) scene patterns.

    Patterns are smooth (built from 5x5 coarse noise) and fixed by an
    internal seed, so every registry and every run shares one library.
    """
    with _pattern_lock:
        cached = _pattern_cache.get(grid)
        if cached is not None:
            return cached
        rng = np.random.default_rng(_LIBRARY_SEED)
        coarse = rng.normal(size=(len(SCENES), 5, 5, 3))
        flats = []
        for k in range(len(SCENES)):
            up = resize_bilinear(coarse[k], grid, grid)
            flats.append(up.ravel())
        mat = np.stack(flats)
        mat -= mat.mean(axis=1, keepdims=True)
        # two Gram-Schmidt passes for numerical stability
        for _ in range(2):
            for i in range(mat.shape[0]):
                for j in range(i):
                    mat[i] -= np.dot(mat[i], mat[j]) * mat[j]
                mat[i] /= np.linalg.norm(mat[i])
        pats = mat.reshape(len(SCENES), grid, grid, 3)
        pats.setflags(write=False)
        _pattern_cache[grid] = pats
        return pats


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def canonical_tokens(text: str) -> tuple[str, ...]:
    """Lowercased, deduplicated, sorted word tokens."""
    return tuple(sorted(set(_TOKEN_RE.findall(text.lower()))))


_EDIT_MARKER = "editing prompt:"
_ORIGINAL_MARKER = "original prompt:"


def editing_segment(prompt: str) -> str:
    """The part of a prompt after the last 'editing prompt:' marker.

    Proxy prompts embed both the base and the target description; editors
    act on the target part. Plain prompts are used whole.
    """
    low = prompt.lower()
    idx = low.rfind(_EDIT_MARKER)
    if idx < 0:
        return prompt
    return prompt[idx + len(_EDIT_MARKER):]


def original_segment(prompt: str) -> str:
    """The original-image description between the 'original prompt:' and
    'editing prompt:' markers ('' when the prompt is unstructured)."""
    low = prompt.lower()
    start = low.find(_ORIGINAL_MARKER)
    if start < 0:
        return ""
    start += len(_ORIGINAL_MARKER)
    end = low.rfind(_EDIT_MARKER)
    if end < 0 or end <= start:
        return prompt[start:]
    return prompt[start:end].rstrip().rstrip(",")


def resolve_target(tokens: tuple[str, ...]) -> int | None:
    """Index of the scene whose token set is nearest by Jaccard similarity.

    Returns None when no scene token overlaps at all (unknown target).
    Ties break toward the lowest scene index.
    """
    tokset = set(tokens)
    best, best_score = None, 0.0
    for k, scene in enumerate(SCENES):
        sset = set(scene)
        inter = len(tokset & sset)
        if inter == 0:
            continue
        score = inter / len(tokset | sset)
        if score > best_score:
            best, best_score = k, score
    return best


# ---------------------------------------------------------------------------
# simulated editor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimEditorParams:
    model_id: int
    fingerprint_strength: float = 1.0
    content_grid_size: int = 16
    contraction_factor: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.fingerprint_strength <= 1.0:
            raise ValueError("fingerprint_strength must lie in [0, 1]")
        if not 0.0 < self.contraction_factor < 1.0:
            raise ValueError("contraction_factor must lie in (0, 1)")
        if self.content_grid_size < 2:
            raise ValueError("content_grid_size must be >= 2")


FINGERPRINT_RMS = 11.0  # pixel RMS of a full-strength fingerprint texture
DITHER_RMS = 0.8  # pixel RMS of the per-seed dither


def content_grid(arr: np.ndarray, grid: int) -> np.ndarray:
    """grid x grid x 3 cell means; the low-frequency content summary."""
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape[:2]
    if h % grid == 0 and w % grid == 0:
        ch, cw = h // grid, w // grid
        return a.reshape(grid, ch, grid, cw, 3).mean(axis=(1, 3))
    side = grid * 16
    a = resize_bilinear(a, side, side)
    return a.reshape(grid, 16, grid, 16, 3).mean(axis=(1, 3))


def _zero_mean_per_cell(tex: np.ndarray, grid: int) -> np.ndarray:
    h, w = tex.shape[:2]
    ch, cw = h // grid, w // grid
    cells = tex.reshape(grid, ch, grid, cw, 3)
    return (cells - cells.mean(axis=(1, 3), keepdims=True)).reshape(h, w, 3)


def _quarter_res_noise(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    qh, qw = max(1, h // 4), max(1, w // 4)
    small = rng.normal(size=(qh, qw, 3))
    return np.repeat(np.repeat(small, 4, axis=0), 4, axis=1)[:h, :w, :]


from functools import lru_cache


@lru_cache(maxsize=64)
def fingerprint_texture(model_id: int, h: int, w: int, grid: int) -> np.ndarray:
    """Deterministic per-model texture, zero-mean within every content cell.

    Per-channel gains give each model a distinct color character while the
    content grid stays exactly invariant under the stamp.
    """
    rng = np.random.default_rng([9217, model_id])
    gains = rng.uniform(0.4, 1.6, size=3)
    tex = _quarter_res_noise(rng, h, w) * gains[None, None, :]
    tex = _zero_mean_per_cell(tex, grid)
    rms = float(np.sqrt(np.mean(tex**2)))
    tex *= FINGERPRINT_RMS / max(rms, 1e-12)
    tex.setflags(write=False)
    return tex


@lru_cache(maxsize=256)
def _dither(seed: int, h: int, w: int, grid: int) -> np.ndarray:
    rng = np.random.default_rng([4021, seed])
    tex = _zero_mean_per_cell(rng.normal(size=(h, w, 3)), grid)
    rms = float(np.sqrt(np.mean(tex**2)))
    tex *= DITHER_RMS / max(rms, 1e-12)
    tex.setflags(write=False)
    return tex


@lru_cache(maxsize=256)
def _seed_texture(seed: int, h: int, w: int, grid: int) -> np.ndarray:
    """Coarse (quarter-resolution) unit-RMS texture that varies with the
    sampling seed; survives metric-scale downsampling, unlike the dither."""
    rng = np.random.default_rng([5741, seed])
    tex = _zero_mean_per_cell(_quarter_res_noise(rng, h, w), grid)
    rms = float(np.sqrt(np.mean(tex**2)))
    tex *= 1.0 / max(rms, 1e-12)
    tex.setflags(write=False)
    return tex


@lru_cache(maxsize=64)
def _seed_texture_amp(model_id: int) -> float:
    """Per-model seed sensitivity: how strongly outputs vary across seeds.

    Gated on fingerprint_strength at use, so degenerate zero-strength
    editors stay seed-uniform across model ids."""
    rng = np.random.default_rng([6113, model_id])
    return float(rng.uniform(0.0, 10.0))


@lru_cache(maxsize=4096)
def _seed_texture_factor(seed: int) -> float:
    """Per-seed sampling-quality factor in [0.5, 1.5]: some seeds land
    closer to the model's mode than others. Cancels exactly between edits
    sharing a seed."""
    rng = np.random.default_rng([8317, seed])
    return float(rng.uniform(0.5, 1.5))


CONFUSION_RMS = 12.0


@lru_cache(maxsize=256)
def _confusion_texture(model_id: int, seed: int, h: int, w: int, grid: int) -> np.ndarray:
    """Texture stamped alongside a ghost injection: an editor fed an
    inconsistent original description re-renders with an unrelated phase."""
    rng = np.random.default_rng([7559, model_id, seed])
    tex = _zero_mean_per_cell(_quarter_res_noise(rng, h, w), grid)
    rms = float(np.sqrt(np.mean(tex**2)))
    tex *= CONFUSION_RMS / max(rms, 1e-12)
    tex.setflags(write=False)
    return tex


def render_grid(grid_values: np.ndarray, cell: int) -> np.ndarray:
    """Block-constant upsample of a content grid to pixels (float64)."""
    return np.repeat(np.repeat(grid_values, cell, axis=0), cell, axis=1)


GHOST_INJECTION = 0.9  # scene fraction hallucinated on an inconsistent original
GHOST_TRACE_FLOOR = 0.3  # fraction of the expected carry trace that counts as present


def sim_edit(
    params: SimEditorParams,
    img: ImageBuffer,
    prompt_tokens: tuple[str, ...],
    seed: int,
    original_tokens: tuple[str, ...] = (),
) -> ImageBuffer:
    """Deterministic simulated edit.

    The input's content grid is decomposed against the scene library; the
    scene component is replaced by the prompt's target pattern (keeping a
    contraction_factor/2 carry of the old scene so the stability bound is
    met strictly), the instance residual is preserved, and the model's
    fingerprint texture plus a small per-seed dither are stamped on top.

    When the prompt carries an original-image description whose scene has
    no trace in the input (neither the full scene nor the carry remnant an
    edit would leave), the editor behaves like a mask/inversion model fed a
    wrong description: it hallucinates a GHOST_INJECTION fraction of the
    described scene into the output.
    """
    g = params.content_grid_size
    pats = scene_patterns(g).reshape(len(SCENES), -1)
    work = int(img.height) if img.height == img.width else 0
    native = work % g == 0 and work >= g
    side = img.height if native else g * 16
    arr = img.to_float() if native else resize_bilinear(img.array, side, side)
    cell = side // g

    grid_now = content_grid(arr, g)
    flat = grid_now.ravel()
    coeffs = pats @ flat
    scene_part = coeffs @ pats

    target_idx = resolve_target(prompt_tokens)
    amplitude = PATTERN_RMS * np.sqrt(flat.size)
    target = amplitude * pats[target_idx] if target_idx is not None else np.zeros_like(flat)

    carry = params.contraction_factor / 2.0
    new_flat = flat - scene_part + carry * scene_part + (1.0 - carry) * target

    confused = False
    if original_tokens:
        orig_idx = resolve_target(original_tokens)
        if orig_idx is not None:
            trace = coeffs[orig_idx]
            if trace < GHOST_TRACE_FLOOR * carry * amplitude:
                new_flat = new_flat + GHOST_INJECTION * amplitude * pats[orig_idx]
                confused = True

    new_grid = new_flat.reshape(g, g, 3)

    px = render_grid(new_grid, cell)
    px += fingerprint_texture(params.model_id, side, side, g) * params.fingerprint_strength
    px += _dither(seed, side, side, g)
    amp_q = (
        _seed_texture_amp(params.model_id)
        * min(1.0, 10.0 * params.fingerprint_strength)
        * _seed_texture_factor(seed)
    )
    if amp_q > 0.0:
        px += _seed_texture(seed, side, side, g) * amp_q
    if confused:
        px += _confusion_texture(params.model_id, seed, side, side, g)
    out = np.rint(px).clip(0, 255).astype(np.uint8)
    if not native and (img.height, img.width) != (side, side):
        out = np.rint(resize_bilinear(out, img.height, img.width)).clip(0, 255).astype(np.uint8)
    return ImageBuffer(out)


def sim_caption(img: ImageBuffer, grid: int = 16) -> str:
    """Tokens of the scene pattern best correlated with the content grid,
    or 'unknown scene' below the frozen correlation threshold."""
    pats = scene_patterns(grid).reshape(len(SCENES), -1)
    g = content_grid(img.array, grid).ravel()
    centered = g - g.mean()
    norm = np.linalg.norm(centered)
    if norm < 1e-12:
        return UNKNOWN_CAPTION
    corr = pats @ (centered / norm)
    best = int(np.argmax(corr))
    if corr[best] < CAPTION_THRESHOLD:
        return UNKNOWN_CAPTION
    return ", ".join(SCENES[best])


SEMANTIC_GRID = 8  # semantic embedding: 8x8 luma cell means -> 64 dims
PERCEPTUAL_LEVELS = 3
PERCEPTUAL_GRID = 8


def sim_embed_semantic(img: ImageBuffer) -> np.ndarray:
    """64-dim semantic embedding: 8x8 grid of luminance cell means
    (BT.601-weighted channel means), L2-normalized."""
    arr = img.to_float()
    luma = arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114
    h, w = luma.shape
    gsize = SEMANTIC_GRID
    if h % gsize == 0 and w % gsize == 0:
        cells = luma.reshape(gsize, h // gsize, gsize, w // gsize).mean(axis=(1, 3))
    else:
        cells = resize_bilinear(luma, gsize, gsize)
    v = cells.ravel()
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def _halve(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    h2, w2 = h // 2, w // 2
    return arr[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2, 3).mean(axis=(1, 3))


def _double(arr: np.ndarray) -> np.ndarray:
    # bilinear (not replication), so block textures leave a band-pass trace
    return resize_bilinear(arr, arr.shape[0] * 2, arr.shape[1] * 2)


def _cell_means(arr: np.ndarray, gsize: int) -> np.ndarray:
    h, w = arr.shape[:2]
    g = min(gsize, h, w)
    if h % g == 0 and w % g == 0:
        return arr.reshape(g, h // g, g, w // g, 3).mean(axis=(1, 3))
    ye = (np.arange(g + 1) * h) // g
    xe = (np.arange(g + 1) * w) // g
    out = np.empty((g, g, 3))
    for i in range(g):
        for j in range(g):
            out[i, j] = arr[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].mean(axis=(0, 1))
    return out


def laplacian_pyramid_features(arr: np.ndarray) -> list[np.ndarray]:
    """Per-level unit-normalized 8x8-tile features of a 3-level Laplacian
    pyramid (two band-pass levels plus the low-pass residual).

    A tile contributes its per-channel mean and mean absolute deviation of
    the channel-centered level, so both layout and texture energy register.
    """
    a = np.asarray(arr, dtype=np.float64)
    levels = []
    g0 = a
    for _ in range(PERCEPTUAL_LEVELS - 1):
        g1 = _halve(g0)
        levels.append(g0 - _double(g1)[: g0.shape[0], : g0.shape[1]])
        g0 = g1
    levels.append(g0)
    feats = []
    for lvl in levels:
        centered = lvl - lvl.mean(axis=(0, 1), keepdims=True)
        v = np.concatenate(
            [
                _cell_means(centered, PERCEPTUAL_GRID).ravel(),
                _cell_means(np.abs(centered), PERCEPTUAL_GRID).ravel(),
            ]
        )
        norm = np.linalg.norm(v)
        feats.append(v / norm if norm > 0 else v)
    return feats


def sim_embed_perceptual(img: ImageBuffer) -> np.ndarray:
    """Concatenated pyramid-level features; levels have equal length at the
    canonical resolution, so a plain MSE between vectors equals the mean of
    per-level MSEs."""
    return np.concatenate(laplacian_pyramid_features(img.to_float()))


# ---------------------------------------------------------------------------
# handles and registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EditorHandle:
    name: str
    kind: str  # "simulated" | "remote"
    sim: SimEditorParams | None = None
    endpoint: str | None = None
    version: str = "sim-1"


@dataclass(frozen=True)
class CaptionerHandle:
    name: str
    kind: str
    endpoint: str | None = None
    version: str = "sim-1"


@dataclass(frozen=True)
class EmbedderHandle:
    name: str
    kind: str
    endpoint: str | None = None
    version: str = "sim-1"


@dataclass(frozen=True)
class ClientConfig:
    retries: int = 2  # retry count after the first attempt
    timeout: float = 30.0
    max_inflight: int = 8


class RemoteClient:
    """Wire-protocol client with bounded concurrency and fixed retries.

    Every call is attempted 1 + retries times; failures then surface as
    BackendError. There is never a silent fallback to simulation.
    """

    def __init__(self, config: ClientConfig = ClientConfig()):
        self.config = config
        self._gate = threading.Semaphore(config.max_inflight)
        self._session = requests.Session()

    def _post(self, endpoint: str, route: str, body: dict) -> dict:
        url = endpoint.rstrip("/") + route
        last = None
        for _ in range(self.config.retries + 1):
            try:
                with self._gate:
                    resp = self._session.post(url, json=body, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last = BackendError(f"{url}: {exc}")
                continue
            if resp.status_code == 200:
                return resp.json()
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            if 400 <= resp.status_code < 500 and str(message).lower().startswith("prompt"):
                raise PromptError(f"{url}: {message}")
            last = BackendError(f"{url}: HTTP {resp.status_code}: {message}")
        raise last

    def edit(self, endpoint: str, img: ImageBuffer, prompt: str, seed: int) -> ImageBuffer:
        body = {
            "image": base64.b64encode(encode_png(img)).decode("ascii"),
            "prompt": prompt,
            "seed": int(seed),
        }
        data = self._post(endpoint, "/v1/edit", body)
        try:
            return decode_png(base64.b64decode(data["image"]))
        except Exception as exc:
            raise BackendError(f"bad edit response from {endpoint}: {exc}") from exc

    def caption(self, endpoint: str, img: ImageBuffer) -> str:
        body = {"image": base64.b64encode(encode_png(img)).decode("ascii")}
        data = self._post(endpoint, "/v1/caption", body)
        cap = data.get("caption", "")
        if not cap:
            raise BackendError(f"empty caption from {endpoint}")
        return cap

    def embed(self, endpoint: str, img: ImageBuffer, space: str) -> np.ndarray:
        body = {
            "image": base64.b64encode(encode_png(img)).decode("ascii"),
            "space": space,
        }
        data = self._post(endpoint, "/v1/embed", body)
        vec = np.asarray(data.get("vector", []), dtype=np.float64)
        if vec.size == 0 or not np.all(np.isfinite(vec)):
            raise BackendError(f"bad embed response from {endpoint}")
        return vec

    def info(self, endpoint: str) -> dict:
        url = endpoint.rstrip("/") + "/v1/info"
        last = None
        for _ in range(self.config.retries + 1):
            try:
                with self._gate:
                    resp = self._session.get(url, timeout=self.config.timeout)
                resp.raise_for_status()
                return resp.json()
            except requests.RequestException as exc:
                last = BackendError(f"{url}: {exc}")
        raise last


class BackendRegistry:
    """Ordered editors (index 1..n) plus one captioner and one embedder.

    The fingerprint digests names, kinds, order, and versions/parameters;
    it changes iff membership or order changes, and every downstream
    artifact embeds it so stale label spaces fail fast.
    """

    def __init__(
        self,
        editors: list[EditorHandle],
        captioner: CaptionerHandle,
        embedder: EmbedderHandle,
        client_config: ClientConfig = ClientConfig(),
    ):
        if not editors:
            raise ValueError("registry needs at least one editor")
        names = [e.name for e in editors]
        if len(set(names)) != len(names):
            raise ValueError("editor names must be unique")
        self.editors = tuple(editors)
        self.captioner = captioner
        self.embedder = embedder
        self.client = RemoteClient(client_config)
        self.fingerprint = self._fingerprint()

    @property
    def n(self) -> int:
        return len(self.editors)

    def _fingerprint(self) -> str:
        parts = []
        for e in self.editors:
            detail = (
                f"sim:{e.sim.model_id}:{e.sim.fingerprint_strength}"
                f":{e.sim.content_grid_size}:{e.sim.contraction_factor}"
                if e.sim is not None
                else f"remote:{e.endpoint}"
            )
            parts.append(f"editor|{e.name}|{e.version}|{detail}")
        for h in (self.captioner, self.embedder):
            tag = "captioner" if isinstance(h, CaptionerHandle) else "embedder"
            detail = h.endpoint if h.endpoint else "sim"
            parts.append(f"{tag}|{h.name}|{h.version}|{detail}")
        digest = hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()
        return digest[:16]

    # -- operations ---------------------------------------------------------

    def edit(self, index: int, img: ImageBuffer, prompt: str, seed: int) -> ImageBuffer:
        """Apply editor `index` (1-based). Simulated editors are deterministic
        given (image, canonical prompt tokens, model_id, seed)."""
        if not prompt:
            raise PromptError("prompt must be non-empty")
        handle = self.editors[index - 1]
        if handle.kind == "simulated":
            tokens = canonical_tokens(editing_segment(prompt))
            original = canonical_tokens(original_segment(prompt))
            return sim_edit(handle.sim, img, tokens, seed, original_tokens=original)
        return self.client.edit(handle.endpoint, img, prompt, seed)

    def caption(self, img: ImageBuffer) -> str:
        if self.captioner.kind == "simulated":
            return sim_caption(img)
        return self.client.caption(self.captioner.endpoint, img)

    def embed(self, img: ImageBuffer, space: str) -> np.ndarray:
        if space not in ("semantic", "perceptual"):
            raise UnsupportedSpace(space)
        if self.embedder.kind == "simulated":
            if space == "semantic":
                return sim_embed_semantic(img)
            return sim_embed_perceptual(img)
        return self.client.embed(self.embedder.endpoint, img, space)


DEFAULT_STRENGTHS = (1.0, 0.45, 0.75, 0.6, 0.9)


def make_simulated_registry(
    n: int,
    strengths: tuple[float, ...] | None = None,
    grid: int = 16,
    contraction: float = 0.15,
) -> BackendRegistry:
    """Registry of n simulated editors with heterogeneous fingerprint
    strengths plus the simulated captioner and embedder."""
    if strengths is None:
        strengths = tuple(DEFAULT_STRENGTHS[i % len(DEFAULT_STRENGTHS)] for i in range(n))
    editors = [
        EditorHandle(
            name=f"sim-edit-{i + 1}",
            kind="simulated",
            sim=SimEditorParams(
                model_id=i + 1,
                fingerprint_strength=strengths[i],
                content_grid_size=grid,
                contraction_factor=contraction,
            ),
        )
        for i in range(n)
    ]
    return BackendRegistry(
        editors,
        CaptionerHandle(name="sim-captioner", kind="simulated"),
        EmbedderHandle(name="sim-embedder", kind="simulated"),
    )


# ---------------------------------------------------------------------------
# registry config file
# ---------------------------------------------------------------------------

def load_registry(path) -> BackendRegistry:
    """Parse a registry config file.

    INI-like sections in order: ``[editor <name>]``, ``[captioner <name>]``,
    ``[embedder <name>]``, optional ``[client]``. Each backend section sets
    ``kind = simulated|remote`` plus either ``endpoint`` or the simulation
    parameters (model_id, fingerprint_strength, content_grid_size,
    contraction_factor).
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    sections: list[tuple[str, dict]] = []
    current = None
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            header = line[1:-1].strip()
            current = {}
            sections.append((header, current))
            continue
        if current is None:
            raise ParseError("key outside of a section", lineno)
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, _, value = line.partition("=")
        current[key.strip()] = value.strip()

    editors: list[EditorHandle] = []
    captioner = None
    embedder = None
    client = ClientConfig()
    for header, opts in sections:
        words = header.split()
        role = words[0]
        name = words[1] if len(words) > 1 else role
        if role == "client":
            client = ClientConfig(
                retries=int(opts.get("retries", ClientConfig.retries)),
                timeout=float(opts.get("timeout", ClientConfig.timeout)),
                max_inflight=int(opts.get("max_inflight", ClientConfig.max_inflight)),
            )
            continue
        kind = opts.get("kind", "simulated")
        version = opts.get("version", "sim-1" if kind == "simulated" else opts.get("endpoint", ""))
        if role == "editor":
            if kind == "simulated":
                sim = SimEditorParams(
                    model_id=int(opts.get("model_id", len(editors) + 1)),
                    fingerprint_strength=float(opts.get("fingerprint_strength", 1.0)),
                    content_grid_size=int(opts.get("content_grid_size", 16)),
                    contraction_factor=float(opts.get("contraction_factor", 0.15)),
                )
                editors.append(EditorHandle(name=name, kind=kind, sim=sim, version=version))
            else:
                editors.append(
                    EditorHandle(name=name, kind=kind, endpoint=opts["endpoint"], version=version)
                )
        elif role == "captioner":
            captioner = CaptionerHandle(
                name=name, kind=kind, endpoint=opts.get("endpoint"), version=version
            )
        elif role == "embedder":
            embedder = EmbedderHandle(
                name=name, kind=kind, endpoint=opts.get("endpoint"), version=version
            )
        else:
            raise ParseError(f"unknown section role {role!r}")
    if captioner is None:
        captioner = CaptionerHandle(name="sim-captioner", kind="simulated")
    if embedder is None:
        embedder = EmbedderHandle(name="sim-embedder", kind="simulated")
    return BackendRegistry(editors, captioner, embedder, client)


def save_registry_config(registry: BackendRegistry, path) -> None:
    lines = []
    for e in registry.editors:
        lines.append(f"[editor {e.name}]")
        lines.append(f"kind = {e.kind}")
        if e.sim is not None:
            lines.append(f"model_id = {e.sim.model_id}")
            lines.append(f"fingerprint_strength = {e.sim.fingerprint_strength}")
            lines.append(f"content_grid_size = {e.sim.content_grid_size}")
            lines.append(f"contraction_factor = {e.sim.contraction_factor}")
        else:
            lines.append(f"endpoint = {e.endpoint}")
        lines.append("")
    for role, h in (("captioner", registry.captioner), ("embedder", registry.embedder)):
        lines.append(f"[{role} {h.name}]")
        lines.append(f"kind = {h.kind}")
        if h.endpoint:
            lines.append(f"endpoint = {h.endpoint}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
