"""Model bindings: the pieces a server instance exposes behind the wire
protocol.

A binding owns one protocol kind (editor, captioner, or embedder) and the
callable that does the work. Editor bindings take an optional
prompt-template hook for models that need the prompt reshaped (e.g.
mask-based editors wanting an explicit base-image description); the hook
runs on the raw prompt string before the model sees it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np
from PIL import Image, UnidentifiedImageError


class MalformedImage(Exception):
    pass


def decode_rgb(png_bytes: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(png_bytes)) as img:
            img.load()
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedImage(str(exc)) from exc


def encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class ModelBinding:
    """One model behind one protocol kind."""

    kind: str  # "editor" | "captioner" | "embedder"
    name: str
    version: str = "stub-1"
    # editor: fn(png_bytes, prompt, seed) -> png_bytes
    # captioner: fn(png_bytes) -> str
    # embedder: fn(png_bytes, space) -> list[float]
    fn: Callable = None
    prompt_template: Callable[[str], str] | None = None

    def info(self) -> dict:
        return {"name": self.name, "kind": self.kind, "version": self.version}


def echo_editor(name: str = "echo-edit") -> ModelBinding:
    """Editing stub: validates the payload and returns it byte-identically."""

    def fn(png_bytes: bytes, prompt: str, seed: int) -> bytes:
        decode_rgb(png_bytes)  # reject non-PNG payloads
        return png_bytes

    return ModelBinding(kind="editor", name=name, fn=fn)


def stub_captioner(name: str = "stub-caption") -> ModelBinding:
    """Deterministic caption from coarse image statistics."""

    tones = ("dark", "dim", "muted", "soft", "bright", "vivid")

    def fn(png_bytes: bytes) -> str:
        arr = decode_rgb(png_bytes).astype(np.float64)
        luma = arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114
        tone = tones[min(int(luma.mean() / 256 * len(tones)), len(tones) - 1)]
        dominant = "red green blue".split()[int(np.argmax(arr.mean(axis=(0, 1))))]
        return f"a {tone} {dominant}-leaning scene"

    return ModelBinding(kind="captioner", name=name, fn=fn)


def stub_embedder(name: str = "stub-embed") -> ModelBinding:
    """Deterministic fixed-dimension embeddings from image statistics.

    semantic: 8x8 luminance cell means, L2-normalized (64 dims);
    perceptual: 4x4 per-channel cell means of the mean-subtracted image,
    L2-normalized (48 dims).
    """

    def cell_means(plane: np.ndarray, g: int) -> np.ndarray:
        # windows cover at least one pixel so tiny images still embed to g*g
        h, w = plane.shape[:2]
        ye = (np.arange(g + 1) * h) // g
        xe = (np.arange(g + 1) * w) // g
        out = np.empty((g, g) + plane.shape[2:])
        for i in range(g):
            y0, y1 = ye[i], max(ye[i + 1], ye[i] + 1)
            if y0 >= h:
                y0, y1 = h - 1, h
            for j in range(g):
                x0, x1 = xe[j], max(xe[j + 1], xe[j] + 1)
                if x0 >= w:
                    x0, x1 = w - 1, w
                out[i, j] = plane[y0:y1, x0:x1].mean(axis=(0, 1))
        return out

    def fn(png_bytes: bytes, space: str) -> list:
        arr = decode_rgb(png_bytes).astype(np.float64)
        if space == "semantic":
            luma = arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114
            v = cell_means(luma, 8).ravel()
        elif space == "perceptual":
            centered = arr - arr.mean(axis=(0, 1), keepdims=True)
            v = cell_means(centered, 4).ravel()
        else:
            raise ValueError(f"unsupported space: {space}")
        norm = np.linalg.norm(v)
        return (v / norm if norm > 0 else v).tolist()

    return ModelBinding(kind="embedder", name=name, fn=fn)


def callable_editor(
    name: str,
    model_fn: Callable[[np.ndarray, str, int], np.ndarray],
    version: str = "custom-1",
    prompt_template: Callable[[str], str] | None = None,
) -> ModelBinding:
    """Wrap a real editing model: model_fn(rgb_array, prompt, seed) -> rgb.

    The prompt_template hook adapts the generic proxy prompt to whatever the
    model expects (mask-based editors, instruction-only editors, ...).
    """

    def fn(png_bytes: bytes, prompt: str, seed: int) -> bytes:
        arr = decode_rgb(png_bytes)
        if prompt_template is not None:
            prompt = prompt_template(prompt)
        out = np.asarray(model_fn(arr, prompt, seed), dtype=np.uint8)
        return encode_png(out)

    return ModelBinding(
        kind="editor", name=name, version=version, fn=fn, prompt_template=prompt_template
    )


STUBS = {
    "echo-edit": echo_editor,
    "stub-caption": stub_captioner,
    "stub-embed": stub_embedder,
}
