"""Deterministic synthetic dataset generation.

Base images are procedural scenes: a library pattern plus an instance
residual rendered at the canonical resolution. Positive pairs run a real
editing prompt through a simulated editor; negative pairs come in four
modes mirroring the evaluation setup (shared-content, shared-style,
near-duplicate frames, and unrelated pairs whose suspicious image is an
edit of some other base).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .backends import (
    PATTERN_RMS,
    SCENES,
    BackendRegistry,
    content_grid,
    render_grid,
    scene_patterns,
    _quarter_res_noise,
    _zero_mean_per_cell,
)
from .core import ImageBuffer, Manifest, PairRecord, load_image, resize_bilinear, save_image
from .features import pair_seed

SIDE = 256
RESIDUAL_RMS = 42.0
BASE_TEXTURE_RMS = 6.0
FRAME_JITTER_RMS = 2.5
FRAME_GRAIN_RANGE = (4.0, 12.0)  # per-pair sensor/codec grain on the second frame
STYLE_TINT_RANGE = 10.0

POSITIVE_SOURCES = ("sim-photo", "sim-art")
NEGATIVE_MODES = ("content", "style", "frames", "unrelated")

FILLER_WORDS = (
    "bright", "misty", "golden", "quiet", "vivid",
    "calm", "stormy", "pale", "amber", "teal",
)


def _residual(rng: np.random.Generator, grid: int, pats: np.ndarray) -> np.ndarray:
    """Smooth instance-layout field, orthogonal to the scene library."""
    coarse = rng.normal(size=(8, 8, 3))
    field = resize_bilinear(coarse, grid, grid).ravel()
    flat_pats = pats.reshape(len(SCENES), -1)
    field -= flat_pats.T @ (flat_pats @ field)
    rms = float(np.sqrt(np.mean(field**2)))
    field *= RESIDUAL_RMS / max(rms, 1e-12)
    return field.reshape(grid, grid, 3)


def _render_base(grid_values: np.ndarray, rng: np.random.Generator, grid: int) -> ImageBuffer:
    cell = SIDE // grid
    px = render_grid(grid_values, cell)
    tex = _zero_mean_per_cell(_quarter_res_noise(rng, SIDE, SIDE), grid)
    rms = float(np.sqrt(np.mean(tex**2)))
    px = px + tex * (BASE_TEXTURE_RMS / max(rms, 1e-12))
    return ImageBuffer(np.rint(px).clip(0, 255).astype(np.uint8))


def synth_base(
    scene_index: int,
    instance_seed: int,
    grid: int = 16,
    amplitude: float | None = None,
    tint: np.ndarray | None = None,
) -> ImageBuffer:
    """A procedural scene image: gray + scene pattern + instance residual."""
    pats = scene_patterns(grid)
    rng = np.random.default_rng([5461, instance_seed])
    amp = (amplitude if amplitude is not None else PATTERN_RMS) * np.sqrt(grid * grid * 3)
    g = 128.0 + amp * pats[scene_index] + _residual(rng, grid, pats)
    if tint is not None:
        g = g + tint[None, None, :]
    return _render_base(g, rng, grid)


def true_edit_prompt(target_scene: int, rng: np.random.Generator) -> str:
    """The editing prompt a simulated "user" would have written: the target
    scene's words plus a filler adjective."""
    words = list(SCENES[target_scene]) + [FILLER_WORDS[int(rng.integers(len(FILLER_WORDS)))]]
    return " ".join(words)


def simulate_dataset(
    registry: BackendRegistry,
    out_dir,
    seed: int,
    pos_per_model: int,
    neg_per_mode: int,
    sources: tuple[str, ...] = POSITIVE_SOURCES,
    neg_modes: tuple[str, ...] = NEGATIVE_MODES,
    prefix: str = "pair",
    unseen_positive_indices: tuple[int, ...] = (),
) -> Manifest:
    """Write PNGs plus a manifest for a simulated dataset.

    Positives: `pos_per_model` pairs per editor per source tag. Negatives:
    `neg_per_mode` per mode. Editors listed in unseen_positive_indices get
    label 0 and a source tag suffixed "-unseen" (their pairs are positives
    of a model outside the training label space).
    """
    if pos_per_model < 1 or neg_per_mode < 1:
        raise ValueError("counts must be >= 1")
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([8311, seed])
    records = []
    positives: list[str] = []  # suspicious relpaths, donors for the unrelated mode
    counter = 0

    def next_id(kind):
        nonlocal counter
        counter += 1
        return f"{prefix}-{kind}-{counter:05d}"

    grid = 16
    n_scenes = len(SCENES)

    for source in sources:
        for model_index in range(1, registry.n + 1):
            for _ in range(pos_per_model):
                pair_id = next_id("pos")
                scene = int(rng.integers(n_scenes))
                target = int(rng.integers(n_scenes - 1))
                if target >= scene:
                    target += 1
                base = synth_base(scene, int(rng.integers(2**31)), grid)
                prompt = true_edit_prompt(target, rng)
                susp = registry.edit(model_index, base, prompt, pair_seed(seed, pair_id))
                base_rel = f"images/{pair_id}-base.png"
                susp_rel = f"images/{pair_id}-susp.png"
                save_image(base, out / base_rel)
                save_image(susp, out / susp_rel)
                if model_index in unseen_positive_indices:
                    records.append(PairRecord(pair_id, base_rel, susp_rel, 0, source + "-unseen"))
                else:
                    records.append(PairRecord(pair_id, base_rel, susp_rel, model_index, source))
                    positives.append(susp_rel)

    for mode in neg_modes:
        for _ in range(neg_per_mode):
            pair_id = next_id("neg")
            base_rel = f"images/{pair_id}-base.png"
            susp_rel = f"images/{pair_id}-susp.png"
            if mode == "content":
                scene = int(rng.integers(n_scenes))
                base = synth_base(scene, int(rng.integers(2**31)), grid)
                susp = synth_base(scene, int(rng.integers(2**31)), grid)
            elif mode == "style":
                tint = rng.uniform(-STYLE_TINT_RANGE, STYLE_TINT_RANGE, size=3)
                s1 = int(rng.integers(n_scenes))
                s2 = int(rng.integers(n_scenes - 1))
                if s2 >= s1:
                    s2 += 1
                base = synth_base(s1, int(rng.integers(2**31)), grid, tint=tint)
                susp = synth_base(s2, int(rng.integers(2**31)), grid, tint=tint)
            elif mode == "frames":
                scene = int(rng.integers(n_scenes))
                inst = int(rng.integers(2**31))
                base = synth_base(scene, inst, grid)
                jrng = np.random.default_rng([6947, inst])
                jitter = jrng.normal(size=(grid, grid, 3))
                jitter *= FRAME_JITTER_RMS / max(float(np.sqrt(np.mean(jitter**2))), 1e-12)
                g = content_grid(base.array, grid) + jitter
                frame = _render_base(g, jrng, grid)
                # the second frame carries its own sensor/codec grain
                grain = _zero_mean_per_cell(_quarter_res_noise(jrng, SIDE, SIDE), grid)
                grain *= jrng.uniform(*FRAME_GRAIN_RANGE) / max(
                    float(np.sqrt(np.mean(grain**2))), 1e-12
                )
                susp = ImageBuffer(
                    np.rint(frame.to_float() + grain).clip(0, 255).astype(np.uint8)
                )
            elif mode == "unrelated":
                if not positives:
                    raise ValueError("unrelated mode needs positive pairs to sample from")
                scene = int(rng.integers(n_scenes))
                base = synth_base(scene, int(rng.integers(2**31)), grid)
                donor_rel = positives[int(rng.integers(len(positives)))]
                susp = load_image(out / donor_rel)
            else:
                raise ValueError(f"unknown negative mode {mode!r}")
            save_image(base, out / base_rel)
            save_image(susp, out / susp_rel)
            records.append(PairRecord(pair_id, base_rel, susp_rel, 0, f"sim-{mode}"))

    return Manifest(tuple(records), registry.fingerprint, root=out)
