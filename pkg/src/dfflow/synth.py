"""Labeled synthetic clips: coherent motion vs. locally inconsistent motion.

A textured canvas drifts at a constant sub-pixel velocity; frames are
bilinear-sampled windows into it. "Coherent" clips translate rigidly.
"Inconsistent" clips follow the same global trajectory but a face-sized
central block additionally receives an independent random displacement each
frame, which shows up as discontinuous local flow. Every clip is a pure
function of its spec, so datasets regenerate byte-identically.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, TooFewSamples
from .media_io import Frame, FrameSequence, write_frame_dir

__all__ = ["SynthSpec", "gen_clip", "gen_dataset", "central_region"]

KINDS = ("coherent", "inconsistent")
TEXTURES = ("gaussian_blobs", "checker")
BLOBS_PER_112 = 120  # density of the proven flow-recovery texture


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    frames: int
    size: int = 112
    seed: int = 0
    texture: str = "gaussian_blobs"
    jitter_mag: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.texture not in TEXTURES:
            raise InvalidSpec(f"texture must be one of {TEXTURES}, got {self.texture!r}")
        if self.frames < 2:
            raise InvalidSpec(f"frames must be >= 2, got {self.frames}")
        if self.size < 16:
            raise InvalidSpec(f"size must be >= 16, got {self.size}")
        if self.kind == "inconsistent" and self.jitter_mag <= 0:
            raise InvalidSpec("jitter_mag must be > 0 for inconsistent clips")


def central_region(size: int) -> tuple[int, int, int, int]:
    """(x, y, w, h) of the face-sized block that jitters in inconsistent clips."""
    side = size // 2
    off = (size - side) // 2
    return off, off, side, side


def _render_canvas(rng: np.random.Generator, spec: SynthSpec, extent: int) -> np.ndarray:
    if spec.texture == "checker":
        cell = 8
        yy, xx = np.mgrid[0:extent, 0:extent]
        return 0.2 + 0.6 * ((xx // cell + yy // cell) % 2)
    n_blobs = max(1, round(BLOBS_PER_112 * (extent / 112.0) ** 2))
    cx = rng.uniform(0, extent, n_blobs)
    cy = rng.uniform(0, extent, n_blobs)
    sig = rng.uniform(2.5, 5.0, n_blobs)
    amp = rng.uniform(0.5, 1.0, n_blobs)
    yy, xx = np.mgrid[0:extent, 0:extent].astype(np.float64)
    img = np.zeros((extent, extent))
    for k in range(n_blobs):
        img += amp[k] * np.exp(
            -((xx - cx[k]) ** 2 + (yy - cy[k]) ** 2) / (2 * sig[k] ** 2)
        )
    return img / img.max() * 0.95


def _bilinear_window(canvas: np.ndarray, ox: float, oy: float, size: int) -> np.ndarray:
    """Sample a size x size window whose top-left corner sits at (ox, oy)."""
    extent = canvas.shape[0]
    xs = np.clip(np.arange(size) + ox, 0.0, extent - 1.0)
    ys = np.clip(np.arange(size) + oy, 0.0, extent - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, extent - 1)
    y1 = np.minimum(y0 + 1, extent - 1)
    wx = (xs - x0)[None, :]
    wy = (ys - y0)[:, None]
    top = (1.0 - wx) * canvas[y0[:, None], x0] + wx * canvas[y0[:, None], x1]
    bot = (1.0 - wx) * canvas[y1[:, None], x0] + wx * canvas[y1[:, None], x1]
    return (1.0 - wy) * top + wy * bot


def gen_clip(spec: SynthSpec, velocity: tuple[float, float] | None = None) -> FrameSequence:
    """Render the clip for a spec; `velocity` overrides the seeded draw (test hook)."""
    rng = np.random.default_rng(spec.seed)
    pad = spec.frames + math.ceil(spec.jitter_mag) + 2
    extent = spec.size + 2 * pad
    canvas = _render_canvas(rng, spec, extent)

    speed = rng.uniform(0.3, 1.0)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    vx, vy = speed * math.cos(angle), speed * math.sin(angle)
    if velocity is not None:
        vx, vy = velocity

    cx, cy, cw, ch = central_region(spec.size)
    frames = []
    for t in range(spec.frames):
        # Sampling at -v*t makes the pattern itself move by +v per frame.
        ox = pad - vx * t
        oy = pad - vy * t
        window = _bilinear_window(canvas, ox, oy, spec.size)
        if spec.kind == "inconsistent":
            r = rng.uniform(0.0, spec.jitter_mag)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            jx, jy = r * math.cos(theta), r * math.sin(theta)
            block = _bilinear_window(canvas, ox + cx - jx, oy + cy - jy, spec.size)
            window[cy : cy + ch, cx : cx + cw] = block[:ch, :cw]
        frames.append(Frame(np.clip(window, 0.0, 1.0)))
    return FrameSequence(
        frames=frames, source_id=f"synth-{spec.kind}-{spec.seed}"
    )


def gen_dataset(
    n_real: int,
    n_fake: int,
    out_dir: str | os.PathLike,
    base_seed: int,
    frames: int = 10,
    size: int = 112,
    texture: str = "gaussian_blobs",
    jitter_mag: float = 2.0,
) -> Path:
    """Write PGM clip directories plus a manifest CSV; returns the manifest path.

    Clip i gets seed base_seed + i (reals first, then fakes), so the same
    base_seed always regenerates byte-identical files.
    """
    if n_real < 0 or n_fake < 0 or n_real + n_fake == 0:
        raise TooFewSamples("need at least one clip")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["clip_path,label"]
    index = 0
    for kind, label, count in (("coherent", 0, n_real), ("inconsistent", 1, n_fake)):
        prefix = "real" if label == 0 else "fake"
        for i in range(count):
            spec = SynthSpec(
                kind=kind,
                frames=frames,
                size=size,
                seed=base_seed + index,
                texture=texture,
                jitter_mag=jitter_mag,
            )
            clip_dir = out_dir / f"{prefix}_{i:06d}"
            write_frame_dir(gen_clip(spec), clip_dir, suffix="pgm")
            lines.append(f"{clip_dir.name},{label}")
            index += 1
    manifest = out_dir / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
