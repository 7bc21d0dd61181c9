"""Face region-of-interest handling.

No detector is embedded: boxes come from a sidecar file written by whatever
detector the user ran, or from two deterministic fallbacks (a centered square,
or the square maximizing inter-frame motion energy).

Sidecar format: one line per frame, either `frame_index,x,y,w,h` or
`frame_index,absent` (comma-separated, LF-terminated, UTF-8).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import AbsentBox, DuplicateIndex, NotEnoughFrames, RoiParseError
from .media_io import Frame, FrameSequence

__all__ = [
    "RoiBox",
    "load_roi_sidecar",
    "crop_roi",
    "fallback_center_box",
    "motion_energy_box",
]

DEFAULT_MARGIN_FRAC = 0.25


@dataclass(frozen=True)
class RoiBox:
    frame_index: int
    x: int = 0
    y: int = 0
    w: int = 0
    h: int = 0
    present: bool = True


def load_roi_sidecar(path: str | os.PathLike) -> list[RoiBox]:
    """Parse a sidecar file into boxes sorted by frame index."""
    boxes: list[RoiBox] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                idx = int(parts[0])
            except ValueError:
                raise RoiParseError(f"{path}:{lineno}: bad frame index {parts[0]!r}")
            if idx in seen:
                raise DuplicateIndex(f"{path}:{lineno}: frame {idx} listed twice")
            seen.add(idx)
            if len(parts) == 2 and parts[1] == "absent":
                boxes.append(RoiBox(idx, present=False))
                continue
            if len(parts) != 5:
                raise RoiParseError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                x, y, w, h = (int(p) for p in parts[1:])
            except ValueError:
                raise RoiParseError(f"{path}:{lineno}: non-integer box field")
            if x < 0 or y < 0 or w < 1 or h < 1:
                raise RoiParseError(f"{path}:{lineno}: degenerate box {x},{y},{w},{h}")
            boxes.append(RoiBox(idx, x, y, w, h))
    boxes.sort(key=lambda b: b.frame_index)
    return boxes


def crop_roi(f: Frame, b: RoiBox, margin_frac: float = DEFAULT_MARGIN_FRAC) -> Frame:
    """Crop the box, expanded by margin_frac * max(w, h) per side and clamped."""
    if not b.present:
        raise AbsentBox(f"frame {b.frame_index} has no face box")
    margin = int(round(margin_frac * max(b.w, b.h)))
    x0 = max(b.x - margin, 0)
    y0 = max(b.y - margin, 0)
    x1 = min(b.x + b.w + margin, f.width)
    y1 = min(b.y + b.h + margin, f.height)
    if x1 <= x0 or y1 <= y0:
        raise AbsentBox(f"box {b} lies outside the {f.width}x{f.height} frame")
    return Frame(f.data[:, y0:y1, x0:x1])


def fallback_center_box(f: Frame, frac: float = 1.0) -> RoiBox:
    """Centered square of side floor(frac * min(w, h))."""
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"frac must be in (0, 1], got {frac}")
    side = max(int(frac * min(f.width, f.height)), 1)
    return RoiBox(
        frame_index=-1,
        x=(f.width - side) // 2,
        y=(f.height - side) // 2,
        w=side,
        h=side,
    )


def motion_energy_box(s: FrameSequence, frac: float = 0.5) -> RoiBox:
    """Square of side floor(frac * min(w, h)) with the most inter-frame motion.

    Energy is the mean absolute frame difference accumulated over the whole
    sequence; ties resolve to the smallest y, then smallest x.
    """
    if len(s) < 2:
        raise NotEnoughFrames("motion energy needs at least 2 frames")
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"frac must be in (0, 1], got {frac}")
    first = s.frames[0]
    if first.channels != 1:
        raise ValueError("motion_energy_box expects grayscale frames")
    h, w = first.height, first.width
    side = max(int(frac * min(w, h)), 1)

    energy = np.zeros((h, w))
    for prev, nxt in zip(s.frames, s.frames[1:]):
        energy += np.abs(nxt.data[0] - prev.data[0])
    energy /= len(s) - 1

    # Summed-area table turns each window sum into four lookups.
    sat = np.zeros((h + 1, w + 1))
    sat[1:, 1:] = energy.cumsum(0).cumsum(1)
    sums = sat[side:, side:] - sat[:-side, side:] - sat[side:, :-side] + sat[:-side, :-side]
    best = np.unravel_index(np.argmax(sums), sums.shape)  # argmax is first max, row-major
    return RoiBox(frame_index=-1, x=int(best[1]), y=int(best[0]), w=side, h=side)
