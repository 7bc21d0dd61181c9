"""Dense optical flow between consecutive grayscale frames.

The solver enforces brightness constancy, Ix*u + Iy*v + It = 0, with a
Horn-Schunck smoothness term of weight alpha, iterated from zero flow:

    u <- ubar - Ix * (Ix*ubar + Iy*vbar + It) / (alpha^2 + Ix^2 + Iy^2)

Intensities are scaled to 0..255 internally so the default alpha=15 carries
the conditioning it has on classic 8-bit imagery. Flow fields serialize to
Middlebury .flo files and colorize to HSV-coded RGB frames (hue = direction,
brightness = magnitude).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, DegenerateFrame, DimensionMismatch, TruncatedFile
from .media_io import Frame

__all__ = [
    "GradientField",
    "FlowField",
    "HsSettings",
    "image_gradients",
    "horn_schunck",
    "flow_to_rgb",
    "write_flo",
    "read_flo",
]

FLO_MAGIC = 202021.25


@dataclass
class GradientField:
    """Spatial gradients of the frame-pair average plus the temporal gradient."""

    ix: np.ndarray
    iy: np.ndarray
    it: np.ndarray

    @property
    def height(self) -> int:
        return self.ix.shape[0]

    @property
    def width(self) -> int:
        return self.ix.shape[1]


@dataclass
class FlowField:
    """Per-pixel displacement in pixels/frame: u horizontal, v vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u/v must be matching 2-d planes, got {self.u.shape} vs {self.v.shape}")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass(frozen=True)
class HsSettings:
    alpha: float = 15.0
    max_iters: int = 200
    tol: float = 1e-4

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


def _check_pair(prev: Frame, nxt: Frame) -> None:
    if prev.channels != 1 or nxt.channels != 1:
        raise DimensionMismatch("flow operates on grayscale frames")
    if prev.data.shape != nxt.data.shape:
        raise DimensionMismatch(
            f"frame sizes differ: {prev.data.shape} vs {nxt.data.shape}"
        )


def _central_diff(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated borders, (d/dx, d/dy)."""
    padded = np.pad(img, 1, mode="edge")
    dx = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    dy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    return dx, dy


def image_gradients(prev: Frame, nxt: Frame) -> GradientField:
    """Gradients feeding the constraint: ix, iy on (prev+next)/2, it = next-prev."""
    _check_pair(prev, nxt)
    avg = (prev.data[0] + nxt.data[0]) * 0.5
    ix, iy = _central_diff(avg)
    return GradientField(ix=ix, iy=iy, it=nxt.data[0] - prev.data[0])


def _neighbor_mean(plane: np.ndarray) -> np.ndarray:
    padded = np.pad(plane, 1, mode="edge")
    return (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]) * 0.25


def horn_schunck(prev: Frame, nxt: Frame, settings: HsSettings = HsSettings()) -> FlowField:
    """Iterate the regularized brightness-constancy update from zero flow.

    Stops after max_iters or once the mean per-pixel update |du|+|dv| drops
    to tol. Identical frames give exactly zero flow (the zero field is a
    fixed point when It is zero everywhere).
    """
    _check_pair(prev, nxt)
    if prev.height * prev.width < 4:
        raise DegenerateFrame(f"{prev.width}x{prev.height} frame is too small to solve")

    # Scale to 0..255 so alpha keeps its classic meaning on 8-bit intensities.
    a = prev.data[0] * 255.0
    b = nxt.data[0] * 255.0
    avg = (a + b) * 0.5
    ix, iy = _central_diff(avg)
    it = b - a
    denom = settings.alpha**2 + ix * ix + iy * iy

    u = np.zeros_like(a)
    v = np.zeros_like(a)
    inv_area = 1.0 / u.size
    for _ in range(settings.max_iters):
        ubar = _neighbor_mean(u)
        vbar = _neighbor_mean(v)
        t = (ix * ubar + iy * vbar + it) / denom
        un = ubar - ix * t
        vn = vbar - iy * t
        delta = (np.abs(un - u).sum() + np.abs(vn - v).sum()) * inv_area
        u, v = un, vn
        if delta <= settings.tol:
            break
    return FlowField(u=u, v=v)


def flow_to_rgb(f: FlowField, cap: float | None = None) -> Frame:
    """Colorize flow: hue = atan2(v, u), saturation 1, value = |flow| / M.

    M is the per-frame max magnitude, or the fixed cap when given; a frame
    with no motion (M = 0) comes out black. HSV converts to RGB with the
    standard hexcone formula.
    """
    mag = f.magnitude()
    scale = float(mag.max()) if cap is None else float(cap)
    if scale <= 0.0:
        return Frame(np.zeros((3, f.height, f.width)))
    value = np.clip(mag / scale, 0.0, 1.0)
    hue = np.degrees(np.arctan2(f.v, f.u)) % 360.0

    hp = hue / 60.0
    sector = np.floor(hp).astype(np.intp) % 6
    frac = hp - np.floor(hp)
    q = value * (1.0 - frac)
    t = value * frac
    zero = np.zeros_like(value)
    # Rows of (r, g, b) per hexcone sector, saturation fixed at 1.
    choices = [
        (value, t, zero),
        (q, value, zero),
        (zero, value, t),
        (zero, q, value),
        (t, zero, value),
        (value, zero, q),
    ]
    rgb = np.zeros((3, f.height, f.width))
    for s, (r, g, b) in enumerate(choices):
        mask = sector == s
        rgb[0][mask] = r[mask]
        rgb[1][mask] = g[mask]
        rgb[2][mask] = b[mask]
    return Frame(np.clip(rgb, 0.0, 1.0))


def write_flo(f: FlowField, path: str | os.PathLike) -> None:
    """Write Middlebury .flo: magic f32, width i32, height i32, (u,v) f32 pairs."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, f.width, f.height))
        interleaved = np.empty((f.height, f.width, 2), dtype=np.float32)
        interleaved[..., 0] = f.u
        interleaved[..., 1] = f.v
        fh.write(interleaved.tobytes())


def read_flo(path: str | os.PathLike) -> FlowField:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise TruncatedFile(f"{path}: missing .flo header")
        magic, width, height = struct.unpack("<fii", head)
        if magic != np.float32(FLO_MAGIC):
            raise BadMagic(f"{path}: magic {magic!r}")
        if width < 1 or height < 1:
            raise TruncatedFile(f"{path}: bad dimensions {width}x{height}")
        payload = fh.read(8 * width * height)
        if len(payload) < 8 * width * height:
            raise TruncatedFile(f"{path}: expected {8 * width * height} payload bytes")
    planes = np.frombuffer(payload, np.float32).reshape(height, width, 2)
    return FlowField(u=planes[..., 0].astype(np.float64), v=planes[..., 1].astype(np.float64))
