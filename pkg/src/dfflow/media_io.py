"""Frame ingestion and basic image ops.

Frames are planar float64 arrays shaped (channels, height, width) with every
sample in [0, 1]. Inputs come from Y4M (YUV4MPEG2) streams or from numbered
PGM/PNG image sequences; nothing here touches compressed containers.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    DecodeError,
    DimensionMismatch,
    EmptyInput,
    MalformedHeader,
    NotEnoughFrames,
    TruncatedFrame,
    UnsupportedColorspace,
)

__all__ = [
    "Frame",
    "FrameSequence",
    "decode_y4m",
    "read_y4m",
    "load_image_sequence",
    "load_frame_dir",
    "to_grayscale",
    "resize_bilinear",
    "sample_uniform",
    "read_image",
    "write_image",
    "write_frame_dir",
]

# Rec.601 luma weights, also used for the full-range YCbCr -> RGB inverse.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


@dataclass
class Frame:
    """One image: planar float64 samples in [0, 1], shape (c, h, w)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3 or self.data.shape[0] not in (1, 3):
            raise ValueError(f"frame must be (1|3, h, w), got {self.data.shape}")
        if self.data.shape[1] < 1 or self.data.shape[2] < 1:
            raise ValueError(f"frame must be at least 1x1, got {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise ValueError("frame contains non-finite samples")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("frame samples outside [0, 1]")


@dataclass
class FrameSequence:
    """Ordered frames plus the source indices they were taken from."""

    frames: list[Frame]
    frame_indices: list[int] = field(default_factory=list)
    source_id: str = ""

    def __post_init__(self) -> None:
        if not self.frame_indices:
            self.frame_indices = list(range(len(self.frames)))
        if len(self.frame_indices) != len(self.frames):
            raise ValueError("frame_indices length differs from frames")
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ValueError("frame_indices must be strictly increasing")
        shapes = {f.data.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError(f"frames disagree on shape: {shapes}")

    def __len__(self) -> int:
        return len(self.frames)


# --- Y4M ------------------------------------------------------------------

# Chroma plane downsampling factors (x, y) per supported 8-bit colorspace.
_Y4M_SUBSAMPLING = {
    "420": (2, 2),
    "420jpeg": (2, 2),
    "420mpeg2": (2, 2),
    "420paldv": (2, 2),
    "422": (2, 1),
    "444": (1, 1),
}


def _yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-range Rec.601 YCbCr -> RGB, planes already at luma resolution."""
    cb = u - 128.0
    cr = v - 128.0
    r = y + 1.402 * cr
    g = y - (_LUMA_B * 1.772 / _LUMA_G) * cb - (_LUMA_R * 1.402 / _LUMA_G) * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b]) / 255.0
    return np.clip(rgb, 0.0, 1.0)


def decode_y4m(stream: bytes, source_id: str = "") -> FrameSequence:
    """Decode a YUV4MPEG2 byte stream into RGB frames.

    Supports 8-bit 4:2:0 / 4:2:2 / 4:4:4 streams; chroma is upsampled by
    replication before conversion.
    """
    nl = stream.find(b"\n")
    if nl < 0:
        raise MalformedHeader("no stream header line")
    try:
        header = stream[:nl].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc
    fields = header.split(" ")
    if fields[0] != "YUV4MPEG2":
        raise MalformedHeader(f"bad magic {fields[0]!r}")

    width = height = 0
    colorspace = "420jpeg"
    for tok in fields[1:]:
        if not tok:
            continue
        key, val = tok[0], tok[1:]
        if key == "W":
            width = int(val) if val.isdigit() else 0
        elif key == "H":
            height = int(val) if val.isdigit() else 0
        elif key == "C":
            colorspace = val
    if width < 1 or height < 1:
        raise MalformedHeader(f"missing or invalid dimensions in {header!r}")
    if colorspace not in _Y4M_SUBSAMPLING:
        raise UnsupportedColorspace(colorspace)
    sx, sy = _Y4M_SUBSAMPLING[colorspace]
    if width % sx or height % sy:
        raise MalformedHeader(
            f"{width}x{height} not divisible for C{colorspace} chroma planes"
        )

    ysize = width * height
    csize = (width // sx) * (height // sy)
    frames: list[Frame] = []
    pos = nl + 1
    while pos < len(stream):
        eol = stream.find(b"\n", pos)
        if eol < 0:
            raise TruncatedFrame("unterminated FRAME marker")
        marker = stream[pos:eol]
        if marker[:5] != b"FRAME":
            raise MalformedHeader(f"expected FRAME marker, got {marker[:16]!r}")
        pos = eol + 1
        end = pos + ysize + 2 * csize
        if end > len(stream):
            raise TruncatedFrame(
                f"frame {len(frames)}: need {ysize + 2 * csize} bytes, "
                f"have {len(stream) - pos}"
            )
        y = np.frombuffer(stream, np.uint8, ysize, pos).astype(np.float64)
        u = np.frombuffer(stream, np.uint8, csize, pos + ysize).astype(np.float64)
        v = np.frombuffer(stream, np.uint8, csize, pos + ysize + csize).astype(np.float64)
        y = y.reshape(height, width)
        u = u.reshape(height // sy, width // sx)
        v = v.reshape(height // sy, width // sx)
        if (sx, sy) != (1, 1):
            u = np.repeat(np.repeat(u, sy, axis=0), sx, axis=1)
            v = np.repeat(np.repeat(v, sy, axis=0), sx, axis=1)
        frames.append(Frame(_yuv_to_rgb(y, u, v)))
        pos = end

    return FrameSequence(frames, list(range(len(frames))), source_id)


def read_y4m(path: str | os.PathLike) -> FrameSequence:
    with open(path, "rb") as fh:
        return decode_y4m(fh.read(), source_id=str(path))


# --- PGM / PNG ------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pgm(path: str | os.PathLike) -> Frame:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise DecodeError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise DecodeError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DecodeError(f"{path}: bad PGM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise DecodeError(f"{path}: unsupported PGM ({w}x{h}, maxval {maxval})")
    pos += 1  # single whitespace byte before raster
    if len(data) - pos < w * h:
        raise DecodeError(f"{path}: truncated PGM payload")
    raster = np.frombuffer(data, np.uint8, w * h, pos).reshape(h, w)
    return Frame(raster.astype(np.float64) / 255.0)


def _write_pgm(frame: Frame, path: str | os.PathLike) -> None:
    if frame.channels != 1:
        raise ValueError("PGM output requires a grayscale frame")
    raster = np.rint(frame.data[0] * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (frame.width, frame.height))
        fh.write(raster.tobytes())


def _read_png(path: str | os.PathLike) -> Frame:
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)[None]
    elif img.mode == "RGB":
        arr = np.asarray(img, dtype=np.float64).transpose(2, 0, 1)
    else:
        raise DecodeError(f"{path}: unsupported PNG mode {img.mode}")
    return Frame(arr / 255.0)


def _write_png(frame: Frame, path: str | os.PathLike) -> None:
    raster = np.rint(frame.data * 255.0).astype(np.uint8)
    if frame.channels == 1:
        img = Image.fromarray(raster[0], mode="L")
    else:
        img = Image.fromarray(raster.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG")


def read_image(path: str | os.PathLike) -> Frame:
    """Read a single PGM (gray) or PNG (8-bit gray/RGB) image."""
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix == ".png":
        return _read_png(path)
    raise DecodeError(f"{path}: unsupported image format {suffix!r}")


def write_image(frame: Frame, path: str | os.PathLike) -> None:
    """Write a frame as PGM (1-channel) or PNG, chosen by file suffix."""
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".pgm":
        _write_pgm(frame, path)
    elif suffix == ".png":
        _write_png(frame, path)
    else:
        raise ValueError(f"unsupported image format {suffix!r}")


def load_image_sequence(paths: list[str | os.PathLike], source_id: str = "") -> FrameSequence:
    """Load an ordered list of same-sized PGM/PNG files as one sequence."""
    if not paths:
        raise EmptyInput("no image paths given")
    frames = []
    for path in paths:
        frame = read_image(path)
        if frames and frame.data.shape != frames[0].data.shape:
            raise DimensionMismatch(
                f"{path}: {frame.width}x{frame.height}x{frame.channels} differs "
                f"from first frame"
            )
        frames.append(frame)
    return FrameSequence(frames, list(range(len(frames))), source_id)


def load_frame_dir(path: str | os.PathLike) -> FrameSequence:
    """Load every .pgm/.png file in a directory, in name order."""
    names = sorted(
        n for n in os.listdir(path)
        if os.path.splitext(n)[1].lower() in (".pgm", ".png")
    )
    if not names:
        raise EmptyInput(f"{path}: no PGM/PNG frames found")
    return load_image_sequence(
        [os.path.join(path, n) for n in names], source_id=str(path)
    )


def write_frame_dir(seq: FrameSequence, out_dir: str | os.PathLike, suffix: str = "pgm") -> list[str]:
    """Write a sequence as numbered %06d images; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, frame in enumerate(seq.frames):
        path = os.path.join(out_dir, f"{i:06d}.{suffix}")
        write_image(frame, path)
        paths.append(path)
    return paths


# --- pixel ops ------------------------------------------------------------

def to_grayscale(f: Frame) -> Frame:
    """Rec.601 luma; 1-channel frames pass through unchanged."""
    if f.channels == 1:
        return f
    r, g, b = f.data
    gray = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    return Frame(np.clip(gray, 0.0, 1.0))


def resize_bilinear(f: Frame, out_w: int, out_h: int) -> Frame:
    """Bilinear resample with half-pixel-centre mapping, clamped at edges.

    Sample positions follow src = (dst + 0.5) * (src_size / dst_size) - 0.5,
    so resizing to the input size is the identity.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    h, w = f.height, f.width
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[None, :, None]
    wx = (sx - x0)[None, None, :]
    src = f.data
    top = (1.0 - wx) * src[:, y0[:, None], x0] + wx * src[:, y0[:, None], x1]
    bot = (1.0 - wx) * src[:, y1[:, None], x0] + wx * src[:, y1[:, None], x1]
    out = (1.0 - wy) * top + wy * bot
    return Frame(np.clip(out, 0.0, 1.0))


def sample_uniform(s: FrameSequence, n: int) -> FrameSequence:
    """Pick n frames at positions floor(i * len / n); always includes frame 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(s):
        raise NotEnoughFrames(f"requested {n} of {len(s)} frames")
    picks = [(i * len(s)) // n for i in range(n)]
    return FrameSequence(
        [s.frames[k] for k in picks],
        [s.frame_indices[k] for k in picks],
        s.source_id,
    )
