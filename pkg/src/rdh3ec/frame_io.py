"""Raw luma I/O and deterministic synthetic test sequences."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

LAYOUTS = ("Y8", "YUV420")
SYNTH_KINDS = ("moving-gradient", "translating-texture")
MAX_SHIFT = 15


def check_dimensions(width: int, height: int) -> None:
    if width <= 0 or height <= 0 or width % 16 or height % 16:
        raise ValueError(f"dimensions must be positive multiples of 16, got {width}x{height}")


@dataclass(frozen=True, eq=False)
class Frame:
    luma: np.ndarray  # (height, width) uint8, read-only

    def __post_init__(self):
        luma = np.array(self.luma, dtype=np.uint8, copy=True)
        if luma.ndim != 2:
            raise ValueError("luma must be 2-D")
        check_dimensions(luma.shape[1], luma.shape[0])
        luma.flags.writeable = False
        object.__setattr__(self, "luma", luma)

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return np.array_equal(self.luma, other.luma)


@dataclass(frozen=True)
class Sequence:
    frames: tuple[Frame, ...]
    gop_length: int = 10

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.gop_length < 1:
            raise ValueError("gop_length must be >= 1")
        if self.frames and len({(f.width, f.height) for f in self.frames}) != 1:
            raise ValueError("all frames must share dimensions")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i) -> Frame:
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


def frame_bytes(width: int, height: int, layout: str) -> int:
    if layout == "Y8":
        return width * height
    if layout == "YUV420":
        return width * height * 3 // 2
    raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def load_raw_sequence(path: str | Path, width: int, height: int, count: int,
                      layout: str = "Y8", gop_length: int = 10) -> Sequence:
    """Read ``count`` luma planes from a raw Y8 or planar YUV 4:2:0 file."""
    check_dimensions(width, height)
    stride = frame_bytes(width, height, layout)
    size = os.path.getsize(path)
    if size < stride * count:
        raise ValueError(f"{path}: file too short ({size} bytes) for {count} frames of {stride} bytes")
    raw = np.fromfile(path, dtype=np.uint8, count=stride * count).reshape(count, stride)
    frames = [Frame(raw[i, :width * height].reshape(height, width)) for i in range(count)]
    return Sequence(tuple(frames), gop_length)


def save_frame(frame: Frame, path: str | Path) -> None:
    Path(path).write_bytes(frame.luma.tobytes())


def save_sequence(seq, path: str | Path) -> None:
    with open(path, "wb") as fh:
        for frame in seq:
            fh.write(frame.luma.tobytes())


def _texture_field(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    fine = gaussian_filter(rng.standard_normal((height, width)), 1.5, mode="wrap")
    coarse = gaussian_filter(rng.standard_normal((height, width)), 6.0, mode="wrap")
    return 128.0 + 2.5 * fine / fine.std() + 20.0 * coarse / coarse.std()


def _gradient_field(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (xx * np.cos(theta) + yy * np.sin(theta)) * 0.25
    out = 128.0 + ramp - ramp.mean()
    for _ in range(6):
        period = rng.uniform(24.0, 96.0)
        phase = rng.uniform(0, 2 * np.pi)
        direction = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(4.0, 12.0)
        out += amp * np.cos(2 * np.pi * (xx * np.cos(direction) + yy * np.sin(direction)) / period + phase)
    return out + 0.5 * rng.standard_normal((height, width))


def synth_sequence(kind: str, seed: int, width: int, height: int, count: int,
                   shift: tuple[int, int] = (3, -2), gop_length: int = 10) -> Sequence:
    """Deterministic synthetic sequence whose content translates by ``shift`` per frame.

    Frame ``t + 1`` sampled at ``(x, y)`` equals frame ``t`` at
    ``(x + dx, y + dy)`` wherever both lie inside the frame, so the true
    motion vector of every interior macroblock is ``shift``.
    """
    check_dimensions(width, height)
    if count < 1:
        raise ValueError("count must be >= 1")
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {SYNTH_KINDS}")
    dx, dy = shift
    if max(abs(dx), abs(dy)) > MAX_SHIFT:
        raise ValueError(f"shift components must lie in [-{MAX_SHIFT}, {MAX_SHIFT}]")
    span_x, span_y = (count - 1) * abs(dx), (count - 1) * abs(dy)
    fh, fw = height + span_y, width + span_x
    rng = np.random.default_rng([seed, SYNTH_KINDS.index(kind)])
    fld = _texture_field(rng, fh, fw) if kind == "translating-texture" else _gradient_field(rng, fh, fw)
    fld = np.clip(np.rint(fld), 0, 255).astype(np.uint8)
    x0 = span_x if dx < 0 else 0
    y0 = span_y if dy < 0 else 0
    frames = []
    for t in range(count):
        y, x = y0 + t * dy, x0 + t * dx
        frames.append(Frame(fld[y:y + height, x:x + width]))
    return Sequence(tuple(frames), gop_length)
