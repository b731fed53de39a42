"""I.i.d. per-macroblock erasure channel."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def channel_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


@dataclass(frozen=True, eq=False)
class LossMask:
    flags: np.ndarray  # bool, True = lost
    plr: float
    seed: int

    def __len__(self) -> int:
        return self.flags.size

    @property
    def n_lost(self) -> int:
        return int(self.flags.sum())

    @property
    def intact(self) -> np.ndarray:
        return ~self.flags


def draw_mask(n_mbs: int, plr: float, seed: int, frame_index: int = 0) -> LossMask:
    if not 0.0 <= plr < 1.0:
        raise ValueError(f"plr must lie in [0, 1), got {plr}")
    flags = channel_rng(seed, frame_index).random(n_mbs) < plr
    flags.flags.writeable = False
    return LossMask(flags, plr, seed)


def apply_mask(coeffs: np.ndarray, mask: LossMask) -> list[np.ndarray | None]:
    """Per-MB received data; lost macroblocks become ``None``."""
    if coeffs.shape[0] != len(mask):
        raise ValueError("mask length does not match macroblock count")
    return [None if lost else coeffs[k].copy() for k, lost in enumerate(mask.flags)]


def pack_masks(masks: Sequence[LossMask]) -> bytes:
    """One bit per MB, LSB first, ceil(N / 8) bytes per frame."""
    return b"".join(np.packbits(m.flags.astype(np.uint8), bitorder="little").tobytes() for m in masks)


def unpack_masks(data: bytes, n_mbs: int, n_frames: int, plr: float = float("nan"),
                 seed: int = -1) -> list[LossMask]:
    per = (n_mbs + 7) // 8
    if len(data) != per * n_frames:
        raise ValueError(f"mask sidecar has {len(data)} bytes, expected {per * n_frames}")
    raw = np.frombuffer(data, dtype=np.uint8)
    out = []
    for t in range(n_frames):
        bits = np.unpackbits(raw[t * per:(t + 1) * per], bitorder="little")[:n_mbs].astype(bool)
        out.append(LossMask(bits, plr, seed))
    return out


def write_masks(path: str | Path, masks: Sequence[LossMask]) -> None:
    Path(path).write_bytes(pack_masks(masks))


def read_masks(path: str | Path, n_mbs: int, n_frames: int) -> list[LossMask]:
    return unpack_masks(Path(path).read_bytes(), n_mbs, n_frames)
