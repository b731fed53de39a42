"""Simplified intra codec: 4x4 integer core transform plus a uniform quantizer.

No prediction (a flat 128 is subtracted before the transform), no per-position
scaling, no entropy coding. The quantized AC coefficients of every 4x4 block
are grouped into zigzag triples that host the hidden payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .frame_io import Frame, check_dimensions

MB = 16
BLOCKS_PER_MB = 16
TRIPLES_PER_BLOCK = 5
TRIPLES_PER_MB = BLOCKS_PER_MB * TRIPLES_PER_BLOCK

CORE = np.array(
    [[1, 1, 1, 1],
     [2, 1, -1, -2],
     [1, -1, -1, 1],
     [1, -2, 2, -1]],
    dtype=np.float64,
)
# CORE @ CORE.T = diag(4, 10, 4, 10)
CORE_INV = CORE.T @ np.diag([1 / 4, 1 / 10, 1 / 4, 1 / 10])

# (row, col) of each zigzag position in a 4x4 block
ZIGZAG = (
    (0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
    (2, 1), (3, 0), (3, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3),
)
_ZZ_RASTER = np.array([r * 4 + c for r, c in ZIGZAG])


def qstep(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6)


def round_half_even(x: np.ndarray) -> np.ndarray:
    # Half-away rounding would make qp 20 and 22 zero exactly the same
    # integer coefficients (Qstep(22) == 8), flattening capacity versus qp.
    return np.rint(x)


@dataclass(frozen=True)
class Macroblock:
    index: int
    samples: np.ndarray  # (16, 16) uint8


@dataclass(frozen=True)
class QuantizedMacroblock:
    index: int
    qp: int
    coeffs: np.ndarray  # (16 blocks, 16 zigzag) int32

    def __eq__(self, other):
        if not isinstance(other, QuantizedMacroblock):
            return NotImplemented
        return (self.index, self.qp) == (other.index, other.qp) and np.array_equal(self.coeffs, other.coeffs)


def mb_grid(width: int, height: int) -> tuple[int, int]:
    return width // MB, height // MB


def mb_origin(index: int, width: int) -> tuple[int, int]:
    """Top-left (x, y) of macroblock ``index`` in a frame ``width`` wide."""
    cols = width // MB
    return (index % cols) * MB, (index // cols) * MB


def partition(frame: Frame) -> list[Macroblock]:
    cols, rows = mb_grid(frame.width, frame.height)
    out = []
    for i in range(rows * cols):
        x, y = mb_origin(i, frame.width)
        out.append(Macroblock(i, frame.luma[y:y + MB, x:x + MB].copy()))
    return out


def reassemble(mbs: Sequence[Macroblock], width: int, height: int) -> Frame:
    check_dimensions(width, height)
    luma = np.zeros((height, width), dtype=np.uint8)
    for mb in mbs:
        x, y = mb_origin(mb.index, width)
        luma[y:y + MB, x:x + MB] = mb.samples
    return Frame(luma)


# Frame-level kernels work on arrays shaped (N, 16, 16): MB, block, zigzag.

def _to_blocks(luma: np.ndarray) -> np.ndarray:
    """(H, W) plane -> (N, 16 blocks, 4, 4) in MB raster, block raster order."""
    h, w = luma.shape
    rows, cols = h // MB, w // MB
    b = luma.reshape(rows, 4, 4, cols, 4, 4)  # mby, by, y, mbx, bx, x
    b = b.transpose(0, 3, 1, 4, 2, 5)  # mby, mbx, by, bx, y, x
    return b.reshape(rows * cols, BLOCKS_PER_MB, 4, 4)


def _from_blocks(blocks: np.ndarray, width: int, height: int) -> np.ndarray:
    rows, cols = height // MB, width // MB
    b = blocks.reshape(rows, cols, 4, 4, 4, 4).transpose(0, 2, 4, 1, 3, 5)
    return b.reshape(height, width)


def forward_transform(blocks: np.ndarray) -> np.ndarray:
    return np.einsum("ij,...jk,lk->...il", CORE, blocks, CORE)


def inverse_transform(coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,...jk,lk->...il", CORE_INV, coeffs, CORE_INV)


def quantize_blocks(blocks: np.ndarray, qp: int) -> np.ndarray:
    """Pixel blocks (..., 4, 4) -> zigzag-ordered quantized coefficients (..., 16)."""
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in [0, 51], got {qp}")
    coeffs = forward_transform(blocks.astype(np.float64) - 128.0)
    q = round_half_even(coeffs / qstep(qp))
    flat = q.reshape(*q.shape[:-2], 16)
    return flat[..., _ZZ_RASTER].astype(np.int32)


def dequantize_coeffs(zz: np.ndarray, qp: int) -> np.ndarray:
    """Zigzag levels (..., 16) -> dequantized transform coefficients (..., 4, 4)."""
    raster = np.empty(zz.shape, dtype=np.float64)
    raster[..., _ZZ_RASTER] = zz * qstep(qp)
    return raster.reshape(*zz.shape[:-1], 4, 4)


def reconstruct_blocks(zz: np.ndarray, qp: int) -> np.ndarray:
    pixels = inverse_transform(dequantize_coeffs(zz, qp)) + 128.0
    return np.clip(round_half_even(pixels), 0, 255).astype(np.uint8)


def quantize_frame(frame: Frame, qp: int) -> np.ndarray:
    return quantize_blocks(_to_blocks(frame.luma), qp)


def reconstruct_frame(coeffs: np.ndarray, qp: int, width: int, height: int) -> Frame:
    return Frame(_from_blocks(reconstruct_blocks(coeffs, qp), width, height))


def transform_quantize(mb: Macroblock, qp: int) -> QuantizedMacroblock:
    blocks = _to_blocks(mb.samples)[0]
    return QuantizedMacroblock(mb.index, qp, quantize_blocks(blocks, qp))


def dequantize_inverse(qmb: QuantizedMacroblock) -> Macroblock:
    blocks = reconstruct_blocks(qmb.coeffs, qmb.qp)
    return Macroblock(qmb.index, _from_blocks(blocks, MB, MB))


def to_triples(qmb: QuantizedMacroblock | np.ndarray) -> list[tuple[int, int, int]]:
    coeffs = qmb.coeffs if isinstance(qmb, QuantizedMacroblock) else qmb
    return [tuple(t) for t in np.asarray(coeffs)[:, 1:].reshape(TRIPLES_PER_MB, 3).tolist()]


def from_triples(stream: Sequence[Sequence[int]], template: QuantizedMacroblock) -> QuantizedMacroblock:
    if len(stream) != TRIPLES_PER_MB:
        raise ValueError(f"expected {TRIPLES_PER_MB} triples, got {len(stream)}")
    coeffs = template.coeffs.copy()
    coeffs[:, 1:] = np.asarray(stream, dtype=np.int32).reshape(BLOCKS_PER_MB, 15)
    return QuantizedMacroblock(template.index, template.qp, coeffs)


def frame_triples(coeffs: np.ndarray) -> np.ndarray:
    """(N, 16, 16) levels -> (N, 80, 3) triples (a copy)."""
    return coeffs[:, :, 1:].reshape(coeffs.shape[0], TRIPLES_PER_MB, 3)


# -- marked-stream container -------------------------------------------------

MAGIC = b"RDH3"
VERSION = 1
_HEADER = struct.Struct("<4sBHHBBHQ")


@dataclass(frozen=True)
class ContainerHeader:
    width: int
    height: int
    qp: int
    alpha: int
    frame_count: int
    key: int


def write_container(path: str | Path, header: ContainerHeader, frames: Sequence[np.ndarray]) -> None:
    if len(frames) != header.frame_count:
        raise ValueError("frame count does not match header")
    n = (header.width // MB) * (header.height // MB)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, header.width, header.height, header.qp,
                              header.alpha, header.frame_count, header.key))
        for coeffs in frames:
            if coeffs.shape != (n, BLOCKS_PER_MB, 16):
                raise ValueError(f"frame coefficients have shape {coeffs.shape}")
            if coeffs.min(initial=0) < -32768 or coeffs.max(initial=0) > 32767:
                raise OverflowError("coefficient outside int16 range")
            fh.write(np.ascontiguousarray(coeffs, dtype="<i2").tobytes())


def read_container(path: str | Path) -> tuple[ContainerHeader, list[np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("container too short")
    magic, version, w, h, qp, alpha, count, key = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not an RDH3 v1 container")
    header = ContainerHeader(w, h, qp, alpha, count, key)
    n = (w // MB) * (h // MB)
    per_frame = n * BLOCKS_PER_MB * 16
    body = np.frombuffer(data, dtype="<i2", offset=_HEADER.size)
    if body.size != per_frame * count:
        raise ValueError("container body length does not match header")
    frames = [body[i * per_frame:(i + 1) * per_frame].astype(np.int32).reshape(n, BLOCKS_PER_MB, 16)
              for i in range(count)]
    return header, frames
