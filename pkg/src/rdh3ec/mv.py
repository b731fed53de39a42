"""Motion vectors as hidden payload: estimation, coding, repetition and keyed scrambling.

Every frame carries ``N * alpha`` copies of its motion vectors. Copy ``c``
(copy ``c % alpha`` of macroblock ``c // alpha``) is written into slot
``perm[c]``; slot ``s`` occupies frame-payload bits ``[10 s, 10 s + 10)`` and
is nominally hosted by macroblock ``s // alpha``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import MB, Macroblock, mb_origin
from .frame_io import Frame

SEARCH_RANGE = 15
MV_BITS = 10
_FIELD_BITS = 5


class CapacityExhaustedError(ValueError):
    def __init__(self, needed: int, available: int, max_alpha: int):
        self.needed = needed
        self.available = available
        self.max_alpha = max_alpha
        super().__init__(f"payload needs {needed} bits but the frame holds {available}; "
                         f"largest feasible alpha is {max_alpha}")

    def __reduce__(self):
        return type(self), (self.needed, self.available, self.max_alpha)


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int

    def __post_init__(self):
        if max(abs(self.dx), abs(self.dy)) > SEARCH_RANGE:
            raise ValueError(f"motion vector {(self.dx, self.dy)} outside +/-{SEARCH_RANGE}")


ZERO_MV = MotionVector(0, 0)


def mv_bit_length(search_range: int = SEARCH_RANGE) -> int:
    return 2 * int(np.ceil(np.log2(2 * search_range + 1)))


def estimate_mv(mb: Macroblock, reference: Frame, search_range: int = SEARCH_RANGE) -> MotionVector:
    """Full-search SAD block matching over candidates lying fully inside ``reference``.

    Ties go to the smallest ``|dx| + |dy|``, then to the smallest ``(dy, dx)``.
    """
    x, y = mb_origin(mb.index, reference.width)
    x_lo, x_hi = max(-search_range, -x), min(search_range, reference.width - MB - x)
    y_lo, y_hi = max(-search_range, -y), min(search_range, reference.height - MB - y)
    window = reference.luma[y + y_lo:y + y_hi + MB, x + x_lo:x + x_hi + MB].astype(np.int32)
    cands = sliding_window_view(window, (MB, MB))  # (ny, nx, 16, 16)
    sad = np.abs(cands - mb.samples.astype(np.int32)).sum(axis=(2, 3))
    dys, dxs = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1]
    order = np.lexsort((dxs.ravel(), dys.ravel(), (np.abs(dxs) + np.abs(dys)).ravel(), sad.ravel()))
    best = order[0]
    return MotionVector(int(dxs.ravel()[best]), int(dys.ravel()[best]))


def _candidate_order(search_range: int) -> np.ndarray:
    """All (dy, dx) candidates sorted by the tie-break rule, so argmin picks the winner."""
    r = np.arange(-search_range, search_range + 1)
    dys, dxs = (g.ravel() for g in np.meshgrid(r, r, indexing="ij"))
    order = np.lexsort((dxs, dys, np.abs(dxs) + np.abs(dys)))
    return np.stack([dys[order], dxs[order]], axis=1)


def estimate_frame_mvs(frame: Frame, reference: Frame | None,
                       search_range: int = SEARCH_RANGE) -> list[MotionVector]:
    """Same result as :func:`estimate_mv` on every macroblock, computed one displacement at a time."""
    h, w = frame.height, frame.width
    rows, cols = h // MB, w // MB
    if reference is None:
        return [ZERO_MV] * (rows * cols)
    r = search_range
    cur = frame.luma.astype(np.int32)
    ref = np.pad(reference.luma.astype(np.int32), r)
    ys = np.arange(rows)[:, None] * MB
    xs = np.arange(cols)[None, :] * MB
    cands = _candidate_order(r)
    sad = np.empty((len(cands), rows, cols), dtype=np.int64)
    for i, (dy, dx) in enumerate(cands):
        diff = np.abs(cur - ref[r + dy:r + dy + h, r + dx:r + dx + w])
        s = diff.reshape(rows, MB, cols, MB).sum(axis=(1, 3))
        inside = (ys + dy >= 0) & (ys + dy + MB <= h) & (xs + dx >= 0) & (xs + dx + MB <= w)
        sad[i] = np.where(inside, s, np.iinfo(np.int64).max)
    best = cands[np.argmin(sad, axis=0).ravel()]
    return [MotionVector(int(dx), int(dy)) for dy, dx in best]


def encode_mv(mv: MotionVector) -> list[int]:
    """Offset binary: each component plus 15 as a 5-bit field, dx first, MSB first."""
    out = []
    for comp in (mv.dx, mv.dy):
        v = comp + SEARCH_RANGE
        out.extend((v >> k) & 1 for k in range(_FIELD_BITS - 1, -1, -1))
    return out


def decode_mv(bits: Sequence[int]) -> MotionVector:
    if len(bits) != MV_BITS:
        raise ValueError(f"expected {MV_BITS} bits, got {len(bits)}")
    comps = []
    for f in range(2):
        v = 0
        for b in bits[f * _FIELD_BITS:(f + 1) * _FIELD_BITS]:
            v = (v << 1) | int(b)
        if v > 2 * SEARCH_RANGE:
            raise ValueError(f"field value {v} is not a valid motion-vector component")
        comps.append(v - SEARCH_RANGE)
    return MotionVector(*comps)


@dataclass(frozen=True, eq=False)
class SlotMap:
    n_mbs: int
    alpha: int
    key: int
    perm: np.ndarray  # copy index -> slot index

    @property
    def n_slots(self) -> int:
        return self.n_mbs * self.alpha

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    def source_mb(self, slot: int) -> int:
        return int(self.inverse[slot]) // self.alpha

    def host_mb(self, slot: int) -> int:
        return slot // self.alpha


def build_slotmap(n_mbs: int, alpha: int, key: int, frame_index: int = 0,
                  placement: str = "random") -> SlotMap:
    """Keyed Fisher-Yates permutation of the ``n_mbs * alpha`` MV copies.

    ``placement="changeless"`` gives the identity map: every macroblock hosts
    its own copies.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if n_mbs < 1:
        raise ValueError("n_mbs must be >= 1")
    n = n_mbs * alpha
    perm = np.arange(n, dtype=np.int64)
    if placement == "random":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(key, spawn_key=(frame_index,))))
        for i in range(n - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            perm[i], perm[j] = perm[j], perm[i]
    elif placement != "changeless":
        raise ValueError(f"unknown placement {placement!r}")
    perm.flags.writeable = False
    return SlotMap(n_mbs, alpha, key, perm)


@dataclass(frozen=True, eq=False)
class MarkPayload:
    """Frame payload plus the framing that says which macroblock carries which bits.

    ``segments[k]`` lists ``(start, length)`` ranges of ``bits`` embedded in
    macroblock ``k``, in embedding order: its own nominal ``L`` bits first (as
    many as fit), then any overflow spilled in from earlier macroblocks.
    """
    bits: np.ndarray  # uint8, N * alpha * 10
    alpha: int
    segments: tuple[tuple[tuple[int, int], ...], ...]
    spill_events: tuple[tuple[int, int, int], ...]  # (from_mb, to_mb, n_bits)

    @property
    def n_mbs(self) -> int:
        return len(self.segments)

    @property
    def bits_per_mb(self) -> int:
        return self.alpha * MV_BITS

    def mb_bit_count(self, k: int) -> int:
        return sum(n for _, n in self.segments[k])

    def mb_bits(self, k: int) -> list[int]:
        out: list[int] = []
        for start, n in self.segments[k]:
            out.extend(self.bits[start:start + n].tolist())
        return out

    def slot_hosts(self, slot: int) -> set[int]:
        return slot_hosts(self.segments, slot)


def uniform_segments(n_mbs: int, alpha: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    per = alpha * MV_BITS
    return tuple(((k * per, per),) for k in range(n_mbs))


def slot_hosts(segments, slot: int) -> set[int]:
    lo, hi = slot * MV_BITS, (slot + 1) * MV_BITS
    return {k for k, segs in enumerate(segments)
            for start, n in segs if start < hi and start + n > lo}


def _frame_bits(mvs: Sequence[MotionVector], slotmap: SlotMap) -> np.ndarray:
    inv = slotmap.inverse
    codes = np.array([encode_mv(mv) for mv in mvs], dtype=np.uint8)
    return codes[inv // slotmap.alpha].reshape(-1)


def build_payload(mvs: Sequence[MotionVector], slotmap: SlotMap, capacities: Sequence[int]) -> MarkPayload:
    n, alpha = slotmap.n_mbs, slotmap.alpha
    if len(mvs) != n or len(capacities) != n:
        raise ValueError("need one motion vector and one capacity per macroblock")
    per = alpha * MV_BITS
    total = int(sum(capacities))
    if total < n * per:
        raise CapacityExhaustedError(n * per, total, total // (n * MV_BITS))

    segments: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    free = []
    for k, cap in enumerate(capacities):
        own = min(per, int(cap))
        if own:
            segments[k].append((k * per, own))
        free.append(int(cap) - own)
    spills = []
    for k, cap in enumerate(capacities):
        start, left = k * per + min(per, int(cap)), per - min(per, int(cap))
        j = k
        while left:
            j = (j + 1) % n
            if j == k or free[j] == 0:
                continue
            take = min(left, free[j])
            segments[j].append((start, take))
            spills.append((k, j, take))
            free[j] -= take
            start += take
            left -= take
    return MarkPayload(_frame_bits(mvs, slotmap), alpha,
                       tuple(tuple(s) for s in segments), tuple(spills))


@dataclass(frozen=True)
class RecoveredMVs:
    candidates: tuple[tuple[MotionVector, ...], ...]
    final: tuple[MotionVector | None, ...]  # None = no usable copy


def recover_mvs(extracted: Sequence[Sequence[int] | None], valid: Sequence[bool], slotmap: SlotMap,
                segments=None) -> RecoveredMVs:
    """Reassemble slots from intact macroblocks and vote per source macroblock.

    A slot is usable only if every macroblock carrying one of its bits is
    intact. Ties in the vote, and macroblocks with no usable copy, get no MV.
    """
    n, alpha = slotmap.n_mbs, slotmap.alpha
    if segments is None:
        segments = uniform_segments(n, alpha)
    total = n * alpha * MV_BITS
    buf = np.zeros(total, dtype=np.uint8)
    known = np.zeros(total, dtype=bool)
    for k in range(n):
        if not valid[k]:
            continue
        bits = extracted[k]
        pos = 0
        for start, length in segments[k]:
            buf[start:start + length] = bits[pos:pos + length]
            known[start:start + length] = True
            pos += length
    slot_ok = known.reshape(-1, MV_BITS).all(axis=1)
    inv = slotmap.inverse
    cands: list[list[MotionVector]] = [[] for _ in range(n)]
    for s in np.flatnonzero(slot_ok):
        try:
            mv = decode_mv(buf[s * MV_BITS:(s + 1) * MV_BITS].tolist())
        except ValueError:
            continue
        cands[int(inv[s]) // alpha].append(mv)
    final: list[MotionVector | None] = []
    for c in cands:
        if not c:
            final.append(None)
            continue
        top = Counter(c).most_common(2)
        final.append(top[0][0] if len(top) == 1 or top[0][1] > top[1][1] else None)
    return RecoveredMVs(tuple(tuple(c) for c in cands), tuple(final))
