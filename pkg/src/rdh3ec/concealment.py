"""Encoder/decoder pipeline: embed MVs, lose macroblocks, extract, recover and conceal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import analytics
from .channel import LossMask, draw_mask
from .codec import MB, TRIPLES_PER_MB, frame_triples, mb_grid, mb_origin, quantize_frame, reconstruct_frame
from .frame_io import Frame
from .frame_io import Sequence as VideoSequence
from .mv import (MarkPayload, MotionVector, SlotMap, build_payload, build_slotmap, estimate_frame_mvs,
                 recover_mvs, uniform_segments)
from .rdh3 import embed_stream, extract_stream, guaranteed_capacity

INTACT, CONCEALED, BLACK = "intact", "concealed", "black"
PLACEMENTS = ("random", "changeless")


@dataclass(frozen=True, eq=False)
class EncodedFrame:
    index: int
    gop_start: bool
    cover: np.ndarray  # (N, 16, 16) quantized levels
    marked: np.ndarray  # same shape, payload embedded
    recon: Frame  # decode of the unmarked levels
    mvs: tuple[MotionVector, ...]
    capacities: tuple[int, ...]
    payload: MarkPayload
    slotmap: SlotMap

    @property
    def distortion(self) -> int:
        return int(np.abs(self.marked - self.cover).sum())

    @property
    def payload_bits(self) -> int:
        return int(self.payload.bits.size)


@dataclass(frozen=True, eq=False)
class ConcealmentOutcome:
    status: tuple[str, ...]
    frame: Frame
    mvs: tuple[MotionVector | None, ...]

    def count(self, status: str) -> int:
        return sum(s == status for s in self.status)


def _embed_mb(triples: list, bits: list[int]) -> list:
    marked, n = embed_stream(triples, bits)
    if n != len(bits):
        raise RuntimeError(f"macroblock absorbed {n} of {len(bits)} bits")
    return marked


def embed_frame(cover: np.ndarray, mvs: Sequence[MotionVector], slotmap: SlotMap,
                ) -> tuple[np.ndarray, MarkPayload, tuple[int, ...]]:
    """Embed one frame's MV payload into its quantized levels."""
    triples = frame_triples(cover).tolist()
    caps = tuple(guaranteed_capacity(t) for t in triples)
    payload = build_payload(mvs, slotmap, caps)
    marked = cover.copy()
    for k, mb_triples in enumerate(triples):
        bits = payload.mb_bits(k)
        if bits:
            marked[k, :, 1:] = np.asarray(_embed_mb(mb_triples, bits), dtype=np.int32).reshape(16, 15)
    return marked, payload, caps


def encode_sequence(seq: VideoSequence, qp: int, alpha: int, key: int,
                    placement: str = "random") -> list[EncodedFrame]:
    """Quantize every frame, estimate MVs against the previous reconstruction and embed them.

    The first frame of each GOP has no reference, so its payload is all zero vectors.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    w, h = seq.width, seq.height
    cols, rows = mb_grid(w, h)
    n = cols * rows
    out = []
    prev = None
    for t, frame in enumerate(seq):
        gop_start = t % seq.gop_length == 0
        cover = quantize_frame(frame, qp)
        recon = reconstruct_frame(cover, qp, w, h)
        mvs = estimate_frame_mvs(frame, None if gop_start else prev)
        slotmap = build_slotmap(n, alpha, key, t, placement)
        marked, payload, caps = embed_frame(cover, mvs, slotmap)
        out.append(EncodedFrame(t, gop_start, cover, marked, recon, tuple(mvs), caps, payload, slotmap))
        prev = recon
    return out


def _copy_block(reference: Frame, x: int, y: int, mv: MotionVector) -> np.ndarray:
    rx = min(max(x + mv.dx, 0), reference.width - MB)
    ry = min(max(y + mv.dy, 0), reference.height - MB)
    return reference.luma[ry:ry + MB, rx:rx + MB]


def decode_frame(received: Sequence[np.ndarray | None], mask: LossMask, slotmap: SlotMap, qp: int,
                 reference: Frame | None, width: int, height: int, segments=None) -> ConcealmentOutcome:
    """Extract, restore and reconstruct intact MBs; conceal lost ones from recovered MVs.

    ``received[k]`` is the (16, 16) marked level array of macroblock ``k`` or
    ``None`` when lost. ``segments`` is the payload framing; ``None`` means
    every macroblock carries exactly its own ``alpha * 10`` bits.
    """
    n = slotmap.n_mbs
    if len(received) != n or len(mask) != n:
        raise ValueError("received stream, mask and slot map disagree on macroblock count")
    if segments is None:
        segments = uniform_segments(n, slotmap.alpha)
    levels = np.zeros((n, 16, 16), dtype=np.int32)
    extracted: list[list[int] | None] = [None] * n
    valid = [False] * n
    for k in range(n):
        if mask.flags[k] or received[k] is None:
            continue
        expected = sum(length for _, length in segments[k])
        mb_levels = np.array(received[k], dtype=np.int32)
        triples = mb_levels[:, 1:].reshape(TRIPLES_PER_MB, 3).tolist()
        bits, recovered = extract_stream(triples, expected)
        mb_levels[:, 1:] = np.asarray(recovered, dtype=np.int32).reshape(16, 15)
        levels[k] = mb_levels
        extracted[k] = bits
        valid[k] = True

    recovered_mvs = recover_mvs(extracted, valid, slotmap, segments)
    luma = reconstruct_frame(levels, qp, width, height).luma.copy()
    status = []
    for k in range(n):
        if valid[k]:
            status.append(INTACT)
            continue
        x, y = mb_origin(k, width)
        mv = recovered_mvs.final[k]
        if mv is not None and reference is not None:
            luma[y:y + MB, x:x + MB] = _copy_block(reference, x, y, mv)
            status.append(CONCEALED)
        else:
            luma[y:y + MB, x:x + MB] = 0
            status.append(BLACK)
    return ConcealmentOutcome(tuple(status), Frame(luma), recovered_mvs.final)


def decode_sequence(encoded: Sequence[EncodedFrame], masks: Sequence[LossMask], qp: int,
                    width: int, height: int) -> list[ConcealmentOutcome]:
    out = []
    prev = None
    for enc, mask in zip(encoded, masks):
        received = [None if lost else enc.marked[k] for k, lost in enumerate(mask.flags)]
        ref = None if enc.gop_start else prev
        outcome = decode_frame(received, mask, enc.slotmap, qp, ref, width, height, enc.payload.segments)
        out.append(outcome)
        prev = outcome.frame
    return out


def frame_report(seq: VideoSequence, enc: EncodedFrame, outcome: ConcealmentOutcome, qp: int, alpha: int,
                 plr: float, seed: int, experiment: str = "") -> analytics.MetricsReport:
    original = seq[enc.index]
    est = analytics.estimate_ec_d(analytics.census_array(frame_triples(enc.cover)))
    model = analytics.loss_model(analytics.LossModelParams(enc.slotmap.n_mbs, plr, alpha))
    marked_frame = reconstruct_frame(enc.marked, qp, original.width, original.height)
    return analytics.MetricsReport(
        experiment=experiment, qp=qp, alpha=alpha, plr=plr, seed=seed, frame=enc.index,
        gop_start=enc.gop_start,
        psnr=analytics.psnr(original, outcome.frame), mse=analytics.mse(original, outcome.frame),
        marked_psnr=analytics.psnr(original, marked_frame), clean_psnr=analytics.psnr(original, enc.recon),
        ec_measured=enc.payload_bits, d_measured=enc.distortion,
        ec_pro=est.ec_pro, ec_rec=est.ec_rec, d_pro=est.d_pro, d_rec=est.d_rec,
        ecdr_pro=est.ecdr_pro, ecdr_rec=est.ecdr_rec, p_c=model.p_c, p_nc=model.p_nc,
        lost_count=len(outcome.status) - outcome.count(INTACT),
        concealed_count=outcome.count(CONCEALED), black_count=outcome.count(BLACK),
    )


@dataclass(frozen=True, eq=False)
class PipelineResult:
    encoded: tuple[EncodedFrame, ...]
    masks: tuple[LossMask, ...]
    outcomes: tuple[ConcealmentOutcome, ...]
    reports: tuple[analytics.MetricsReport, ...]


def draw_masks(n_mbs: int, n_frames: int, plr: float, seed: int) -> list[LossMask]:
    return [draw_mask(n_mbs, plr, seed, t) for t in range(n_frames)]


def run_pipeline(seq: VideoSequence, qp: int, alpha: int, key: int, plr: float, seed: int,
                 placement: str = "random", encoded: Sequence[EncodedFrame] | None = None,
                 experiment: str = "") -> PipelineResult:
    """Encode, embed, transmit and conceal every frame of ``seq``.

    Pass ``encoded`` to reuse an encoder run across channel seeds; it must come
    from :func:`encode_sequence` with the same ``qp``, ``alpha``, ``key`` and
    ``placement``.
    """
    if encoded is None:
        encoded = encode_sequence(seq, qp, alpha, key, placement)
    n = encoded[0].slotmap.n_mbs
    masks = draw_masks(n, len(encoded), plr, seed)
    outcomes = decode_sequence(encoded, masks, qp, seq.width, seq.height)
    reports = [frame_report(seq, e, o, qp, alpha, plr, seed, experiment) for e, o in zip(encoded, outcomes)]
    return PipelineResult(tuple(encoded), tuple(masks), tuple(outcomes), tuple(reports))
