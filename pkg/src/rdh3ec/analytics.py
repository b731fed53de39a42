"""Quality metrics, capacity/distortion estimators and the MV loss model."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .frame_io import Frame
from .rdh3 import BitSource, TripleClass, classify, embed_triple

INFINITE_PSNR = math.inf
UNDEFINED = math.nan


def _planes(a: Frame, b: Frame) -> tuple[np.ndarray, np.ndarray]:
    if a.luma.shape != b.luma.shape:
        raise ValueError(f"dimension mismatch: {a.luma.shape} vs {b.luma.shape}")
    return a.luma.astype(np.float64), b.luma.astype(np.float64)


def mse(a: Frame, b: Frame) -> float:
    pa, pb = _planes(a, b)
    return float(np.mean((pa - pb) ** 2))


def psnr(a: Frame, b: Frame) -> float:
    err = mse(a, b)
    if err == 0:
        return INFINITE_PSNR
    return 10.0 * math.log10(255.0 ** 2 / err)


# -- triple census and closed-form estimators --------------------------------

@dataclass(frozen=True)
class ClassCensus:
    """Cover-triple counts: sets C1..C5 of the closed-form estimators plus the extra ZY0 class."""
    c1: int = 0  # Z3
    c2: int = 0  # X0Z
    c3: int = 0  # X00
    c4: int = 0  # XY0
    c5: int = 0  # SHIFT
    c6: int = 0  # ZY0
    xy0_x_gt2: int = 0  # (x, y, 0), |x| > 2, y != 0
    xy0_x_eq1: int = 0  # (x, y, 0), |x| == 1, y != 0
    zy0: int = 0  # (0, y, 0), y != 0
    z001: int = 0  # exactly (0, 0, 1)

    @property
    def total(self) -> int:
        return self.c1 + self.c2 + self.c3 + self.c4 + self.c5 + self.c6


_CLASS_FIELD = {
    TripleClass.Z3: "c1", TripleClass.X0Z: "c2", TripleClass.X00: "c3",
    TripleClass.XY0: "c4", TripleClass.SHIFT: "c5", TripleClass.ZY0: "c6",
}


def census(triples: Iterable[Sequence[int]]) -> ClassCensus:
    counts = {f.name: 0 for f in fields(ClassCensus)}
    for t in triples:
        a, b, c = (int(v) for v in t)
        counts[_CLASS_FIELD[classify((a, b, c))]] += 1
        if c == 0 and b != 0:
            if abs(a) > 2:
                counts["xy0_x_gt2"] += 1
            elif abs(a) == 1:
                counts["xy0_x_eq1"] += 1
            elif a == 0:
                counts["zy0"] += 1
        if (a, b, c) == (0, 0, 1):
            counts["z001"] += 1
    return ClassCensus(**counts)


def census_array(triples: np.ndarray) -> ClassCensus:
    """Vectorised :func:`census` over an (..., 3) integer array."""
    t = np.asarray(triples).reshape(-1, 3)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    b0, c0, a0 = b == 0, c == 0, a == 0
    return ClassCensus(
        c1=int(np.sum(a0 & b0 & c0)),
        c2=int(np.sum(b0 & ~c0)),
        c3=int(np.sum(~a0 & b0 & c0)),
        c4=int(np.sum(~a0 & ~b0 & c0)),
        c5=int(np.sum(~b0 & ~c0)),
        c6=int(np.sum(a0 & ~b0 & c0)),
        xy0_x_gt2=int(np.sum((np.abs(a) > 2) & ~b0 & c0)),
        xy0_x_eq1=int(np.sum((np.abs(a) == 1) & ~b0 & c0)),
        zy0=int(np.sum(a0 & ~b0 & c0)),
        z001=int(np.sum(a0 & b0 & (c == 1))),
    )


@dataclass(frozen=True)
class Estimates:
    ec_pro: float
    ec_rec: float
    d_pro: float
    d_rec: float
    ecdr_pro: float
    ecdr_rec: float
    ec_diff: float
    d_diff: float


def _ratio(num: Fraction, den: Fraction) -> float:
    return float(num / den) if den else UNDEFINED


def estimate_ec_d(cs: ClassCensus) -> Estimates:
    """Closed-form capacity and distortion of this scheme ("pro") and the
    two-bit triple scheme it is compared against ("rec"), term for term."""
    F = Fraction
    ec_pro = F(11, 4) * cs.c1 + F(3, 2) * cs.c2 + F(9, 4) * cs.c3 + F(3, 2) * cs.c4
    ec_rec = F(9, 4) * cs.c1 + cs.c2 + 2 * cs.c3 + cs.c4
    d_pro = F(7, 8) * cs.c1 + cs.c2 + 2 * cs.c3 + F(5, 4) * cs.c4 + 2 * cs.c5
    d_rec = (F(3, 4) * cs.c1 + F(3, 2) * cs.c2 + F(5, 4) * cs.c3
             + F(3, 2) * cs.xy0_x_gt2 + 2 * cs.xy0_x_eq1 + cs.zy0
             + 2 * cs.c5 + F(3, 2) * cs.z001)
    ec_diff = F(1, 2) * cs.c1 + F(1, 2) * cs.c2 + F(1, 4) * cs.c3 + F(1, 2) * cs.c4
    d_diff = (F(1, 8) * cs.c1 - F(1, 2) * cs.c2 + F(3, 4) * cs.c3 - F(1, 4) * cs.xy0_x_gt2
              + F(1, 4) * cs.zy0 - F(1, 4) * cs.z001)
    return Estimates(float(ec_pro), float(ec_rec), float(d_pro), float(d_rec),
                     _ratio(ec_pro, d_pro), _ratio(ec_rec, d_rec), float(ec_diff), float(d_diff))


# Representative covers; expectations are the same for every member of a class.
_REPRESENTATIVE = {
    TripleClass.Z3: (0, 0, 0),
    TripleClass.X0Z: (2, 0, -1),
    TripleClass.X00: (3, 0, 0),
    TripleClass.XY0: (5, 1, 0),
    TripleClass.SHIFT: (1, 2, 3),
    TripleClass.ZY0: (0, 4, 0),
}


def codeword_expectation(cover: Sequence[int]) -> tuple[Fraction, Fraction]:
    """Exact mean bits and mean L1 cost of embedding uniform random bits into ``cover``."""
    bits = Fraction(0)
    cost = Fraction(0)
    for word in itertools.product((0, 1), repeat=3):
        src = BitSource(word)
        marked = embed_triple(cover, src)
        bits += Fraction(src.pos, 8)
        cost += Fraction(sum(abs(m - c) for m, c in zip(marked, cover)), 8)
    return bits, cost


@lru_cache(maxsize=None)
def class_expectations() -> dict[TripleClass, tuple[Fraction, Fraction]]:
    return {cls: codeword_expectation(t) for cls, t in _REPRESENTATIVE.items()}


def expected_ec_d(cs: ClassCensus) -> tuple[float, float]:
    """Capacity and distortion predicted from the enumerated per-class expectations."""
    exp = class_expectations()
    ec = d = Fraction(0)
    for cls, name in _CLASS_FIELD.items():
        n = getattr(cs, name)
        ec += n * exp[cls][0]
        d += n * exp[cls][1]
    return float(ec), float(d)


def measure_ec_d(cover: Sequence[Sequence[int]], trials: int, seed: int) -> tuple[float, float]:
    """Mean bits embedded and mean L1 distortion over ``trials`` full embeddings."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cover = [tuple(int(v) for v in t) for t in cover]
    rng = np.random.default_rng(seed)
    total_bits = total_d = 0
    for _ in range(trials):
        # full embedding: the payload never runs out, so every triple is marked
        src = BitSource(rng.integers(0, 2, size=3 * len(cover)).tolist())
        for t in cover:
            m = embed_triple(t, src)
            total_d += sum(abs(x - y) for x, y in zip(m, t))
        total_bits += src.pos
    return total_bits / trials, total_d / trials


# -- loss model --------------------------------------------------------------

@dataclass(frozen=True)
class LossModelParams:
    n: int
    p: float
    alpha: int

    def __post_init__(self):
        if self.n < 1 or self.alpha < 1 or not 0.0 <= self.p < 1.0:
            raise ValueError(f"invalid loss-model parameters {self}")
        if self.alpha > self.n:
            raise ValueError("alpha must not exceed n")


@dataclass(frozen=True)
class LossModel:
    p_beta: tuple[float, ...]  # index beta - 1
    p_nc: float
    p_c: float


def loss_model(params: LossModelParams) -> LossModel:
    n, p, alpha = params.n, params.p, params.alpha
    weights = [math.comb(n, beta) for beta in range(1, alpha + 1)]
    total = sum(weights)
    p_beta = tuple(Fraction(w, total) for w in weights)
    p_nc = sum(float(pb) * p ** beta for beta, pb in enumerate(p_beta, start=1))
    return LossModel(tuple(float(x) for x in p_beta), p_nc, 1.0 - p_nc)


@dataclass(frozen=True)
class ConcealabilityEstimate:
    conditional_rate: float  # P(unconcealable | MB lost), comparable to P_nc
    conditional_half_width: float
    unconditional_rate: float  # P(MB lost and unconcealable), comparable to p * P_nc
    unconditional_half_width: float
    lost: int
    failures: int
    trials: int


def _half_width(rate: float, n: int) -> float:
    return 1.96 * math.sqrt(rate * (1 - rate) / n) if n else UNDEFINED


def monte_carlo_concealability(params: LossModelParams, trials: int, seed: int,
                               chunk: int = 4096) -> ConcealabilityEstimate:
    """Simulate random slot placement plus Bernoulli losses; count lost MBs whose every copy is lost."""
    n, p, alpha = params.n, params.p, params.alpha
    rng = np.random.default_rng(seed)
    base = np.arange(n * alpha)
    lost_total = fail_total = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        perm = rng.permuted(np.broadcast_to(base, (m, n * alpha)), axis=1)
        hosts = (perm // alpha).reshape(m, n, alpha)  # host MB of each copy, per source MB
        mask = rng.random((m, n)) < p
        host_lost = np.take_along_axis(mask, hosts.reshape(m, -1), axis=1).reshape(m, n, alpha)
        fail = mask & host_lost.all(axis=2)
        lost_total += int(mask.sum())
        fail_total += int(fail.sum())
        done += m
    cond = fail_total / lost_total if lost_total else 0.0
    uncond = fail_total / (n * trials)
    return ConcealabilityEstimate(cond, _half_width(cond, lost_total), uncond,
                                  _half_width(uncond, n * trials), lost_total, fail_total, trials)


# -- per-frame report ----------------------------------------------------------

@dataclass
class MetricsReport:
    experiment: str = ""
    qp: int = 0
    alpha: int = 0
    plr: float = 0.0
    seed: int = 0
    frame: int = 0
    gop_start: bool = False
    psnr: float = UNDEFINED
    mse: float = UNDEFINED
    marked_psnr: float = UNDEFINED
    clean_psnr: float = UNDEFINED
    ec_measured: int = 0
    d_measured: int = 0
    ec_pro: float = UNDEFINED
    ec_rec: float = UNDEFINED
    d_pro: float = UNDEFINED
    d_rec: float = UNDEFINED
    ecdr_pro: float = UNDEFINED
    ecdr_rec: float = UNDEFINED
    p_c: float = UNDEFINED
    p_nc: float = UNDEFINED
    lost_count: int = 0
    concealed_count: int = 0
    black_count: int = 0

    def row(self) -> dict:
        return asdict(self)


REPORT_COLUMNS = tuple(f.name for f in fields(MetricsReport))
