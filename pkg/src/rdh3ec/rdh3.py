"""Reversible data hiding over triples of quantized AC coefficients.

Each triple ``(a, b, c)`` is classified into one of six classes. Four of them
carry a variable-length prefix codeword; the other two are shifted so the
marked triples of every class stay disjoint. Every touched coefficient moves
by exactly one unit.
"""

from __future__ import annotations

from collections import Counter
from enum import Enum
from typing import Iterable, Sequence

Triple = tuple[int, int, int]


class TripleClass(str, Enum):
    Z3 = "Z3"  # (0, 0, 0)
    X0Z = "X0Z"  # (a, 0, c), c != 0
    X00 = "X00"  # (a, 0, 0), a != 0
    XY0 = "XY0"  # (a, b, 0), a != 0, b != 0
    ZY0 = "ZY0"  # (0, b, 0), b != 0
    SHIFT = "SHIFT"  # (a, b, c), b != 0, c != 0


class UnreachablePatternError(ValueError):
    """A marked triple that no embedding can produce (corrupt stream or wrong key)."""


# Fewest bits a triple of each class absorbs when bits remain.
MIN_BITS = {
    TripleClass.Z3: 2,
    TripleClass.X0Z: 1,
    TripleClass.X00: 2,
    TripleClass.XY0: 1,
    TripleClass.ZY0: 0,
    TripleClass.SHIFT: 0,
}

Z3_CODEBOOK: dict[str, Triple] = {
    "000": (0, 0, 0),
    "001": (0, 1, 0),
    "01": (-1, 0, 0),
    "100": (0, -1, 0),
    "101": (1, 0, 0),
    "110": (0, 0, 1),
    "111": (0, 0, -1),
}
_Z3_DECODE = {v: k for k, v in Z3_CODEBOOK.items()}

X0Z_CODES = ("00", "01", "1")
X00_CODES = ("000", "001", "01", "10", "11")
XY0_CODES = ("00", "01", "1")


def sign(x: int) -> int:
    return (x > 0) - (x < 0)


class BitSource:
    """Sequential reader over a bit sequence; reads past the end yield 0."""

    def __init__(self, bits: Iterable[int]):
        self.bits = [int(b) for b in bits]
        self.pos = 0

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.bits)

    def read(self) -> int:
        bit = self.bits[self.pos] if self.pos < len(self.bits) else 0
        self.pos += 1
        return bit

    def read_codeword(self, codes: Iterable[str]) -> str:
        codes = set(codes)
        word = ""
        while word not in codes:
            word += "1" if self.read() else "0"
        return word


def classify(t: Sequence[int]) -> TripleClass:
    a, b, c = t
    if b == 0:
        if c != 0:
            return TripleClass.X0Z
        return TripleClass.X00 if a != 0 else TripleClass.Z3
    if c != 0:
        return TripleClass.SHIFT
    return TripleClass.XY0 if a != 0 else TripleClass.ZY0


def embed_triple(t: Sequence[int], bits: BitSource) -> Triple:
    """Mark one triple, consuming 0 to 3 bits from ``bits``."""
    a, b, c = t
    cls = classify(t)
    if cls is TripleClass.Z3:
        return Z3_CODEBOOK[bits.read_codeword(Z3_CODEBOOK)]
    if cls is TripleClass.X0Z:
        word = bits.read_codeword(X0Z_CODES)
        if word == "00":
            return (a, 1, c)
        if word == "01":
            return (a, -1, c)
        return (a, 0, c + sign(c))
    if cls is TripleClass.X00:
        word = bits.read_codeword(X00_CODES)
        return {
            "000": (a + sign(a), 0, 0),
            "001": (a, 1, 0),
            "01": (a, -1, 0),
            "10": (a, 0, 1),
            "11": (a, 0, -1),
        }[word]
    if cls is TripleClass.XY0:
        word = bits.read_codeword(XY0_CODES)
        b2 = b + sign(b)
        return (a, b2, {"00": 0, "01": 1, "1": -1}[word])
    if cls is TripleClass.ZY0:
        return (0, b + sign(b), 0)
    return (a, b + sign(b), c + sign(c))


def extract_triple(m: Sequence[int]) -> tuple[str, Triple]:
    """Return the codeword hidden in a marked triple and the original triple."""
    a, b, c = (int(v) for v in m)
    ab, ac = abs(b), abs(c)
    if ab == 0:
        if ac == 0:
            if abs(a) <= 1:
                return _Z3_DECODE[(a, 0, 0)], (0, 0, 0)
            return "000", (a - sign(a), 0, 0)
        if ac == 1:
            if a == 0:
                return _Z3_DECODE[(0, 0, c)], (0, 0, 0)
            return ("10" if c == 1 else "11"), (a, 0, 0)
        return "1", (a, 0, c - sign(c))
    if ab == 1:
        if c == 0:
            if a == 0:
                return _Z3_DECODE[(0, b, 0)], (0, 0, 0)
            return ("001" if b == 1 else "01"), (a, 0, 0)
        return ("00" if b == 1 else "01"), (a, 0, c)
    if c == 0:
        if a != 0:
            return "00", (a, b - sign(b), 0)
        return "", (0, b - sign(b), 0)
    if ac == 1:
        if a == 0:
            raise UnreachablePatternError(f"marked triple {(a, b, c)} cannot be produced by embedding")
        return ("01" if c == 1 else "1"), (a, b - sign(b), 0)
    return "", (a, b - sign(b), c - sign(c))


def embed_stream(triples: Sequence[Sequence[int]], bits: Iterable[int]) -> tuple[list[Triple], int]:
    """Embed ``bits`` into ``triples`` in order.

    Embedding stops once the payload is used up; the remaining triples pass
    through untouched. If the stream runs out first, triples after the last
    bit-carrying one are left untouched as well. A final codeword that outruns the payload is padded
    with zeros. Returns the marked triples and the number of payload bits
    actually embedded (less than ``len(bits)`` when capacity runs out).
    """
    src = BitSource(bits)
    cover = [tuple(int(v) for v in t) for t in triples]
    marked: list[Triple] = []
    last = -1  # index of the last triple that absorbed bits
    for i, t in enumerate(cover):
        if src.exhausted:
            marked.append(t)
            continue
        before = src.pos
        marked.append(embed_triple(t, src))
        if src.pos > before:
            last = i
    if not src.exhausted:
        # Shortfall: zero-bit shifts after the last carrier would be invisible
        # to an extractor that stops at the embedded bit count.
        marked[last + 1:] = cover[last + 1:]
    return marked, min(src.pos, len(src))


def extract_stream(marked: Sequence[Sequence[int]], expected_bits: int) -> tuple[list[int], list[Triple]]:
    """Inverse of :func:`embed_stream` given the number of embedded bits."""
    bits: list[int] = []
    recovered: list[Triple] = []
    for m in marked:
        if len(bits) >= expected_bits:
            recovered.append(tuple(int(v) for v in m))
            continue
        word, cover = extract_triple(m)
        bits.extend(1 if ch == "1" else 0 for ch in word)
        recovered.append(cover)
    if len(bits) < expected_bits:
        raise ValueError(f"stream holds {len(bits)} bits, expected {expected_bits}")
    return bits[:expected_bits], recovered


def guaranteed_capacity(triples: Iterable[Sequence[int]]) -> int:
    """Bits a stream is certain to absorb whatever the payload."""
    return sum(MIN_BITS[classify(t)] for t in triples)


def compute_triple_histogram(triples: Iterable[Sequence[int]]) -> Counter:
    return Counter(tuple(int(v) for v in t) for t in triples)
