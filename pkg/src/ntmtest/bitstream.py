"""Bit sequences, file ingestion and block partitioning.

Bits are stored packed, most significant bit of each byte first, in a
read-only numpy array.  Public positions are 1-based: ``seq[1]`` is the
first bit and ``seq.substring(s, t)`` holds bits ``s..t`` inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .errors import MalformedInputError, SequenceTooShortError

BitOrder = Literal["msb_first", "lsb_first"]

_WHITESPACE = frozenset(b" \t\r\n\v\f")


class BitSequence:
    """Immutable sequence of ``n`` bits."""

    __slots__ = ("_packed", "_n")

    def __init__(self, packed, n: int):
        if isinstance(packed, (bytes, bytearray, memoryview)):
            packed = np.frombuffer(packed, dtype=np.uint8)
        packed = np.asarray(packed, dtype=np.uint8)
        if n < 0 or n > 8 * packed.size:
            raise ValueError(f"bit length {n} does not fit in {packed.size} bytes")
        nbytes = (n + 7) // 8
        packed = packed[:nbytes].copy()
        if n % 8:
            # keep the padding bits zero so equality and hashing are well defined
            packed[-1] &= (0xFF << (8 - n % 8)) & 0xFF
        packed.setflags(write=False)
        self._packed = packed
        self._n = n

    @classmethod
    def from_bits(cls, bits) -> "BitSequence":
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(arr), arr.size)

    @property
    def packed(self) -> np.ndarray:
        """Packed bytes, msb first, trailing pad bits zero."""
        return self._packed

    def bits(self) -> np.ndarray:
        return np.unpackbits(self._packed, count=self._n)

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i: int) -> int:
        if not 1 <= i <= self._n:
            raise IndexError(f"bit index {i} outside 1..{self._n}")
        byte, off = divmod(i - 1, 8)
        return int(self._packed[byte] >> (7 - off)) & 1

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits().tolist())

    def substring(self, s: int, t: int) -> "BitSequence":
        """Bits ``s..t`` (1-based, inclusive); empty when ``t == s - 1``."""
        if s < 1 or t > self._n or t < s - 1:
            raise IndexError(f"substring [{s},{t}] outside sequence of length {self._n}")
        if (s - 1) % 8 == 0:
            return BitSequence(self._packed[(s - 1) // 8:], t - s + 1)
        return BitSequence.from_bits(self.bits()[s - 1:t])

    def to_ascii(self) -> str:
        return (self.bits() + ord("0")).tobytes().decode("ascii")

    def to_bytes(self, bit_order: BitOrder = "msb_first") -> bytes:
        if bit_order == "msb_first":
            return self._packed.tobytes()
        if bit_order == "lsb_first":
            return np.packbits(self.bits(), bitorder="little").tobytes()
        raise ValueError(f"unknown bit order {bit_order!r}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitSequence):
            return NotImplemented
        return self._n == other._n and np.array_equal(self._packed, other._packed)

    def __hash__(self) -> int:
        return hash((self._n, self._packed.tobytes()))

    def __repr__(self) -> str:
        if self._n <= 64:
            return f"BitSequence('{self.to_ascii()}')"
        return f"BitSequence(n={self._n})"


@dataclass(frozen=True)
class BlockSet:
    blocks: tuple[BitSequence, ...]
    N: int
    M: int

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self) -> int:
        return self.N


def from_ascii(text: str) -> BitSequence:
    """Parse a string of '0'/'1' characters; whitespace is ignored.

    Raises MalformedInputError with the 1-based character position of the
    first offending character.
    """
    raw = np.frombuffer(text.encode("utf-8", "surrogatepass"), dtype=np.uint8)
    is_bit = (raw == 48) | (raw == 49)
    if not is_bit.all():
        ws = np.isin(raw, np.frombuffer(bytes(_WHITESPACE), dtype=np.uint8))
        bad = np.flatnonzero(~(is_bit | ws))
        if bad.size:
            # report the character position in the decoded text, not the utf-8 offset
            pos = len(raw[: bad[0]].tobytes().decode("utf-8", "ignore")) + 1
            raise MalformedInputError(pos, text[pos - 1])
        raw = raw[is_bit]
    return BitSequence.from_bits(raw - 48)


def from_bytes(data: bytes, bit_order: BitOrder = "msb_first") -> BitSequence:
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if bit_order == "msb_first":
        return BitSequence(arr, 8 * arr.size)
    if bit_order == "lsb_first":
        return BitSequence.from_bits(np.unpackbits(arr, bitorder="little"))
    raise ValueError(f"unknown bit order {bit_order!r}")


def read_file(path, fmt: Literal["ascii", "raw"] = "ascii", bit_order: BitOrder = "msb_first") -> BitSequence:
    path = Path(path)
    if fmt == "ascii":
        return from_ascii(path.read_text(encoding="utf-8", errors="surrogateescape"))
    if fmt == "raw":
        return from_bytes(path.read_bytes(), bit_order)
    raise ValueError(f"unknown input format {fmt!r}")


def write_file(seq: BitSequence, path, fmt: Literal["ascii", "raw"] = "ascii",
               bit_order: BitOrder = "msb_first") -> None:
    path = Path(path)
    if fmt == "ascii":
        path.write_text(seq.to_ascii())
    elif fmt == "raw":
        if len(seq) % 8:
            raise ValueError("raw output requires a whole number of bytes")
        path.write_bytes(seq.to_bytes(bit_order))
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def partition(seq: BitSequence, N: int) -> BlockSet:
    """Split ``seq`` into ``N`` consecutive blocks of ``M = floor(n/N)`` bits.

    Bits past ``N*M`` are dropped.
    """
    if N < 1:
        raise ValueError(f"block count must be positive, got {N}")
    M = len(seq) // N
    if M == 0:
        raise SequenceTooShortError(f"{len(seq)} bits cannot form {N} non-empty blocks")
    if M % 8 == 0:
        p = seq.packed
        step = M // 8
        blocks = tuple(BitSequence(p[j * step:(j + 1) * step], M) for j in range(N))
    else:
        bits = seq.bits()
        blocks = tuple(BitSequence.from_bits(bits[j * M:(j + 1) * M]) for j in range(N))
    return BlockSet(blocks, N, M)
