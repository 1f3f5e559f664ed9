"""Deterministic bit sources: MT19937 and AES-128 in counter mode.

MT19937 emits each 32-bit output word most significant bit first.  The
AES keystream encrypts 128-bit big-endian counter blocks and emits the
ciphertext bytes msb first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .bitstream import BitSequence

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF

_N, _M = 624, 397
_MATRIX_A = np.uint32(0x9908B0DF)
_UPPER = np.uint32(0x80000000)
_LOWER = np.uint32(0x7FFFFFFF)


class MT19937:
    """MT19937 with the reference ``init_genrand`` seeding.

    The state twist is vectorized in four slices that respect the
    recurrence's read-after-write order.
    """

    def __init__(self, seed: int):
        mt = [seed & _MASK32]
        for i in range(1, _N):
            prev = mt[-1]
            mt.append((1812433253 * (prev ^ (prev >> 30)) + i) & _MASK32)
        self._mt = np.array(mt, dtype=np.uint32)
        self._index = _N

    def _twist_slice(self, lo: int, hi: int) -> None:
        mt = self._mt
        i = np.arange(lo, hi)
        y = (mt[i] & _UPPER) | (mt[(i + 1) % _N] & _LOWER)
        mag = np.where(y & 1, _MATRIX_A, np.uint32(0))
        mt[i] = mt[(i + _M) % _N] ^ (y >> 1) ^ mag

    def _twist(self) -> None:
        self._twist_slice(0, _N - _M)
        self._twist_slice(_N - _M, 2 * (_N - _M))
        self._twist_slice(2 * (_N - _M), _N - 1)
        self._twist_slice(_N - 1, _N)
        self._index = 0

    def words(self, count: int) -> np.ndarray:
        """The next ``count`` tempered 32-bit outputs."""
        out = np.empty(count, dtype=np.uint32)
        filled = 0
        while filled < count:
            if self._index >= _N:
                self._twist()
            take = min(count - filled, _N - self._index)
            out[filled:filled + take] = self._mt[self._index:self._index + take]
            self._index += take
            filled += take
        y = out
        y ^= y >> 11
        y ^= (y << 7) & np.uint32(0x9D2C5680)
        y ^= (y << 15) & np.uint32(0xEFC60000)
        y ^= y >> 18
        return y

    def genrand_int32(self) -> int:
        return int(self.words(1)[0])


def aes128_ctr_keystream(key: bytes, counter: bytes, nbytes: int) -> bytes:
    if len(key) != 16 or len(counter) != 16:
        raise ValueError("AES-128-CTR needs a 16-byte key and a 16-byte initial counter block")
    enc = Cipher(algorithms.AES(key), modes.CTR(counter)).encryptor()
    return enc.update(bytes(nbytes)) + enc.finalize()


@dataclass(frozen=True)
class GeneratorSpec:
    kind: Literal["mt19937", "aes128_ctr"]
    seed: int = 0  # mt19937
    key: bytes = b""  # aes128_ctr
    counter: int = 0  # aes128_ctr initial counter block, as an integer

    def __post_init__(self):
        if self.kind == "mt19937":
            if not 0 <= self.seed <= _MASK32:
                raise ValueError(f"MT19937 seed must fit in 32 bits, got {self.seed}")
        elif self.kind == "aes128_ctr":
            if len(self.key) != 16:
                raise ValueError("AES-128 key must be 16 bytes")
            if not 0 <= self.counter < 1 << 128:
                raise ValueError("counter block must fit in 128 bits")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "mt19937":
            return {"kind": self.kind, "seed": self.seed}
        return {"kind": self.kind, "key": self.key.hex(), "counter": format(self.counter, "032x")}


def generate_bytes(spec: GeneratorSpec, nbytes: int) -> bytes:
    if spec.kind == "mt19937":
        words = MT19937(spec.seed).words((nbytes + 3) // 4)
        return words.astype(">u4").tobytes()[:nbytes]
    return aes128_ctr_keystream(spec.key, spec.counter.to_bytes(16, "big"), nbytes)


def generate(spec: GeneratorSpec, n_bits: int) -> BitSequence:
    """The first ``n_bits`` of the stream described by ``spec``."""
    if n_bits < 0:
        raise ValueError("n_bits must be nonnegative")
    return BitSequence(np.frombuffer(generate_bytes(spec, (n_bits + 7) // 8), dtype=np.uint8), n_bits)


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fmix32(h: int) -> int:
    # bijective on 32-bit integers
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK32
    h ^= h >> 16
    return h


def seed_for_index(base_seed: int, index: int, kind: str = "mt19937") -> GeneratorSpec:
    """Generator for sequence ``index`` of an experiment.

    MT19937 seeds are a bijective mix of ``index`` offset by a hash of the
    base seed, so distinct indices below 2^32 never share a seed.  AES
    streams share a key derived from the base seed and start 2^64 counter
    blocks apart.
    """
    if index < 0:
        raise ValueError("sequence index must be nonnegative")
    h = splitmix64(base_seed & _MASK64)
    if kind == "mt19937":
        return GeneratorSpec("mt19937", seed=_fmix32(((h & _MASK32) + index * 0x9E3779B9) & _MASK32))
    if kind == "aes128_ctr":
        key = h.to_bytes(8, "big") + splitmix64(h).to_bytes(8, "big")
        return GeneratorSpec("aes128_ctr", key=key, counter=(index << 64) % (1 << 128))
    raise ValueError(f"unknown generator kind {kind!r}")
