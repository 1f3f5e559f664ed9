"""The Non-overlapping Template Matching Test.

Counting is done on packed bytes: every m-bit window value of a block is
extracted with shifts on big-endian 32-bit words, then mapped to a template
index through a lookup table and tallied with ``np.bincount``.  All
templates of a battery are therefore counted in a single pass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .bitstream import BitSequence
from .errors import BlockTooShortError, DomainError, InvalidTemplateError, SequenceTooShortError
from .specfun import chi2_sf, chi2_sf_array
from .templates import Template, as_template, is_aperiodic

_LUT_MAX_BITS = 20


class ShortBlockWarning(UserWarning):
    """Blocks are short enough that the normal approximation is questionable."""


def window_values(packed: np.ndarray, m: int) -> np.ndarray:
    """Integer value of every m-bit window of packed bit strings.

    ``packed`` has shape ``(..., nbytes)``; the result has shape
    ``(..., 8 * nbytes)`` where entry ``k`` is the window starting at bit
    ``k`` (0-based).  Windows running past the data see zero padding.
    """
    if not 1 <= m <= 25:
        raise ValueError(f"window length {m} outside 1..25")
    packed = np.asarray(packed, dtype=np.uint8)
    nb = packed.shape[-1]
    pad = np.zeros(packed.shape[:-1] + (nb + 3,), dtype=np.uint32)
    pad[..., :nb] = packed
    words = (pad[..., :nb] << 24) | (pad[..., 1:nb + 1] << 16) | (pad[..., 2:nb + 2] << 8) | pad[..., 3:nb + 3]
    shifts = (32 - m - np.arange(8)).astype(np.uint32)
    vals = (words[..., None] >> shifts) & np.uint32((1 << m) - 1)
    return vals.reshape(packed.shape[:-1] + (8 * nb,))


def _template_index(vals: np.ndarray, values: np.ndarray, m: int) -> np.ndarray:
    """Map window values to template positions; non-matching windows map to len(values)."""
    R = values.size
    if m <= _LUT_MAX_BITS:
        lut = np.full(1 << m, R, dtype=np.int32)
        lut[values] = np.arange(R, dtype=np.int32)
        return lut[vals]
    order = np.argsort(values)
    sv = values[order]
    pos = np.searchsorted(sv, vals)
    pos_c = np.minimum(pos, R - 1)
    hit = sv[pos_c] == vals
    return np.where(hit, order[pos_c], R).astype(np.int32)


def _block_counts(packed: np.ndarray, n: int, templates: Sequence[Template], N: int) -> np.ndarray:
    """Counts with shape ``(..., N, R)`` for packed sequences of ``n`` bits."""
    m = templates[0].m
    M = n // N
    if M == 0:
        raise SequenceTooShortError(f"{n} bits cannot form {N} non-empty blocks")
    if M < m:
        raise BlockTooShortError(f"block length {M} is shorter than template length {m}")
    values = np.array([t.value for t in templates], dtype=np.uint32)
    R = values.size
    vals = window_values(packed, m)
    lead = vals.shape[:-1]
    # windows starting at 0-based offsets 0..M-m inside each block
    vals = vals[..., : N * M].reshape(lead + (N, M))[..., : M - m + 1]
    idx = _template_index(vals, values, m)
    flat = idx.reshape(-1, M - m + 1).astype(np.int64)
    flat += (np.arange(flat.shape[0], dtype=np.int64) * (R + 1))[:, None]
    counts = np.bincount(flat.ravel(), minlength=flat.shape[0] * (R + 1))
    return counts.reshape(lead + (N, R + 1))[..., :R]


def _checked_templates(templates) -> list[Template]:
    ts = [as_template(t) for t in templates]
    if not ts:
        raise ValueError("at least one template is required")
    m = ts[0].m
    for t in ts:
        if t.m != m:
            raise InvalidTemplateError("all templates of a battery must have the same length")
        if not is_aperiodic(t):
            raise InvalidTemplateError(f"template {t} is not aperiodic")
    return ts


def count_occurrences(block: BitSequence, T) -> int:
    """Number of window positions of ``block`` equal to ``T`` (overlapping windows included)."""
    t = as_template(T)
    M = len(block)
    if M < t.m:
        raise BlockTooShortError(f"block length {M} is shorter than template length {t.m}")
    vals = window_values(block.packed, t.m)[: M - t.m + 1]
    return int(np.count_nonzero(vals == t.value))


def count_matrix(seq: BitSequence, templates, N: int) -> np.ndarray:
    """Per-block counts as an ``N x R`` integer matrix."""
    ts = _checked_templates(templates)
    return _block_counts(seq.packed, len(seq), ts, N)


def count_batch(packed: np.ndarray, n: int, templates, N: int) -> np.ndarray:
    """Counts for a stack of equal-length packed sequences, shape ``(K, N, R)``."""
    ts = _checked_templates(templates)
    return _block_counts(packed, n, ts, N)


def theoretical_mu(M: int, m: int) -> float:
    if M < m:
        raise DomainError(f"block length {M} is shorter than template length {m}")
    return (M - m + 1) / 2 ** m


def theoretical_sigma_sq(M: int, m: int) -> float:
    """Asymptotic variance ``M (2^-m - (2m-1) 2^-2m)`` of a block count."""
    if M < m:
        raise DomainError(f"block length {M} is shorter than template length {m}")
    return float(Fraction(M) * (Fraction(1, 2 ** m) - Fraction(2 * m - 1, 2 ** (2 * m))))


def exact_count_moments(M: int, m: int, T=None) -> tuple[Fraction, Fraction]:
    """Exact mean and variance of a block count for an aperiodic template.

    Windows at distance ``1..m-1`` can never both match, windows further
    apart are independent.
    """
    if M < m:
        raise DomainError(f"block length {M} is shorter than template length {m}")
    if T is not None:
        t = as_template(T)
        if t.m != m:
            raise InvalidTemplateError(f"template {t} does not have length {m}")
        if not is_aperiodic(t):
            raise InvalidTemplateError(f"template {t} is not aperiodic")
    W = M - m + 1
    p = Fraction(1, 2 ** m)
    mean = W * p
    close_pairs = 2 * sum(W - d for d in range(1, min(m - 1, W - 1) + 1))
    var = W * (p - p * p) - close_pairs * p * p
    return mean, var


def sigma_sq_gap(m: int) -> Fraction:
    """``theoretical_sigma_sq - exact variance``, the same for every M >= 2m - 1."""
    return Fraction(m - 1, 2 ** m) - Fraction((m - 1) * (3 * m - 1), 2 ** (2 * m))


def _warn_short(M: int, m: int) -> None:
    if M < 100 * 2 ** m:
        warnings.warn(
            f"block length {M} < 100 * 2^{m}; the normal approximation may be poor",
            ShortBlockWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class

    template: Template
    N: int
    M: int
    counts: tuple[int, ...]
    mu: float
    sigma_sq: float
    chi_obs: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "template": self.template.pattern,
            "N": self.N,
            "M": self.M,
            "counts": list(self.counts),
            "mu": self.mu,
            "sigma_sq": self.sigma_sq,
            "chi_obs": self.chi_obs,
            "p_value": self.p_value,
        }


def run_test(seq: BitSequence, T, N: int) -> TestOutcome:
    t = _checked_templates([T])[0]
    M = len(seq) // N
    counts = _block_counts(seq.packed, len(seq), [t], N)[:, 0]
    _warn_short(M, t.m)
    mu = theoretical_mu(M, t.m)
    var = theoretical_sigma_sq(M, t.m)
    chi_obs = math.fsum((int(c) - mu) ** 2 for c in counts) / var
    return TestOutcome(t, N, M, tuple(int(c) for c in counts), mu, var, chi_obs, chi2_sf(N, chi_obs))


@dataclass(frozen=True)
class StandardizedCounts:
    templates: tuple[Template, ...]
    values: np.ndarray  # N x R, column r belongs to templates[r]

    @property
    def chi_obs(self) -> np.ndarray:
        return np.sum(self.values ** 2, axis=0)


def standardize(counts: np.ndarray, M: int, m: int) -> np.ndarray:
    mu = theoretical_mu(M, m)
    sigma = math.sqrt(theoretical_sigma_sq(M, m))
    return (np.asarray(counts, dtype=float) - mu) / sigma


def standardized_counts(seq: BitSequence, templates, N: int) -> StandardizedCounts:
    ts = _checked_templates(templates)
    M = len(seq) // N
    counts = _block_counts(seq.packed, len(seq), ts, N)
    _warn_short(M, ts[0].m)
    vals = standardize(counts, M, ts[0].m)
    vals.setflags(write=False)
    return StandardizedCounts(tuple(ts), vals)


def p_values_from_counts(counts: np.ndarray, M: int, m: int) -> np.ndarray:
    """Per-template p-values from counts of shape ``(..., N, R)``."""
    z = standardize(counts, M, m)
    N = z.shape[-2]
    return chi2_sf_array(N, np.sum(z ** 2, axis=-2))

