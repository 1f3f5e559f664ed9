"""Templates, aperiodicity, overlap indicators and the template correlation.

Template notation follows the usual string convention: the leftmost
character is bit 1, which is the first bit compared against a block.  The
integer ``value`` of a template reads that string as a binary number, so
bit 1 is the most significant bit.  Some other tools store templates
reversed; convert before comparing results.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidPairError,
    InvalidTemplateError,
    LengthMismatchError,
    UnsupportedLengthError,
)

MIN_LENGTH = 2
MAX_LENGTH = 24

# removal set for the 145-item battery; one template from each dependent group
DEFAULT_REMOVED = ("100000000", "111111110", "001010101")


@dataclass(frozen=True, order=True)
class Template:
    pattern: str

    def __post_init__(self):
        if not isinstance(self.pattern, str) or set(self.pattern) - {"0", "1"}:
            raise InvalidTemplateError(f"template must be a string of '0'/'1', got {self.pattern!r}")
        if not MIN_LENGTH <= len(self.pattern) <= MAX_LENGTH:
            raise UnsupportedLengthError(
                f"template length {len(self.pattern)} outside {MIN_LENGTH}..{MAX_LENGTH}"
            )

    @classmethod
    def from_value(cls, value: int, m: int) -> "Template":
        return cls(format(value, f"0{m}b"))

    @property
    def m(self) -> int:
        return len(self.pattern)

    @property
    def value(self) -> int:
        return int(self.pattern, 2)

    @property
    def aperiodic(self) -> bool:
        return is_aperiodic(self)

    def __str__(self) -> str:
        return self.pattern


def as_template(t) -> Template:
    return t if isinstance(t, Template) else Template(str(t))


def is_aperiodic(T) -> bool:
    """True if no proper suffix of the template equals the prefix of the same length."""
    p = as_template(T).pattern
    m = len(p)
    return all(p[k:] != p[: m - k] for k in range(1, m))


def _check_length(m: int) -> None:
    if not MIN_LENGTH <= m <= MAX_LENGTH:
        raise UnsupportedLengthError(f"template length {m} outside {MIN_LENGTH}..{MAX_LENGTH}")


def enumerate_aperiodic(m: int) -> list[Template]:
    """All aperiodic ``m``-bit templates in ascending numeric order."""
    _check_length(m)
    v = np.arange(1 << m, dtype=np.uint32)
    keep = np.ones(v.size, dtype=bool)
    for k in range(1, m):
        # suffix bits [1+k, m] are the low m-k bits, prefix bits [1, m-k] the high ones
        keep &= (v & ((1 << (m - k)) - 1)) != (v >> k)
    return [Template.from_value(int(x), m) for x in np.flatnonzero(keep)]


@dataclass(frozen=True)
class OverlapProfile:
    """Indicators ``e[k]`` for shifts ``k = ±1 .. ±(m-1)``."""

    m: int
    e: dict[int, int]

    def __getitem__(self, k: int) -> int:
        return self.e[k]

    def ones(self) -> list[int]:
        return sorted(k for k, v in self.e.items() if v)


def overlap_profile(T1, T2) -> OverlapProfile:
    a, b = as_template(T1).pattern, as_template(T2).pattern
    if len(a) != len(b):
        raise LengthMismatchError(f"templates have lengths {len(a)} and {len(b)}")
    m = len(a)
    e = {}
    for k in range(1, m):
        # T1[1, m-k] == T2[1+k, m]
        e[k] = int(a[: m - k] == b[k:])
        # T1[1+k, m] == T2[1, m-k]  (the k -> -k case)
        e[-k] = int(a[k:] == b[: m - k])
    return OverlapProfile(m, e)


def correlation_exact(T1, T2) -> Fraction:
    """Asymptotic correlation of the per-block counts of two distinct aperiodic templates."""
    t1, t2 = as_template(T1), as_template(T2)
    if t1.m != t2.m:
        raise LengthMismatchError(f"templates have lengths {t1.m} and {t2.m}")
    for t in (t1, t2):
        if not is_aperiodic(t):
            raise InvalidTemplateError(f"template {t} is not aperiodic")
    if t1 == t2:
        raise InvalidPairError(f"correlation needs two distinct templates, got {t1} twice")
    m = t1.m
    e = overlap_profile(t1, t2)
    num = -2 * m + 1 + sum((1 << (m - k)) * (e[k] + e[-k]) for k in range(1, m))
    return Fraction(num, (1 << m) - 2 * m + 1)


def correlation(T1, T2) -> float:
    return float(correlation_exact(T1, T2))


@dataclass(frozen=True)
class CorrelationMatrix:
    templates: tuple[Template, ...]
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.templates)

    def index(self, T) -> int:
        return self.templates.index(as_template(T))

    def submatrix(self, keep: Iterable) -> "CorrelationMatrix":
        idx = [self.index(t) for t in keep]
        sub = self.entries[np.ix_(idx, idx)].copy()
        sub.setflags(write=False)
        return CorrelationMatrix(tuple(self.templates[i] for i in idx), sub)


def correlation_matrix(templates: Sequence) -> CorrelationMatrix:
    ts = tuple(as_template(t) for t in templates)
    if len(set(ts)) != len(ts):
        raise InvalidPairError("template list contains duplicates")
    R = len(ts)
    if R == 1 and not is_aperiodic(ts[0]):
        raise InvalidTemplateError(f"template {ts[0]} is not aperiodic")
    S = np.eye(R)
    for k in range(R):
        for l in range(k + 1, R):
            S[k, l] = S[l, k] = correlation(ts[k], ts[l])
    S.setflags(write=False)
    return CorrelationMatrix(ts, S)


def default_battery(m: int = 9) -> list[Template]:
    """The 148 aperiodic 9-bit templates minus one member of each dependent group."""
    if m != 9:
        raise UnsupportedLengthError("the default removal set is only defined for m = 9")
    removed = {Template(p) for p in DEFAULT_REMOVED}
    return [t for t in enumerate_aperiodic(9) if t not in removed]
