from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ntmtest.errors import (
    InvalidPairError,
    InvalidTemplateError,
    LengthMismatchError,
    UnsupportedLengthError,
)
from ntmtest.templates import (
    Template,
    correlation,
    correlation_exact,
    correlation_matrix,
    default_battery,
    enumerate_aperiodic,
    is_aperiodic,
    overlap_profile,
)


def brute_force_aperiodic(m):
    return ["".join(b) for b in product("01", repeat=m) if is_aperiodic("".join(b))]


def brute_force_rho(t1: str, t2: str) -> Fraction:
    """Asymptotic count correlation from joint window probabilities.

    For each shift d, enumerate every string long enough to hold T1 at one
    offset and T2 at offset d and count the ones that do; the limit of
    Cov(c1, c2) / M is the sum over |d| < m of (P_d - 2^-2m).
    """
    m = len(t1)
    cov = Fraction(0)
    for d in range(-(m - 1), m):
        L = m + abs(d)
        o1, o2 = (0, d) if d >= 0 else (-d, 0)
        hits = sum(
            1
            for bits in product("01", repeat=L)
            if "".join(bits[o1:o1 + m]) == t1 and "".join(bits[o2:o2 + m]) == t2
        )
        cov += Fraction(hits, 2 ** L) - Fraction(1, 2 ** (2 * m))
    var = Fraction(1, 2 ** m) - Fraction(2 * m - 1, 2 ** (2 * m))
    return cov / var


@pytest.mark.parametrize("pattern, expected", [("001010101", True), ("010", False), ("100000000", True), ("0110", False)])
def test_is_aperiodic(pattern, expected):
    assert is_aperiodic(pattern) is expected


def test_enumerate_small():
    assert [t.pattern for t in enumerate_aperiodic(2)] == ["01", "10"]
    assert [t.pattern for t in enumerate_aperiodic(3)] == ["001", "011", "100", "110"]


def test_enumerate_nine_has_148():
    ts = enumerate_aperiodic(9)
    assert len(ts) == 148
    assert [t.value for t in ts] == sorted(t.value for t in ts)


@pytest.mark.parametrize("m", range(2, 13))
def test_enumerate_matches_brute_force(m):
    assert [t.pattern for t in enumerate_aperiodic(m)] == brute_force_aperiodic(m)


@pytest.mark.parametrize("m", [1, 25])
def test_enumerate_out_of_range(m):
    with pytest.raises(UnsupportedLengthError):
        enumerate_aperiodic(m)


def test_template_validation():
    with pytest.raises(InvalidTemplateError):
        Template("01a")
    with pytest.raises(UnsupportedLengthError):
        Template("0" * 25)
    assert Template("100000000").value == 256


def test_overlap_profile_examples():
    e = overlap_profile("001", "011")
    assert e.ones() == [-1]
    e = overlap_profile("001010101", "010101011")
    assert e.ones() == [-7, -5, -3, -1]
    e = overlap_profile("100000000", "100000000")
    assert e.ones() == []
    with pytest.raises(LengthMismatchError):
        overlap_profile("001", "0011")


def test_correlation_paper_values():
    assert correlation_exact("001010101", "010101011") == Fraction(323, 495)
    assert correlation_exact("001010101", "101010100") == Fraction(159, 495)
    assert round(correlation("001010101", "010101011"), 6) == 0.652525
    assert round(correlation("001010101", "101010100"), 6) == 0.321212


def test_correlation_small_and_degenerate():
    assert correlation_exact("001", "011") == Fraction(-1, 3)
    assert correlation("100000000", "000000001") == 1.0


def test_correlation_rejects_bad_pairs():
    with pytest.raises(InvalidPairError):
        correlation("001", "001")
    with pytest.raises(InvalidTemplateError):
        correlation("010", "001")


@pytest.mark.parametrize(
    "t1, t2",
    [("001010101", "010101011"), ("001010101", "101010100"), ("100000000", "000000001"),
     ("001", "011"), ("0011", "0111"), ("000111", "101100")],
)
def test_correlation_against_window_enumeration(t1, t2):
    assert correlation_exact(t1, t2) == brute_force_rho(t1, t2)


_m6 = [t.pattern for t in enumerate_aperiodic(6)]


@given(st.sampled_from(_m6), st.sampled_from(_m6))
def test_correlation_symmetric_and_bounded(a, b):
    if a == b:
        return
    r = correlation_exact(a, b)
    assert r == correlation_exact(b, a)
    assert -1 <= r <= 1
    e, f = overlap_profile(a, b), overlap_profile(b, a)
    assert all(e[k] == f[-k] for k in e.e)


def test_correlation_matrix_small():
    assert correlation_matrix(["001010101"]).entries.tolist() == [[1.0]]
    S = correlation_matrix(["001010101", "010101011"]).entries
    assert S[0, 1] == S[1, 0] == 323 / 495
    assert correlation_matrix(["100000000", "000000001"]).entries.tolist() == [[1, 1], [1, 1]]
    with pytest.raises(InvalidPairError):
        correlation_matrix(["001", "001"])


def test_full_matrix_structure():
    S = correlation_matrix(enumerate_aperiodic(9)).entries
    assert np.array_equal(S, S.T)
    assert np.all(np.diag(S) == 1.0)
    assert S.min() >= -1 and S.max() <= 1
    w = np.linalg.eigvalsh(S)
    assert w.min() > -1e-12  # positive semidefinite
    assert np.sum(w < 1e-10) >= 1


def test_default_battery():
    ts = [t.pattern for t in default_battery()]
    assert len(ts) == 145
    assert "001010101" not in ts and "100000000" not in ts and "111111110" not in ts
    assert "000000001" in ts and "011111111" in ts
    with pytest.raises(UnsupportedLengthError):
        default_battery(10)
