import math
import warnings

import numpy as np
import pytest

from ntmtest.bitstream import BitSequence
from ntmtest.errors import ContractError, SingularMatrixError
from ntmtest.generators import generate, seed_for_index
from ntmtest.matching import ShortBlockWarning, count_batch, run_test, standardize
from ntmtest.templates import CorrelationMatrix, Template, correlation_matrix, default_battery, enumerate_aperiodic
from ntmtest.whitening import (
    WhiteningTransform,
    build_transform,
    eigendecompose,
    orthogonal_battery,
    rank_analysis,
    transform_for,
)

GROUPS_148 = [
    {"000000001", "100000000"},
    {"001010101", "010101011", "101010100", "110101010"},
    {"011111111", "111111110"},
]


@pytest.fixture(scope="module")
def sigma148():
    return correlation_matrix(enumerate_aperiodic(9))


def test_eigendecompose_identity():
    dec = eigendecompose(np.eye(4))
    assert np.allclose(dec.eigenvalues, 1)
    assert np.allclose(np.abs(dec.eigenvectors), np.eye(4))


def test_eigendecompose_two_by_two():
    dec = eigendecompose(np.array([[1, 0.6], [0.6, 1]]))
    assert np.allclose(dec.eigenvalues, [1.6, 0.4])
    s = 1 / math.sqrt(2)
    assert np.allclose(dec.eigenvectors[:, 0], [s, s])
    assert np.allclose(np.abs(dec.eigenvectors[:, 1]), [s, s])
    assert dec.eigenvectors[0, 1] * dec.eigenvectors[1, 1] < 0
    assert np.allclose(eigendecompose(np.ones((2, 2))).eigenvalues, [2, 0])


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(ContractError):
        eigendecompose(np.array([[1, 0.5], [0.4, 1]]))


def test_reconstruction_and_orthonormality(sigma148):
    dec = eigendecompose(sigma148)
    L, w = dec.eigenvectors, dec.eigenvalues
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(L @ np.diag(w) @ L.T - sigma148.entries)) <= 1e-10
    assert np.max(np.abs(L.T @ L - np.eye(148))) <= 1e-10
    lead = np.argmax(np.abs(L), axis=0)
    assert np.all(L[lead, np.arange(148)] > 0)


def test_rank_analysis_148(sigma148):
    rank, groups = rank_analysis(sigma148)
    assert rank == 145
    assert [{t.pattern for t in g} for g in groups] == GROUPS_148


def test_rank_analysis_simple_cases():
    S = correlation_matrix(default_battery()[:5])
    assert rank_analysis(S) == (5, [])
    rank, groups = rank_analysis(correlation_matrix(["100000000", "000000001"]))
    assert rank == 1
    assert [{t.pattern for t in g} for g in groups] == [{"100000000", "000000001"}]


@pytest.mark.parametrize("drop", [("000000001", "011111111", "110101010"), ("100000000", "111111110", "010101011")])
def test_alternative_removals_are_full_rank(sigma148, drop):
    keep = [t for t in sigma148.templates if t.pattern not in drop]
    assert rank_analysis(sigma148.submatrix(keep))[0] == 145


def test_build_transform_examples():
    tr = build_transform(correlation_matrix(["001010101"]))
    assert tr.forward.tolist() == [[1.0]]
    S = np.array([[1, 0.6], [0.6, 1]])
    tr = build_transform(CorrelationMatrix((Template("001"), Template("011")), S))
    s = 1 / math.sqrt(2)
    assert np.allclose(tr.forward[0], [s / math.sqrt(1.6), s / math.sqrt(1.6)])
    assert np.allclose(np.abs(tr.forward[1]), [s / math.sqrt(0.4)] * 2)
    assert np.allclose(tr.forward @ S @ tr.forward.T, np.eye(2), atol=1e-12)


def test_build_transform_singular(sigma148):
    with pytest.raises(SingularMatrixError) as info:
        build_transform(sigma148)
    assert [{t.pattern for t in g} for g in info.value.groups] == GROUPS_148


def test_whitening_identity_default_battery():
    S = correlation_matrix(default_battery())
    tr = build_transform(S)
    assert np.max(np.abs(tr.forward @ S.entries @ tr.forward.T - np.eye(145))) <= 1e-8


def test_transform_determinism_and_json_round_trip():
    a, b = transform_for(default_battery()), transform_for(default_battery())
    assert a.to_json() == b.to_json()
    c = WhiteningTransform.from_json(a.to_json())
    assert np.array_equal(c.forward, a.forward)
    assert c.templates == a.templates
    assert c.digest() == a.digest()


def test_battery_single_template_matches_run_test():
    seq = generate(seed_for_index(8, 0), 100000)
    tr = transform_for(["000000001"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlockWarning)
        res = orthogonal_battery(seq, ["000000001"], 8, tr)
        out = run_test(seq, "000000001", 8)
    assert res.item_p_values[0] == pytest.approx(out.p_value, rel=1e-12)


def test_identity_transform_gives_raw_p_values():
    seq = generate(seed_for_index(8, 1), 100000)
    ts = default_battery()[:6]
    tr = WhiteningTransform(tuple(ts), np.eye(6))
    res = orthogonal_battery(seq, ts, 8, tr)
    assert np.allclose(res.item_p_values, res.raw_p_values, rtol=1e-14)


def test_battery_rejects_mismatched_transform():
    seq = BitSequence(np.zeros(12500, np.uint8), 100000)
    tr = transform_for(default_battery()[:3])
    with pytest.raises(ContractError):
        orthogonal_battery(seq, default_battery()[1:4], 8, tr)


@pytest.mark.slow
def test_empirical_whiteness():
    """Pooled whitened block vectors have identity covariance (K=10^4, n=10^5)."""
    ts = default_battery()
    tr = transform_for(ts)
    K, n, N = 10_000, 100_000, 8
    acc = np.zeros((145, 145))
    rows = 0
    stats = []
    for s in range(0, K, 100):
        P = np.stack([generate(seed_for_index(31337, i), n).packed for i in range(s, s + 100)])
        Z = standardize(count_batch(P, n, ts, N), n // N, 9)
        C = tr.apply(Z)
        flat = C.reshape(-1, 145)
        acc += flat.T @ flat
        rows += len(flat)
        stats.append(np.sum(C ** 2, axis=1))
    cov = acc / rows
    assert np.max(np.abs(cov - np.eye(145))) <= 0.05
    chi = np.concatenate(stats)
    r = np.corrcoef(chi.T)
    off = r[~np.eye(145, dtype=bool)]
    assert np.max(np.abs(off)) <= 0.04 + 0.01  # 4/sqrt(K) per pair, plus multiplicity slack
