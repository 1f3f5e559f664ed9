"""Whitening of standardized template counts.

With ``Sigma = L D L^T`` the forward map ``D^(-1/2) L^T`` sends the
standardized count vector of a block to components with identity
covariance.  Transformed items are indexed by eigen-order (descending
eigenvalue), not by template.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .bitstream import BitSequence
from .errors import ContractError, NumericError, SingularMatrixError
from .matching import _block_counts, _checked_templates, standardize
from .specfun import chi2_sf, chi2_sf_array
from .templates import CorrelationMatrix, Template, as_template, correlation_matrix

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column k belongs to eigenvalues[k]


def eigendecompose(sigma) -> EigenDecomposition:
    S = np.asarray(sigma.entries if isinstance(sigma, CorrelationMatrix) else sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12):
        raise ContractError("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order].copy()
    # sign convention: the largest-magnitude component of each eigenvector is positive
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V *= signs
    return EigenDecomposition(w, V)


def _zero_mask(w: np.ndarray, tol: float) -> np.ndarray:
    return w < tol * max(w[0], 0.0) if w.size else np.zeros(0, dtype=bool)


def rank_analysis(sigma: CorrelationMatrix, tol: float = DEFAULT_TOL) -> tuple[int, list[tuple[Template, ...]]]:
    """Numerical rank and the groups of linearly dependent templates.

    Eigenvectors of a repeated zero eigenvalue are only defined up to a
    rotation of the null space, so groups are read from the null-space
    projector instead: templates whose projector entries exceed
    ``1 / (2R)`` are linked and every connected component is one group.
    """
    dec = eigendecompose(sigma)
    zero = _zero_mask(dec.eigenvalues, tol)
    rank = int(np.count_nonzero(~zero))
    if not zero.any():
        return rank, []
    R = sigma.dim
    V0 = dec.eigenvectors[:, zero]
    P = V0 @ V0.T
    thresh = 1.0 / (2 * R)
    members = np.flatnonzero(np.diag(P) > thresh)
    adj = np.abs(P[np.ix_(members, members)]) > thresh
    ncomp, labels = connected_components(adj, directed=False)
    groups = [tuple(sigma.templates[members[i]] for i in np.flatnonzero(labels == c)) for c in range(ncomp)]
    groups.sort(key=lambda g: [t.value for t in g])
    return rank, groups


@dataclass(frozen=True)
class WhiteningTransform:
    templates: tuple[Template, ...]
    forward: np.ndarray  # R x R, row k maps a standardized count vector to component k
    removed: tuple[Template, ...] = ()
    tolerance: float = DEFAULT_TOL
    eigenvalues: np.ndarray = field(default=None, repr=False)

    def apply(self, C: np.ndarray) -> np.ndarray:
        """Transform standardized counts with templates on the last axis."""
        return np.asarray(C) @ self.forward.T

    def to_dict(self) -> dict:
        return {
            "templates": [t.pattern for t in self.templates],
            "forward": [[float(x) for x in row] for row in self.forward],
            "removed": [t.pattern for t in self.removed],
            "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "WhiteningTransform":
        d = json.loads(text)
        fwd = np.array(d["forward"], dtype=float)
        ts = tuple(Template(p) for p in d["templates"])
        if fwd.shape != (len(ts), len(ts)):
            raise ContractError(f"forward matrix shape {fwd.shape} does not match {len(ts)} templates")
        return cls(ts, fwd, tuple(Template(p) for p in d.get("removed", [])), float(d.get("tolerance", DEFAULT_TOL)))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def build_transform(sigma: CorrelationMatrix, tol: float = DEFAULT_TOL, removed: Sequence = ()) -> WhiteningTransform:
    dec = eigendecompose(sigma)
    if _zero_mask(dec.eigenvalues, tol).any():
        _, groups = rank_analysis(sigma, tol)
        raise SingularMatrixError("correlation matrix is rank deficient", groups)
    forward = dec.eigenvectors.T / np.sqrt(dec.eigenvalues)[:, None]
    forward.setflags(write=False)
    return WhiteningTransform(
        tuple(sigma.templates), forward, tuple(as_template(t) for t in removed), tol, dec.eigenvalues
    )


def transform_for(templates: Sequence, tol: float = DEFAULT_TOL, removed: Sequence = ()) -> WhiteningTransform:
    return build_transform(correlation_matrix(templates), tol, removed)


@dataclass(frozen=True)
class BatteryResult:
    item_p_values: np.ndarray
    raw_p_values: np.ndarray | None = None


def orthogonal_p_values(counts: np.ndarray, M: int, m: int, transform: WhiteningTransform) -> np.ndarray:
    """Transformed item p-values from counts of shape ``(..., N, R)``."""
    C = transform.apply(standardize(counts, M, m))
    N = C.shape[-2]
    return chi2_sf_array(N, np.sum(C ** 2, axis=-2))


def orthogonal_battery(seq: BitSequence, templates: Sequence, N: int, transform: WhiteningTransform) -> BatteryResult:
    ts = _checked_templates(templates)
    if tuple(ts) != transform.templates:
        raise ContractError("transform was built for a different template list or order")
    M = len(seq) // N
    m = ts[0].m
    counts = _block_counts(seq.packed, len(seq), ts, N)
    Z = standardize(counts, M, m)
    raw = np.array([chi2_sf(N, float(v)) for v in np.sum(Z ** 2, axis=0)])
    C = transform.apply(Z)
    items = np.array([chi2_sf(N, float(v)) for v in np.sum(C ** 2, axis=0)])
    return BatteryResult(items, raw)
