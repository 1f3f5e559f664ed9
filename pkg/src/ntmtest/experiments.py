"""Experiment runners: joint p-value histograms and rejection-count histograms.

Every sequence index gets its own generator from :func:`seed_for_index`,
sequences are processed in fixed batches of consecutive indices, and worker
results are merged in index order, so reports depend only on the config.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bitstream import BitSequence
from .errors import ContractError, SequenceTooShortError
from .generators import generate_bytes, seed_for_index
from .jointdist import JointParams, cell_grid, joint_pvalue_tail
from .matching import ShortBlockWarning, count_batch, count_matrix, p_values_from_counts
from .specfun import chi2_sf
from .templates import Template, as_template, correlation, default_battery, enumerate_aperiodic
from .whitening import WhiteningTransform, orthogonal_p_values, transform_for

CORRELATED_PAIRS = (("001010101", "010101011"), ("001010101", "101010100"))


@dataclass(frozen=True)
class ExperimentConfig:
    generator: str = "mt19937"
    K: int = 20000
    n: int = 100_000
    N: int = 8
    templates: tuple[str, ...] | None = None
    G: int = 10
    alpha: float = 0.01
    base_seed: int = 0
    workers: int = 1
    batch: int = 50

    def __post_init__(self):
        if self.generator not in ("mt19937", "aes128_ctr"):
            raise ContractError(f"unknown generator {self.generator!r}")
        if self.K < 1:
            raise ContractError("K must be at least 1")
        if self.N < 1:
            raise ContractError("N must be at least 1")
        if self.G < 2:
            raise ContractError("G must be at least 2")
        if not 0 < self.alpha < 1:
            raise ContractError("alpha must lie in (0, 1)")
        if self.workers < 1 or self.batch < 1:
            raise ContractError("workers and batch must be positive")
        if self.templates is not None:
            object.__setattr__(self, "templates", tuple(as_template(t).pattern for t in self.templates))
            m = len(self.templates[0])
        else:
            m = 9
        if self.n < self.N * m:
            raise ContractError(f"n = {self.n} is shorter than N * m = {self.N * m}")

    @property
    def M(self) -> int:
        return self.n // self.N

    def to_dict(self) -> dict:
        d = asdict(self)
        d["templates"] = list(self.templates) if self.templates is not None else None
        return d

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("templates") is not None:
            d["templates"] = tuple(d["templates"])
        return cls(**d)


def templates_digest(templates: Sequence) -> str:
    return hashlib.sha256(",".join(as_template(t).pattern for t in templates).encode()).hexdigest()


def _provenance(config: ExperimentConfig, templates, transform: WhiteningTransform | None = None) -> dict:
    return {
        "version": __version__,
        "config": config.to_dict(),
        "base_seed": config.base_seed,
        "templates_sha256": templates_digest(templates),
        "transform_sha256": transform.digest() if transform is not None else None,
    }


# --- sequence fan-out -------------------------------------------------------

def _packed_batch(config: ExperimentConfig, start: int, stop: int) -> np.ndarray:
    nbytes = (config.n + 7) // 8
    out = np.empty((stop - start, nbytes), dtype=np.uint8)
    for row, i in enumerate(range(start, stop)):
        spec = seed_for_index(config.base_seed, i, config.generator)
        out[row] = np.frombuffer(generate_bytes(spec, nbytes), dtype=np.uint8)
    if config.n % 8:
        out[:, -1] &= (0xFF << (8 - config.n % 8)) & 0xFF
    return out


def _run_range(config: ExperimentConfig, templates: tuple[Template, ...], reducer: Callable,
               start: int, stop: int) -> np.ndarray:
    parts = []
    for s in range(start, stop, config.batch):
        e = min(stop, s + config.batch)
        counts = count_batch(_packed_batch(config, s, e), config.n, templates, config.N)
        parts.append(reducer(counts))
    return np.concatenate(parts)


def map_sequences(config: ExperimentConfig, templates: Sequence, reducer: Callable) -> np.ndarray:
    """Apply ``reducer`` to the counts of every sequence, in index order.

    ``reducer`` receives counts of shape ``(b, N, R)`` and returns an array
    whose first axis has length ``b``.  It must be picklable when
    ``config.workers > 1``.
    """
    ts = tuple(as_template(t) for t in templates)
    # chunk boundaries are multiples of the batch size so every batch is the
    # same regardless of the worker count
    per = max(1, math.ceil(config.K / (4 * config.workers) / config.batch)) * config.batch
    ranges = [(s, min(config.K, s + per)) for s in range(0, config.K, per)]
    if config.workers == 1 or len(ranges) == 1:
        return np.concatenate([_run_range(config, ts, reducer, s, e) for s, e in ranges])
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(_run_range, config, ts, reducer, s, e) for s, e in ranges]
        return np.concatenate([f.result() for f in futures])


def _plain_reducer(counts: np.ndarray, M: int, m: int) -> np.ndarray:
    return p_values_from_counts(counts, M, m)


def _rejection_reducer(counts: np.ndarray, M: int, m: int, alpha: float,
                       transform: WhiteningTransform | None) -> np.ndarray:
    raw = np.count_nonzero(p_values_from_counts(counts, M, m) < alpha, axis=-1)
    if transform is None:
        return raw[:, None]
    orth = np.count_nonzero(orthogonal_p_values(counts, M, m, transform) < alpha, axis=-1)
    return np.stack([raw, orth], axis=1)


def sequence_p_values(config: ExperimentConfig, templates: Sequence) -> np.ndarray:
    """Per-template p-values for every sequence of the experiment, shape ``(K, R)``."""
    ts = [as_template(t) for t in templates]
    reducer = functools.partial(_plain_reducer, M=config.M, m=ts[0].m)
    return map_sequences(config, ts, reducer)


# --- goodness of fit ---------------------------------------------------------

@dataclass(frozen=True)
class GoodnessOfFit:
    statistic: float
    df: int
    p_value: float
    bins: int

    def to_dict(self) -> dict:
        return asdict(self)


def pearson_gof(observed, probabilities, min_expected: float = 5.0) -> GoodnessOfFit:
    """Pearson chi-square test of counts against cell probabilities.

    Adjacent cells (in the given order) are pooled until each pooled cell
    expects at least ``min_expected`` observations; a short remainder is
    merged into the last pooled cell.
    """
    obs = np.asarray(observed, dtype=float).ravel()
    prob = np.asarray(probabilities, dtype=float).ravel()
    if obs.shape != prob.shape:
        raise ContractError("observed and expected arrays differ in shape")
    total = obs.sum()
    exp = prob / prob.sum() * total
    po, pe = [], []
    co = ce = 0.0
    for o, e in zip(obs, exp):
        co += o
        ce += e
        if ce >= min_expected:
            po.append(co)
            pe.append(ce)
            co = ce = 0.0
    if ce > 0 or co > 0:
        if pe:
            po[-1] += co
            pe[-1] += ce
        else:
            po.append(co)
            pe.append(ce)
    po_a, pe_a = np.array(po), np.array(pe)
    stat = float(np.sum((po_a - pe_a) ** 2 / pe_a))
    df = len(pe) - 1
    p = chi2_sf(df, stat) if df >= 1 else 1.0
    return GoodnessOfFit(stat, df, p, len(pe))


def binomial_pmf(R: int, alpha: float) -> np.ndarray:
    return np.array([math.comb(R, k) * alpha ** k * (1 - alpha) ** (R - k) for k in range(R + 1)])


# --- joint histogram (two templates) -------------------------------------------

def _bin_index(p: np.ndarray, G: int) -> np.ndarray:
    # cell i holds p in (i/G, (i+1)/G]; p == 0 goes to the first cell
    return np.clip(np.ceil(p * G).astype(int) - 1, 0, G - 1)


@dataclass
class JointHistogramReport:
    config: ExperimentConfig
    templates: tuple[Template, Template]
    rho: float
    counts: np.ndarray
    expected: np.ndarray
    gof: GoodnessOfFit
    corner: dict
    p_values: np.ndarray = field(repr=False)

    @property
    def empirical(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def residuals(self) -> np.ndarray:
        K = self.counts.sum()
        e = self.expected * K
        return (self.counts - e) / np.sqrt(e)

    def to_dict(self) -> dict:
        return {
            "experiment": "joint_histogram",
            "provenance": _provenance(self.config, self.templates),
            "templates": [t.pattern for t in self.templates],
            "rho": self.rho,
            "G": int(self.counts.shape[0]),
            "counts": self.counts.tolist(),
            "empirical": self.empirical.tolist(),
            "expected": self.expected.tolist(),
            "residuals": self.residuals.tolist(),
            "gof": self.gof.to_dict(),
            "upper_corner": self.corner,
        }


def run_joint_histogram(config: ExperimentConfig, T1, T2, pvals: np.ndarray | None = None) -> JointHistogramReport:
    """Empirical vs theoretical joint histogram of two templates' p-values.

    ``pvals`` (shape ``(K, 2)``) may be supplied to reuse p-values that were
    already computed for this config.
    """
    t1, t2 = as_template(T1), as_template(T2)
    rho = correlation(t1, t2)
    if pvals is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortBlockWarning)
            pvals = sequence_p_values(config, [t1, t2])
    G = config.G
    i, j = _bin_index(pvals[:, 0], G), _bin_index(pvals[:, 1], G)
    counts = np.zeros((G, G), dtype=np.int64)
    np.add.at(counts, (i, j), 1)
    params = JointParams(config.N, rho)
    expected = cell_grid(params, G)
    gof = pearson_gof(counts, expected)

    K = len(pvals)
    hit = float(np.mean((pvals[:, 0] > 0.9) & (pvals[:, 1] > 0.9)))
    se = math.sqrt(hit * (1 - hit) / K) if 0 < hit < 1 else float("nan")
    corner = {
        "threshold": 0.9,
        "empirical": hit,
        "independent": 0.01,
        "theoretical": joint_pvalue_tail(params, 0.9, 0.9),
        "excess_in_se": (hit - 0.01) / se if se > 0 else float("nan"),
    }
    return JointHistogramReport(config, (t1, t2), rho, counts, expected, gof, corner, pvals)


# --- rejection histogram (whole battery) -------------------------------------------

@dataclass
class RejectionReport:
    config: ExperimentConfig
    orthogonalized: bool
    templates: tuple[Template, ...]
    histogram: np.ndarray
    expected: np.ndarray  # binomial probabilities
    gof: GoodnessOfFit
    transform: WhiteningTransform | None = field(default=None, repr=False)

    @property
    def items(self) -> int:
        return len(self.histogram) - 1

    @property
    def mean_rejections(self) -> float:
        return float(np.dot(np.arange(len(self.histogram)), self.histogram) / self.histogram.sum())

    def to_dict(self) -> dict:
        K = int(self.histogram.sum())
        return {
            "experiment": "rejection_histogram",
            "provenance": _provenance(self.config, self.templates, self.transform),
            "orthogonalized": self.orthogonalized,
            "items": self.items,
            "alpha": self.config.alpha,
            "histogram": self.histogram.tolist(),
            "expected_counts": (self.expected * K).tolist(),
            "mean_rejections": self.mean_rejections,
            "expected_mean": self.items * self.config.alpha,
            "gof": self.gof.to_dict(),
        }


def _rejection_report(config, ts, rejections, orthogonalized, transform) -> RejectionReport:
    R = len(ts)
    hist = np.bincount(rejections, minlength=R + 1)
    pmf = binomial_pmf(R, config.alpha)
    return RejectionReport(config, orthogonalized, tuple(ts), hist, pmf, pearson_gof(hist, pmf),
                           transform if orthogonalized else None)


def run_rejection_experiment(config: ExperimentConfig) -> tuple[RejectionReport, RejectionReport]:
    """Plain and orthogonalized rejection histograms from one pass over the sequences."""
    ts = [as_template(t) for t in config.templates] if config.templates is not None else default_battery()
    transform = transform_for(ts)
    reducer = functools.partial(_rejection_reducer, M=config.M, m=ts[0].m, alpha=config.alpha, transform=transform)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlockWarning)
        rej = map_sequences(config, ts, reducer)
    return (_rejection_report(config, ts, rej[:, 0], False, transform),
            _rejection_report(config, ts, rej[:, 1], True, transform))


def run_rejection_histogram(config: ExperimentConfig, orthogonalize: bool) -> RejectionReport:
    ts = [as_template(t) for t in config.templates] if config.templates is not None else default_battery()
    transform = transform_for(ts) if orthogonalize else None
    reducer = functools.partial(_rejection_reducer, M=config.M, m=ts[0].m, alpha=config.alpha, transform=transform)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlockWarning)
        rej = map_sequences(config, ts, reducer)
    return _rejection_report(config, ts, rej[:, -1], orthogonalize, transform)


# --- battery on user data ------------------------------------------------------

def run_battery(seq: BitSequence, N: int = 8, templates: Sequence | None = None, orthogonalize: bool = False,
                alpha: float = 0.01, transform: WhiteningTransform | None = None) -> dict:
    """Per-item p-values for one sequence.

    The plain battery defaults to all 148 aperiodic 9-bit templates; the
    orthogonalized one to the 145-template default battery (or the
    transform's own template list).
    """
    if orthogonalize:
        if transform is not None:
            ts = list(transform.templates)
            if templates is not None and [as_template(t) for t in templates] != ts:
                raise ContractError("template list does not match the supplied transform")
        else:
            ts = [as_template(t) for t in templates] if templates is not None else default_battery()
            transform = transform_for(ts)
    else:
        ts = [as_template(t) for t in templates] if templates is not None else enumerate_aperiodic(9)
    m = ts[0].m
    if len(seq) < N * m:
        raise SequenceTooShortError(f"{len(seq)} bits is shorter than N * m = {N * m}")
    M = len(seq) // N
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlockWarning)
        counts = count_matrix(seq, ts, N)
    raw = p_values_from_counts(counts, M, m)
    report = {
        "n": len(seq),
        "N": N,
        "M": M,
        "discarded_bits": len(seq) - N * M,
        "alpha": alpha,
        "orthogonalized": orthogonalize,
        "templates_sha256": templates_digest(ts),
        "templates": [t.pattern for t in ts],
        "template_p_values": raw.tolist(),
        "template_rejected": (raw < alpha).tolist(),
    }
    if orthogonalize:
        items = orthogonal_p_values(counts, M, m, transform)
        report["transform_sha256"] = transform.digest()
        report["item_p_values"] = items.tolist()
        report["item_rejected"] = (items < alpha).tolist()
        report["rejections"] = int(np.count_nonzero(items < alpha))
    else:
        report["rejections"] = int(np.count_nonzero(raw < alpha))
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=True)
