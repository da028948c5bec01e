"""
Descriptor matching.

Attention scores with rotary position encoding (one layer, fixed projections),
a log-domain Sinkhorn partial-assignment solver with a dustbin row/column,
hard match extraction and a mutual-nearest-neighbor baseline.
"""

import csv
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import logsumexp

from .formats import read_niow, write_niow
from .weighting import WeightedDescriptorSet

logger = logging.getLogger(__name__)

MIN_WAVELENGTH = 4.0
MAX_WAVELENGTH = 1024.0
ASSIGNMENT_TOLERANCE = 1e-3


class MatcherKind(str, Enum):
    MNN = "mnn"
    SINKHORN = "sinkhorn"


class ScoreKind(str, Enum):
    SIMILARITY = "similarity"
    CROSS_ATTENTION = "cross-attention"


class MatcherConfig(BaseModel):
    kind: MatcherKind = MatcherKind.MNN
    ratio: float = Field(0.95, gt=0.0, le=1.0)
    min_similarity: float = 0.5
    dustbin_score: float = 0.0
    temperature: float = Field(0.1, gt=0.0)
    iterations: int = Field(50, ge=1)
    min_confidence: float = 0.2
    scores: ScoreKind = ScoreKind.SIMILARITY


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionWeights:
    w_q: np.ndarray
    w_k: np.ndarray

    def __post_init__(self):
        w_q = np.asarray(self.w_q, dtype=np.float64)
        w_k = np.asarray(self.w_k, dtype=np.float64)
        for name, w in (("W_q", w_q), ("W_k", w_k)):
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError(f"{name} must be square, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{name} has non-finite entries")
        if w_q.shape != w_k.shape:
            raise ValueError(f"W_q {w_q.shape} and W_k {w_k.shape} differ in size")
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_k", w_k)

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def random(cls, dim: int, seed: int = 0) -> "ProjectionWeights":
        """Gaussian entries with sigma = 1/sqrt(dim)."""
        if dim < 1:
            raise ValueError(f"Projection dimension must be >= 1, got {dim}")
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(dim)
        return cls(rng.normal(0.0, scale, (dim, dim)), rng.normal(0.0, scale, (dim, dim)))

    @classmethod
    def identity(cls, dim: int) -> "ProjectionWeights":
        return cls(np.eye(dim), np.eye(dim))

    @classmethod
    def load(cls, path: str) -> "ProjectionWeights":
        w_q, w_k = read_niow(path)
        return cls(w_q, w_k)

    def save(self, path: str) -> None:
        write_niow(path, self.w_q, self.w_k)


@dataclass(frozen=True)
class ScoreMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Score matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Score matrix has non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Assignment:
    """(n_a + 1) x (n_b + 1) soft assignment; the last row and column are dustbins."""
    matrix: np.ndarray
    tolerance: float = ASSIGNMENT_TOLERANCE

    @property
    def n_a(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def n_b(self) -> int:
        return self.matrix.shape[1] - 1

    @property
    def core(self) -> np.ndarray:
        return self.matrix[:-1, :-1]

    def is_feasible(self) -> bool:
        m = self.matrix
        if m.size and (m.min() < 0.0 or m.max() > 1.0):
            return False
        core = self.core
        if core.size == 0:
            return True
        return bool(core.sum(axis=1).max() <= 1.0 + self.tolerance
                    and core.sum(axis=0).max() <= 1.0 + self.tolerance)


@dataclass(frozen=True)
class MatchSet:
    index_a: np.ndarray
    index_b: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        index_a = np.asarray(self.index_a, dtype=np.int64).reshape(-1)
        index_b = np.asarray(self.index_b, dtype=np.int64).reshape(-1)
        confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not (index_a.shape == index_b.shape == confidence.shape):
            raise ValueError("MatchSet columns must share one length")
        if len(np.unique(index_a)) != len(index_a) or len(np.unique(index_b)) != len(index_b):
            raise ValueError("MatchSet indices must be one-to-one")
        if confidence.size and (confidence.min() < 0.0 or confidence.max() > 1.0):
            raise ValueError("Match confidences must lie in [0, 1]")
        object.__setattr__(self, "index_a", index_a)
        object.__setattr__(self, "index_b", index_b)
        object.__setattr__(self, "confidence", confidence)

    def __len__(self) -> int:
        return self.index_a.shape[0]

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.index_a, self.index_b, self.confidence)]

    @classmethod
    def empty(cls) -> "MatchSet":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    def save_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["index_a", "index_b", "confidence"])
            for a, b, c in self.pairs:
                writer.writerow([a, b, repr(c)])

    @classmethod
    def load_csv(cls, path: str) -> "MatchSet":
        if not os.path.exists(path):
            raise FileNotFoundError(f"No such match file: {path}")
        rows = []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["index_a", "index_b", "confidence"]:
                raise ValueError(f"{path}: expected header index_a,index_b,confidence")
            for line_number, row in enumerate(reader, start=2):
                try:
                    rows.append((int(row["index_a"]), int(row["index_b"]), float(row["confidence"])))
                except (TypeError, ValueError) as e:
                    raise ValueError(f"{path}:{line_number}: malformed match row ({e})") from e
        if not rows:
            return cls.empty()
        a, b, c = zip(*rows)
        return cls(np.array(a), np.array(b), np.array(c))


# ---------------------------------------------------------------------------
# Rotary encoding and attention scores
# ---------------------------------------------------------------------------

def rotary_frequencies(dim: int) -> np.ndarray:
    """
    (dim/2, 2) frequency vectors: wavelengths log-spaced from 4 px to 1024 px,
    block b acting on x when b is even and on y when b is odd.
    """
    if dim % 2:
        raise ValueError(f"Rotary encoding needs an even dimension, got {dim}")
    blocks = dim // 2
    wavelengths = np.geomspace(MIN_WAVELENGTH, MAX_WAVELENGTH, blocks) if blocks > 1 else np.array([MIN_WAVELENGTH])
    omega = 2.0 * np.pi / wavelengths
    freqs = np.zeros((blocks, 2))
    freqs[0::2, 0] = omega[0::2]
    freqs[1::2, 1] = omega[1::2]
    return freqs


def _rotate_rows(vectors: np.ndarray, positions: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Row i rotated by R(positions[i])."""
    theta = positions @ freqs.T
    cos, sin = np.cos(theta), np.sin(theta)
    even, odd = vectors[:, 0::2], vectors[:, 1::2]
    out = np.empty_like(vectors)
    out[:, 0::2] = cos * even - sin * odd
    out[:, 1::2] = sin * even + cos * odd
    return out


def rotary_rotate(v: np.ndarray, delta_p, freqs: Optional[np.ndarray] = None) -> np.ndarray:
    """R(delta_p) v, applied block by block without building the d x d matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] % 2:
        raise ValueError(f"Rotary encoding needs an even dimension, got {v.shape[-1]}")
    delta = np.asarray(delta_p, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(delta)):
        raise ValueError(f"delta_p must be finite, got {delta}")
    if freqs is None:
        freqs = rotary_frequencies(v.shape[-1])
    if freqs.shape != (v.shape[-1] // 2, 2):
        raise ValueError(f"Expected {v.shape[-1] // 2} frequency vectors, got {freqs.shape}")
    return _rotate_rows(v.reshape(1, -1), delta.reshape(1, 2), freqs).reshape(v.shape)


def _check_dims(proj: Optional[ProjectionWeights], *sets: WeightedDescriptorSet) -> int:
    dims = {s.dim for s in sets}
    if proj is not None:
        dims.add(proj.dim)
    if len(dims) != 1:
        raise ValueError(f"Descriptor/projection dimensions disagree: {sorted(dims)}")
    return dims.pop()


def self_attention_scores(desc_set: WeightedDescriptorSet, proj: ProjectionWeights,
                          freqs: Optional[np.ndarray] = None) -> ScoreMatrix:
    """
    Entry (i, j) = q_i^T R(p_j - p_i) k_j with q = W_q d~, k = W_k d~.

    R(p_j - p_i) = R(p_i)^T R(p_j), so each side is rotated by its own
    absolute position and the scores are a plain Gram product.
    """
    dim = _check_dims(proj, desc_set)
    if freqs is None:
        freqs = rotary_frequencies(dim)
    queries = desc_set.weighted @ proj.w_q.T
    keys = desc_set.weighted @ proj.w_k.T
    q_rot = _rotate_rows(queries, desc_set.positions, freqs)
    k_rot = _rotate_rows(keys, desc_set.positions, freqs)
    return ScoreMatrix(q_rot @ k_rot.T)


def cross_attention_scores(set_a: WeightedDescriptorSet, set_b: WeightedDescriptorSet,
                           proj: ProjectionWeights) -> ScoreMatrix:
    """Entry (i, j) = (W_k d~_i^A)^T (W_k d~_j^B)."""
    _check_dims(proj, set_a, set_b)
    keys_a = set_a.weighted @ proj.w_k.T
    keys_b = set_b.weighted @ proj.w_k.T
    return ScoreMatrix(keys_a @ keys_b.T)


def similarity_matrix(set_a: WeightedDescriptorSet, set_b: WeightedDescriptorSet) -> ScoreMatrix:
    _check_dims(None, set_a, set_b)
    return ScoreMatrix(set_a.weighted @ set_b.weighted.T)


# ---------------------------------------------------------------------------
# Partial assignment
# ---------------------------------------------------------------------------

def sinkhorn_assign(scores: ScoreMatrix, dustbin_score: float = 0.0, temperature: float = 0.1,
                    iterations: int = 50) -> Assignment:
    """
    Log-domain Sinkhorn over scores augmented with a dustbin row and column.

    Real rows and columns carry unit mass; the dustbins absorb what is left
    (n_b on the dustbin row, n_a on the dustbin column). The loop ends on a
    column update and any row still above unit mass is scaled down, so the
    returned matrix is feasible regardless of convergence.
    """
    if not temperature > 0:
        raise ValueError(f"Temperature must be > 0, got {temperature}")
    if iterations < 1:
        raise ValueError(f"Iterations must be >= 1, got {iterations}")
    if not np.isfinite(dustbin_score):
        raise ValueError("Dustbin score must be finite")

    n_a, n_b = scores.rows, scores.cols
    if n_a == 0 or n_b == 0:
        matrix = np.zeros((n_a + 1, n_b + 1))
        matrix[:n_a, n_b] = 1.0
        matrix[n_a, :n_b] = 1.0
        return Assignment(matrix)

    couplings = np.full((n_a + 1, n_b + 1), float(dustbin_score))
    couplings[:n_a, :n_b] = scores.values
    couplings /= temperature

    norm = -np.log(n_a + n_b)
    log_mu = np.full(n_a + 1, norm)
    log_mu[-1] = np.log(n_b) + norm
    log_nu = np.full(n_b + 1, norm)
    log_nu[-1] = np.log(n_a) + norm

    u = np.zeros(n_a + 1)
    v = np.zeros(n_b + 1)
    for _ in range(iterations):
        u = log_mu - logsumexp(couplings + v[None, :], axis=1)
        v = log_nu - logsumexp(couplings + u[:, None], axis=0)

    matrix = np.exp(couplings + u[:, None] + v[None, :] - norm)

    row_mass = matrix[:n_a].sum(axis=1)
    over = row_mass > 1.0
    matrix[:n_a][over] /= row_mass[over, None]
    np.clip(matrix, 0.0, 1.0, out=matrix)
    return Assignment(matrix)


def extract_matches(assignment: Assignment, scores: ScoreMatrix, min_confidence: float = 0.0) -> MatchSet:
    """Keep (k, l) iff m_kl is the strict maximum of row k and of column l, and m_kl >= min_confidence."""
    if (assignment.n_a, assignment.n_b) != (scores.rows, scores.cols):
        raise ValueError(f"Assignment {assignment.n_a}x{assignment.n_b} does not match scores {scores.rows}x{scores.cols}")
    core = assignment.core
    if core.size == 0:
        return MatchSet.empty()

    row_best = core.argmax(axis=1)
    col_best = core.argmax(axis=0)
    row_max = core[np.arange(core.shape[0]), row_best]
    col_max = core[col_best, np.arange(core.shape[1])]
    row_strict = (core == row_max[:, None]).sum(axis=1) == 1
    col_strict = (core == col_max[None, :]).sum(axis=0) == 1

    ks = np.arange(core.shape[0])
    keep = (col_best[row_best] == ks) & row_strict & col_strict[row_best] & (row_max >= min_confidence)
    ks = ks[keep]
    ls = row_best[keep]
    return MatchSet(ks, ls, np.clip(core[ks, ls], 0.0, 1.0))


def mnn_match(set_a: WeightedDescriptorSet, set_b: WeightedDescriptorSet, ratio: float = 0.95,
              min_similarity: float = 0.5) -> MatchSet:
    """
    Mutual nearest neighbors by dot similarity of the weighted descriptors.
    The ratio test (second best <= ratio * best) is applied to A's row.

    Weights steer the neighbor ranking and the ratio test only; the
    min_similarity gate compares the cosine of the unweighted descriptors,
    so a low object weight never rejects a match on its own.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"Ratio must lie in (0, 1], got {ratio}")
    sims = similarity_matrix(set_a, set_b).values
    n_a, n_b = sims.shape
    if n_a == 0 or n_b == 0:
        return MatchSet.empty()

    best_b = sims.argmax(axis=1)
    best_a = sims.argmax(axis=0)
    rows = np.arange(n_a)
    best = sims[rows, best_b]
    if n_b > 1:
        second = np.partition(sims, n_b - 2, axis=1)[:, n_b - 2]
    else:
        second = np.full(n_a, -np.inf)

    cosine = _cosine_rows(set_a.descriptors, set_b.descriptors[best_b])
    keep = (best_a[best_b] == rows) & (second <= ratio * best) & (cosine >= min_similarity)
    return MatchSet(rows[keep], best_b[keep], np.clip(best[keep], 0.0, 1.0))


def _cosine_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise cosine of two equally shaped arrays; zero rows give 0."""
    dots = np.einsum("ij,ij->i", x, y)
    norms = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
    return np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)


def match_sets(set_a: WeightedDescriptorSet, set_b: WeightedDescriptorSet,
               config: Optional[MatcherConfig] = None, proj: Optional[ProjectionWeights] = None) -> MatchSet:
    """
    Run the configured matcher on two weighted descriptor sets. The Sinkhorn
    path scores pairs by descriptor similarity or by cross-attention with
    `proj` (the process-wide projection weights when not given).
    """
    config = config or MatcherConfig()
    if config.kind is MatcherKind.MNN:
        return mnn_match(set_a, set_b, ratio=config.ratio, min_similarity=config.min_similarity)
    if config.scores is ScoreKind.CROSS_ATTENTION:
        if proj is None:
            from .config import get_projection_weights
            proj = get_projection_weights(set_a.dim)
        scores = cross_attention_scores(set_a, set_b, proj)
    else:
        scores = similarity_matrix(set_a, set_b)
    assignment = sinkhorn_assign(scores, config.dustbin_score, config.temperature, config.iterations)
    if not assignment.is_feasible():
        logger.warning(f"Sinkhorn assignment exceeds tolerance on a {scores.rows}x{scores.cols} problem")
    return extract_matches(assignment, scores, config.min_confidence)
