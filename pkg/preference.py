"""
Preference embedding of points over the hypothesis pool and the Tanimoto
distance between preference vectors.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from base_model_class import PointSet
from sampling import Hypothesis, residual_matrix

logger = logging.getLogger(__name__)

# preference assigned to a point lying exactly at the inlier threshold
PHI_AT_EPSILON = 0.05


class BothZero(ValueError):
    """Tanimoto similarity is undefined for two all-zero vectors."""


def phi_sigma_sq(epsilon: float) -> float:
    """Gaussian bandwidth with phi(epsilon) = 0.05."""
    return -(epsilon**2) / np.log(PHI_AT_EPSILON)


@dataclass(frozen=True)
class PreferenceMatrix:
    """Sparse (N, M) preferences, rows are points, columns hypotheses."""

    values: sparse.csr_matrix
    epsilon: float
    phi_sigma_sq: float

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def dense(self) -> np.ndarray:
        return self.values.toarray()

    def row(self, i: int) -> np.ndarray:
        return self.values.getrow(i).toarray().ravel()

    def support(self) -> np.ndarray:
        """Dense boolean (N, M): hypothesis j explains point i within its threshold."""
        return self.dense() > 0


def build_preferences(
    data: PointSet,
    hypotheses: Sequence[Hypothesis],
    epsilon: float,
    class_epsilons: Optional[Dict[str, float]] = None,
    residuals: Optional[np.ndarray] = None,
) -> PreferenceMatrix:
    """
    Preference of point i for hypothesis j: exp(-e_ij^2 / sigma^2) when
    e_ij <= eps, else 0, with sigma^2 = -eps^2 / log(0.05).

    Args:
        data: input points
        hypotheses: nonempty pool
        epsilon: shared inlier threshold
        class_epsilons: optional per-class thresholds overriding epsilon
        residuals: optional precomputed (N, M) residual matrix
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not hypotheses:
        raise ValueError("cannot build preferences over an empty hypothesis pool")
    class_epsilons = class_epsilons or {}
    if any(e <= 0 for e in class_epsilons.values()):
        raise ValueError(f"per-class epsilons must be positive, got {class_epsilons}")

    if residuals is None:
        residuals = residual_matrix(data, hypotheses)
    eps = np.array([class_epsilons.get(h.class_id, epsilon) for h in hypotheses])
    sigma_sq = -(eps**2) / np.log(PHI_AT_EPSILON)

    inlier = residuals <= eps[None, :]
    values = np.where(inlier, np.exp(-(residuals**2) / sigma_sq[None, :]), 0.0)
    matrix = sparse.csr_matrix(values)
    logger.debug(
        f"Preference matrix {matrix.shape} with {matrix.nnz} nonzeros "
        f"({matrix.nnz / max(1, values.size):.1%} dense)"
    )
    return PreferenceMatrix(values=matrix, epsilon=float(epsilon), phi_sigma_sq=phi_sigma_sq(epsilon))


def tanimoto_distance(a, b) -> float:
    """1 - <a,b> / (|a|^2 + |b|^2 - <a,b>).

    Raises:
        BothZero: both vectors are all-zero
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"preference vectors differ in length: {a.size} vs {b.size}")
    dot = float(a @ b)
    denom = float(a @ a) + float(b @ b) - dot
    if denom == 0:
        raise BothZero("Tanimoto distance of two all-zero vectors")
    return min(1.0, max(0.0, 1.0 - dot / denom))


def pairwise_tanimoto(values) -> np.ndarray:
    """
    Dense (n, n) Tanimoto distances between the rows of a preference matrix.
    Pairs of all-zero rows get distance 1.
    """
    if isinstance(values, PreferenceMatrix):
        values = values.values
    values = sparse.csr_matrix(values)
    gram = (values @ values.T).toarray()
    sq_norms = np.diag(gram).copy()
    denom = sq_norms[:, None] + sq_norms[None, :] - gram
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.where(denom > 0, 1.0 - gram / np.where(denom > 0, denom, 1.0), 1.0)
    return np.clip(dist, 0.0, 1.0)


def dump_preferences_csv(prefs: PreferenceMatrix, path: str) -> None:
    """Write the nonzero entries as (row, col, value) triplets."""
    coo = prefs.values.tocoo()
    order = np.lexsort((coo.col, coo.row))
    frame = pd.DataFrame(
        {"row": coo.row[order], "col": coo.col[order], "value": coo.data[order]}
    )
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} preference triplets to {path}")
