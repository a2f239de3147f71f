"""
GRIC scoring of clusters and the merge / non-merge test between two clusters.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from base_model_class import DegenerateCluster, ModelClass, ModelInstance
from config import settings

logger = logging.getLogger(__name__)


class NoFittableClass(Exception):
    """No model class could be fitted on both clusters and their union."""


class GricConfig(BaseModel):
    """Weights of the complexity terms and the residual scale sigma."""

    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(default_factory=lambda: settings.GRIC_LAMBDA1, gt=0)
    lambda2: float = Field(default_factory=lambda: settings.GRIC_LAMBDA2, gt=0)
    sigma: float = Field(gt=0)

    @classmethod
    def for_epsilon(cls, epsilon: float, **overrides) -> "GricConfig":
        """Default sigma = epsilon / 2: the inlier band spans about two sigma."""
        overrides.setdefault("sigma", epsilon / 2.0)
        return cls(**overrides)


@dataclass(frozen=True)
class FitRecord:
    model: ModelInstance
    score: float


class FittableCluster(Protocol):
    coords: np.ndarray
    cached_fits: Dict[str, Optional[FitRecord]]

    @property
    def size(self) -> int: ...


@dataclass(frozen=True)
class MergeVerdict:
    accept: bool
    winning_class: Optional[str]
    union_model: Optional[ModelInstance]
    # class_id -> (g(U), g(V), g(U u V))
    scores: Dict[str, Tuple[float, float, float]]
    union_fits: Dict[str, Optional[FitRecord]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "accept": self.accept,
            "winning_class": self.winning_class,
            "union_model": self.union_model.to_dict() if self.union_model else None,
            "scores": {k: [float(s) for s in v] for k, v in self.scores.items()},
        }


def gric_score(
    cluster_points: np.ndarray,
    model_class: ModelClass,
    model: ModelInstance,
    config: GricConfig,
) -> float:
    """
    g(U) = sum_i rho(err_i / sigma)^2 + lambda1 * d * |U| + lambda2 * kappa,
    with rho(x) = min(x, r - d).
    """
    points = np.atleast_2d(np.asarray(cluster_points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("GRIC of an empty cluster")
    scaled = model_class.residuals(model, points) / config.sigma
    robust = np.minimum(scaled, model_class.r - model_class.d)
    return float(
        np.sum(robust**2)
        + config.lambda1 * model_class.d * points.shape[0]
        + config.lambda2 * model_class.kappa
    )


def fit_and_score(
    points: np.ndarray, model_class: ModelClass, config: GricConfig
) -> Optional[FitRecord]:
    """On-the-fly fit of one class; None when the class cannot model the points."""
    if points.shape[0] < model_class.min_sample_size:
        return None
    try:
        model = model_class.fit_cluster(points)
    except DegenerateCluster as e:
        logger.debug(f"{model_class.class_id} unavailable on {points.shape[0]} points: {e}")
        return None
    return FitRecord(model=model, score=gric_score(points, model_class, model, config))


def cluster_fit(
    cluster: FittableCluster, model_class: ModelClass, config: GricConfig
) -> Optional[FitRecord]:
    """Cached on-the-fly fit of a cluster."""
    if model_class.class_id not in cluster.cached_fits:
        cluster.cached_fits[model_class.class_id] = fit_and_score(
            cluster.coords, model_class, config
        )
    return cluster.cached_fits[model_class.class_id]


def select_class(
    candidates: Dict[str, float], classes: Sequence[ModelClass]
) -> str:
    """Lowest score wins; ties go to fewer parameters, then registration order."""
    order = {c.class_id: (c.kappa, i) for i, c in enumerate(classes)}
    return min(candidates, key=lambda k: (candidates[k],) + order[k])


def union_coords(u, v) -> np.ndarray:
    """Member coordinates of U u V, ordered by point index."""
    indices = np.concatenate([u.member_indices, v.member_indices])
    coords = np.concatenate([u.coords, v.coords])
    return coords[np.argsort(indices, kind="stable")]


def evaluate_merge(
    u: FittableCluster,
    v: FittableCluster,
    classes: Sequence[ModelClass],
    config: GricConfig,
) -> MergeVerdict:
    """
    Merge U and V when some class k^ satisfies
    g_k^(U u V) <= g_k(U) + g_k(V) for every compared class k.

    Classes that cannot be fitted on U, V or U u V are left out of the
    comparison on both sides.

    Raises:
        NoFittableClass: no class fits all three sets
    """
    merged = union_coords(u, v)
    scores: Dict[str, Tuple[float, float, float]] = {}
    union_fits: Dict[str, Optional[FitRecord]] = {}

    for model_class in classes:
        if min(u.size, v.size) < model_class.min_sample_size:
            continue
        fit_u = cluster_fit(u, model_class, config)
        fit_v = cluster_fit(v, model_class, config)
        if fit_u is None or fit_v is None:
            continue
        fit_uv = fit_and_score(merged, model_class, config)
        union_fits[model_class.class_id] = fit_uv
        if fit_uv is None:
            continue
        scores[model_class.class_id] = (fit_u.score, fit_v.score, fit_uv.score)

    if not scores:
        raise NoFittableClass(f"no class fits clusters of size {u.size} and {v.size}")

    best_separate = min(g_u + g_v for g_u, g_v, _ in scores.values())
    satisfying = {k: s[2] for k, s in scores.items() if s[2] <= best_separate}
    if not satisfying:
        return MergeVerdict(False, None, None, scores, union_fits)

    winner = select_class(satisfying, classes)
    return MergeVerdict(True, winner, union_fits[winner].model, scores, union_fits)
