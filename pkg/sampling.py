"""
Hypothesis generation by random minimal sampling, and Gestalt validation of the
resulting pool.
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from base_model_class import DegenerateSample, ModelClass, ModelInstance, PointSet
from config import settings
from geometry import get_model_class

logger = logging.getLogger(__name__)


class InsufficientData(Exception):
    """Not enough (non-degenerate) points to sample the requested hypotheses."""


@dataclass(frozen=True)
class Hypothesis:
    model: ModelInstance
    source_sample: Tuple[int, ...]

    @property
    def class_id(self) -> str:
        return self.model.class_id


class SamplerConfig(BaseModel):
    """Hypothesis sampler settings. Counts missing from per_class_counts use
    settings.HYPOTHESES_PER_CLASS."""

    model_config = ConfigDict(frozen=True)

    per_class_counts: Dict[str, PositiveInt] = Field(default_factory=dict)
    seed: int = Field(default_factory=lambda: settings.SEED)
    localized: bool = False
    locality_sigma: float = Field(default=0.1, gt=0)
    validation_k: float = Field(default_factory=lambda: settings.VALIDATION_K)
    validation_gamma: float = Field(default_factory=lambda: settings.VALIDATION_GAMMA)
    max_attempts: PositiveInt = Field(default_factory=lambda: settings.MAX_SAMPLE_ATTEMPTS)

    @field_validator("validation_k", "validation_gamma")
    @classmethod
    def _greater_than_one(cls, value: float) -> float:
        if value <= 1:
            raise ValueError("validation multipliers must be > 1")
        return value

    def count_for(self, class_id: str) -> int:
        return self.per_class_counts.get(class_id, settings.HYPOTHESES_PER_CLASS)

    def total(self, classes: Sequence[ModelClass]) -> int:
        return sum(self.count_for(c.class_id) for c in classes)


def _draw_indices(
    points: np.ndarray, size: int, rng: np.random.Generator, config: SamplerConfig
) -> np.ndarray:
    n = points.shape[0]
    if not config.localized or size == 1:
        return rng.choice(n, size=size, replace=False)

    first = int(rng.integers(n))
    sq_dist = np.sum((points - points[first]) ** 2, axis=1)
    weights = np.exp(-sq_dist / config.locality_sigma**2)
    weights[first] = 0.0
    if np.count_nonzero(weights) < size - 1:
        raise DegenerateSample("locality kernel leaves too few candidate points")
    rest = rng.choice(n, size=size - 1, replace=False, p=weights / weights.sum())
    return np.concatenate([[first], rest])


def _sample_class(
    data: PointSet,
    model_class: ModelClass,
    count: int,
    rng: np.random.Generator,
    config: SamplerConfig,
) -> List[Hypothesis]:
    """Draw `count` hypotheses of one class, each from a distinct minimal sample."""
    seen: Set[Tuple[int, ...]] = set()
    hypotheses = []

    def draw_once() -> Hypothesis:
        idx = _draw_indices(data.points, model_class.min_sample_size, rng, config)
        key = tuple(sorted(int(i) for i in idx))
        if key in seen:
            raise DegenerateSample("minimal sample already used")
        model = model_class.fit_minimal(data.points[idx])
        seen.add(key)
        return Hypothesis(model=model, source_sample=tuple(int(i) for i in idx))

    for _ in range(count):
        retryer = Retrying(
            stop=stop_after_attempt(config.max_attempts),
            retry=retry_if_exception_type(DegenerateSample),
            reraise=True,
        )
        try:
            hypotheses.append(retryer(draw_once))
        except DegenerateSample as e:
            raise InsufficientData(
                f"no valid {model_class.class_id} sample after {config.max_attempts} attempts: {e}"
            ) from e
    return hypotheses


def sample_hypotheses(
    data: PointSet, classes: Sequence[ModelClass], config: SamplerConfig
) -> List[Hypothesis]:
    """
    Sample the multi-class pool H = H_1 u ... u H_K.

    Each class draws from its own seed-derived substream, so running classes in
    parallel yields the same pool as running them one after another.

    Args:
        data: input points
        classes: model classes to sample from
        config: counts, seed and locality settings

    Returns:
        Hypotheses grouped by class, in class order
    """
    for model_class in classes:
        count = config.count_for(model_class.class_id)
        if data.N < model_class.min_sample_size:
            raise InsufficientData(
                f"{model_class.class_id} needs {model_class.min_sample_size} points, data has {data.N}"
            )
        if comb(data.N, model_class.min_sample_size) < count:
            raise InsufficientData(
                f"{data.N} points cannot give {count} distinct {model_class.class_id} samples"
            )

    streams = np.random.SeedSequence(config.seed).spawn(len(classes))
    with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as executor:
        futures = [
            executor.submit(
                _sample_class,
                data,
                model_class,
                config.count_for(model_class.class_id),
                np.random.default_rng(stream),
                config,
            )
            for model_class, stream in zip(classes, streams)
        ]
        pools = [f.result() for f in futures]

    hypotheses = [h for pool in pools for h in pool]
    logger.info(
        "Sampled "
        + ", ".join(f"{len(p)} {c.class_id}" for c, p in zip(classes, pools))
        + " hypotheses"
    )
    return hypotheses


def residual_matrix(data: PointSet, hypotheses: Sequence[Hypothesis]) -> np.ndarray:
    """Dense (N, M) matrix of orthogonal residuals e_ij = err(x_i, h_j)."""
    residuals = np.empty((data.N, len(hypotheses)))
    for j, hyp in enumerate(hypotheses):
        residuals[:, j] = get_model_class(hyp.class_id).residuals(hyp.model, data.points)
    return residuals


def validate_hypotheses(
    hypotheses: Sequence[Hypothesis],
    data: PointSet,
    epsilon: float,
    config: SamplerConfig,
    residuals: Optional[np.ndarray] = None,
) -> List[Hypothesis]:
    """
    Keep the hypotheses whose support concentrates inside the inlier band.

    A hypothesis is significant when n(eps) * k >= gamma * n(k * eps) and
    n(eps) > 0, where n(t) counts points within distance t. Uniform clutter
    grows linearly with the band width and fails the test.

    Args:
        hypotheses: pool to filter, left untouched
        data: input points
        epsilon: inlier threshold
        config: supplies validation_k and validation_gamma
        residuals: optional precomputed residual matrix for the pool
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not hypotheses:
        return []
    if residuals is None:
        residuals = residual_matrix(data, hypotheses)

    k, gamma = config.validation_k, config.validation_gamma
    n_inner = np.count_nonzero(residuals <= epsilon, axis=0)
    n_outer = np.count_nonzero(residuals <= k * epsilon, axis=0)
    keep = (n_inner > 0) & (n_inner * k >= gamma * n_outer)

    kept = [h for h, ok in zip(hypotheses, keep) if ok]
    logger.info(f"Validation kept {len(kept)}/{len(hypotheses)} hypotheses at eps={epsilon:g}")
    return kept


def pool_digest(hypotheses: Sequence[Hypothesis]) -> str:
    """Stable hash identifying a hypothesis pool."""
    digest = hashlib.sha256()
    for hyp in hypotheses:
        digest.update(hyp.class_id.encode())
        digest.update(np.asarray(hyp.model.params, dtype=float).tobytes())
        digest.update(np.asarray(hyp.source_sample, dtype=np.int64).tobytes())
    return digest.hexdigest()[:16]
