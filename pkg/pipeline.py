"""
One end-to-end fitting run: sample hypotheses, validate them, embed the points
in preference space and cluster. Shared by the CLI, epsilon estimation and
sweeps.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from base_model_class import ModelClass, PointSet
from clustering import (
    ClusteringOptions,
    EmptyHypothesisPool,
    Segmentation,
    multilink,
    tlinkage_baseline,
)
from preference import PreferenceMatrix, build_preferences
from sampling import (
    Hypothesis,
    SamplerConfig,
    pool_digest,
    residual_matrix,
    sample_hypotheses,
    validate_hypotheses,
)
from selection import GricConfig

logger = logging.getLogger(__name__)

ALGORITHMS = ("multilink", "tlinkage")


@dataclass
class HypothesisPool:
    """Validated hypotheses with their preference embedding."""

    hypotheses: List[Hypothesis]
    prefs: PreferenceMatrix
    pool_hash: str
    sampled: int
    seconds: float


@dataclass
class PipelineResult:
    segmentation: Segmentation
    pool: HypothesisPool
    epsilon: float
    algorithm: str
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def hypotheses(self) -> List[Hypothesis]:
        return self.pool.hypotheses

    @property
    def prefs(self) -> PreferenceMatrix:
        return self.pool.prefs

    @property
    def pool_hash(self) -> str:
        return self.pool.pool_hash


def build_pool(
    data: PointSet,
    classes: Sequence[ModelClass],
    epsilon: float,
    sampler: Optional[SamplerConfig] = None,
    hypotheses: Optional[Sequence[Hypothesis]] = None,
    class_epsilons: Optional[Dict[str, float]] = None,
) -> HypothesisPool:
    """
    Sample (unless a raw pool is given), validate at epsilon and build
    preferences. Residuals are computed once and shared by both steps.

    Raises:
        EmptyHypothesisPool: validation rejected every hypothesis
    """
    start = time.perf_counter()
    sampler = sampler or SamplerConfig()
    if hypotheses is None:
        hypotheses = sample_hypotheses(data, classes, sampler)
    hypotheses = list(hypotheses)

    residuals = residual_matrix(data, hypotheses)
    kept = validate_hypotheses(hypotheses, data, epsilon, sampler, residuals=residuals)
    if not kept:
        raise EmptyHypothesisPool(
            f"all {len(hypotheses)} hypotheses failed validation at eps={epsilon:g}"
        )
    kept_ids = {id(h) for h in kept}
    columns = [j for j, h in enumerate(hypotheses) if id(h) in kept_ids]
    prefs = build_preferences(
        data, kept, epsilon, class_epsilons=class_epsilons, residuals=residuals[:, columns]
    )
    return HypothesisPool(
        hypotheses=kept,
        prefs=prefs,
        pool_hash=pool_digest(kept),
        sampled=len(hypotheses),
        seconds=time.perf_counter() - start,
    )


def cluster_pool(
    data: PointSet,
    classes: Sequence[ModelClass],
    pool: HypothesisPool,
    gric: GricConfig,
    opts: Optional[ClusteringOptions] = None,
    algorithm: str = "multilink",
) -> Segmentation:
    if algorithm == "multilink":
        return multilink(data, classes, pool.prefs, pool.hypotheses, gric, opts)
    if algorithm == "tlinkage":
        return tlinkage_baseline(data, pool.prefs, pool.hypotheses, opts)
    raise ValueError(f"Unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def run_pipeline(
    data: PointSet,
    classes: Sequence[ModelClass],
    epsilon: float,
    sampler: Optional[SamplerConfig] = None,
    gric: Optional[GricConfig] = None,
    opts: Optional[ClusteringOptions] = None,
    algorithm: str = "multilink",
    hypotheses: Optional[Sequence[Hypothesis]] = None,
    class_epsilons: Optional[Dict[str, float]] = None,
) -> PipelineResult:
    """Run one segmentation and record wall time of the hypothesis and clustering phases."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"Unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    gric = gric or GricConfig.for_epsilon(epsilon)

    pool = build_pool(data, classes, epsilon, sampler, hypotheses, class_epsilons)
    start = time.perf_counter()
    segmentation = cluster_pool(data, classes, pool, gric, opts, algorithm)
    clustering_seconds = time.perf_counter() - start

    logger.info(
        f"{algorithm} at eps={epsilon:g}: {len(segmentation.structures)} structures, "
        f"{segmentation.outlier_indices.size} outliers "
        f"(hypotheses {pool.seconds:.2f}s, clustering {clustering_seconds:.2f}s)"
    )
    return PipelineResult(
        segmentation=segmentation,
        pool=pool,
        epsilon=float(epsilon),
        algorithm=algorithm,
        timings={"hypotheses": pool.seconds, "clustering": clustering_seconds},
    )
