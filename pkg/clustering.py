"""
MultiLink: single-linkage agglomeration in preference space where every merge
is decided by on-the-fly fitting and GRIC model selection. Also hosts the
T-linkage baseline used in comparison experiments.
"""

import heapq
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt

from base_model_class import ModelClass, ModelInstance, PointSet
from geometry import get_model_class
from preference import PreferenceMatrix, pairwise_tanimoto
from sampling import Hypothesis
from selection import (
    FitRecord,
    GricConfig,
    MergeVerdict,
    NoFittableClass,
    cluster_fit,
    evaluate_merge,
    gric_score,
    select_class,
)

logger = logging.getLogger(__name__)

OrderKey = Tuple[int, int]


class EmptyHypothesisPool(Exception):
    """Validation left no hypothesis to build preferences on."""


class ConfigError(Exception):
    """Inputs of the clustering engine are inconsistent."""


class ClusteringOptions(BaseModel):
    """
    Options shared by MultiLink and the T-linkage baseline.

    min_structure_size defaults to the largest minimal sample size among the
    classes plus two, so every structure over-determines at least one model.
    """

    model_config = ConfigDict(frozen=True)

    min_structure_size: Optional[PositiveInt] = None
    refine: bool = False
    debug: bool = False

    def resolve_min_structure_size(self, classes: Sequence[ModelClass]) -> int:
        if self.min_structure_size is not None:
            return self.min_structure_size
        return max(c.min_sample_size for c in classes) + 2


@dataclass(eq=False)
class Cluster:
    cluster_id: int
    member_indices: np.ndarray
    coords: np.ndarray
    # hypotheses explaining every member within the inlier threshold
    consensus: np.ndarray
    creation_step: int = 0
    cached_fits: Dict[str, Optional[FitRecord]] = field(default_factory=dict)
    winning_class: Optional[str] = None

    @property
    def size(self) -> int:
        return int(self.member_indices.size)

    @property
    def order_key(self) -> OrderKey:
        return (self.creation_step, int(self.member_indices[0]))


@dataclass(frozen=True)
class MergeRecord:
    """One logged decision: every GRIC test and every accepted fallback merge."""

    step: int
    left_size: int
    right_size: int
    distance: float
    criterion: str  # "gric" or "tlinkage"
    accepted: bool
    verdict: Optional[MergeVerdict] = None

    def to_dict(self) -> dict:
        record = {
            "step": self.step,
            "left_size": self.left_size,
            "right_size": self.right_size,
            "distance": float(self.distance),
            "criterion": self.criterion,
            "accepted": self.accepted,
        }
        if self.verdict is not None:
            record["winning_class"] = self.verdict.winning_class
            record["scores"] = {
                k: [float(s) for s in v] for k, v in self.verdict.scores.items()
            }
        return record


@dataclass(frozen=True)
class Structure:
    member_indices: np.ndarray
    class_id: str
    model: ModelInstance
    gric: Optional[float]

    @property
    def size(self) -> int:
        return int(self.member_indices.size)


@dataclass
class Segmentation:
    """Partition of the data into structures plus an outlier set."""

    n_points: int
    structures: List[Structure]
    outlier_indices: np.ndarray
    merge_log: List[MergeRecord] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        """Per-point labels: 0 for outliers, k for the k-th structure."""
        labels = np.zeros(self.n_points, dtype=int)
        for k, structure in enumerate(self.structures, start=1):
            labels[structure.member_indices] = k
        return labels

    def class_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for s in self.structures:
            counts[s.class_id] = counts.get(s.class_id, 0) + 1
        return counts

    def merge_log_json(self) -> str:
        return json.dumps([r.to_dict() for r in self.merge_log], indent=2)


class LinkageState:
    """
    Live clusters with their single-linkage distances.

    Distances live in a dense slot matrix; a merged cluster takes over the slot
    of one parent. Forbidden pairs carry +inf and are never queued. A
    lazy-deletion heap proposes the closest live pair, ties broken by the
    clusters' (creation_step, index) keys.
    """

    def __init__(self, point_distances: np.ndarray, order_keys: Sequence[OrderKey]):
        n = point_distances.shape[0]
        self.distances = np.array(point_distances, dtype=float)
        np.fill_diagonal(self.distances, np.inf)
        self._slot_of: Dict[int, int] = {i: i for i in range(n)}
        self._id_at_slot = np.arange(n)
        self._alive = np.ones(n, dtype=bool)
        self._key_of: Dict[int, OrderKey] = {i: tuple(k) for i, k in enumerate(order_keys)}

        rows, cols = np.nonzero(np.triu(np.isfinite(self.distances), k=1))
        self._heap = [
            self._entry(float(self.distances[i, j]), int(i), int(j)) for i, j in zip(rows, cols)
        ]
        heapq.heapify(self._heap)

    def _entry(self, dist: float, a: int, b: int):
        ka, kb = self._key_of[a], self._key_of[b]
        if kb < ka:
            a, b, ka, kb = b, a, kb, ka
        return (dist, ka, kb, a, b)

    @property
    def active_clusters(self) -> List[int]:
        return sorted(self._slot_of)

    @property
    def forbidden_pairs(self) -> Set[Tuple[int, int]]:
        pairs = set()
        live = self.active_clusters
        for i, a in enumerate(live):
            for b in live[i + 1:]:
                if self.is_forbidden(a, b):
                    pairs.add((a, b))
        return pairs

    def distance(self, a: int, b: int) -> float:
        return float(self.distances[self._slot_of[a], self._slot_of[b]])

    def is_forbidden(self, a: int, b: int) -> bool:
        return bool(np.isinf(self.distance(a, b)))

    def pop_min(self) -> Optional[Tuple[float, int, int]]:
        """Closest live, non-forbidden pair, or None when every distance is +inf."""
        while self._heap:
            dist, _, _, a, b = heapq.heappop(self._heap)
            if a not in self._slot_of or b not in self._slot_of:
                continue
            if np.isinf(dist) or self.distance(a, b) != dist:
                continue
            return dist, a, b
        return None

    def forbid(self, a: int, b: int) -> None:
        sa, sb = self._slot_of[a], self._slot_of[b]
        self.distances[sa, sb] = self.distances[sb, sa] = np.inf

    def merge(self, a: int, b: int, new_id: int, new_key: OrderKey) -> None:
        """Replace a and b by new_id: d(W, Z) = min(d(U, Z), d(V, Z))."""
        if a == b or a not in self._slot_of or b not in self._slot_of:
            raise ValueError(f"cannot merge clusters {a} and {b}")
        sa, sb = self._slot_of.pop(a), self._slot_of.pop(b)
        del self._key_of[a], self._key_of[b]

        row = np.minimum(self.distances[sa], self.distances[sb])
        self._alive[sb] = False
        self.distances[sb, :] = np.inf
        self.distances[:, sb] = np.inf
        row[sb] = np.inf
        row[sa] = np.inf
        self.distances[sa, :] = row
        self.distances[:, sa] = row

        self._slot_of[new_id] = sa
        self._id_at_slot[sa] = new_id
        self._key_of[new_id] = tuple(new_key)
        for slot in np.flatnonzero(self._alive & np.isfinite(row)):
            heapq.heappush(self._heap, self._entry(float(row[slot]), new_id, int(self._id_at_slot[slot])))


def linkable_distances(prefs: PreferenceMatrix) -> np.ndarray:
    """Pairwise Tanimoto distances; pairs sharing no hypothesis (distance 1) get +inf."""
    distances = pairwise_tanimoto(prefs)
    distances[distances >= 1.0] = np.inf
    return distances


def update_single_linkage(
    state: LinkageState, merged: Tuple[int, int], new_id: int, new_key: OrderKey
) -> LinkageState:
    state.merge(merged[0], merged[1], new_id, new_key)
    return state


def _check_inputs(data: PointSet, prefs: PreferenceMatrix, hypotheses: Sequence[Hypothesis]):
    if not hypotheses:
        raise EmptyHypothesisPool("no hypotheses survived validation")
    if prefs.N != data.N:
        raise ConfigError(f"preferences have {prefs.N} rows for {data.N} points")
    if prefs.M != len(hypotheses):
        raise ConfigError(f"preferences have {prefs.M} columns for {len(hypotheses)} hypotheses")


class MultiLinkEngine:
    """Runs one MultiLink clustering over a fixed preference embedding."""

    def __init__(
        self,
        data: PointSet,
        classes: Sequence[ModelClass],
        prefs: PreferenceMatrix,
        hypotheses: Sequence[Hypothesis],
        gric: GricConfig,
        opts: Optional[ClusteringOptions] = None,
    ):
        if not classes:
            raise ConfigError("at least one model class is required")
        _check_inputs(data, prefs, hypotheses)
        self.data = data
        self.classes = list(classes)
        self.prefs = prefs
        self.hypotheses = list(hypotheses)
        self.gric = gric
        self.opts = opts or ClusteringOptions()
        # clusters up to this size cannot over-determine every class
        self.fallback_size = max(c.min_sample_size for c in self.classes)

    def _singletons(self) -> Dict[int, Cluster]:
        support = self.prefs.support()
        return {
            i: Cluster(
                cluster_id=i,
                member_indices=np.array([i]),
                coords=self.data.points[i : i + 1],
                consensus=support[i],
            )
            for i in range(self.data.N)
        }

    def run(self) -> Segmentation:
        n = self.data.N
        clusters = self._singletons()
        state = LinkageState(
            linkable_distances(self.prefs), [clusters[i].order_key for i in range(n)]
        )
        merge_log: List[MergeRecord] = []
        stats = {"iterations": 0, "merges": 0, "rejections": 0, "fallback_tests": 0, "gric_tests": 0}
        next_id = n

        while True:
            proposal = state.pop_min()
            if proposal is None:
                break
            dist, a, b = proposal
            u, v = clusters[a], clusters[b]
            stats["iterations"] += 1
            verdict: Optional[MergeVerdict] = None

            if min(u.size, v.size) <= self.fallback_size:
                stats["fallback_tests"] += 1
                criterion = "tlinkage"
                accept = bool(np.any(u.consensus & v.consensus))
            else:
                stats["gric_tests"] += 1
                criterion = "gric"
                try:
                    verdict = evaluate_merge(u, v, self.classes, self.gric)
                    accept = verdict.accept
                except NoFittableClass as e:
                    logger.debug(f"Merge inhibited: {e}")
                    accept = False

            if accept or criterion == "gric":
                step = stats["merges"] + 1 if accept else stats["merges"]
                merge_log.append(MergeRecord(step, u.size, v.size, dist, criterion, accept, verdict))

            if accept:
                stats["merges"] += 1
                merged = self._merge(u, v, next_id, stats["merges"], verdict)
                state.merge(a, b, merged.cluster_id, merged.order_key)
                del clusters[a], clusters[b]
                clusters[merged.cluster_id] = merged
                next_id += 1
            else:
                stats["rejections"] += 1
                state.forbid(a, b)

            if self.opts.debug:
                self._check_partition(clusters)
            if stats["iterations"] > n * n:
                raise RuntimeError(f"clustering exceeded {n * n} iterations")

        logger.info(
            f"MultiLink: {stats['merges']} merges, {stats['rejections']} rejections, "
            f"{len(clusters)} clusters left"
        )
        return self._finalize(clusters, merge_log, stats)

    def _merge(
        self, u: Cluster, v: Cluster, new_id: int, step: int, verdict: Optional[MergeVerdict]
    ) -> Cluster:
        indices = np.concatenate([u.member_indices, v.member_indices])
        order = np.argsort(indices, kind="stable")
        merged = Cluster(
            cluster_id=new_id,
            member_indices=indices[order],
            coords=np.concatenate([u.coords, v.coords])[order],
            consensus=u.consensus & v.consensus,
            creation_step=step,
        )
        if verdict is not None:
            merged.cached_fits.update(verdict.union_fits)
            merged.winning_class = verdict.winning_class
        return merged

    def _check_partition(self, clusters: Dict[int, Cluster]) -> None:
        members = np.concatenate([c.member_indices for c in clusters.values()])
        if members.size != self.data.N or not np.array_equal(np.sort(members), np.arange(self.data.N)):
            raise AssertionError("active clusters do not partition the data")

    def _final_fit(self, cluster: Cluster) -> Optional[Tuple[ModelClass, FitRecord]]:
        """The winning on-the-fly fit, or the best-GRIC class for clusters never tested."""
        if cluster.winning_class is not None:
            model_class = get_model_class(cluster.winning_class)
            record = cluster_fit(cluster, model_class, self.gric)
            if record is not None:
                return model_class, record

        fits = {}
        for model_class in self.classes:
            record = cluster_fit(cluster, model_class, self.gric)
            if record is not None:
                fits[model_class.class_id] = record
        if not fits:
            return None
        best = select_class({k: r.score for k, r in fits.items()}, self.classes)
        return get_model_class(best), fits[best]

    def _finalize(
        self, clusters: Dict[int, Cluster], merge_log: List[MergeRecord], stats: Dict[str, int]
    ) -> Segmentation:
        min_size = self.opts.resolve_min_structure_size(self.classes)
        structures: List[Structure] = []
        outliers: List[np.ndarray] = []

        for cluster in sorted(clusters.values(), key=lambda c: int(c.member_indices[0])):
            final = self._final_fit(cluster) if cluster.size >= min_size else None
            if final is None:
                outliers.append(cluster.member_indices)
                continue
            model_class, record = final
            model, score = record.model, record.score
            if self.opts.refine:
                model = model_class.refine(model, cluster.coords, scale=self.gric.sigma)
                score = gric_score(cluster.coords, model_class, model, self.gric)
            structures.append(Structure(cluster.member_indices, model_class.class_id, model, score))

        outlier_indices = np.sort(np.concatenate(outliers)) if outliers else np.array([], dtype=int)
        return Segmentation(self.data.N, structures, outlier_indices, merge_log, stats)


def multilink(
    data: PointSet,
    classes: Sequence[ModelClass],
    prefs: PreferenceMatrix,
    hypotheses: Sequence[Hypothesis],
    gric: GricConfig,
    opts: Optional[ClusteringOptions] = None,
) -> Segmentation:
    return MultiLinkEngine(data, classes, prefs, hypotheses, gric, opts).run()


def _tanimoto_row(vectors: np.ndarray, sq_norms: np.ndarray, i: int) -> np.ndarray:
    dots = vectors @ vectors[i]
    denom = sq_norms + sq_norms[i] - dots
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 1.0 - dots / np.where(denom > 0, denom, 1.0), 1.0)


def tlinkage_baseline(
    data: PointSet,
    prefs: PreferenceMatrix,
    hypotheses: Sequence[Hypothesis],
    opts: Optional[ClusteringOptions] = None,
) -> Segmentation:
    """
    T-linkage: a cluster's preference is the element-wise minimum of its
    members' preferences; the closest pair under Tanimoto is merged while the
    distance is below 1. Structures are labelled with the hypothesis that
    explains most of their points.
    """
    _check_inputs(data, prefs, hypotheses)
    opts = opts or ClusteringOptions()
    classes = [get_model_class(c) for c in dict.fromkeys(h.class_id for h in hypotheses)]
    n = data.N

    vectors = prefs.dense()
    sq_norms = np.einsum("ij,ij->i", vectors, vectors)
    dist = pairwise_tanimoto(prefs.values)
    np.fill_diagonal(dist, np.inf)
    members: Dict[int, List[int]] = {i: [i] for i in range(n)}
    merge_log: List[MergeRecord] = []
    stats = {"iterations": 0, "merges": 0}

    while members:
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        d = float(dist[i, j])
        if d >= 1.0:
            break
        i, j = min(i, j), max(i, j)
        stats["iterations"] += 1
        stats["merges"] += 1
        merge_log.append(
            MergeRecord(stats["merges"], len(members[i]), len(members[j]), d, "tlinkage", True)
        )

        vectors[i] = np.minimum(vectors[i], vectors[j])
        sq_norms[i] = vectors[i] @ vectors[i]
        members[i].extend(members.pop(j))
        dist[j, :] = np.inf
        dist[:, j] = np.inf

        live = np.fromiter(members.keys(), dtype=int)
        row = _tanimoto_row(vectors[live], sq_norms[live], int(np.flatnonzero(live == i)[0]))
        dist[i, live] = row
        dist[live, i] = row
        dist[i, i] = np.inf

    support = prefs.support()
    min_size = opts.resolve_min_structure_size(classes)
    structures: List[Structure] = []
    outliers: List[int] = []
    for root in sorted(members, key=lambda k: min(members[k])):
        indices = np.sort(np.array(members[root]))
        if indices.size < min_size:
            outliers.extend(indices.tolist())
            continue
        best = int(np.argmax(support[indices].sum(axis=0)))
        hyp = hypotheses[best]
        structures.append(Structure(indices, hyp.class_id, hyp.model, None))

    logger.info(f"T-linkage: {stats['merges']} merges, {len(structures)} structures")
    return Segmentation(n, structures, np.array(sorted(outliers), dtype=int), merge_log, stats)


__all__ = [
    "Cluster",
    "ClusteringOptions",
    "ConfigError",
    "EmptyHypothesisPool",
    "LinkageState",
    "MergeRecord",
    "MultiLinkEngine",
    "Segmentation",
    "Structure",
    "linkable_distances",
    "multilink",
    "tlinkage_baseline",
    "update_single_linkage",
]
