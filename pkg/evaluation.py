"""
Scoring against ground truth, silhouette-based epsilon estimation, synthetic
scene generation and parameter sweeps.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, field_validator, model_validator
from scipy.optimize import linear_sum_assignment
from tqdm import tqdm

from base_model_class import GeometryError, ModelClass, PointSet
from clustering import ClusteringOptions, Segmentation
from config import settings
from geometry import get_model_class, get_model_classes
from pipeline import ALGORITHMS, build_pool, cluster_pool, run_pipeline
from preference import pairwise_tanimoto
from sampling import SamplerConfig, sample_hypotheses
from selection import GricConfig

logger = logging.getLogger(__name__)


class MissingGroundTruth(Exception):
    """Scoring requested on data without ground-truth labels."""


class NoValidSegmentation(Exception):
    """Every epsilon of the search produced fewer than two structures."""

    def __init__(self, message: str, estimate: Optional["EpsilonEstimate"] = None):
        super().__init__(message)
        self.estimate = estimate


# ---------------------------------------------------------------------------
# Misclassification error
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    me: float
    n_points: int
    n_errors: int
    # predicted structure label -> ground-truth structure label
    assignment: Dict[int, int]
    per_structure: List[dict]
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "me": self.me,
            "n_points": self.n_points,
            "n_errors": self.n_errors,
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
            "per_structure": self.per_structure,
            "timings": dict(sorted(self.timings.items())),
        }


def confusion_matrix(pred_labels: np.ndarray, gt_labels: np.ndarray) -> np.ndarray:
    """Counts C[p, g] of points labelled p by the prediction and g by ground truth."""
    shape = (int(pred_labels.max(initial=0)) + 1, int(gt_labels.max(initial=0)) + 1)
    confusion = np.zeros(shape, dtype=int)
    np.add.at(confusion, (pred_labels, gt_labels), 1)
    return confusion


def misclassification_error(
    pred, gt_labels, timings: Optional[Dict[str, float]] = None
) -> EvalReport:
    """
    Fraction of points whose predicted structure disagrees with ground truth
    under the optimal one-to-one matching of structures.

    Outliers (label 0) only match outliers. Points of unmatched predicted
    structures are all errors.

    Args:
        pred: a Segmentation or a per-point label array (0 = outlier)
        gt_labels: ground-truth labels of the same length
    """
    if gt_labels is None:
        raise MissingGroundTruth("ground-truth labels are required for scoring")
    pred_labels = np.asarray(pred.labels if isinstance(pred, Segmentation) else pred, dtype=int)
    gt_labels = np.asarray(gt_labels, dtype=int)
    if pred_labels.shape != gt_labels.shape or pred_labels.ndim != 1:
        raise ValueError(
            f"prediction has {pred_labels.size} labels, ground truth has {gt_labels.size}"
        )
    n = pred_labels.size

    confusion = confusion_matrix(pred_labels, gt_labels)
    rows, cols = linear_sum_assignment(confusion[1:, 1:], maximize=True)
    matched = {int(r) + 1: int(c) + 1 for r, c in zip(rows, cols) if confusion[r + 1, c + 1] > 0}
    correct = int(confusion[0, 0]) + sum(int(confusion[p, g]) for p, g in matched.items())

    pred_sizes = confusion.sum(axis=1)
    gt_sizes = confusion.sum(axis=0)
    per_structure = []
    for p in range(1, confusion.shape[0]):
        if pred_sizes[p] == 0:
            continue
        g = matched.get(p)
        hits = int(confusion[p, g]) if g is not None else 0
        per_structure.append(
            {
                "structure": p,
                "gt_label": g,
                "size": int(pred_sizes[p]),
                "precision": hits / int(pred_sizes[p]),
                "recall": hits / int(gt_sizes[g]) if g is not None else None,
            }
        )

    errors = n - correct
    return EvalReport(
        me=errors / n if n else 0.0,
        n_points=n,
        n_errors=errors,
        assignment=matched,
        per_structure=per_structure,
        timings=dict(timings or {}),
    )


# ---------------------------------------------------------------------------
# Epsilon estimation
# ---------------------------------------------------------------------------


def silhouette_score(labels: np.ndarray, distances: np.ndarray) -> float:
    """
    Mean over non-outlier points of (b - a) / max(a, b), where a is the mean
    distance to the own structure and b the smallest mean distance to another
    structure. NaN with fewer than two structures; points alone in their
    structure score 0.
    """
    labels = np.asarray(labels)
    structure_ids = np.unique(labels[labels > 0])
    if structure_ids.size < 2:
        return float("nan")

    members = {k: np.flatnonzero(labels == k) for k in structure_ids}
    scores = []
    for k, own in members.items():
        others = [distances[np.ix_(own, idx)].mean(axis=1) for j, idx in members.items() if j != k]
        b = np.min(np.column_stack(others), axis=1)
        if own.size == 1:
            scores.append(np.zeros(1))
            continue
        a = (distances[np.ix_(own, own)].sum(axis=1) - np.diag(distances[np.ix_(own, own)])) / (
            own.size - 1
        )
        denom = np.maximum(a, b)
        scores.append(np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0))
    return float(np.concatenate(scores).mean())


@dataclass
class EpsilonEstimate:
    epsilon: float
    score: Optional[float]
    fallback: bool
    table: pd.DataFrame


def estimate_epsilon(
    data: PointSet,
    classes: Sequence[ModelClass],
    search_interval: Tuple[float, float],
    budget: Optional[int] = None,
    sampler: Optional[SamplerConfig] = None,
    opts: Optional[ClusteringOptions] = None,
    gric_overrides: Optional[dict] = None,
    strict: bool = False,
) -> EpsilonEstimate:
    """
    Pick the inlier threshold maximizing the silhouette of the resulting
    segmentation over a log-spaced grid.

    The raw hypothesis pool is sampled once and re-validated at every grid
    value. When no grid value yields two structures, the value with the most
    structures is returned with fallback=True, or NoValidSegmentation is raised
    if strict.
    """
    lo, hi = (float(v) for v in search_interval)
    budget = settings.EPSILON_SEARCH_BUDGET if budget is None else budget
    if lo <= 0 or hi < lo:
        raise ValueError(f"search interval must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
    if budget < 2:
        raise ValueError(f"budget must be at least 2 grid points, got {budget}")
    if lo == hi:
        return EpsilonEstimate(lo, None, False, pd.DataFrame({"epsilon": [lo]}))

    sampler = sampler or SamplerConfig()
    raw_pool = sample_hypotheses(data, classes, sampler)
    rows = []
    for eps in np.geomspace(lo, hi, budget):
        row = {"epsilon": float(eps), "structures": 0, "silhouette": float("nan")}
        try:
            result = run_pipeline(
                data,
                classes,
                float(eps),
                sampler=sampler,
                gric=GricConfig.for_epsilon(float(eps), **(gric_overrides or {})),
                opts=opts,
                hypotheses=raw_pool,
            )
        except Exception as e:
            logger.warning(f"Epsilon {eps:g} skipped: {e}")
            rows.append(row)
            continue
        segmentation = result.segmentation
        row["structures"] = len(segmentation.structures)
        row["silhouette"] = silhouette_score(segmentation.labels, pairwise_tanimoto(result.prefs))
        rows.append(row)
    table = pd.DataFrame(rows)

    valid = table.dropna(subset=["silhouette"])
    if not valid.empty:
        best = valid.loc[valid["silhouette"].idxmax()]
        logger.info(f"Estimated eps={best['epsilon']:g} (silhouette {best['silhouette']:.3f})")
        return EpsilonEstimate(float(best["epsilon"]), float(best["silhouette"]), False, table)

    message = f"no epsilon in [{lo:g}, {hi:g}] yields two structures"
    fallback = table.loc[table["structures"].idxmax()]
    estimate = EpsilonEstimate(float(fallback["epsilon"]), None, True, table)
    if strict:
        raise NoValidSegmentation(message, estimate)
    logger.warning(f"{message}; falling back to eps={estimate.epsilon:g}")
    return estimate


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------


class StructureSpec(BaseModel):
    """
    One generating model. extent is the sampling range of the curve parameter:
    arclength along the line from the foot of the origin, angle for circles,
    abscissa for parabolas.
    """

    model_config = ConfigDict(frozen=True)

    class_id: str
    params: Tuple[float, ...]
    count: NonNegativeInt
    noise_sigma: float = Field(ge=0)
    extent: Tuple[float, float]

    @model_validator(mode="after")
    def _check_model(self) -> "StructureSpec":
        try:
            get_model_class(self.class_id).make_instance(self.params)
        except GeometryError as e:
            raise ValueError(str(e)) from e
        if self.extent[1] < self.extent[0]:
            raise ValueError(f"extent must be increasing, got {self.extent}")
        return self


class SceneSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    structures: List[StructureSpec] = Field(default_factory=list)
    outlier_count: NonNegativeInt = 0
    box: Tuple[Tuple[float, float], Tuple[float, float]] = ((-0.5, -0.5), (0.5, 0.5))
    seed: int = 0

    @field_validator("box")
    @classmethod
    def _nonempty_box(cls, box):
        (x0, y0), (x1, y1) = box
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"outlier box must be nonempty, got {box}")
        return box

    @property
    def n_points(self) -> int:
        return sum(s.count for s in self.structures) + self.outlier_count


def _sample_structure(spec: StructureSpec, rng: np.random.Generator) -> np.ndarray:
    model = get_model_class(spec.class_id).make_instance(spec.params)
    t = rng.uniform(spec.extent[0], spec.extent[1], size=spec.count)
    noise = rng.normal(0.0, spec.noise_sigma, size=spec.count)

    if spec.class_id == "line":
        nx, ny, c = model.params
        normal = np.array([nx, ny])
        direction = np.array([ny, -nx])
        return c * normal + t[:, None] * direction + np.outer(noise, normal)
    if spec.class_id == "circle":
        cx, cy, radius = model.params
        unit = np.column_stack([np.cos(t), np.sin(t)])
        return np.array([cx, cy]) + (radius + noise)[:, None] * unit
    if spec.class_id == "parabola":
        a, b, c = model.params
        normal = np.column_stack([-(2.0 * a * t + b), np.ones_like(t)])
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        on_curve = np.column_stack([t, (a * t + b) * t + c])
        return on_curve + noise[:, None] * normal
    raise ValueError(f"no generator for class {spec.class_id!r}")


def generate_scene(spec: SceneSpec) -> PointSet:
    """Points on every structure with orthogonal Gaussian noise, then uniform outliers."""
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for k, structure in enumerate(spec.structures, start=1):
        blocks.append(_sample_structure(structure, rng).reshape(-1, 2))
        labels.append(np.full(structure.count, k))
    (x0, y0), (x1, y1) = spec.box
    blocks.append(
        np.column_stack(
            [rng.uniform(x0, x1, spec.outlier_count), rng.uniform(y0, y1, spec.outlier_count)]
        )
    )
    labels.append(np.zeros(spec.outlier_count, dtype=int))
    points = np.concatenate(blocks)
    if points.shape[0] == 0:
        raise ValueError("scene has no points")
    return PointSet(points=points, gt_labels=np.concatenate(labels).astype(int))


@dataclass(frozen=True)
class Preset:
    """A benchmark scene family; the outlier count follows from the outlier rate."""

    structures: Tuple[StructureSpec, ...]
    outlier_rate: float
    classes: Tuple[str, ...]

    @property
    def noise_sigma(self) -> float:
        return max(s.noise_sigma for s in self.structures)

    @property
    def default_epsilon(self) -> float:
        return 3.0 * self.noise_sigma

    def scene(self, seed: int = 0, outlier_rate: Optional[float] = None) -> SceneSpec:
        rate = self.outlier_rate if outlier_rate is None else outlier_rate
        if not 0 <= rate < 1:
            raise ValueError(f"outlier rate must be in [0, 1), got {rate}")
        inliers = sum(s.count for s in self.structures)
        return SceneSpec(
            structures=list(self.structures),
            outlier_count=int(round(rate * inliers / (1.0 - rate))),
            seed=seed,
        )


def _star5() -> Preset:
    angles = 2.0 * np.pi * np.arange(5) / 5.0
    lines = tuple(
        StructureSpec(
            class_id="line",
            params=(-np.sin(a), np.cos(a), 0.0),
            count=50,
            noise_sigma=0.0075,
            extent=(-0.5, 0.5),
        )
        for a in angles
    )
    return Preset(lines, outlier_rate=0.5, classes=("line",))


def _circles4() -> Preset:
    circles = tuple(
        StructureSpec(
            class_id="circle",
            params=(cx, cy, 0.2),
            count=50,
            noise_sigma=0.01,
            extent=(0.0, 2.0 * np.pi),
        )
        for cx, cy in ((-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25))
    )
    return Preset(circles, outlier_rate=0.3, classes=("circle",))


def _mixed_conics() -> Preset:
    structures = (
        StructureSpec(class_id="line", params=(0.0, 1.0, -0.4), count=50, noise_sigma=0.01, extent=(-0.4, 0.4)),
        StructureSpec(class_id="line", params=(1.0, 0.0, 0.4), count=50, noise_sigma=0.01, extent=(-0.4, 0.25)),
        StructureSpec(class_id="circle", params=(-0.22, 0.2, 0.18), count=50, noise_sigma=0.01, extent=(0.0, 2.0 * np.pi)),
        # y = 6 (x - 0.1)^2 - 0.25
        StructureSpec(class_id="parabola", params=(6.0, -1.2, -0.19), count=50, noise_sigma=0.01, extent=(-0.08, 0.28)),
    )
    return Preset(structures, outlier_rate=0.3, classes=("line", "circle", "parabola"))


# star5: five lines through the origin at angles 2 pi k / 5, 50% outliers.
# circles4: four circles of radius 0.2 centred at (+-0.25, +-0.25), 30% outliers.
# mixed_conics: two lines, one circle and one parabola, 30% outliers.
PRESETS: Dict[str, Preset] = {
    "star5": _star5(),
    "circles4": _circles4(),
    "mixed_conics": _mixed_conics(),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"Unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


class SweepConfig(BaseModel):
    """
    Grid over one parameter of a preset scene. epsilon values are multiples of
    the preset noise sigma; hypotheses values are per-class counts.
    """

    model_config = ConfigDict(frozen=True)

    preset: str
    parameter: Literal["epsilon", "outlier_rate", "hypotheses"]
    values: List[float] = Field(min_length=1)
    seeds: List[int] = Field(min_length=1)
    algorithms: List[Literal["multilink", "tlinkage"]] = Field(
        default_factory=lambda: list(ALGORITHMS), min_length=1
    )
    classes: Optional[List[str]] = None
    epsilon: Optional[float] = Field(default=None, gt=0)
    hypotheses_per_class: int = Field(default_factory=lambda: settings.HYPOTHESES_PER_CLASS, gt=0)

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, name: str) -> str:
        get_preset(name)
        return name


@dataclass
class SweepResult:
    runs: pd.DataFrame
    summary: pd.DataFrame

    def to_json(self) -> str:
        return self.summary.to_json(orient="records", indent=2, double_precision=10)


def _sweep_cell(config: SweepConfig, value: float, seed: int) -> List[dict]:
    preset = get_preset(config.preset)
    classes = get_model_classes(config.classes or list(preset.classes))
    epsilon = config.epsilon or preset.default_epsilon
    outlier_rate = None
    counts = config.hypotheses_per_class
    if config.parameter == "epsilon":
        epsilon = value * preset.noise_sigma
    elif config.parameter == "outlier_rate":
        outlier_rate = value
    else:
        counts = int(value)

    data = generate_scene(preset.scene(seed=seed, outlier_rate=outlier_rate))
    sampler = SamplerConfig(per_class_counts={c.class_id: counts for c in classes}, seed=seed)
    pool = build_pool(data, classes, epsilon, sampler)
    gric = GricConfig.for_epsilon(epsilon)

    rows = []
    for algorithm in config.algorithms:
        segmentation, seconds = _timed_cluster(data, classes, pool, gric, algorithm)
        report = misclassification_error(segmentation, data.gt_labels)
        rows.append(
            {
                "algorithm": algorithm,
                "me": report.me,
                "structures": len(segmentation.structures),
                "pool_hash": pool.pool_hash,
                "t_hypotheses": pool.seconds,
                "t_clustering": seconds,
            }
        )
    return rows


def _timed_cluster(data, classes, pool, gric, algorithm):
    start = time.perf_counter()
    segmentation = cluster_pool(data, classes, pool, gric, algorithm=algorithm)
    return segmentation, time.perf_counter() - start


def _summarize(runs: pd.DataFrame, parameter: str) -> pd.DataFrame:
    grouped = runs.groupby([parameter, "algorithm"], sort=True)
    summary = grouped["me"].agg(
        median="median",
        q1=lambda s: s.quantile(0.25),
        q3=lambda s: s.quantile(0.75),
        min="min",
        max="max",
        runs="count",
    )
    summary["iqr"] = summary["q3"] - summary["q1"]
    summary["failures"] = grouped["me"].apply(lambda s: int(s.isna().sum()))
    summary["t_hypotheses"] = grouped["t_hypotheses"].mean()
    summary["t_clustering"] = grouped["t_clustering"].mean()
    return summary.drop(columns=["q1", "q3"]).reset_index()


def sweep(config: SweepConfig, progress: bool = False) -> SweepResult:
    """
    Run every (value, seed) cell and aggregate ME per (value, algorithm).

    All algorithms of a cell share one hypothesis pool. A failing cell becomes
    rows with missing ME and never aborts the sweep.
    """
    cells = [(v, s) for v in config.values for s in config.seeds]
    rows = []
    for value, seed in tqdm(cells, desc=f"sweep {config.parameter}", disable=not progress):
        try:
            cell_rows = _sweep_cell(config, value, seed)
        except Exception as e:
            logger.warning(f"Sweep cell {config.parameter}={value:g} seed={seed} failed: {e}")
            cell_rows = [
                {"algorithm": a, "me": np.nan, "structures": np.nan, "pool_hash": None,
                 "t_hypotheses": np.nan, "t_clustering": np.nan, "error": str(e)}
                for a in config.algorithms
            ]
        for row in cell_rows:
            row.setdefault("error", None)
            rows.append({config.parameter: value, "seed": seed, **row})

    runs = pd.DataFrame(rows)
    summary = _summarize(runs, config.parameter)
    logger.info(f"Sweep over {len(config.values)} {config.parameter} values x {len(config.seeds)} seeds done")
    return SweepResult(runs=runs, summary=summary)
