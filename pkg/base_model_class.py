"""
Base model class with the shared contract for every geometric model family.

A model class knows how to instantiate a model from a minimal sample, refit it
to an arbitrary cluster and measure orthogonal residuals. The clustering engine
only talks to this interface, so new families plug in without touching it.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

logger = logging.getLogger(__name__)


class GeometryError(Exception):
    """Base class for model instantiation failures."""


class DegenerateSample(GeometryError):
    """Minimal sample is not in general position for the model class."""


class DegenerateCluster(GeometryError):
    """Cluster configuration is rank-deficient for the model class."""


@dataclass(frozen=True)
class ModelInstance:
    """One fitted model in the canonical parameterization of its class."""

    class_id: str
    params: Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float)

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "params": [float(p) for p in self.params]}


@dataclass(frozen=True)
class PointSet:
    """Input data: N points in an r-dimensional ambient space.

    Args:
        points: (N, r) array of coordinates
        gt_labels: optional per-point labels, 0 marks an outlier
    """

    points: np.ndarray
    gt_labels: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError(f"points must be an (N, r) array with N >= 1, got shape {points.shape}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.gt_labels is not None:
            labels = np.array(self.gt_labels)
            if labels.shape != (points.shape[0],):
                raise ValueError(
                    f"gt_labels has length {labels.size}, expected {points.shape[0]}"
                )
            if labels.size and (
                not np.all(np.equal(np.mod(labels, 1), 0)) or labels.min() < 0
            ):
                raise ValueError("gt_labels must be nonnegative integers")
            labels = labels.astype(int)
            labels.setflags(write=False)
            object.__setattr__(self, "gt_labels", labels)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def r(self) -> int:
        return self.points.shape[1]


class ModelClass(ABC):
    """
    A model class Theta_k: a parametric family with fixed manifold dimension d
    and parameter count kappa, living in an ambient space of dimension r.
    """

    class_id: str = ""
    r: int = 2
    d: int = 1
    kappa: int = 0
    min_sample_size: int = 0

    @abstractmethod
    def make_instance(self, params: Sequence[float]) -> ModelInstance:
        """Canonicalize a raw parameter vector and check the class invariants."""

    @abstractmethod
    def fit_minimal(self, sample: np.ndarray) -> ModelInstance:
        """Return the unique model through a minimal sample.

        Raises:
            DegenerateSample: sample is not in general position
        """

    @abstractmethod
    def fit_cluster(self, points: np.ndarray) -> ModelInstance:
        """Least-squares fit on an arbitrary cluster.

        Raises:
            DegenerateCluster: configuration cannot determine a model
        """

    @abstractmethod
    def residuals_from_params(self, params: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Orthogonal distances from each point to the zero set of raw params."""

    def residuals(self, model: ModelInstance, points: np.ndarray) -> np.ndarray:
        """Vectorised orthogonal residuals of an (n, r) array of points."""
        self._check_owner(model)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.residuals_from_params(model.as_array(), pts)

    def residual(self, model: ModelInstance, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.r,):
            raise ValueError(f"point must have dimension {self.r}, got shape {point.shape}")
        return float(self.residuals(model, point[None, :])[0])

    def refine(
        self, model: ModelInstance, points: np.ndarray, scale: float
    ) -> ModelInstance:
        """
        Non-linear geometric refinement started from an existing fit.

        Args:
            model: starting model, usually the winning on-the-fly fit
            points: member coordinates of the structure
            scale: soft-L1 transition scale, in coordinate units
        """
        self._check_owner(model)
        pts = np.asarray(points, dtype=float)
        result = least_squares(
            self.residuals_from_params,
            model.as_array(),
            args=(pts,),
            loss="soft_l1",
            f_scale=scale,
        )
        if not result.success:
            logger.warning(f"Refinement of {self.class_id} did not converge: {result.message}")
            return model
        try:
            return self.make_instance(result.x)
        except GeometryError as e:
            logger.warning(f"Refined {self.class_id} left the class: {e}")
            return model

    def _check_sample(self, sample: np.ndarray) -> np.ndarray:
        sample = np.asarray(sample, dtype=float)
        if sample.shape != (self.min_sample_size, self.r):
            raise ValueError(
                f"{self.class_id} needs a ({self.min_sample_size}, {self.r}) sample, got {sample.shape}"
            )
        return sample

    def _check_cluster(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.r:
            raise ValueError(f"points must be (n, {self.r}), got {points.shape}")
        if points.shape[0] < self.min_sample_size:
            raise DegenerateCluster(
                f"{self.class_id} needs at least {self.min_sample_size} points, got {points.shape[0]}"
            )
        return points

    def _check_owner(self, model: ModelInstance) -> None:
        if model.class_id != self.class_id:
            raise ValueError(f"model of class {model.class_id!r} passed to {self.class_id!r}")

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(class_id={self.class_id!r}, d={self.d}, "
            f"kappa={self.kappa}, min_sample_size={self.min_sample_size})"
        )


ModelClassSpec = ModelClass
