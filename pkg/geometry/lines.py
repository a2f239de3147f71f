"""
Straight lines in the plane, parameterized by a unit normal n and offset c
with n . x = c.
"""

from typing import Sequence

import numpy as np

from base_model_class import DegenerateCluster, DegenerateSample, ModelClass, ModelInstance

# relative tolerance for coincident points
_COINCIDENT_TOL = 1e-12


def _canonical_normal(nx: float, ny: float, c: float):
    """Unit normal with ny > 0, or ny == 0 and nx > 0."""
    norm = np.hypot(nx, ny)
    nx, ny, c = nx / norm, ny / norm, c / norm
    if ny < 0 or (ny == 0 and nx < 0):
        nx, ny, c = -nx, -ny, -c
    return float(nx) + 0.0, float(ny) + 0.0, float(c) + 0.0


class LineClass(ModelClass):
    """Lines: d = 1, kappa = 2, two points determine a line."""

    class_id = "line"
    r = 2
    d = 1
    kappa = 2
    min_sample_size = 2

    def make_instance(self, params: Sequence[float]) -> ModelInstance:
        nx, ny, c = (float(p) for p in params)
        if not np.isfinite([nx, ny, c]).all() or np.hypot(nx, ny) == 0:
            raise DegenerateCluster(f"invalid line parameters {params}")
        return ModelInstance(self.class_id, _canonical_normal(nx, ny, c))

    def fit_minimal(self, sample: np.ndarray) -> ModelInstance:
        p, q = self._check_sample(sample)
        direction = q - p
        scale = max(1.0, float(np.abs(sample).max()))
        if np.hypot(*direction) <= _COINCIDENT_TOL * scale:
            raise DegenerateSample("coincident points do not define a line")
        normal = np.array([-direction[1], direction[0]])
        return self.make_instance((normal[0], normal[1], float(normal @ p)))

    def fit_cluster(self, points: np.ndarray) -> ModelInstance:
        """Total least squares: normal is the minor eigenvector of the scatter."""
        points = self._check_cluster(points)
        centroid = points.mean(axis=0)
        centered = points - centroid
        scale = max(1.0, float(np.abs(points).max()))
        if np.ptp(points, axis=0).max() <= _COINCIDENT_TOL * scale:
            raise DegenerateCluster("all points coincide")
        _, eigvecs = np.linalg.eigh(centered.T @ centered)
        normal = eigvecs[:, 0]
        return self.make_instance((normal[0], normal[1], float(normal @ centroid)))

    def residuals_from_params(self, params: np.ndarray, points: np.ndarray) -> np.ndarray:
        normal = params[:2] / np.hypot(params[0], params[1])
        offset = params[2] / np.hypot(params[0], params[1])
        return np.abs(points @ normal - offset)

    def direction(self, model: ModelInstance) -> np.ndarray:
        nx, ny, _ = model.params
        return np.array([ny, -nx])
