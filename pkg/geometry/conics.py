"""
Circles and axis-aligned parabolas.

Circles are fitted with the Taubin algebraic fit; parabolas y = a x^2 + b x + c
by linear least squares on vertical residuals, while residuals are always the
orthogonal distance to the curve.
"""

from typing import Sequence

import numpy as np

from base_model_class import DegenerateCluster, DegenerateSample, ModelClass, ModelInstance

# sine of the smallest angle accepted in a circle's minimal triangle
_COLLINEAR_TOL = 1e-10
_DISTINCT_X_TOL = 1e-12
# circles with radius beyond this multiple of the data spread are lines in disguise
_MAX_RADIUS_RATIO = 1e8
# parabola sag below this fraction of the data spread is a straight line
_FLAT_TOL = 1e-10
_NEWTON_STEPS = 2


def real_cubic_roots(p2: np.ndarray, p1: np.ndarray, p0: np.ndarray) -> np.ndarray:
    """
    Real roots of t^3 + p2 t^2 + p1 t + p0 = 0, vectorised over coefficients.

    Returns:
        (n, 3) array; columns without a real root are NaN
    """
    p2, p1, p0 = np.broadcast_arrays(
        np.asarray(p2, dtype=float), np.asarray(p1, dtype=float), np.asarray(p0, dtype=float)
    )
    q = (p2 * p2 - 3.0 * p1) / 9.0
    r = (2.0 * p2**3 - 9.0 * p2 * p1 + 27.0 * p0) / 54.0
    shift = p2 / 3.0
    roots = np.full(p2.shape + (3,), np.nan)

    with np.errstate(invalid="ignore", divide="ignore"):
        three_real = r * r < q**3
        sq = np.sqrt(np.where(three_real, q, 0.0))
        cos_arg = np.clip(r / np.where(three_real, sq**3, 1.0), -1.0, 1.0)
        theta = np.arccos(cos_arg)
        for k, offset in enumerate((0.0, 2.0 * np.pi, -2.0 * np.pi)):
            roots[..., k] = np.where(
                three_real, -2.0 * sq * np.cos((theta + offset) / 3.0) - shift, np.nan
            )

        disc = np.sqrt(np.where(three_real, 0.0, r * r - q**3))
        big = -np.sign(r) * np.cbrt(np.abs(r) + disc)
        big = np.where(r == 0, -np.cbrt(disc), big)
        small = np.where(big != 0, q / np.where(big != 0, big, 1.0), 0.0)
        single = big + small - shift
        roots[..., 0] = np.where(three_real, roots[..., 0], single)

        # polish against the original polynomial
        for _ in range(_NEWTON_STEPS):
            f = ((roots + p2[..., None]) * roots + p1[..., None]) * roots + p0[..., None]
            df = (3.0 * roots + 2.0 * p2[..., None]) * roots + p1[..., None]
            step = np.where(df != 0, f / np.where(df != 0, df, 1.0), 0.0)
            roots = roots - np.where(np.isfinite(step), step, 0.0)
    return roots


def parabola_distances(a: float, b: float, c: float, points: np.ndarray) -> np.ndarray:
    """Orthogonal distance from each point to y = a x^2 + b x + c."""
    x0, y0 = points[:, 0], points[:, 1]
    if a == 0:
        return np.abs(b * x0 - y0 + c) / np.hypot(b, 1.0)

    # stationarity of |(t, f(t)) - (x0, y0)|^2 in the foot-point abscissa t
    shifted = c - y0
    lead = 2.0 * a * a
    roots = real_cubic_roots(
        np.full_like(x0, 3.0 * a * b / lead),
        (b * b + 2.0 * a * shifted + 1.0) / lead,
        (b * shifted - x0) / lead,
    )
    candidates = np.concatenate([roots, x0[:, None]], axis=1)
    curve_y = (a * candidates + b) * candidates + c
    dist = np.hypot(candidates - x0[:, None], curve_y - y0[:, None])
    return np.nanmin(dist, axis=1)


class CircleClass(ModelClass):
    """Circles: d = 1, kappa = 3, three non-collinear points."""

    class_id = "circle"
    r = 2
    d = 1
    kappa = 3
    min_sample_size = 3

    def make_instance(self, params: Sequence[float]) -> ModelInstance:
        cx, cy, radius = (float(p) for p in params)
        if not np.isfinite([cx, cy, radius]).all() or radius <= 0:
            raise DegenerateCluster(f"invalid circle parameters {params}")
        return ModelInstance(self.class_id, (cx, cy, radius))

    def fit_minimal(self, sample: np.ndarray) -> ModelInstance:
        sample = self._check_sample(sample)
        origin = sample[0]
        u, v = sample[1] - origin, sample[2] - origin
        det = u[0] * v[1] - u[1] * v[0]
        if abs(det) <= _COLLINEAR_TOL * np.hypot(*u) * np.hypot(*v):
            raise DegenerateSample("collinear points do not define a circle")
        rhs = 0.5 * np.array([u @ u, v @ v])
        center = np.linalg.solve(np.array([u, v]), rhs)
        radius = float(np.hypot(*center))
        return self.make_instance((origin[0] + center[0], origin[1] + center[1], radius))

    def fit_cluster(self, points: np.ndarray) -> ModelInstance:
        """Taubin algebraic fit via SVD on centered data."""
        points = self._check_cluster(points)
        centroid = points.mean(axis=0)
        x, y = (points - centroid).T
        z = x * x + y * y
        z_mean = z.mean()
        if z_mean == 0:
            raise DegenerateCluster("all points coincide")
        z0 = (z - z_mean) / (2.0 * np.sqrt(z_mean))
        _, _, vt = np.linalg.svd(np.column_stack([z0, x, y]), full_matrices=False)
        coeffs = vt[2]
        a0 = coeffs[0] / (2.0 * np.sqrt(z_mean))
        if a0 == 0:
            raise DegenerateCluster("collinear points do not define a circle")
        a3 = -z_mean * a0
        center = -coeffs[1:3] / a0 / 2.0 + centroid
        radius = np.sqrt(coeffs[1] ** 2 + coeffs[2] ** 2 - 4.0 * a0 * a3) / abs(a0) / 2.0
        spread = np.sqrt(z_mean)
        if not np.isfinite(radius) or radius > _MAX_RADIUS_RATIO * spread:
            raise DegenerateCluster("points are (nearly) collinear")
        return self.make_instance((center[0], center[1], radius))

    def residuals_from_params(self, params: np.ndarray, points: np.ndarray) -> np.ndarray:
        return np.abs(np.hypot(points[:, 0] - params[0], points[:, 1] - params[1]) - abs(params[2]))


class ParabolaClass(ModelClass):
    """Axis-aligned parabolas y = a x^2 + b x + c: d = 1, kappa = 3."""

    class_id = "parabola"
    r = 2
    d = 1
    kappa = 3
    min_sample_size = 3

    def make_instance(self, params: Sequence[float]) -> ModelInstance:
        a, b, c = (float(p) for p in params)
        if not np.isfinite([a, b, c]).all() or a == 0:
            raise DegenerateCluster(f"invalid parabola parameters {params}")
        return ModelInstance(self.class_id, (a, b, c))

    def fit_minimal(self, sample: np.ndarray) -> ModelInstance:
        sample = self._check_sample(sample)
        x, y = sample.T
        scale = max(1.0, float(np.abs(x).max()))
        gaps = np.abs(x[:, None] - x[None, :])[np.triu_indices(3, k=1)]
        if gaps.min() <= _DISTINCT_X_TOL * scale:
            raise DegenerateSample("parabola sample needs distinct abscissae")
        a, b, c = np.linalg.solve(np.vander(x, 3), y)
        if self._is_flat(a, x, y):
            raise DegenerateSample("collinear points do not define a parabola")
        return self.make_instance((a, b, c))

    def fit_cluster(self, points: np.ndarray) -> ModelInstance:
        """Vertical least squares on standardized abscissae."""
        points = self._check_cluster(points)
        x, y = points.T
        mx, sx = x.mean(), x.std()
        if sx == 0:
            raise DegenerateCluster("parabola fit needs distinct abscissae")
        u = (x - mx) / sx
        coef, _, rank, _ = np.linalg.lstsq(np.vander(u, 3), y, rcond=None)
        if rank < 3:
            raise DegenerateCluster("fewer than three distinct abscissae")
        a_u, b_u, c_u = coef
        a = a_u / sx**2
        b = b_u / sx - 2.0 * a_u * mx / sx**2
        c = a_u * mx**2 / sx**2 - b_u * mx / sx + c_u
        if self._is_flat(a, x, y):
            raise DegenerateCluster("points are collinear")
        return self.make_instance((a, b, c))

    def residuals_from_params(self, params: np.ndarray, points: np.ndarray) -> np.ndarray:
        a, b, c = (float(p) for p in params)
        return parabola_distances(a, b, c, points)

    @staticmethod
    def _is_flat(a: float, x: np.ndarray, y: np.ndarray) -> bool:
        spread = max(np.ptp(x), np.ptp(y))
        return abs(a) * np.ptp(x) ** 2 <= _FLAT_TOL * spread
