"""
Tests for the model classes and the geometry registry.
"""

import numpy as np
import pytest

from base_model_class import DegenerateCluster, DegenerateSample, ModelInstance, PointSet
from geometry import fit_minimal, get_model_class, get_model_classes, residual
from geometry.conics import parabola_distances, real_cubic_roots


class TestPointSet:
    """Test PointSet validation."""

    def test_shapes(self):
        """Test point and label shapes."""
        data = PointSet(points=[[0, 0], [1, 1], [2, 2]], gt_labels=[0, 1, 1])
        assert data.N == 3
        assert data.r == 2
        assert data.gt_labels.dtype.kind == "i"

    def test_read_only(self):
        """Test that points cannot be modified."""
        data = PointSet(points=[[0, 0], [1, 1]])
        with pytest.raises(ValueError):
            data.points[0, 0] = 5.0

    def test_bad_labels(self):
        """Test that labels must be non-negative and one per point."""
        with pytest.raises(ValueError):
            PointSet(points=[[0, 0], [1, 1]], gt_labels=[0, -1])
        with pytest.raises(ValueError):
            PointSet(points=[[0, 0], [1, 1]], gt_labels=[0])

    def test_empty(self):
        """Test that an empty point set is refused."""
        with pytest.raises(ValueError):
            PointSet(points=np.empty((0, 2)))


class TestRegistry:
    """Test model class lookup."""

    def test_known_classes(self):
        """Test lookup keeps the requested order."""
        classes = get_model_classes(["circle", "line"])
        assert [c.class_id for c in classes] == ["circle", "line"]

    def test_unknown_class(self):
        """Test that an unknown class raises."""
        with pytest.raises(ValueError):
            get_model_class("ellipse")

    def test_duplicates_and_empty(self):
        """Test that class lists must be non-empty and unique."""
        with pytest.raises(ValueError):
            get_model_classes(["line", "line"])
        with pytest.raises(ValueError):
            get_model_classes([])

    def test_class_constants(self, line_class, circle_class, parabola_class):
        """Test the dimension, parameter count and sample size of each class."""
        assert (line_class.d, line_class.kappa, line_class.min_sample_size) == (1, 2, 2)
        assert (circle_class.d, circle_class.kappa, circle_class.min_sample_size) == (1, 3, 3)
        assert (parabola_class.d, parabola_class.kappa, parabola_class.min_sample_size) == (1, 3, 3)


class TestLine:
    """Test LineClass."""

    def test_fit_minimal_horizontal(self, line_class):
        """Test a horizontal line through two points."""
        model = fit_minimal(line_class, [[0, 0], [1, 0]])
        assert model.params == pytest.approx((0.0, 1.0, 0.0))
        assert residual(model, [0.5, 2.0]) == pytest.approx(2.0)

    def test_minimal_sample_points_have_zero_residual(self, line_class):
        """Test that the sample lies on its line."""
        sample = np.array([[0.3, -0.2], [-0.7, 0.9]])
        model = line_class.fit_minimal(sample)
        assert np.allclose(line_class.residuals(model, sample), 0.0, atol=1e-12)

    def test_canonical_sign(self, line_class):
        """Test that point order does not change the parameters."""
        a = line_class.fit_minimal(np.array([[0, 0], [1, 1]]))
        b = line_class.fit_minimal(np.array([[1, 1], [0, 0]]))
        assert a.params == pytest.approx(b.params)
        assert a.params[1] > 0

    def test_coincident_points(self, line_class):
        """Test that coincident points are a degenerate sample."""
        with pytest.raises(DegenerateSample):
            line_class.fit_minimal(np.array([[1.0, 2.0], [1.0, 2.0]]))

    def test_fit_cluster_exact(self, line_class, noise_free_line):
        """Test total least squares on exact points."""
        model = line_class.fit_cluster(noise_free_line.points)
        assert np.max(line_class.residuals(model, noise_free_line.points)) < 1e-12

    def test_fit_cluster_vertical(self, line_class):
        """Test a vertical line fit."""
        points = np.column_stack([np.full(10, 0.5), np.linspace(-1, 1, 10)])
        model = line_class.fit_cluster(points)
        assert model.params == pytest.approx((1.0, 0.0, 0.5), abs=1e-12)

    def test_fit_cluster_coincident(self, line_class):
        """Test that coincident points cannot be fitted."""
        with pytest.raises(DegenerateCluster):
            line_class.fit_cluster(np.ones((5, 2)))

    def test_fit_cluster_too_small(self, line_class):
        """Test that one point cannot be fitted."""
        with pytest.raises(DegenerateCluster):
            line_class.fit_cluster(np.array([[0.0, 0.0]]))

    def test_residual_checks(self, line_class, circle_class):
        """Test point dimension and class checks."""
        model = line_class.fit_minimal(np.array([[0, 0], [1, 0]]))
        with pytest.raises(ValueError):
            line_class.residual(model, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            circle_class.residual(model, [1.0, 2.0])

    def test_refine_reduces_residuals(self, line_class):
        """Test that refinement moves the line towards the data."""
        rng = np.random.default_rng(0)
        x = np.linspace(-0.5, 0.5, 50)
        points = np.column_stack([x, 0.2 * x + rng.normal(0, 0.005, 50)])
        start = line_class.make_instance((-0.2, 1.0, 0.05))
        refined = line_class.refine(start, points, scale=0.005)
        assert refined.class_id == "line"
        assert np.median(line_class.residuals(refined, points)) < np.median(
            line_class.residuals(start, points)
        )


class TestCircle:
    """Test CircleClass."""

    def test_fit_minimal_unit_circle(self, circle_class):
        """Test the circle through three unit points."""
        model = circle_class.fit_minimal(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
        assert model.params == pytest.approx((0.0, 0.0, 1.0), abs=1e-12)

    def test_collinear_sample(self, circle_class):
        """Test that collinear points are a degenerate sample."""
        with pytest.raises(DegenerateSample):
            circle_class.fit_minimal(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))

    def test_fit_cluster_exact(self, circle_class):
        """Test the algebraic fit on a full circle."""
        theta = np.linspace(0, 2 * np.pi, 30, endpoint=False)
        points = np.column_stack([0.3 + 0.5 * np.cos(theta), -0.2 + 0.5 * np.sin(theta)])
        model = circle_class.fit_cluster(points)
        assert model.params == pytest.approx((0.3, -0.2, 0.5), abs=1e-9)

    def test_fit_cluster_arc(self, circle_class):
        """Test the algebraic fit on a short arc."""
        theta = np.linspace(0, np.pi / 3, 20)
        points = np.column_stack([2.0 * np.cos(theta), 2.0 * np.sin(theta)])
        model = circle_class.fit_cluster(points)
        assert model.params == pytest.approx((0.0, 0.0, 2.0), abs=1e-8)

    def test_fit_cluster_collinear(self, circle_class):
        """Test that collinear points cannot be fitted."""
        points = np.column_stack([np.linspace(-1, 1, 10), np.zeros(10)])
        with pytest.raises(DegenerateCluster):
            circle_class.fit_cluster(points)

    def test_residual(self, circle_class):
        """Test distances inside, outside and on the circle."""
        model = ModelInstance("circle", (0.0, 0.0, 1.0))
        assert circle_class.residual(model, [0.0, 0.0]) == pytest.approx(1.0)
        assert circle_class.residual(model, [2.0, 0.0]) == pytest.approx(1.0)
        assert circle_class.residual(model, [0.0, -1.0]) == pytest.approx(0.0)

    def test_invalid_radius(self, circle_class):
        """Test that a negative radius is refused."""
        with pytest.raises(DegenerateCluster):
            circle_class.make_instance((0.0, 0.0, -1.0))


class TestParabola:
    """Test ParabolaClass and the foot-point solver."""

    def test_fit_minimal(self, parabola_class):
        """Test the parabola through three points."""
        model = parabola_class.fit_minimal(np.array([[-1.0, 1.0], [0.0, 0.0], [1.0, 1.0]]))
        assert model.params == pytest.approx((1.0, 0.0, 0.0), abs=1e-12)

    def test_degenerate_samples(self, parabola_class):
        """Test repeated abscissae and collinear samples."""
        with pytest.raises(DegenerateSample):
            parabola_class.fit_minimal(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(DegenerateSample):
            parabola_class.fit_minimal(np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))

    def test_fit_cluster_exact(self, parabola_class):
        """Test least squares on exact points."""
        x = np.linspace(-0.5, 1.5, 25)
        points = np.column_stack([x, 2.0 * x**2 - x + 0.5])
        model = parabola_class.fit_cluster(points)
        assert model.params == pytest.approx((2.0, -1.0, 0.5), abs=1e-9)

    def test_fit_cluster_collinear(self, parabola_class):
        """Test that collinear points cannot be fitted."""
        x = np.linspace(-1, 1, 10)
        with pytest.raises(DegenerateCluster):
            parabola_class.fit_cluster(np.column_stack([x, 0.3 * x]))

    def test_orthogonal_distance(self, parabola_class):
        """Test orthogonal distances with hand values."""
        model = ModelInstance("parabola", (1.0, 0.0, 0.0))
        assert parabola_class.residual(model, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
        assert parabola_class.residual(model, [0.0, -1.0]) == pytest.approx(1.0)
        # two symmetric feet at t^2 = 1/2
        assert parabola_class.residual(model, [0.0, 1.0]) == pytest.approx(np.sqrt(0.75))

    def test_distance_matches_dense_search(self):
        """Test the foot-point solver against a dense search."""
        rng = np.random.default_rng(11)
        a, b, c = 1.7, -0.4, 0.2
        points = rng.uniform(-1, 1, size=(25, 2))
        t = np.linspace(-3, 3, 200001)
        curve = np.column_stack([t, (a * t + b) * t + c])
        expected = [np.min(np.hypot(*(curve - p).T)) for p in points]
        assert parabola_distances(a, b, c, points) == pytest.approx(expected, abs=1e-6)

    def test_real_cubic_roots(self):
        """Test cubic roots with three and one real root."""
        roots = real_cubic_roots(np.array([-6.0]), np.array([11.0]), np.array([-6.0]))[0]
        assert np.sort(roots) == pytest.approx([1.0, 2.0, 3.0])

        single = real_cubic_roots(np.array([0.0]), np.array([1.0]), np.array([0.0]))[0]
        assert single[0] == pytest.approx(0.0, abs=1e-12)
        assert np.isnan(single[1:]).all()


def _rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class TestRigidMotion:
    """Test that residuals are unchanged when model and points move together."""

    @pytest.mark.parametrize("seed", range(10))
    def test_line(self, seed, line_class):
        """Test line residuals under a random rotation plus translation."""
        rng = np.random.default_rng(seed)
        points = rng.uniform(-1, 1, (30, 2))
        angle = rng.uniform(0, 2 * np.pi)
        model = line_class.make_instance((np.cos(angle), np.sin(angle), rng.uniform(-0.5, 0.5)))
        rot, shift = _rotation(rng.uniform(0, 2 * np.pi)), rng.uniform(-2, 2, 2)
        normal = rot @ np.array(model.params[:2])
        moved = line_class.make_instance((normal[0], normal[1], model.params[2] + normal @ shift))
        expected = line_class.residuals(model, points)
        assert line_class.residuals(moved, points @ rot.T + shift) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_circle(self, seed, circle_class):
        """Test circle residuals under a random rotation plus translation."""
        rng = np.random.default_rng(seed)
        points = rng.uniform(-1, 1, (30, 2))
        center, radius = rng.uniform(-0.5, 0.5, 2), rng.uniform(0.1, 1.0)
        model = circle_class.make_instance((center[0], center[1], radius))
        rot, shift = _rotation(rng.uniform(0, 2 * np.pi)), rng.uniform(-2, 2, 2)
        moved_center = rot @ center + shift
        moved = circle_class.make_instance((moved_center[0], moved_center[1], radius))
        expected = circle_class.residuals(model, points)
        assert circle_class.residuals(moved, points @ rot.T + shift) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_parabola_translation(self, seed, parabola_class):
        """Test parabola residuals under a random translation, the motions that keep the axis vertical."""
        rng = np.random.default_rng(seed)
        points = rng.uniform(-1, 1, (30, 2))
        a = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
        b, c = rng.uniform(-1, 1, 2)
        tx, ty = rng.uniform(-1, 1, 2)
        model = parabola_class.make_instance((a, b, c))
        moved = parabola_class.make_instance((a, b - 2 * a * tx, a * tx**2 - b * tx + c + ty))
        expected = parabola_class.residuals(model, points)
        shifted = points + np.array([tx, ty])
        assert parabola_class.residuals(moved, shifted) == pytest.approx(expected, abs=1e-9)
