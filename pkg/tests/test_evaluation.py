"""
Tests for scoring, epsilon estimation, scene generation and sweeps.
"""

from itertools import permutations

import numpy as np
import pytest
from pydantic import ValidationError

from evaluation import (
    PRESETS,
    MissingGroundTruth,
    NoValidSegmentation,
    SceneSpec,
    StructureSpec,
    SweepConfig,
    estimate_epsilon,
    generate_scene,
    get_preset,
    misclassification_error,
    silhouette_score,
    sweep,
)
from geometry import get_model_class, get_model_classes
from sampling import SamplerConfig


def _brute_force_me(pred, gt):
    """Minimum error over every injective matching of predicted to gt structures."""
    pred_ids = [p for p in np.unique(pred) if p > 0]
    gt_ids = [g for g in np.unique(gt) if g > 0]
    best = len(pred)
    slots = gt_ids + [None] * len(pred_ids)
    for perm in set(permutations(slots, len(pred_ids))):
        mapping = dict(zip(pred_ids, perm))
        correct = np.sum((pred == 0) & (gt == 0))
        correct += sum(np.sum((pred == p) & (gt == g)) for p, g in mapping.items() if g is not None)
        best = min(best, len(pred) - correct)
    return best / len(pred)


class TestMisclassificationError:
    """Test misclassification_error."""

    def test_perfect(self):
        """Test zero error on identical labels."""
        gt = np.array([0, 1, 1, 2, 2, 0])
        assert misclassification_error(gt, gt).me == 0.0

    def test_swapped_labels(self):
        """Test that label names do not matter."""
        gt = np.array([0, 1, 1, 2, 2, 0])
        pred = np.array([0, 2, 2, 1, 1, 0])
        report = misclassification_error(pred, gt)
        assert report.me == 0.0
        assert report.assignment == {1: 2, 2: 1}

    def test_merged_structures(self):
        """Test the error of two structures merged into one."""
        gt = np.repeat([1, 2], 50)
        pred = np.ones(100, dtype=int)
        report = misclassification_error(pred, gt)
        assert report.me == pytest.approx(0.5)
        assert report.n_errors == 50

    def test_outlier_conventions(self):
        """Test that outlier mistakes count both ways."""
        gt = np.array([0, 0, 1, 1])
        pred = np.array([1, 0, 1, 0])
        # gt outlier in a structure and gt inlier predicted as outlier both count
        assert misclassification_error(pred, gt).me == pytest.approx(0.5)

    def test_unmatched_structure_counts_as_errors(self):
        """Test that an unmatched predicted structure counts as error."""
        gt = np.array([1, 1, 1, 1])
        pred = np.array([1, 1, 2, 2])
        assert misclassification_error(pred, gt).me == pytest.approx(0.5)

    def test_precision_recall(self):
        """Test per-structure precision and recall."""
        gt = np.array([1, 1, 1, 2, 2, 2])
        pred = np.array([1, 1, 2, 2, 2, 2])
        report = misclassification_error(pred, gt)
        by_id = {s["structure"]: s for s in report.per_structure}
        assert by_id[1]["precision"] == 1.0
        assert by_id[1]["recall"] == pytest.approx(2 / 3)
        assert by_id[2]["precision"] == pytest.approx(0.75)
        assert by_id[2]["recall"] == 1.0

    def test_missing_ground_truth(self):
        """Test that scoring needs ground truth."""
        with pytest.raises(MissingGroundTruth):
            misclassification_error(np.zeros(3, dtype=int), None)

    def test_length_mismatch(self):
        """Test that label arrays must have equal length."""
        with pytest.raises(ValueError):
            misclassification_error(np.zeros(3, dtype=int), np.zeros(4, dtype=int))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force(self, seed):
        """Test the optimal matching against exhaustive search."""
        rng = np.random.default_rng(seed)
        gt = rng.integers(0, 4, 30)
        pred = rng.integers(0, 5, 30)
        assert misclassification_error(pred, gt).me == pytest.approx(_brute_force_me(pred, gt))

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_invariance(self, seed):
        """Test invariance under relabelling either side."""
        rng = np.random.default_rng(seed)
        gt = rng.integers(0, 4, 40)
        pred = rng.integers(0, 4, 40)
        relabel = np.concatenate([[0], rng.permutation([1, 2, 3])])
        assert misclassification_error(relabel[pred], gt).me == pytest.approx(
            misclassification_error(pred, gt).me
        )
        assert misclassification_error(pred, relabel[gt]).me == pytest.approx(
            misclassification_error(pred, gt).me
        )


class TestSilhouette:
    """Test silhouette_score."""

    def test_well_separated(self):
        """Test the silhouette of two tight groups."""
        labels = np.array([1, 1, 2, 2])
        d = np.array([[0, 0.1, 1, 1], [0.1, 0, 1, 1], [1, 1, 0, 0.1], [1, 1, 0.1, 0]], dtype=float)
        assert silhouette_score(labels, d) == pytest.approx(0.9)

    def test_outliers_ignored(self):
        """Test that outliers do not enter the silhouette."""
        labels = np.array([1, 1, 2, 2, 0])
        d = np.ones((5, 5))
        d[:4, :4] = [[0, 0.1, 1, 1], [0.1, 0, 1, 1], [1, 1, 0, 0.1], [1, 1, 0.1, 0]]
        assert silhouette_score(labels, d) == pytest.approx(0.9)

    def test_single_structure(self):
        """Test that one structure has no silhouette."""
        assert np.isnan(silhouette_score(np.array([1, 1, 0]), np.zeros((3, 3))))


class TestSceneGeneration:
    """Test SceneSpec and generate_scene."""

    def test_noise_free_points_on_generators(self):
        """Test that noise-free points lie on their generating models."""
        spec = SceneSpec(
            structures=[
                StructureSpec(class_id="line", params=(0.6, 0.8, 0.1), count=30, noise_sigma=0.0, extent=(-0.3, 0.3)),
                StructureSpec(class_id="circle", params=(0.1, -0.2, 0.25), count=30, noise_sigma=0.0, extent=(0.0, 6.28)),
                StructureSpec(class_id="parabola", params=(2.0, 0.1, -0.3), count=30, noise_sigma=0.0, extent=(-0.4, 0.4)),
            ],
            seed=3,
        )
        data = generate_scene(spec)
        assert data.N == 90
        for k, structure in enumerate(spec.structures, start=1):
            model_class = get_model_class(structure.class_id)
            model = model_class.make_instance(structure.params)
            residuals = model_class.residuals(model, data.points[data.gt_labels == k])
            assert np.max(residuals) < 1e-8

    def test_outliers_only(self):
        """Test a scene of outliers inside the default box."""
        data = generate_scene(SceneSpec(outlier_count=25, seed=1))
        assert data.N == 25
        assert np.all(data.gt_labels == 0)
        assert np.all(np.abs(data.points) <= 0.5)

    def test_noise_level(self):
        """Test that orthogonal noise has the requested sigma."""
        for class_id, params, extent in (
            ("line", (0.0, 1.0, 0.0), (-0.5, 0.5)),
            ("circle", (0.0, 0.0, 0.3), (0.0, 2 * np.pi)),
        ):
            spec = SceneSpec(
                structures=[StructureSpec(class_id=class_id, params=params, count=400, noise_sigma=0.01, extent=extent)],
                seed=2,
            )
            data = generate_scene(spec)
            model_class = get_model_class(class_id)
            residuals = model_class.residuals(model_class.make_instance(params), data.points)
            assert np.sqrt(np.mean(residuals**2)) == pytest.approx(0.01, rel=0.15)

    def test_deterministic(self):
        """Test that a spec always generates the same points."""
        spec = get_preset("star5").scene(seed=4)
        assert np.array_equal(generate_scene(spec).points, generate_scene(spec).points)

    def test_star5_preset(self):
        """Test the star5 sizes."""
        spec = get_preset("star5").scene()
        data = generate_scene(spec)
        assert data.N == 500
        assert np.sum(data.gt_labels == 0) == 250
        assert len(spec.structures) == 5

    def test_outlier_rate_override(self):
        """Test overriding and bounding the outlier rate."""
        spec = get_preset("mixed_conics").scene(outlier_rate=0.2)
        assert spec.outlier_count == 50
        with pytest.raises(ValueError):
            get_preset("star5").scene(outlier_rate=1.0)

    def test_presets_fit_in_box(self):
        """Test that every preset stays near the unit box."""
        for name, preset in PRESETS.items():
            data = generate_scene(preset.scene(seed=0))
            assert np.all(np.abs(data.points) <= 0.55), name

    def test_invalid_specs(self):
        """Test validation of structure and scene specs."""
        with pytest.raises(ValidationError):
            StructureSpec(class_id="line", params=(0.0, 1.0, 0.0), count=5, noise_sigma=-1.0, extent=(0, 1))
        with pytest.raises(ValidationError):
            StructureSpec(class_id="ellipse", params=(1.0,), count=5, noise_sigma=0.0, extent=(0, 1))
        with pytest.raises(ValidationError):
            SceneSpec(box=((0.0, 0.0), (0.0, 1.0)))
        with pytest.raises(ValueError):
            get_preset("nope")

    def test_spec_json_round_trip(self):
        """Test that a scene spec survives JSON."""
        spec = get_preset("mixed_conics").scene(seed=2)
        assert SceneSpec.model_validate_json(spec.model_dump_json()) == spec


class TestEstimateEpsilon:
    """Test estimate_epsilon."""

    @pytest.fixture
    def two_lines(self):
        spec = SceneSpec(
            structures=[
                StructureSpec(class_id="line", params=(0.0, 1.0, 0.25), count=40, noise_sigma=0.005, extent=(-0.5, 0.5)),
                StructureSpec(class_id="line", params=(0.0, 1.0, -0.25), count=40, noise_sigma=0.005, extent=(-0.5, 0.5)),
            ],
            outlier_count=10,
            seed=0,
        )
        return generate_scene(spec)

    def test_collapsed_interval(self, two_lines):
        """Test that a one-point interval returns that point."""
        estimate = estimate_epsilon(two_lines, get_model_classes(["line"]), (0.02, 0.02))
        assert estimate.epsilon == 0.02
        assert not estimate.fallback

    def test_invalid_arguments(self, two_lines):
        """Test interval and budget validation."""
        classes = get_model_classes(["line"])
        with pytest.raises(ValueError):
            estimate_epsilon(two_lines, classes, (0.0, 0.1))
        with pytest.raises(ValueError):
            estimate_epsilon(two_lines, classes, (0.1, 0.05))
        with pytest.raises(ValueError):
            estimate_epsilon(two_lines, classes, (0.01, 0.1), budget=1)

    def test_two_lines(self, two_lines):
        """Test that two lines give a scored estimate inside the interval."""
        estimate = estimate_epsilon(
            two_lines,
            get_model_classes(["line"]),
            (0.005, 0.05),
            budget=4,
            sampler=SamplerConfig(per_class_counts={"line": 300}, seed=1),
        )
        assert not estimate.fallback
        assert 0.005 <= estimate.epsilon <= 0.05
        assert len(estimate.table) == 4
        assert estimate.score == pytest.approx(estimate.table["silhouette"].max())

    def test_single_structure_falls_back(self, noise_free_line):
        """Test the fallback when no grid value yields two structures."""
        classes = get_model_classes(["line"])
        sampler = SamplerConfig(per_class_counts={"line": 100}, seed=0)
        estimate = estimate_epsilon(noise_free_line, classes, (0.005, 0.05), budget=3, sampler=sampler)
        assert estimate.fallback
        assert estimate.score is None
        with pytest.raises(NoValidSegmentation) as info:
            estimate_epsilon(noise_free_line, classes, (0.005, 0.05), budget=3, sampler=sampler, strict=True)
        assert info.value.estimate.fallback


class TestSweep:
    """Test sweep."""

    def test_shape_and_shared_pools(self):
        """Test table shapes and pool sharing across algorithms."""
        config = SweepConfig(
            preset="star5", parameter="epsilon", values=[3.0, 5.0], seeds=[0, 1], hypotheses_per_class=200
        )
        result = sweep(config)
        assert len(result.runs) == 2 * 2 * 2
        assert len(result.summary) == 2 * 2
        assert {"median", "iqr", "min", "max", "runs", "t_clustering"} <= set(result.summary.columns)
        for _, cell in result.runs.groupby(["epsilon", "seed"]):
            assert cell["pool_hash"].nunique() == 1

    def test_reproducible(self):
        """Test that a sweep repeats exactly."""
        config = SweepConfig(
            preset="circles4", parameter="outlier_rate", values=[0.2], seeds=[3],
            algorithms=["multilink"], hypotheses_per_class=150,
        )
        first, second = sweep(config), sweep(config)
        assert first.runs["me"].tolist() == second.runs["me"].tolist()
        assert first.runs["pool_hash"].tolist() == second.runs["pool_hash"].tolist()

    def test_failures_recorded(self, mocker):
        """Test that failing cells are recorded, not raised."""
        mocker.patch("evaluation._sweep_cell", side_effect=RuntimeError("boom"))
        config = SweepConfig(preset="star5", parameter="hypotheses", values=[10], seeds=[0])
        result = sweep(config)
        assert result.runs["me"].isna().all()
        assert result.runs["error"].tolist() == ["boom", "boom"]
        assert result.summary["failures"].tolist() == [1, 1]

    def test_empty_seeds(self):
        """Test that a sweep needs seeds."""
        with pytest.raises(ValidationError):
            SweepConfig(preset="star5", parameter="epsilon", values=[3.0], seeds=[])

    def test_unknown_preset(self):
        """Test that a sweep needs a known preset."""
        with pytest.raises(ValidationError):
            SweepConfig(preset="nope", parameter="epsilon", values=[3.0], seeds=[0])
