"""
Command-line interface: fit, eval, synth, plot and sweep.

Every command renders its outputs in memory, parses them back, and only then
writes files, so a failing command leaves nothing half-written.
"""

import json
import logging
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple

import typer
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from base_model_class import GeometryError
from clustering import ClusteringOptions, ConfigError, EmptyHypothesisPool
from config import settings
from evaluation import (
    PRESETS,
    MissingGroundTruth,
    NoValidSegmentation,
    SweepConfig,
    estimate_epsilon,
    generate_scene,
    get_preset,
    misclassification_error,
    sweep as run_sweep,
)
from geometry import get_model_classes
from io_formats import (
    parse_eval_report,
    parse_points_csv,
    parse_scene_spec,
    parse_segmentation_json,
    read_points_csv,
    read_segmentation_json,
    render_eval_report,
    render_points_csv,
    render_scene_spec,
    render_segmentation_json,
    write_outputs,
)
from pipeline import run_pipeline
from plotting import render_svg
from sampling import InsufficientData, SamplerConfig
from selection import GricConfig

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="Multi-class robust model fitting.")

CLI_ERRORS = (
    ValueError,
    OSError,
    GeometryError,
    InsufficientData,
    EmptyHypothesisPool,
    ConfigError,
    MissingGroundTruth,
    NoValidSegmentation,
)

DEFAULT_AUTO_INTERVAL = (0.01, 0.3)


class RunConfig(BaseModel):
    """Resolved arguments of one `fit` invocation."""

    model_config = ConfigDict(frozen=True)

    input: Path
    output: Path = Path("labels.json")
    classes: List[str] = Field(default_factory=lambda: ["line"], min_length=1)
    epsilon: Optional[float] = Field(default=None, gt=0)
    epsilon_interval: Optional[Tuple[float, float]] = None
    hypotheses: PositiveInt = Field(default_factory=lambda: settings.HYPOTHESES_PER_CLASS)
    seed: int = Field(default_factory=lambda: settings.SEED)
    lambda1: float = Field(default_factory=lambda: settings.GRIC_LAMBDA1, gt=0)
    lambda2: float = Field(default_factory=lambda: settings.GRIC_LAMBDA2, gt=0)
    sigma: Optional[float] = Field(default=None, gt=0)
    min_structure_size: Optional[PositiveInt] = None
    algorithm: Literal["multilink", "tlinkage"] = "multilink"
    localized: bool = False
    refine: bool = False
    merge_log: bool = False

    @model_validator(mode="after")
    def _one_epsilon_source(self) -> "RunConfig":
        if (self.epsilon is None) == (self.epsilon_interval is None):
            raise ValueError("give either a fixed epsilon or an auto interval")
        if self.epsilon_interval is not None:
            lo, hi = self.epsilon_interval
            if not 0 < lo <= hi:
                raise ValueError(f"auto interval must satisfy 0 < lo <= hi, got {self.epsilon_interval}")
        get_model_classes(self.classes)
        return self

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(
            per_class_counts={c: self.hypotheses for c in self.classes},
            seed=self.seed,
            localized=self.localized,
        )

    def gric_overrides(self) -> dict:
        overrides = {"lambda1": self.lambda1, "lambda2": self.lambda2}
        if self.sigma is not None:
            overrides["sigma"] = self.sigma
        return overrides

    def gric(self, epsilon: float) -> GricConfig:
        return GricConfig.for_epsilon(epsilon, **self.gric_overrides())

    def clustering_options(self) -> ClusteringOptions:
        return ClusteringOptions(min_structure_size=self.min_structure_size, refine=self.refine)


def parse_epsilon(value: str) -> Tuple[Optional[float], Optional[Tuple[float, float]]]:
    """`0.03` is a fixed threshold; `auto` or `auto:lo:hi` selects silhouette estimation."""
    if value == "auto":
        return None, DEFAULT_AUTO_INTERVAL
    if value.startswith("auto:"):
        parts = value.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected auto:lo:hi, got {value!r}")
        return None, (float(parts[1]), float(parts[2]))
    return float(value), None


def parse_seeds(value: str) -> List[int]:
    """Comma list (`1,2,5`) or half-open range (`0:50`)."""
    if ":" in value:
        start, stop = (int(v) for v in value.split(":"))
        return list(range(start, stop))
    return [int(v) for v in value.split(",") if v.strip()]


def _fail(e: Exception) -> None:
    logger.error(f"{type(e).__name__}: {e}")
    raise typer.Exit(code=1)


@app.callback()
def main():
    logging.basicConfig(
        level=settings.LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )


@app.command()
def fit(
    input: Annotated[Path, typer.Option("--input", "-i", help="Point CSV (x,y[,label])")],
    classes: Annotated[str, typer.Option(help="Comma-separated model classes")] = "line",
    epsilon: Annotated[str, typer.Option(help="Inlier threshold, or auto[:lo:hi]")] = str(
        settings.DEFAULT_EPSILON
    ),
    seed: Annotated[int, typer.Option()] = settings.SEED,
    hypotheses: Annotated[int, typer.Option(help="Hypotheses per class")] = settings.HYPOTHESES_PER_CLASS,
    algorithm: Annotated[str, typer.Option(help="multilink or tlinkage")] = "multilink",
    lambda1: Annotated[float, typer.Option()] = settings.GRIC_LAMBDA1,
    lambda2: Annotated[float, typer.Option()] = settings.GRIC_LAMBDA2,
    sigma: Annotated[Optional[float], typer.Option(help="GRIC residual scale, default eps/2")] = None,
    min_structure_size: Annotated[Optional[int], typer.Option()] = None,
    localized: Annotated[bool, typer.Option(help="Localized minimal sampling")] = False,
    refine: Annotated[bool, typer.Option(help="Refine final models")] = False,
    merge_log: Annotated[bool, typer.Option(help="Include the merge log")] = False,
    output: Annotated[Path, typer.Option("--output", "-o")] = Path("labels.json"),
):
    """Segment a point set into structures and outliers."""
    try:
        fixed, interval = parse_epsilon(epsilon)
        config = RunConfig(
            input=input,
            output=output,
            classes=[c.strip() for c in classes.split(",") if c.strip()],
            epsilon=fixed,
            epsilon_interval=interval,
            hypotheses=hypotheses,
            seed=seed,
            lambda1=lambda1,
            lambda2=lambda2,
            sigma=sigma,
            min_structure_size=min_structure_size,
            algorithm=algorithm,
            localized=localized,
            refine=refine,
            merge_log=merge_log,
        )
        data = read_points_csv(config.input)
        model_classes = get_model_classes(config.classes)

        eps = config.epsilon
        if eps is None:
            estimate = estimate_epsilon(
                data,
                model_classes,
                config.epsilon_interval,
                sampler=config.sampler(),
                opts=config.clustering_options(),
                gric_overrides=config.gric_overrides(),
            )
            eps = estimate.epsilon
            suffix = " (fallback)" if estimate.fallback else ""
            typer.echo(f"Estimated epsilon {eps:.6g}{suffix}")

        result = run_pipeline(
            data,
            model_classes,
            eps,
            sampler=config.sampler(),
            gric=config.gric(eps),
            opts=config.clustering_options(),
            algorithm=config.algorithm,
        )
        metadata = {
            "algorithm": config.algorithm,
            "classes": config.classes,
            "epsilon": eps,
            "seed": config.seed,
            "pool_hash": result.pool_hash,
        }
        text = render_segmentation_json(result.segmentation, config.merge_log, metadata)
        parse_segmentation_json(text)
        write_outputs([(config.output, text)])
    except CLI_ERRORS as e:
        _fail(e)

    segmentation = result.segmentation
    per_class = ", ".join(f"{k}: {v}" for k, v in sorted(segmentation.class_counts().items()))
    typer.echo(
        f"{len(segmentation.structures)} structures ({per_class or 'none'}), "
        f"{segmentation.outlier_indices.size} outliers; "
        f"hypotheses {result.timings['hypotheses']:.2f}s, clustering {result.timings['clustering']:.2f}s"
    )


@app.command("eval")
def evaluate(
    pred: Annotated[Path, typer.Argument(help="Segmentation JSON")],
    gt: Annotated[Path, typer.Argument(help="Point CSV with a label column")],
    output: Annotated[Path, typer.Option("--output", "-o")] = Path("eval.json"),
):
    """Score a segmentation against ground-truth labels."""
    try:
        segmentation = read_segmentation_json(pred)
        data = read_points_csv(gt)
        if segmentation.n_points != data.N:
            raise ValueError(f"segmentation has {segmentation.n_points} points, ground truth {data.N}")
        report = misclassification_error(segmentation, data.gt_labels)
        text = render_eval_report(report)
        parse_eval_report(text)
        write_outputs([(output, text)])
    except CLI_ERRORS as e:
        _fail(e)
    typer.echo(f"ME {100.0 * report.me:.2f}%")


@app.command()
def synth(
    source: Annotated[str, typer.Argument(help=f"Scene-spec JSON or a preset: {', '.join(PRESETS)}")],
    seed: Annotated[int, typer.Option(help="Preset seed")] = settings.SEED,
    outlier_rate: Annotated[Optional[float], typer.Option(help="Preset outlier fraction")] = None,
    output: Annotated[Path, typer.Option("--output", "-o")] = Path("scene.csv"),
    spec_output: Annotated[Optional[Path], typer.Option(help="Also write the resolved spec")] = None,
):
    """Generate a synthetic scene with ground-truth labels."""
    try:
        if Path(source).is_file():
            spec = parse_scene_spec(Path(source).read_text())
        else:
            spec = get_preset(source).scene(seed=seed, outlier_rate=outlier_rate)
        data = generate_scene(spec)
        outputs = [(output, render_points_csv(data))]
        parse_points_csv(outputs[0][1])
        if spec_output is not None:
            spec_text = render_scene_spec(spec)
            if parse_scene_spec(spec_text) != spec:
                raise ValueError("scene spec does not survive serialization")
            outputs.append((spec_output, spec_text))
        write_outputs(outputs)
    except CLI_ERRORS as e:
        _fail(e)
    typer.echo(
        f"{data.N} points: {len(spec.structures)} structures, {spec.outlier_count} outliers"
    )


@app.command()
def plot(
    scene: Annotated[Path, typer.Argument(help="Point CSV")],
    segmentation: Annotated[Optional[Path], typer.Argument(help="Segmentation JSON")] = None,
    output: Annotated[Path, typer.Option("--output", "-o")] = Path("plot.svg"),
):
    """Render a scene and its segmentation as SVG."""
    try:
        data = read_points_csv(scene)
        seg = read_segmentation_json(segmentation) if segmentation is not None else None
        write_outputs([(output, render_svg(data, seg))])
    except CLI_ERRORS as e:
        _fail(e)


@app.command()
def sweep(
    config_path: Annotated[Optional[Path], typer.Option("--config", help="SweepConfig JSON")] = None,
    preset: Annotated[str, typer.Option()] = "star5",
    parameter: Annotated[str, typer.Option(help="epsilon, outlier_rate or hypotheses")] = "epsilon",
    values: Annotated[str, typer.Option(help="Comma-separated grid")] = "3,4,5,6,7,8",
    seeds: Annotated[str, typer.Option(help="Comma list or start:stop")] = "0:10",
    hypotheses: Annotated[int, typer.Option(help="Hypotheses per class")] = settings.HYPOTHESES_PER_CLASS,
    output_dir: Annotated[Path, typer.Option("--output-dir", "-o")] = Path("sweep"),
    progress: Annotated[bool, typer.Option()] = True,
):
    """Run both algorithms over a parameter grid and tabulate ME statistics."""
    try:
        if config_path is not None:
            config = SweepConfig.model_validate_json(config_path.read_text())
        else:
            config = SweepConfig(
                preset=preset,
                parameter=parameter,
                values=[float(v) for v in values.split(",") if v.strip()],
                seeds=parse_seeds(seeds),
                hypotheses_per_class=hypotheses,
            )
        result = run_sweep(config, progress=progress)
        summary_json = result.to_json()
        json.loads(summary_json)
        write_outputs(
            [
                (output_dir / "runs.csv", result.runs.to_csv(index=False, lineterminator="\n")),
                (output_dir / "summary.csv", result.summary.to_csv(index=False, lineterminator="\n")),
                (output_dir / "summary.json", summary_json + "\n"),
            ]
        )
    except CLI_ERRORS as e:
        _fail(e)
    typer.echo(result.summary.to_string(index=False))


if __name__ == "__main__":
    app()
