"""
Readers and writers for the on-disk formats: point CSV, segmentation JSON,
scene-spec JSON and evaluation reports.

Writers render to strings so callers can parse the result back before anything
touches the filesystem.
"""

import io
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from base_model_class import ModelInstance, PointSet
from clustering import Segmentation, Structure
from evaluation import EvalReport, SceneSpec
from geometry import get_model_class

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


# Point CSV: header x,y[,label], label 0 marks an outlier


def render_points_csv(data: PointSet, with_labels: bool = True) -> str:
    frame = pd.DataFrame({"x": data.points[:, 0], "y": data.points[:, 1]})
    if with_labels and data.gt_labels is not None:
        frame["label"] = data.gt_labels
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def parse_points_csv(text: str) -> PointSet:
    frame = pd.read_csv(io.StringIO(text), float_precision="round_trip")
    missing = {"x", "y"} - set(frame.columns)
    if missing:
        raise ValueError(f"point CSV lacks columns {sorted(missing)}")
    if frame[["x", "y"]].isna().any().any():
        raise ValueError("point CSV has missing coordinates")
    labels = None
    if "label" in frame.columns:
        if frame["label"].isna().any():
            raise ValueError("point CSV has missing labels")
        labels = frame["label"].to_numpy()
    return PointSet(points=frame[["x", "y"]].to_numpy(dtype=float), gt_labels=labels)


def read_points_csv(path) -> PointSet:
    return parse_points_csv(Path(path).read_text())


# Segmentation JSON


def render_segmentation_json(
    segmentation: Segmentation,
    include_merge_log: bool = False,
    metadata: Optional[Dict] = None,
) -> str:
    """
    Schema (version 1):
        schema_version, n_points, metadata, labels,
        structures: [{label, class_id, params, members, gric}],
        outliers, [merge_log]
    """
    document = {
        "schema_version": SCHEMA_VERSION,
        "n_points": segmentation.n_points,
        "metadata": metadata or {},
        "labels": segmentation.labels.tolist(),
        "structures": [
            {
                "label": k,
                "class_id": s.class_id,
                "params": [float(p) for p in s.model.params],
                "members": s.member_indices.tolist(),
                "gric": None if s.gric is None else float(s.gric),
            }
            for k, s in enumerate(segmentation.structures, start=1)
        ],
        "outliers": segmentation.outlier_indices.tolist(),
    }
    if include_merge_log:
        document["merge_log"] = [r.to_dict() for r in segmentation.merge_log]
    return json.dumps(document, indent=2) + "\n"


def parse_segmentation_json(text: str) -> Segmentation:
    document = json.loads(text)
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported segmentation schema version {version!r}")
    n = int(document["n_points"])

    structures = []
    for entry in document["structures"]:
        get_model_class(entry["class_id"])
        structures.append(
            Structure(
                member_indices=np.array(entry["members"], dtype=int),
                class_id=entry["class_id"],
                model=ModelInstance(entry["class_id"], tuple(float(p) for p in entry["params"])),
                gric=entry.get("gric"),
            )
        )
    outliers = np.array(document["outliers"], dtype=int)

    members = np.concatenate([s.member_indices for s in structures] + [outliers])
    if members.size != n or not np.array_equal(np.sort(members), np.arange(n)):
        raise ValueError(f"structures and outliers do not partition {n} points")
    return Segmentation(n_points=n, structures=structures, outlier_indices=outliers)


def read_segmentation_json(path) -> Segmentation:
    return parse_segmentation_json(Path(path).read_text())


# Scene specs and reports


def render_scene_spec(spec: SceneSpec) -> str:
    return spec.model_dump_json(indent=2) + "\n"


def parse_scene_spec(text: str) -> SceneSpec:
    return SceneSpec.model_validate_json(text)


def render_eval_report(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def parse_eval_report(text: str) -> EvalReport:
    document = json.loads(text)
    return EvalReport(
        me=float(document["me"]),
        n_points=int(document["n_points"]),
        n_errors=int(document["n_errors"]),
        assignment={int(k): int(v) for k, v in document["assignment"].items()},
        per_structure=list(document["per_structure"]),
        timings=dict(document.get("timings", {})),
    )


def write_outputs(outputs: Iterable[Tuple[Path, str]]) -> None:
    """Write already-verified renders, creating parent directories."""
    for path, text in outputs:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        if path.read_text() != text:
            raise OSError(f"{path} does not read back as written")
        logger.info(f"Wrote {path}")
