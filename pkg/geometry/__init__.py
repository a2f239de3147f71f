"""
Shipped model classes and the class registry.
"""

from typing import Dict, List, Sequence

import numpy as np

from base_model_class import ModelClass, ModelInstance
from geometry.conics import CircleClass, ParabolaClass
from geometry.lines import LineClass

MODEL_CLASSES: Dict[str, ModelClass] = {
    cls.class_id: cls() for cls in (LineClass, CircleClass, ParabolaClass)
}


def get_model_class(class_id: str) -> ModelClass:
    try:
        return MODEL_CLASSES[class_id]
    except KeyError:
        raise ValueError(
            f"Unknown model class {class_id!r}; available: {', '.join(MODEL_CLASSES)}"
        ) from None


def get_model_classes(class_ids: Sequence[str]) -> List[ModelClass]:
    """Resolve a list of class ids, keeping registration order as given."""
    if not class_ids:
        raise ValueError("at least one model class is required")
    if len(set(class_ids)) != len(class_ids):
        raise ValueError(f"duplicate model classes in {list(class_ids)}")
    return [get_model_class(c) for c in class_ids]


def fit_minimal(model_class: ModelClass, sample) -> ModelInstance:
    return model_class.fit_minimal(np.asarray(sample, dtype=float))


def fit_cluster(model_class: ModelClass, points) -> ModelInstance:
    return model_class.fit_cluster(np.asarray(points, dtype=float))


def residual(model: ModelInstance, point) -> float:
    return get_model_class(model.class_id).residual(model, point)


__all__ = [
    "CircleClass",
    "LineClass",
    "MODEL_CLASSES",
    "ParabolaClass",
    "fit_cluster",
    "fit_minimal",
    "get_model_class",
    "get_model_classes",
    "residual",
]
