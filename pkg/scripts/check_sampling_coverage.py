"""
Monte-Carlo check of hypothesis coverage on the star5 preset: how often does
the sampled pool contain, for every ground-truth line, a hypothesis catching at
least 80% of that line's inliers within epsilon?
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import logging

import numpy as np
from tqdm import tqdm

from config import settings
from evaluation import get_preset, generate_scene
from geometry import get_model_classes
from sampling import SamplerConfig, residual_matrix, sample_hypotheses

logging.basicConfig(
    level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

TRIALS = 100
COVERAGE = 0.8


def covered(data, hypotheses, epsilon) -> bool:
    inliers = residual_matrix(data, hypotheses) <= epsilon
    for label in np.unique(data.gt_labels[data.gt_labels > 0]):
        members = data.gt_labels == label
        caught = inliers[members].mean(axis=0)
        if caught.max() < COVERAGE:
            return False
    return True


def main():
    preset = get_preset("star5")
    classes = get_model_classes(list(preset.classes))
    epsilon = preset.default_epsilon
    hits = 0
    for seed in tqdm(range(TRIALS), desc="coverage"):
        data = generate_scene(preset.scene(seed=seed))
        sampler = SamplerConfig(
            per_class_counts={"line": settings.HYPOTHESES_PER_CLASS}, seed=seed
        )
        hits += covered(data, sample_hypotheses(data, classes, sampler), epsilon)
    print(f"Coverage at eps={epsilon:g}: {hits}/{TRIALS} pools cover every line")


if __name__ == "__main__":
    main()
