import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import logging
from pathlib import Path

from config import settings
from evaluation import PRESETS, generate_scene
from io_formats import parse_points_csv, render_points_csv, render_scene_spec, write_outputs

logging.basicConfig(
    level=settings.LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

SEEDS = range(5)


def main():
    out_dir = Path(settings.DATA_PATH)
    outputs = []
    for name, preset in PRESETS.items():
        for seed in SEEDS:
            spec = preset.scene(seed=seed)
            data = generate_scene(spec)
            text = render_points_csv(data)
            parse_points_csv(text)
            outputs.append((out_dir / f"{name}_seed{seed}.csv", text))
            outputs.append((out_dir / f"{name}_seed{seed}.json", render_scene_spec(spec)))
            print(f"{name} seed {seed}: {data.N} points, {spec.outlier_count} outliers")
    write_outputs(outputs)


if __name__ == "__main__":
    main()
