#!/usr/bin/env python3
"""Write seeded images plus annotations, then run the CLI evaluate command on them."""
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image


def main(cli, work):
    work = Path(work)
    images = work / "images"
    images.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    rows = ["image_id,class_label,x0,y0,x1,y1"]
    for k in range(6):
        px = rng.integers(0, 256, size=(24 + 4 * k, 32, 3), dtype=np.uint8)
        Image.fromarray(px).save(images / f"scene{k}.png")
        for cls in range(4):
            rows.append(f"scene{k},{cls},{2 * k},{k},{16 + k},{20}")
    (work / "boxes.csv").write_text("\n".join(rows) + "\n")
    cmd = [cli, "evaluate", "--images", str(images), "--annotations", str(work / "boxes.csv"),
           "--out", str(work / "out"), "--steps", "12", "--class", "1", "--workers", "2",
           "--method", "abs-cam", "--method", "grad-cam", "--method", "grad-cam++", "--method", "score-cam"]
    return subprocess.call(cmd)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
