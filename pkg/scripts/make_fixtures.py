#!/usr/bin/env python3
"""Generate a synthetic two-class demo dataset of detection markers.

Real deployments feed the pipeline face videos and photographs; this script
plants the deterministic marker the bundled stage stub detects, tinted per
class, so the full prep/split/train/eval loop runs end to end on a laptop.

Usage: python scripts/make_fixtures.py --out demo_data [--per-class 8]
"""

import argparse
import sys
from pathlib import Path

import cv2
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from forgeguard.cascade import render_marker
from forgeguard.dataset import save_png
from forgeguard.imaging import Box, ImageBuffer

TINTS = {
    "real": (1.5, 0.75, 0.75),
    "fake": (0.75, 0.75, 1.5),
}


def marker_frame(rng, tint, size=320):
    img = ImageBuffer(np.zeros((size, size, 3), np.float32))
    side = int(rng.integers(60, 110))
    x = int(rng.integers(10, size - side - 10))
    y = int(rng.integers(10, size - side - 10))
    render_marker(img, Box(x, y, side, side), tint=tint)
    return img


def write_video(path, rng, tint, n_frames=20, size=320):
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"FFV1"), 10, (size, size))
    if not writer.isOpened():
        raise SystemExit("no lossless AVI codec available in this OpenCV build")
    frame = marker_frame(rng, tint, size)
    bgr = cv2.cvtColor(frame.pixels.astype(np.uint8), cv2.COLOR_RGB2BGR)
    for _ in range(n_frames):
        writer.write(bgr)
    writer.release()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--per-class", type=int, default=8, help="images per class")
    parser.add_argument("--videos-per-class", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    for label, tint in TINTS.items():
        img_dir = out / label / "images"
        vid_dir = out / label / "videos"
        img_dir.mkdir(parents=True, exist_ok=True)
        vid_dir.mkdir(parents=True, exist_ok=True)
        for i in range(args.per_class):
            save_png(marker_frame(rng, tint), img_dir / f"{label}_{i:03d}.png")
        for i in range(args.videos_per_class):
            write_video(vid_dir / f"{label}_{i:03d}.avi", rng, tint)
        print(f"{label}: {args.per_class} images, {args.videos_per_class} videos -> {out / label}")


if __name__ == "__main__":
    main()
