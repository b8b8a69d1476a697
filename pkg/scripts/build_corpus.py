#!/usr/bin/env python3
"""
Write the synthetic texture corpus used by the corruption and speed experiments.
Each texture is saved as a PNG with a JSON sidecar holding its window,
initial transform and ground truth.
"""

import sys
import argparse
import logging
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from tilt_solver.imaging import synthetic_corpus, write_corpus  # noqa: E402
from tilt_solver.models import TransformKind  # noqa: E402

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('corpus_builder')


def build_corpus(directory, size=128, window=48, theta_deg=10.0, projective=False):
    """Render every texture and write it to ``directory``."""
    kind = TransformKind.PROJECTIVE if projective else TransformKind.AFFINE
    logger.info(f"Rendering {size}x{size} textures rotated by {theta_deg} degrees")
    cases = synthetic_corpus(size=size, window=window, theta=np.deg2rad(theta_deg), kind=kind)
    written = write_corpus(directory, cases)
    for path in written:
        logger.info(f"  {path.name}")
    return written


def main():
    parser = argparse.ArgumentParser(description='Build the synthetic texture corpus')
    parser.add_argument('directory', help='Output directory')
    parser.add_argument('--size', type=int, default=128, help='Image side in pixels')
    parser.add_argument('--window', type=int, default=48, help='Window side in pixels')
    parser.add_argument('--theta-deg', type=float, default=10.0, help='Rotation applied to every texture')
    parser.add_argument('--projective', action='store_true', help='Record projective initial transforms')
    args = parser.parse_args()

    if args.window >= args.size:
        logger.error("--window must be smaller than --size")
        sys.exit(2)

    written = build_corpus(args.directory, args.size, args.window, args.theta_deg, args.projective)
    print(f"Wrote {len(written)} images to {args.directory}")


if __name__ == "__main__":
    main()
