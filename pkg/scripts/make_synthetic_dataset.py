"""Generate a desk-scale synthetic dataset in the paired-directory layout.

Writes `<out>/degraded/*.png` and `<out>/clean/*.png` from seeded smooth
random images pushed through an analytic degradation, ready for
`dagf train configs/tiny.json`:

    python3 scripts/make_synthetic_dataset.py data/tiny --n 8 --kind toled
"""

import argparse
from pathlib import Path

import numpy as np

from dagf import Tensor
from dagf.data import denormalize, poled_profile, synth_degrade, toled_profile
from dagf.imageio import save_image


def smooth_image(rng, h, w):
    coarse = rng.uniform(0.1, 0.9, size=(3, max(2, h // 8), max(2, w // 8)))
    up = np.repeat(np.repeat(coarse, 8, axis=1), 8, axis=2)[:, :h, :w]
    return Tensor(up.astype(np.float32))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--height", type=int, default=64)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--kind", choices=["toled", "poled"], default="toled")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    (out / "degraded").mkdir(parents=True, exist_ok=True)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    profile = toled_profile() if args.kind == "toled" else poled_profile()
    rng = np.random.default_rng(args.seed)
    for i in range(args.n):
        clean01 = smooth_image(rng, args.height, args.width)
        clean = Tensor(2.0 * clean01.data - 1.0)
        degraded = synth_degrade(clean, profile, seed=[args.seed, i])
        save_image(out / "clean" / f"im{i:03d}.png", clean01)
        save_image(out / "degraded" / f"im{i:03d}.png", denormalize(degraded))
    print(f"wrote {args.n} {args.kind}-style pairs under {out}")


if __name__ == "__main__":
    main()
