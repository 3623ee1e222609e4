"""Regenerate the bundled 16x16 PGM patterns.

Deterministic, no RNG: running this twice produces identical bytes, so
the committed assets never drift.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from ptdiff.formats import write_pgm

SIZE = 16
# +-0.5 in latent units: leaves 2 sigma of headroom before pixel clipping
# at the default component std 0.25, so mixture samples stay in range.
LO, HI = 0.25, 0.75
SAMPLE_SIGMA = 0.25
SAMPLE_SEED = 20240811


def _binary(mask):
    return np.where(mask, HI, LO)


def build_patterns():
    y, x = np.mgrid[0:SIZE, 0:SIZE]
    cy = cx = (SIZE - 1) / 2.0
    r = np.hypot(y - cy, x - cx)

    patterns = {
        "stripes_h": _binary((y // 2) % 2 == 0),
        "stripes_v": _binary((x // 2) % 2 == 0),
        "stripes_d": _binary(((x + y) // 2) % 2 == 0),
        "checker_2": _binary(((y // 2) + (x // 2)) % 2 == 0),
        "checker_4": _binary(((y // 4) + (x // 4)) % 2 == 0),
        "rings": _binary(np.rint(r).astype(int) // 2 % 2 == 0),
        "gradient": LO + (HI - LO) * (x / (SIZE - 1)),
        "blob": LO + (HI - LO) * np.exp(-(r**2) / (2.0 * 3.0**2)),
    }
    return patterns


def build_face():
    img = np.full((SIZE, SIZE), 0.5)
    y, x = np.mgrid[0:SIZE, 0:SIZE]
    cy = cx = (SIZE - 1) / 2.0
    r = np.hypot(y - cy, x - cx)
    img[r <= 7.0] = 0.85  # head
    ring = (r > 6.0) & (r <= 7.0)
    img[ring] = 0.2  # outline
    for ex in (5, 10):
        img[5:7, ex:ex + 2] = 0.15  # eyes
    img[10, 6:10] = 0.15  # mouth
    img[11, 5] = 0.15
    img[11, 10] = 0.15
    img[8, 7:9] = 0.35  # nose
    return img


def build_sample(patterns):
    """A typical mixture draw: one pattern plus component-scale noise."""
    rng = np.random.default_rng(SAMPLE_SEED)
    base = 2.0 * patterns["stripes_d"] - 1.0
    latent = base + SAMPLE_SIGMA * rng.standard_normal(base.shape)
    return np.clip((latent + 1.0) / 2.0, 0.0, 1.0)


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "ptdiff" / "assets"
    out_dir.mkdir(parents=True, exist_ok=True)
    patterns = build_patterns()
    patterns["sample"] = build_sample(patterns)
    patterns["face"] = build_face()
    for name, img in sorted(patterns.items()):
        path = out_dir / f"{name}.pgm"
        write_pgm(path, img)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
