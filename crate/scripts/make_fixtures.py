"""Writes the proxy ground-truth fixtures used by the bench tests.

Kodak and McMaster are not redistributable here, so photographs bundled
with scikit-image, scikit-learn and matplotlib stand in: natural scenes for the Kodak proxy and
saturated, high-chroma content for the McMaster proxy. Each image is a
256x256 center crop stored as 8-bit PNG.
"""
import pathlib

import numpy as np
import matplotlib.cbook as cbook
import skimage.data as data
from PIL import Image
from sklearn.datasets import load_sample_image

ROOT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/data"
SIZE = 256


def crop(a, cy=None, cx=None):
    h, w = a.shape[:2]
    cy = h // 2 if cy is None else cy
    cx = w // 2 if cx is None else cx
    y0 = min(max(cy - SIZE // 2, 0), h - SIZE)
    x0 = min(max(cx - SIZE // 2, 0), w - SIZE)
    return np.ascontiguousarray(a[y0:y0 + SIZE, x0:x0 + SIZE, :3])


SETS = {
    "kodak_proxy": {
        "astronaut": crop(data.astronaut(), 200, 260),
        "chelsea": crop(data.chelsea()),
        "coffee": crop(data.coffee()),
        "rocket": crop(data.rocket(), 240, 330),
        "grace_hopper": crop(np.asarray(Image.open(cbook.get_sample_data("grace_hopper.jpg"))), 230, 256),
    },
    "mcmaster_proxy": {
        "ihc": crop(data.immunohistochemistry()),
        "flower": crop(load_sample_image("flower.jpg"), 200, 290),
        "china": crop(load_sample_image("china.jpg"), 250, 330),
        "motorcycle": crop(data.stereo_motorcycle()[0], 250, 330),
    },
}

for name, images in SETS.items():
    out = ROOT / name
    out.mkdir(parents=True, exist_ok=True)
    for stem, img in images.items():
        Image.fromarray(img).save(out / f"{stem}.png")
        print(out / f"{stem}.png", img.shape)
