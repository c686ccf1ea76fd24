"""
Top-down depth images of single objects
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .geometry import ObjectSpec, Orientation, column_profile

#: Image side in pixels.
IMAGE_SIZE = 32

#: Sub-samples per pixel side.
SUPERSAMPLE = 4

#: Camera plane height above the table, meters.
CAMERA_HEIGHT = 1.0

#: Window side as a multiple of the object's larger footprint dimension.
WINDOW_SCALE = 1.2


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Camera-distance image in meters; background is exactly 1.0"""
    pixels: np.ndarray

    @property
    def d_min(self) -> float:
        return float(self.pixels.min())

    @property
    def d_max(self) -> float:
        return float(self.pixels.max())


@dataclass(frozen=True, eq=False)
class NormalizedImage:
    values: np.ndarray
    d_min: float
    d_max: float

    def flat(self) -> np.ndarray:
        """Row-major 1024-vector"""
        return self.values.reshape(-1)


def render_object(spec: ObjectSpec, orientation: Orientation = Orientation.UPRIGHT,
                  offset: Tuple[float, float] = (0.0, 0.0)) -> DepthImage:
    """Render the orthographic heightfield of ``spec`` seen from above.

    ``offset`` shifts the object inside the window (meters); it is only used
    for jitter augmentation.
    """
    window = WINDOW_SCALE * max(spec.outer_width, spec.outer_depth)
    samples = IMAGE_SIZE * SUPERSAMPLE
    coords = -window / 2 + (np.arange(samples) + 0.5) * (window / samples)
    # row index runs along +y, column index along +x
    ys, xs = np.meshgrid(coords, coords, indexing='ij')
    _, top = column_profile(spec, orientation, xs - offset[0], ys - offset[1])
    height = np.nan_to_num(top, nan=0.0)
    depth = CAMERA_HEIGHT - height
    pixels = depth.reshape(IMAGE_SIZE, SUPERSAMPLE, IMAGE_SIZE, SUPERSAMPLE).mean(axis=(1, 3))
    return DepthImage(pixels)


def normalize(img: DepthImage) -> NormalizedImage:
    d_min, d_max = img.d_min, img.d_max
    if d_max > d_min:
        values = (d_max - img.pixels) / (d_max - d_min)
    else:
        values = np.zeros_like(img.pixels)
    return NormalizedImage(values, d_min, d_max)


@lru_cache(maxsize=256)
def cached_render(spec: ObjectSpec, orientation: Orientation = Orientation.UPRIGHT) -> NormalizedImage:
    """Normalized render shared between callers; treat it as read-only"""
    return normalize(render_object(spec, orientation))


def denormalize(img: NormalizedImage) -> DepthImage:
    return DepthImage(img.d_max - img.values * (img.d_max - img.d_min))


def write_pgm(img: Union[DepthImage, NormalizedImage], path: Union[str, Path]) -> Path:
    """Write an 8-bit binary PGM; depth images are mapped near=white"""
    if isinstance(img, NormalizedImage):
        values = img.values
    else:
        values = normalize(img).values
    data = np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    with open(path, 'wb') as f:
        f.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode('ascii'))
        f.write(data.tobytes())
    return path
