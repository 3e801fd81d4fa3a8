"""Patch synthesis: turn one stroke image into a large, diverse data set.

Five manipulations are available: whole-image translation, rotation,
mirroring and scaling, plus per-path reversal. A greedy reordering pass then
minimizes pen travel between consecutive paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Path,
    StrokeImage,
    _array_to_path,
    fit_paths_to_boundary_with_scale,
    reverse_path,
)

MIRROR_AXES = ("horizontal", "vertical")


class ContainmentError(ValueError):
    """A translation would push content outside the canvas."""


@dataclass(frozen=True)
class Transform:
    """One whole-image manipulation.

    kind/parameter pairs: translate -> offset (dx, dy); rotate -> angle in
    radians; mirror -> axis ("horizontal" flips y about the content center,
    "vertical" flips x); scale -> factor in (0, 1].
    """

    kind: str
    offset: tuple[float, float] | None = None
    angle: float | None = None
    axis: str | None = None
    factor: float | None = None

    def __post_init__(self):
        if self.kind == "translate":
            if self.offset is None:
                raise ValueError("translate needs an offset")
        elif self.kind == "rotate":
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError("rotate needs a finite angle")
        elif self.kind == "mirror":
            if self.axis not in MIRROR_AXES:
                raise ValueError(f"mirror axis must be one of {MIRROR_AXES}")
        elif self.kind == "scale":
            if self.factor is None or not (0.0 < self.factor <= 1.0):
                raise ValueError("scale factor must be in (0, 1]")
        else:
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def translate(cls, dx: float, dy: float) -> "Transform":
        return cls("translate", offset=(float(dx), float(dy)))

    @classmethod
    def rotate(cls, angle: float) -> "Transform":
        return cls("rotate", angle=float(angle))

    @classmethod
    def mirror(cls, axis: str) -> "Transform":
        return cls("mirror", axis=axis)

    @classmethod
    def scale(cls, factor: float) -> "Transform":
        return cls("scale", factor=float(factor))


@dataclass(frozen=True)
class AugmentConfig:
    reversal_probability: float = 0.5
    scale_min: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.reversal_probability <= 1.0:
            raise ValueError("reversal_probability must be in [0, 1]")
        if not 0.0 < self.scale_min <= 1.0:
            raise ValueError("scale_min must be in (0, 1]")


@dataclass(frozen=True)
class PatchParams:
    """What one patch generation actually applied (useful for debugging)."""

    angle: float
    mirror_horizontal: bool
    mirror_vertical: bool
    scale: float
    fit_shrink: float
    offset: tuple[float, float]
    reversed_paths: tuple[bool, ...]
    path_order: tuple[int, ...]


# ---------------------------------------------------------------------------
# Whole-image transforms
# ---------------------------------------------------------------------------

def transform_image(image: StrokeImage, t: Transform) -> StrokeImage:
    """Apply one manipulation, keeping the result inside the canvas.

    Rotation, mirroring and scaling act about the content bounding-box
    center. After rotation or scaling the content is translated minimally
    back onto the canvas and, only if the canvas cannot hold it at all,
    uniformly shrunk to fit.
    """
    return _transform_with_shrink(image, t)[0]


def _transform_with_shrink(image: StrokeImage,
                           t: Transform) -> tuple[StrokeImage, float]:
    if not image.paths:
        return StrokeImage([], image.boundary), 1.0
    center = _bbox_center(image)

    if t.kind == "translate":
        lo_x, lo_y, hi_x, hi_y = image.bbox()
        dx, dy = t.offset
        tol = 1e-9
        if (lo_x + dx < -tol or hi_x + dx > image.boundary + tol
                or lo_y + dy < -tol or hi_y + dy > image.boundary + tol):
            raise ContainmentError(
                f"offset ({dx}, {dy}) moves content outside the canvas"
            )
        paths = _apply_affine(image.paths, np.eye(2), np.array([dx, dy]))
        paths = [_clip_path(p, image.boundary) for p in paths]
        return StrokeImage(paths, image.boundary), 1.0

    if t.kind == "rotate":
        c, s = math.cos(t.angle), math.sin(t.angle)
        m = np.array([[c, -s], [s, c]])
    elif t.kind == "mirror":
        m = np.diag([1.0, -1.0]) if t.axis == "horizontal" else np.diag([-1.0, 1.0])
    else:  # scale
        m = np.eye(2) * t.factor

    shift = center - m @ center
    paths = _apply_affine(image.paths, m, shift)
    fitted, shrink = fit_paths_to_boundary_with_scale(paths, image.boundary)
    return StrokeImage(fitted, image.boundary), shrink


def _bbox_center(image: StrokeImage) -> np.ndarray:
    lo_x, lo_y, hi_x, hi_y = image.bbox()
    return np.array([(lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0])


def _apply_affine(paths: list[Path], m: np.ndarray, shift: np.ndarray) -> list[Path]:
    out = []
    for p in paths:
        a = p.control_array()  # [n, 4, 2]
        xs = a[..., 0]
        ys = a[..., 1]
        # elementwise form keeps shared joint coordinates bitwise equal
        nx = m[0, 0] * xs + m[0, 1] * ys + shift[0]
        ny = m[1, 0] * xs + m[1, 1] * ys + shift[1]
        out.append(_array_to_path(np.stack([nx, ny], axis=-1)))
    return out


def _clip_path(path: Path, boundary: float) -> Path:
    return _array_to_path(np.clip(path.control_array(), 0.0, boundary))


# ---------------------------------------------------------------------------
# Path-level manipulations
# ---------------------------------------------------------------------------

def reverse_paths_random(image: StrokeImage, p: float,
                         rng: np.random.Generator) -> StrokeImage:
    """Reverse each path independently with probability p; order unchanged."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("reversal probability must be in [0, 1]")
    flags = rng.random(len(image.paths)) < p
    paths = [reverse_path(q) if f else q for q, f in zip(image.paths, flags)]
    return StrokeImage(paths, image.boundary)


def order_paths_greedy(image: StrokeImage, rng: np.random.Generator) -> StrokeImage:
    """Reorder paths to shorten pen travel.

    The first path is chosen uniformly at random; each following path is the
    unvisited one whose start point is nearest to the current end point,
    ties broken by lower original index.
    """
    n = len(image.paths)
    if n == 0:
        return StrokeImage([], image.boundary)
    order = greedy_order(image.paths, int(rng.integers(n)))
    return StrokeImage([image.paths[i] for i in order], image.boundary)


def greedy_order(paths: list[Path], start: int) -> list[int]:
    """Nearest-start-point visiting order beginning at ``start``."""
    starts = np.array([[p.start.x, p.start.y] for p in paths])
    order = [start]
    remaining = set(range(len(paths))) - {start}
    cur = np.array([paths[start].end.x, paths[start].end.y])
    while remaining:
        best = min(
            remaining,
            key=lambda i: (np.hypot(*(starts[i] - cur)), i),
        )
        order.append(best)
        remaining.remove(best)
        cur = np.array([paths[best].end.x, paths[best].end.y])
    return order


def pen_travel(paths: list[Path]) -> float:
    """Total pen-up distance between consecutive paths."""
    total = 0.0
    for a, b in zip(paths, paths[1:]):
        total += math.hypot(b.start.x - a.end.x, b.start.y - a.end.y)
    return total


# ---------------------------------------------------------------------------
# Patch generation
# ---------------------------------------------------------------------------

def generate_patch(image: StrokeImage, cfg: AugmentConfig,
                   rng: np.random.Generator) -> StrokeImage:
    """One augmented variant: rotate, mirror, scale, translate, reverse, reorder."""
    patch, _ = generate_patch_with_params(image, cfg, rng)
    return patch


def generate_patch_with_params(
    image: StrokeImage, cfg: AugmentConfig, rng: np.random.Generator
) -> tuple[StrokeImage, PatchParams]:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    mirror_h = bool(rng.random() < 0.5)
    mirror_v = bool(rng.random() < 0.5)
    factor = rng.uniform(cfg.scale_min, 1.0)

    if not image.paths:
        params = PatchParams(angle, mirror_h, mirror_v, factor, 1.0, (0.0, 0.0),
                             (), ())
        return StrokeImage([], image.boundary), params

    # content too large to rotate in place gets shrunk by the boundary fit
    img, fit_shrink = _transform_with_shrink(image, Transform.rotate(angle))
    if mirror_h:
        img = transform_image(img, Transform.mirror("horizontal"))
    if mirror_v:
        img = transform_image(img, Transform.mirror("vertical"))
    img = transform_image(img, Transform.scale(factor))

    lo_x, lo_y, hi_x, hi_y = img.bbox()
    dx = rng.uniform(-lo_x, img.boundary - hi_x)
    dy = rng.uniform(-lo_y, img.boundary - hi_y)
    img = transform_image(img, Transform.translate(dx, dy))

    flags = rng.random(len(img.paths)) < cfg.reversal_probability
    paths = [reverse_path(q) if f else q for q, f in zip(img.paths, flags)]

    order = greedy_order(paths, int(rng.integers(len(paths))))
    patch = StrokeImage([paths[i] for i in order], image.boundary)
    params = PatchParams(
        angle=angle,
        mirror_horizontal=mirror_h,
        mirror_vertical=mirror_v,
        scale=factor,
        fit_shrink=fit_shrink,
        offset=(dx, dy),
        reversed_paths=tuple(bool(f) for f in flags),
        path_order=tuple(order),
    )
    return patch, params


def generate_patch_set(image: StrokeImage, n: int, cfg: AugmentConfig,
                       rng: np.random.Generator, jobs: int = 1) -> list[StrokeImage]:
    """n independent patches, one spawned rng stream each.

    Streams are derived with Generator.spawn, so the result is identical
    whether patches are generated serially or across ``jobs`` processes.
    """
    if n < 1:
        raise ValueError("patch count must be >= 1")
    children = rng.spawn(n)
    if jobs <= 1:
        return [generate_patch(image, cfg, child) for child in children]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        tasks = [(image, cfg, child) for child in children]
        return list(pool.map(_patch_worker, tasks, chunksize=max(1, n // jobs)))


def _patch_worker(task) -> StrokeImage:
    image, cfg, child = task
    return generate_patch(image, cfg, child)
