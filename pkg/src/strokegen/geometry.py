"""Cubic Bezier path geometry.

Converts recorded pen-point sequences into compact curve chains (least-squares
fitting with adaptive splitting) and flattens curve chains back into
bounded-error polylines. Coordinates live on a square canvas of
``boundary`` x ``boundary`` units, x to the right and y down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BOUNDARY = 180.0

# Newton-Raphson reparameterization rounds tried before splitting a segment.
_REPARAM_ROUNDS = 4

# Gauss-Legendre nodes/weights on [0, 1] for arc-length quadrature.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_T = (_GL_X + 1.0) / 2.0
_GL_W = _GL_W / 2.0


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class CubicBezier:
    """One cubic segment: anchors p0/p3, control points p1/p2."""

    p0: Point
    p1: Point
    p2: Point
    p3: Point

    def control_array(self) -> np.ndarray:
        return np.array(
            [[p.x, p.y] for p in (self.p0, self.p1, self.p2, self.p3)], dtype=float
        )

    def evaluate(self, t) -> np.ndarray:
        """Curve position at parameter(s) t; returns [2] or [len(t), 2]."""
        c = self.control_array()
        return _bezier_eval(c, np.asarray(t, dtype=float))

    def arc_length(self) -> float:
        return float(_curve_arc_lengths(self.control_array()[None, :, :])[0])

    def reversed(self) -> "CubicBezier":
        return CubicBezier(self.p3, self.p2, self.p1, self.p0)


@dataclass
class Path:
    """Contiguous chain of cubic Bezier curves approximating one pen stroke.

    Treated as immutable after construction; the control-point array is
    built lazily and cached.
    """

    curves: list[CubicBezier]
    _array: np.ndarray | None = field(default=None, init=False, repr=False,
                                      compare=False)

    def __post_init__(self):
        if not self.curves:
            raise ValueError("path must contain at least one curve")
        for a, b in zip(self.curves, self.curves[1:]):
            if a.p3 != b.p0:
                raise ValueError(f"path is not contiguous at {a.p3} -> {b.p0}")

    @property
    def start(self) -> Point:
        return self.curves[0].p0

    @property
    def end(self) -> Point:
        return self.curves[-1].p3

    def control_array(self) -> np.ndarray:
        """All control points as an array of shape [n_curves, 4, 2]."""
        if self._array is None:
            self._array = np.array(
                [
                    [[c.p0.x, c.p0.y], [c.p1.x, c.p1.y],
                     [c.p2.x, c.p2.y], [c.p3.x, c.p3.y]]
                    for c in self.curves
                ],
                dtype=float,
            )
        return self._array

    def arc_length(self) -> float:
        return float(np.sum(_curve_arc_lengths(self.control_array())))


@dataclass
class Polyline:
    """Straight-segment approximation of a path; ``points`` is an [N, 2] array."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"polyline points must be [N, 2], got {self.points.shape}")
        if len(self.points) < 2:
            raise ValueError("polyline needs at least 2 points")
        if not np.isfinite(self.points).all():
            raise ValueError("polyline contains non-finite coordinates")


@dataclass
class StrokeImage:
    """Ordered list of paths on a square canvas of side ``boundary``."""

    paths: list[Path]
    boundary: float = DEFAULT_BOUNDARY

    def __post_init__(self):
        if self.boundary <= 0:
            raise ValueError("boundary must be positive")
        for i, p in enumerate(self.paths):
            pts = p.control_array()
            if pts.min() < 0.0 or pts.max() > self.boundary:
                raise ValueError(
                    f"path {i} exceeds the [0, {self.boundary}] canvas "
                    f"(bbox {pts.min(axis=(0, 1))} .. {pts.max(axis=(0, 1))})"
                )

    def control_array(self) -> np.ndarray:
        """All control points of all paths, stacked as [total_curves * 4, 2]."""
        if not self.paths:
            return np.zeros((0, 2))
        return np.concatenate([p.control_array().reshape(-1, 2) for p in self.paths])

    def arc_length(self) -> float:
        return float(sum(p.arc_length() for p in self.paths))

    def bbox(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) over all control points."""
        pts = self.control_array()
        if len(pts) == 0:
            return (0.0, 0.0, 0.0, 0.0)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])


# ---------------------------------------------------------------------------
# Bezier evaluation helpers
# ---------------------------------------------------------------------------

def _bezier_eval(c: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    u = 1.0 - t
    b = np.stack([u ** 3, 3 * u * u * t, 3 * u * t * t, t ** 3], axis=-1)
    return b @ c


def _bezier_deriv1(c: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    u = 1.0 - t
    d = 3.0 * np.diff(c, axis=0)  # [3, 2]
    b = np.stack([u * u, 2 * u * t, t * t], axis=-1)
    return b @ d


def _bezier_deriv2(c: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    d2 = 6.0 * np.diff(c, n=2, axis=0)  # [2, 2]
    b = np.stack([1.0 - t, t], axis=-1)
    return b @ d2


def _curve_arc_lengths(curves: np.ndarray) -> np.ndarray:
    """Gauss-Legendre arc lengths for an array of curves [n, 4, 2]."""
    d = 3.0 * np.diff(curves, axis=1)  # [n, 3, 2]
    t = _GL_T
    u = 1.0 - t
    basis = np.stack([u * u, 2 * u * t, t * t], axis=-1)  # [24, 3]
    vel = np.einsum("kj,njc->nkc", basis, d)  # [n, 24, 2]
    speed = np.hypot(vel[..., 0], vel[..., 1])
    return speed @ _GL_W


# ---------------------------------------------------------------------------
# Curve fitting (least-squares cubic fit with recursive splitting)
# ---------------------------------------------------------------------------

def fit_path(points, max_error: float) -> Path:
    """Fit a chain of cubic curves through recorded pen positions.

    Consecutive duplicate points are dropped first. Every input point ends up
    within ``max_error`` units of the fitted chain, measured at the point's
    assigned curve parameter. Raises ValueError on fewer than 2 distinct
    points or a non-positive error budget.
    """
    if max_error <= 0:
        raise ValueError("max_error must be positive")
    pts = _as_point_array(points)
    pts = _dedupe_consecutive(pts)
    if len(pts) < 2:
        raise ValueError("need at least 2 distinct points to fit a path")
    t_left = _unit(pts[1] - pts[0])
    t_right = _unit(pts[-2] - pts[-1])
    segments = _fit_cubic(pts, t_left, t_right, max_error)
    return _segments_to_path(segments)


def _as_point_array(points) -> np.ndarray:
    rows = []
    for p in points:
        if isinstance(p, Point):
            rows.append((p.x, p.y))
        else:
            rows.append((float(p[0]), float(p[1])))
    arr = np.array(rows, dtype=float)
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("input points contain non-finite coordinates")
    return arr


def _dedupe_consecutive(pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def _unit(v: np.ndarray) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        return np.array([0.0, 0.0])
    return v / n


def _segments_to_path(segments: list[np.ndarray]) -> Path:
    curves = []
    prev_end: Point | None = None
    for seg in segments:
        p0 = prev_end if prev_end is not None else Point(seg[0, 0], seg[0, 1])
        c = CubicBezier(
            p0,
            Point(seg[1, 0], seg[1, 1]),
            Point(seg[2, 0], seg[2, 1]),
            Point(seg[3, 0], seg[3, 1]),
        )
        curves.append(c)
        prev_end = c.p3
    return Path(curves)


def _fit_cubic(pts: np.ndarray, t_left: np.ndarray, t_right: np.ndarray,
               max_error: float) -> list[np.ndarray]:
    if len(pts) == 2:
        dist = math.hypot(*(pts[1] - pts[0])) / 3.0
        return [np.array([pts[0], pts[0] + t_left * dist,
                          pts[1] + t_right * dist, pts[1]])]

    u = _chord_length_params(pts)
    bez = _generate_bezier(pts, u, t_left, t_right)
    err_sq, split = _max_error_sq(pts, bez, u)
    budget_sq = max_error * max_error
    if err_sq <= budget_sq:
        return [bez]

    for _ in range(_REPARAM_ROUNDS):
        u = _reparameterize(bez, pts, u)
        bez = _generate_bezier(pts, u, t_left, t_right)
        err_sq, split = _max_error_sq(pts, bez, u)
        if err_sq <= budget_sq:
            return [bez]

    split = min(max(split, 1), len(pts) - 2)
    t_center = _unit(pts[split - 1] - pts[split + 1])
    if t_center[0] == 0.0 and t_center[1] == 0.0:
        t_center = _unit(pts[split - 1] - pts[split])
    left = _fit_cubic(pts[: split + 1], t_left, t_center, max_error)
    right = _fit_cubic(pts[split:], -t_center, t_right, max_error)
    return left + right


def _chord_length_params(pts: np.ndarray) -> np.ndarray:
    d = np.hypot(*(pts[1:] - pts[:-1]).T)
    u = np.concatenate([[0.0], np.cumsum(d)])
    return u / u[-1]


def _generate_bezier(pts: np.ndarray, u: np.ndarray, t_left: np.ndarray,
                     t_right: np.ndarray) -> np.ndarray:
    first, last = pts[0], pts[-1]
    a0 = np.outer(3 * (1 - u) ** 2 * u, t_left)    # [n, 2]
    a1 = np.outer(3 * (1 - u) * u ** 2, t_right)

    c00 = np.sum(a0 * a0)
    c01 = np.sum(a0 * a1)
    c11 = np.sum(a1 * a1)

    base = _bezier_eval(np.array([first, first, last, last]), u)
    tmp = pts - base
    x0 = np.sum(a0 * tmp)
    x1 = np.sum(a1 * tmp)

    det_c = c00 * c11 - c01 * c01
    alpha_l = (x0 * c11 - x1 * c01) / det_c if det_c != 0.0 else 0.0
    alpha_r = (c00 * x1 - c01 * x0) / det_c if det_c != 0.0 else 0.0

    seg_len = math.hypot(*(last - first))
    eps = 1.0e-6 * seg_len
    if alpha_l < eps or alpha_r < eps:
        # Wu/Barsky heuristic when the least-squares solve degenerates.
        alpha_l = alpha_r = seg_len / 3.0

    return np.array([first, first + t_left * alpha_l,
                     last + t_right * alpha_r, last])


def _max_error_sq(pts: np.ndarray, bez: np.ndarray,
                  u: np.ndarray) -> tuple[float, int]:
    on_curve = _bezier_eval(bez, u)
    d_sq = np.sum((on_curve - pts) ** 2, axis=1)
    idx = int(np.argmax(d_sq))
    return float(d_sq[idx]), idx


def _reparameterize(bez: np.ndarray, pts: np.ndarray,
                    u: np.ndarray) -> np.ndarray:
    q = _bezier_eval(bez, u)
    q1 = _bezier_deriv1(bez, u)
    q2 = _bezier_deriv2(bez, u)
    diff = q - pts
    num = np.sum(diff * q1, axis=1)
    den = np.sum(q1 * q1, axis=1) + np.sum(diff * q2, axis=1)
    step = np.where(np.abs(den) > 1e-12, num / np.where(den == 0, 1.0, den), 0.0)
    out = np.clip(u - step, 0.0, 1.0)
    out[0] = 0.0
    out[-1] = 1.0
    return out


# ---------------------------------------------------------------------------
# Flattening (adaptive midpoint subdivision)
# ---------------------------------------------------------------------------

def flatten_path(path: Path, max_error: float) -> Polyline:
    """Flatten a path to a polyline within ``max_error`` units of the curves.

    Each curve is split at t=0.5 while a control point lies farther than
    ``max_error`` from the chord; endpoints are preserved exactly.
    """
    if max_error <= 0:
        raise ValueError("max_error must be positive")
    pts: list[np.ndarray] = [path.curves[0].control_array()[0]]
    for curve in path.curves:
        _flatten_curve(curve.control_array(), max_error, pts)
    out = [pts[0]]
    for p in pts[1:]:
        if p[0] != out[-1][0] or p[1] != out[-1][1]:
            out.append(p)
    if len(out) < 2:
        out.append(pts[-1])
    return Polyline(np.array(out))


def _flatten_curve(c: np.ndarray, max_error: float, out: list[np.ndarray]):
    stack = [c]
    while stack:
        cur = stack.pop()
        d1 = _point_segment_distance(cur[1], cur[0], cur[3])
        d2 = _point_segment_distance(cur[2], cur[0], cur[3])
        if max(d1, d2) <= max_error:
            out.append(cur[3])
        else:
            left, right = _split_curve(cur)
            stack.append(right)
            stack.append(left)


def _split_curve(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p01 = (c[0] + c[1]) / 2.0
    p12 = (c[1] + c[2]) / 2.0
    p23 = (c[2] + c[3]) / 2.0
    p012 = (p01 + p12) / 2.0
    p123 = (p12 + p23) / 2.0
    mid = (p012 + p123) / 2.0
    return (np.array([c[0], p01, p012, mid]), np.array([mid, p123, p23, c[3]]))


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    len_sq = ab[0] * ab[0] + ab[1] * ab[1]
    if len_sq == 0.0:
        return math.hypot(*(p - a))
    t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len_sq
    t = min(1.0, max(0.0, t))
    proj = a + t * ab
    return math.hypot(*(p - proj))


# ---------------------------------------------------------------------------
# Path direction
# ---------------------------------------------------------------------------

def reverse_path(path: Path) -> Path:
    """Traverse the same geometry from the other end."""
    return Path([c.reversed() for c in reversed(path.curves)])


# ---------------------------------------------------------------------------
# Boundary fitting
# ---------------------------------------------------------------------------

def fit_paths_to_boundary(paths: list[Path], boundary: float) -> list[Path]:
    """Translate (and, only if too large, uniformly shrink) paths into the canvas.

    The translation is the minimal shift that brings the control-point
    bounding box inside [0, boundary]^2; shrinking happens about the bbox
    center. Coordinates are clipped at the very end to squash float residue.
    """
    fitted, _ = fit_paths_to_boundary_with_scale(paths, boundary)
    return fitted


def fit_paths_to_boundary_with_scale(
    paths: list[Path], boundary: float
) -> tuple[list[Path], float]:
    """Same as fit_paths_to_boundary, also returning the shrink factor used."""
    arrays = [p.control_array() for p in paths]
    if not arrays:
        return [], 1.0
    allpts = np.concatenate([a.reshape(-1, 2) for a in arrays])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    size = hi - lo

    scale = 1.0
    if size[0] > boundary or size[1] > boundary:
        scale = boundary / max(size[0], size[1])
        center = (lo + hi) / 2.0
        arrays = [(a - center) * scale + center for a in arrays]
        allpts = np.concatenate([a.reshape(-1, 2) for a in arrays])
        lo = allpts.min(axis=0)
        hi = allpts.max(axis=0)

    shift = np.where(lo < 0.0, -lo, 0.0) + np.where(hi > boundary,
                                                    boundary - hi, 0.0)
    out = []
    for a in arrays:
        moved = np.clip(a + shift, 0.0, boundary)
        out.append(_array_to_path(moved))
    return out, scale


def _array_to_path(arr: np.ndarray) -> Path:
    """Rebuild a Path from a [n, 4, 2] control array, keeping joints exact."""
    values = arr.tolist()
    curves = []
    prev_end: Point | None = None
    for row in values:
        p0 = prev_end if prev_end is not None else Point(row[0][0], row[0][1])
        c = CubicBezier(p0, Point(row[1][0], row[1][1]),
                        Point(row[2][0], row[2][1]),
                        Point(row[3][0], row[3][1]))
        curves.append(c)
        prev_end = c.p3
    path = Path(curves)
    path._array = np.asarray(arr, dtype=float)
    return path


# ---------------------------------------------------------------------------
# JSON formats
# ---------------------------------------------------------------------------
# Recording: {"boundary": 180, "strokes": [[[x, y], ...], ...]}
# Path image: {"boundary": 180, "paths": [[[[x,y],[x,y],[x,y],[x,y]], ...], ...]}


def load_recording(source) -> tuple[list[np.ndarray], float]:
    """Read a stroke recording; returns (strokes as [N,2] arrays, boundary)."""
    data = _load_json(source)
    if not isinstance(data, dict) or "strokes" not in data:
        raise ValueError("recording must be an object with a 'strokes' list")
    boundary = float(data.get("boundary", DEFAULT_BOUNDARY))
    strokes = []
    for i, stroke in enumerate(data["strokes"]):
        arr = np.asarray(stroke, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"stroke {i} is not a list of [x, y] pairs")
        if not np.isfinite(arr).all():
            raise ValueError(f"stroke {i} contains non-finite coordinates")
        strokes.append(arr)
    return strokes, boundary


def recording_to_image(source, fit_error: float = 1.0) -> StrokeImage:
    """Fit every recorded stroke and pull the result inside the canvas.

    Fitted control points can overshoot the recorded extent, so the image is
    re-fitted to the boundary afterwards.
    """
    strokes, boundary = load_recording(source)
    if not strokes:
        return StrokeImage([], boundary)
    paths = [fit_path(s, fit_error) for s in strokes]
    return StrokeImage(fit_paths_to_boundary(paths, boundary), boundary)


def image_to_json(image: StrokeImage) -> dict:
    return {
        "boundary": image.boundary,
        "paths": [[c.control_array().tolist() for c in p.curves]
                  for p in image.paths],
    }


def image_from_json(data: dict) -> StrokeImage:
    if not isinstance(data, dict) or "paths" not in data:
        raise ValueError("path image must be an object with a 'paths' list")
    boundary = float(data.get("boundary", DEFAULT_BOUNDARY))
    paths = []
    for raw_path in data["paths"]:
        curves = []
        prev_end: Point | None = None
        for raw in raw_path:
            pts = [Point(float(q[0]), float(q[1])) for q in raw]
            if len(pts) != 4:
                raise ValueError("each curve needs exactly 4 control points")
            if prev_end is not None and pts[0] == prev_end:
                pts[0] = prev_end
            c = CubicBezier(*pts)
            curves.append(c)
            prev_end = c.p3
        paths.append(Path(curves))
    return StrokeImage(paths, boundary)


def save_path_image(image: StrokeImage, path):
    with open(path, "w") as fh:
        json.dump(image_to_json(image), fh)


def load_path_image(path) -> StrokeImage:
    return image_from_json(_load_json(path))


def _load_json(source):
    if isinstance(source, dict):
        return source
    with open(source) as fh:
        return json.load(fh)
