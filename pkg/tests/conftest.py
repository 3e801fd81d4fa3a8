"""Shared oracles for the test suite.

These helpers deliberately avoid the library's own code paths: distances are
measured by dense sampling, gradients by central finite differences.
"""

from __future__ import annotations

import numpy as np


def dense_curve_samples(path, n_per_curve: int = 1000) -> np.ndarray:
    """Sample every curve of a path at uniform parameters; [~n*curves, 2]."""
    t = np.linspace(0.0, 1.0, n_per_curve)
    chunks = []
    for curve in path.curves:
        c = curve.control_array()
        u = 1.0 - t
        basis = np.stack([u ** 3, 3 * u * u * t, 3 * u * t * t, t ** 3], axis=-1)
        chunks.append(basis @ c)
    return np.concatenate(chunks)


def point_to_polyline_distance(p: np.ndarray, polyline_pts: np.ndarray) -> float:
    """Min distance from one point to any segment of a polyline."""
    a = polyline_pts[:-1]
    b = polyline_pts[1:]
    ab = b - a
    len_sq = np.sum(ab * ab, axis=1)
    len_sq_safe = np.where(len_sq == 0.0, 1.0, len_sq)
    t = np.clip(np.sum((p - a) * ab, axis=1) / len_sq_safe, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.sqrt(np.sum((p - proj) ** 2, axis=1))
    return float(d.min())


def max_deviation_curve_to_polyline(path, polyline_pts: np.ndarray,
                                    n_per_curve: int = 1000) -> float:
    """Dense-sample deviation of a path from a polyline approximation."""
    samples = dense_curve_samples(path, n_per_curve)
    return max(point_to_polyline_distance(p, polyline_pts) for p in samples)


def fit_residuals(points: np.ndarray, path, n_per_curve: int = 2000) -> np.ndarray:
    """Per-input-point min distance to a densely sampled fitted path.

    The dense samples are treated as an inscribed polyline, whose deviation
    from the true curve is O(1/n^2) and irrelevant at test tolerances.
    """
    samples = dense_curve_samples(path, n_per_curve)
    points = np.asarray(points, dtype=float)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        out[i] = point_to_polyline_distance(p, samples)
    return out


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, element by element."""
    x = x.astype(np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray,
                        floor: float = 1e-6) -> float:
    """Worst elementwise relative disagreement between two gradients."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
