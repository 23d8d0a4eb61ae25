"""Utility functions shared by the geometry modules.
"""
import hashlib
import json
import math
from time import time
from typing import Any, Dict, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


def smoothstep5(u):
    """Quintic smoothstep 6u^5 - 15u^4 + 10u^3, clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def smoothstep5_d1(u):
    """First derivative of the quintic smoothstep."""
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u * u * (u - 1.0) ** 2


def smoothstep5_d2(u):
    """Second derivative of the quintic smoothstep."""
    u = np.clip(u, 0.0, 1.0)
    return 60.0 * u * (u - 1.0) * (2.0 * u - 1.0)


def quintic_hermite(x0: float, x1: float,
                    left: Tuple[float, float, float],
                    right: Tuple[float, float, float]) -> np.ndarray:
    """Coefficients (in u = (x - x0)/(x1 - x0)) of the quintic matching
    value, first and second derivative at both ends.

    `left` and `right` are (value, d/dx, d2/dx2) in the x variable.
    """
    w = x1 - x0
    y0, dy0, ddy0 = left
    y1, dy1, ddy1 = right
    # rows: p(0), p'(0), p''(0), p(1), p'(1), p''(1) in the u variable
    a = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    b = np.array([y0, dy0 * w, ddy0 * w * w, y1, dy1 * w, ddy1 * w * w], dtype=float)
    return np.linalg.solve(a, b)


def eval_quintic(coeffs: np.ndarray, x0: float, x1: float, x):
    """Value, first and second x-derivative of a quintic_hermite blend."""
    w = x1 - x0
    u = (np.asarray(x, dtype=float) - x0) / w
    p = np.polynomial.polynomial
    d1 = p.polyder(coeffs)
    d2 = p.polyder(coeffs, 2)
    return p.polyval(u, coeffs), p.polyval(u, d1) / w, p.polyval(u, d2) / (w * w)


def circular_distance(a, b):
    """Angular distance on the circle, in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), TWO_PI))
    return np.minimum(d, TWO_PI - d)


def cast_to_num(val):
    """Attempt to cast the given value to a float."""
    try:
        return float(val)
    except (TypeError, ValueError):
        return val


def config_digest(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def get_current_time():
    """Get current millis."""
    return int(round(time() * 1000))
