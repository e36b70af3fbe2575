"""Reference clouds with known dimension."""
from __future__ import annotations

import itertools

import numpy as np


def segment(n: int = 10_000, length: float = 1.0, angle: float = 0.0) -> np.ndarray:
    """``n`` evenly spaced points on a segment from the origin in direction ``angle``."""
    s = np.linspace(0.0, length, n)
    return np.stack([s * np.cos(angle), s * np.sin(angle)], axis=1)


def cantor_line(level: int) -> np.ndarray:
    """Left endpoints of the ``2**level`` intervals of the middle-third construction."""
    digits = np.array(list(itertools.product((0, 2), repeat=level)), dtype=float)
    return digits @ (3.0 ** -np.arange(1, level + 1))


def cantor_dust(level: int = 7) -> np.ndarray:
    """``4**level`` points of ``C(1/3) x C(1/3)``, dimension ``2 ln 2 / ln 3``."""
    c = cantor_line(level)
    x, y = np.meshgrid(c, c, indexing="ij")
    return np.stack([x.ravel(), y.ravel()], axis=1)


FIXTURES = {"segment": segment, "cantor": cantor_dust}
