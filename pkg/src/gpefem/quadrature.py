"""Symmetric quadrature rules on the reference triangle.

Points are stored in barycentric coordinates and weights are normalized to
sum to one, so that a physical-element integral is ``area * sum(w_q * f(x_q))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle {x >= 0, y >= 0, x + y <= 1}."""

    name: str
    barycentric: np.ndarray  # (nq, 3)
    weights: np.ndarray      # (nq,), sums to 1
    degree: int              # highest total polynomial degree integrated exactly

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def npoints(self) -> int:
        return len(self.weights)

    @property
    def reference_points(self) -> np.ndarray:
        """Points in reference (x, y) coordinates, shape (nq, 2)."""
        return self.barycentric[:, 1:].copy()


def _orbit3(a: float) -> np.ndarray:
    # permutations of (a, b, b) with b = (1 - a) / 2
    b = 0.5 * (1.0 - a)
    return np.array([[a, b, b], [b, a, b], [b, b, a]])


def _orbit6(a: float, b: float) -> np.ndarray:
    c = 1.0 - a - b
    return np.array(
        [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
    )


_CENTROID = QuadratureRule(
    name="centroid",
    barycentric=np.full((1, 3), 1.0 / 3.0),
    weights=np.array([1.0]),
    degree=1,
)

_MIDPOINT = QuadratureRule(
    name="edge-midpoints",
    barycentric=np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    weights=np.full(3, 1.0 / 3.0),
    degree=2,
)

# six-point degree-4 rule: exact for the P1 cubic term |u_h|^2 u_h * basis
_SIX_POINT = QuadratureRule(
    name="six-point",
    barycentric=np.vstack(
        [_orbit3(0.108103018168070), _orbit3(0.816847572980459)]
    ),
    weights=np.concatenate(
        [np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]
    ),
    degree=4,
)

_W12 = np.concatenate(
    [
        np.full(3, 0.050844906370207),
        np.full(3, 0.116786275726379),
        np.full(6, 0.082851075618374),
    ]
)

_TWELVE_POINT = QuadratureRule(
    name="twelve-point",
    barycentric=np.vstack(
        [
            _orbit3(0.873821971016996),
            _orbit3(0.501426509658179),
            _orbit6(0.636502499121399, 0.310352451033785),
        ]
    ),
    weights=_W12 / _W12.sum(),  # published constants are truncated at 15 digits
    degree=6,
)

_RULES = (_CENTROID, _MIDPOINT, _SIX_POINT, _TWELVE_POINT)


def triangle_rule(degree: int) -> QuadratureRule:
    """Smallest shipped rule exact for polynomials of the given total degree."""
    for rule in _RULES:
        if rule.degree >= degree:
            return rule
    raise ValueError(f"no quadrature rule of exactness degree {degree}")


def reference_monomial_integral(a: int, b: int) -> float:
    """Exact value of the monomial x^a y^b over the reference triangle."""
    import math

    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
