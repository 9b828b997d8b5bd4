"""Numerical toolkit for smooth group actions on the circle and the interval:
Denjoy-type gap constructions, urn random walks, distortion budgets, spring
configurations and stationary measures."""

__version__ = "0.1.0"
