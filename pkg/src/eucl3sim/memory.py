"""Optical depth to memory-performance conversions.

Small closed-form utilities: the forward-recall gradient-echo efficiency
bound eta = (1 - exp(-d))^2, its inverse, and Beer-Lambert absorption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class DepthBudget:
    """Absorption coefficient times length."""

    alpha_cm1: float
    length_cm: float

    def __post_init__(self):
        if self.alpha_cm1 < 0:
            raise ValueError("alpha must be non-negative")
        if self.length_cm <= 0:
            raise ValueError("length must be positive")

    @property
    def depth(self) -> float:
        return self.alpha_cm1 * self.length_cm


def gem_efficiency(d: float) -> float:
    """Forward-recall efficiency bound at optical depth d."""
    if d < 0:
        raise ValueError("optical depth must be non-negative")
    return (1.0 - math.exp(-d)) ** 2


def required_depth(eta: float) -> float:
    """Optical depth needed for efficiency eta (inverse of gem_efficiency)."""
    if not 0.0 <= eta < 1.0:
        raise ValueError("efficiency must lie in [0, 1)")
    return -math.log(1.0 - math.sqrt(eta))


def absorption_over_length(alpha_cm1: float, length_cm: float) -> float:
    """Fraction of light absorbed over the given path."""
    return 1.0 - math.exp(-DepthBudget(alpha_cm1, length_cm).depth)
