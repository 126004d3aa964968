"""Attractive/repulsive potential fields and Gaussian smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .field import ScalarField
from .gridmap import Grid, instance_distance_fields, obstacle_distance_field

DEFAULT_K_ATT = 1.0
DEFAULT_K_REP = 100.0
DEFAULT_GLOBAL_SCALE = 0.5
DEFAULT_SIGMA = 2.0
DEFAULT_DECAY_LENGTH = 1.0


@dataclass(frozen=True)
class PotentialConfig:
    k_att: float = DEFAULT_K_ATT
    k_rep: float = DEFAULT_K_REP
    global_scale: float = DEFAULT_GLOBAL_SCALE
    family_coefficients: Mapping[str, float] = field(default_factory=dict)
    sigma: float = DEFAULT_SIGMA
    kernel_radius: int | None = None
    quadratic_attraction: bool = False
    decay_length: float = DEFAULT_DECAY_LENGTH

    def __post_init__(self):
        if self.k_att < 0 or self.k_rep < 0:
            raise ValueError("k_att and k_rep must be non-negative")
        if not 0.0 <= self.global_scale <= 1.0:
            raise ValueError("global_scale must lie in [0, 1]")
        for fam, k in self.family_coefficients.items():
            if not 0.0 <= k <= 1.0:
                raise ValueError(f"coefficient for {fam!r} must lie in [0, 1], got {k}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.decay_length > 0:
            raise ValueError("decay_length must be positive")
        if self.kernel_radius is not None and self.kernel_radius < 1:
            raise ValueError("kernel_radius must be >= 1")

    @property
    def radius(self) -> int:
        """Kernel radius in cells; defaults to ceil(3 sigma)."""
        if self.kernel_radius is not None:
            return self.kernel_radius
        return max(1, math.ceil(3 * self.sigma))


def euclidean_distance(a, b) -> float:
    return math.sqrt((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2)


def attractive_field(grid: Grid, goal, k_att: float, quadratic: bool = False) -> ScalarField:
    """Goal attraction ``k_att * D / 2`` over the grid, D the center-to-goal distance.

    ``quadratic`` switches to ``k_att * D**2 / 2``.
    """
    cx, cy = grid.centers()
    d = np.sqrt((cx - goal[0]) ** 2 + (cy - goal[1]) ** 2)
    if quadratic:
        d = d * d
    return ScalarField(0.5 * k_att * d, grid.resolution)


def repulsive_field(
    grid: Grid,
    distance: ScalarField,
    k_rep: float,
    family_coefficients: Mapping[str, float] | None = None,
    global_scale: float = 1.0,
    instance_distances: list[np.ndarray] | None = None,
    decay_length: float = DEFAULT_DECAY_LENGTH,
) -> ScalarField:
    """Weighted sum of per-instance exponential repulsion.

    Each obstacle instance contributes ``k_family * k_rep * exp(-d / decay_length)`` with d its
    own nearest-cell distance in meters; families missing from
    ``family_coefficients`` weigh 1.0.
    """
    if distance.shape != (grid.rows, grid.cols):
        raise ValueError(f"distance field shape {distance.shape} does not match grid {(grid.rows, grid.cols)}")
    coeffs = family_coefficients or {}
    if instance_distances is None:
        instance_distances = instance_distance_fields(grid)
    total = np.zeros((grid.rows, grid.cols))
    for family, d in zip(grid.instance_families, instance_distances):
        k = coeffs.get(family, 1.0)
        if k == 0.0:
            continue
        total += k * k_rep * np.exp(-d / decay_length)
    return ScalarField(global_scale * total, grid.resolution)


def total_heuristic_field(repulsive: ScalarField, attractive: ScalarField) -> ScalarField:
    """Repulsion minus attraction, lifted by one constant so the minimum is >= 0."""
    if not repulsive.same_shape(attractive):
        raise ValueError(f"field shapes differ: {repulsive.shape} vs {attractive.shape}")
    diff = repulsive.values - attractive.values
    low = diff.min()
    if low < 0:
        diff = diff - low
    return ScalarField(diff, repulsive.resolution)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    off = np.arange(-radius, radius + 1, dtype=float)
    x, y = np.meshgrid(off, off)
    taps = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
    return taps / taps.sum()


def smooth(field: ScalarField, kernel: np.ndarray) -> ScalarField:
    """Convolve ``field`` with ``kernel``, replicating edge values past the border."""
    kernel = np.asarray(kernel, dtype=float)
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("kernel dimensions must be odd")
    ry, rx = kh // 2, kw // 2
    rows, cols = field.shape
    padded = np.pad(field.values, ((ry, ry), (rx, rx)), mode="edge")
    out = np.zeros((rows, cols))
    # convolution flips the kernel: output[r, c] += k[i, j] * in[r - (i - ry), c - (j - rx)]
    for i in range(kh):
        for j in range(kw):
            w = kernel[i, j]
            if w == 0.0:
                continue
            si = 2 * ry - i
            sj = 2 * rx - j
            out += w * padded[si:si + rows, sj:sj + cols]
    return ScalarField(out, field.resolution)


@dataclass(frozen=True, eq=False)
class PotentialFields:
    distance: ScalarField
    attractive: ScalarField
    repulsive: ScalarField
    total: ScalarField
    smoothed: ScalarField


def compute_fields(grid: Grid, goal, config: PotentialConfig, distance: ScalarField | None = None) -> PotentialFields:
    """Every field the planners and renderers need, for one configuration."""
    if distance is None:
        distance = obstacle_distance_field(grid)
    att = attractive_field(grid, goal, config.k_att, quadratic=config.quadratic_attraction)
    rep = repulsive_field(
        grid, distance, config.k_rep, config.family_coefficients, config.global_scale, decay_length=config.decay_length
    )
    total = total_heuristic_field(rep, att)
    smoothed = smooth(total, gaussian_kernel(config.sigma, config.radius))
    return PotentialFields(distance, att, rep, total, smoothed)
