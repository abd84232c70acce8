"""Synthetic time-course studies with known five-cluster truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Partition, TimeCourseMatrix, TimeGrid, ValidationError, spawn_rngs

STUDY1_INTERVALS = (1, 2, 3, 6)
STUDY2_INTERVALS = (1, 2, 4)
STUDY1_SPAN = 30
STUDY2_SPAN = 20

# Cluster sizes used for the short-interval scenarios are half the long ones.
FULL_SIZES = (50, 100, 200, 300, 400)
HALF_SIZES = (25, 50, 100, 150, 200)

TRANSITION = np.array([
    [0.8, 0.8, -0.8, -0.6],
    [0.0, 0.6, 0.4, 0.0],
    [-0.1, 0.0, 0.8, 0.4],
    [0.0, 0.0, 0.0, 0.2],
])
ORIENTATIONS = ("column", "row")


def f1(t):
    return np.sin((t + 0.5) / 4) + np.cos((t - 1) / 5)


def f2(t):
    return np.cos(t / 4)


def f3(t):
    return -f1(t)


def f4(t):
    return -f2(t)


SHAPES = (f1, f2, f3, f4)


def default_sizes(study: int, interval: int) -> tuple:
    if study == 1:
        return HALF_SIZES if interval in (1, 2) else FULL_SIZES
    return HALF_SIZES if interval == 1 else FULL_SIZES


def _check_sizes(sizes):
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 5 or min(sizes) < 1:
        raise ValidationError("cluster_sizes must be 5 positive integers")
    return sizes


@dataclass(frozen=True)
class Study1Config:
    interval: int = 3
    cluster_sizes: tuple = None
    noise_sd: float = 0.4
    seed: int = 0
    # Switches for noiseless checks; the study itself always uses the defaults.
    shift_halfwidth: float = 1.0
    amplitude_sd: float = 0.2

    def __post_init__(self):
        if self.interval not in STUDY1_INTERVALS:
            raise ValidationError(f"study 1 interval must be one of {STUDY1_INTERVALS}")
        sizes = default_sizes(1, self.interval) if self.cluster_sizes is None else self.cluster_sizes
        object.__setattr__(self, "cluster_sizes", _check_sizes(sizes))
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")


@dataclass(frozen=True)
class Study2Config:
    interval: int = 2
    cluster_sizes: tuple = None
    noise_sd: float = 0.4
    seed: int = 0
    orientation: str = "column"

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(f"orientation must be one of {ORIENTATIONS}")
        if self.interval not in STUDY2_INTERVALS:
            raise ValidationError(f"study 2 interval must be one of {STUDY2_INTERVALS}")
        sizes = default_sizes(2, self.interval) if self.cluster_sizes is None else self.cluster_sizes
        object.__setattr__(self, "cluster_sizes", _check_sizes(sizes))
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")


@dataclass(frozen=True)
class SimOutput:
    data: TimeCourseMatrix
    truth: Partition


def _truncated_amplitude(rng, sd):
    # N(1, sd^2) conditioned on a > 0, by redrawing
    while True:
        a = 1.0 + sd * rng.standard_normal()
        if a > 0:
            return a


def _labels_and_ids(sizes):
    labels = np.repeat(np.arange(5), sizes)
    ids = tuple(f"gene_{i + 1:04d}" for i in range(labels.size))
    return labels, ids


def simulate_study1(cfg: Study1Config) -> SimOutput:
    """Shifted, rescaled sinusoid clusters plus a cluster of flat noise genes on [0, 30]."""
    grid = TimeGrid.regular(0, STUDY1_SPAN, cfg.interval)
    t = grid.points
    labels, ids = _labels_and_ids(cfg.cluster_sizes)
    rngs = spawn_rngs(cfg.seed, labels.size, key=1)
    Y = np.empty((labels.size, t.size))
    for i, (k, rng) in enumerate(zip(labels, rngs)):
        if k < 4:
            a = _truncated_amplitude(rng, cfg.amplitude_sd) if cfg.amplitude_sd > 0 else 1.0
            delta = rng.uniform(-cfg.shift_halfwidth, cfg.shift_halfwidth, t.size)
            Y[i] = a * SHAPES[k](t + delta) + cfg.noise_sd * rng.standard_normal(t.size)
        else:
            c = rng.uniform(-1.0, 1.0)
            Y[i] = c + cfg.noise_sd * rng.standard_normal(t.size)
    return SimOutput(TimeCourseMatrix(grid, Y, ids), Partition(labels, 5))


def theta_path(n_steps: int = STUDY2_SPAN, orientation: str = "column") -> np.ndarray:
    """Columns theta_0..theta_n of the linear recursion theta_j = G theta_{j-1}.

    ``orientation="row"`` iterates the row-vector form theta_j' = theta_{j-1}' G
    instead, i.e. uses G transposed.
    """
    if orientation not in ORIENTATIONS:
        raise ValidationError(f"orientation must be one of {ORIENTATIONS}")
    G = TRANSITION if orientation == "column" else TRANSITION.T
    theta = np.empty((4, n_steps + 1))
    theta[:, 0] = (1.0, 0.0, 0.0, 0.0)
    for j in range(1, n_steps + 1):
        theta[:, j] = G @ theta[:, j - 1]
    return theta


def simulate_study2(cfg: Study2Config) -> SimOutput:
    """Rows of the state path as cluster means plus flat noise genes on [0, 20]."""
    grid = TimeGrid.regular(0, STUDY2_SPAN, cfg.interval)
    Theta = theta_path(orientation=cfg.orientation)[:, :: cfg.interval]
    labels, ids = _labels_and_ids(cfg.cluster_sizes)
    rngs = spawn_rngs(cfg.seed, labels.size, key=2)
    m = grid.m
    Y = np.empty((labels.size, m))
    for i, (k, rng) in enumerate(zip(labels, rngs)):
        if k < 4:
            Y[i] = Theta[k] + cfg.noise_sd * rng.standard_normal(m)
        else:
            c = rng.uniform(-0.5, 0.5)
            Y[i] = c + cfg.noise_sd * rng.standard_normal(m)
    return SimOutput(TimeCourseMatrix(grid, Y, ids), Partition(labels, 5))


def simulate(study: int, interval: int, cluster_sizes=None, seed: int = 0,
             noise_sd: float = 0.4, orientation: str = "column") -> SimOutput:
    if study == 1:
        return simulate_study1(Study1Config(interval, cluster_sizes, noise_sd, seed))
    if study == 2:
        return simulate_study2(Study2Config(interval, cluster_sizes, noise_sd, seed, orientation))
    raise ValidationError("study must be 1 or 2")
