"""Stochastic gradient descent with momentum for combining-matrix design.

Each iteration draws a fresh batch of directions, takes a heavy-ball step
against the analytic batch gradient, and renormalizes the matrix columns
to unit length.  Runs are fully determined by the configured seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .array_model import ArrayGeometry, Direction, steering_batch
from .scf_objective import AngleBatch, CombiningMatrix, _require_compatible, batch_cost

__all__ = [
    "OptimizerConfig",
    "OptimizerState",
    "DesignTrace",
    "gradient",
    "sample_batch",
    "initial_state",
    "step",
    "design",
    "random_gaussian_phi",
]


def _check_range(name: str, bounds) -> None:
    lo, hi = bounds
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise ValueError(f"{name} must be a finite (low, high) pair with low <= high")


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters and direction-sampling law for one design run.

    Directions are drawn i.i.d. uniform on ``azimuth_range x elevation_range``
    (elevation as polar angle).  A degenerate range pins that angle to a
    single value.
    """

    iterations: int = 5000
    batch_size: int = 250
    step_size: float = 1e-2
    drag: float = 0.1
    azimuth_range: tuple = (0.0, 2.0 * math.pi)
    elevation_range: tuple = (math.pi / 4.0, 3.0 * math.pi / 4.0)
    seed: int = 0
    renormalize_every: int = 1
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must not be negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not (math.isfinite(self.step_size) and self.step_size > 0.0):
            raise ValueError("step_size must be positive")
        if not (0.0 <= self.drag < 1.0):
            raise ValueError("drag must lie in [0, 1)")
        _check_range("azimuth_range", self.azimuth_range)
        _check_range("elevation_range", self.elevation_range)
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.renormalize_every < 1 or self.record_every < 1:
            raise ValueError("renormalize_every and record_every must be at least 1")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "step_size": self.step_size,
            "drag": self.drag,
            "azimuth_range": list(self.azimuth_range),
            "elevation_range": list(self.elevation_range),
            "seed": self.seed,
            "renormalize_every": self.renormalize_every,
            "record_every": self.record_every,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(
            iterations=int(data["iterations"]),
            batch_size=int(data["batch_size"]),
            step_size=float(data["step_size"]),
            drag=float(data["drag"]),
            azimuth_range=tuple(data["azimuth_range"]),
            elevation_range=tuple(data["elevation_range"]),
            seed=int(data["seed"]),
            renormalize_every=int(data["renormalize_every"]),
            record_every=int(data["record_every"]),
        )


@dataclass
class OptimizerState:
    """Mutable snapshot of a running design: weights, velocity, RNG."""

    phi: CombiningMatrix
    velocity: np.ndarray
    iteration: int
    rng: np.random.Generator


@dataclass
class DesignTrace:
    """Outcome of a design run: recorded costs and the final matrix."""

    costs: list
    final_phi: CombiningMatrix
    channels: int
    config: OptimizerConfig

    def __post_init__(self) -> None:
        iterations = [i for i, _ in self.costs]
        if any(b <= a for a, b in zip(iterations, iterations[1:])):
            raise ValueError("recorded iterations must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "channels": self.channels,
            "config": self.config.to_dict(),
            "costs": [[int(i), float(c)] for i, c in self.costs],
            "phi": self.final_phi.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DesignTrace":
        return cls(
            costs=[(int(i), float(c)) for i, c in data["costs"]],
            final_phi=CombiningMatrix.from_dict(data["phi"]),
            channels=int(data["channels"]),
            config=OptimizerConfig.from_dict(data["config"]),
        )


def gradient(
    geometry: ArrayGeometry,
    phi: CombiningMatrix,
    batch: AngleBatch,
    normalized: bool = True,
) -> np.ndarray:
    """Gradient of one batch's squared-error cost with respect to the weights.

    Convention: the real part holds d/dRe and the imaginary part d/dIm of
    the (real) cost, i.e. grad = 4 Phi P (G - I) P with P = A A^H the batch
    steering outer product and G the Gramian of Phi.  With ``normalized``
    the result is divided by L^2, matching ``batch_cost`` on that batch;
    with ``normalized=False`` it is the gradient of the raw squared
    Frobenius error.
    """
    _require_compatible(geometry, phi)
    a = steering_batch(geometry, batch.dirs)
    p = a @ a.conj().T
    gap = phi.gramian() - np.eye(geometry.element_count)
    grad = 4.0 * (phi.entries @ (p @ gap @ p))
    if normalized:
        grad = grad / batch.size**2
    return grad


def sample_batch(config: OptimizerConfig, rng: np.random.Generator, index: int = 0) -> AngleBatch:
    """Draw one batch of directions, uniform on the configured rectangle.

    Consumes the generator deterministically: all azimuths first, then all
    elevations.
    """
    azimuth = rng.uniform(config.azimuth_range[0], config.azimuth_range[1], config.batch_size)
    elevation = rng.uniform(
        config.elevation_range[0], config.elevation_range[1], config.batch_size
    )
    dirs = tuple(Direction(float(a), float(e)) for a, e in zip(azimuth, elevation))
    return AngleBatch(dirs, batch_index=index)


def random_gaussian_phi(channels: int, elements: int, seed) -> CombiningMatrix:
    """Column-normalized draw from the circular complex Gaussian ensemble.

    ``seed`` may be an integer or an already-seeded numpy Generator.
    """
    if channels > elements:
        raise ValueError("cannot have more channels than elements")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    re = rng.standard_normal((channels, elements))
    im = rng.standard_normal((channels, elements))
    return CombiningMatrix((re + 1j * im) / math.sqrt(2.0)).normalize()


def initial_state(geometry: ArrayGeometry, channels: int, config: OptimizerConfig) -> OptimizerState:
    """Seeded starting point: normalized Gaussian weights, zero velocity."""
    rng = np.random.default_rng(config.seed)
    phi = random_gaussian_phi(channels, geometry.element_count, rng)
    return OptimizerState(phi, np.zeros_like(phi.entries), 0, rng)


def step(
    geometry: ArrayGeometry,
    state: OptimizerState,
    config: OptimizerConfig,
    batch: AngleBatch | None = None,
) -> OptimizerState:
    """Advance one momentum iteration.

    Samples a fresh batch from the state's generator unless one is given,
    updates v <- drag*v - step_size*gradient, moves phi by v, and
    renormalizes columns on the configured cadence (velocity is left
    untouched by renormalization).
    """
    if state.iteration >= config.iterations:
        raise ValueError("optimizer state is already finished")
    if batch is None:
        batch = sample_batch(config, state.rng, index=state.iteration)
    grad = gradient(geometry, state.phi, batch)
    velocity = config.drag * state.velocity - config.step_size * grad
    phi = CombiningMatrix(state.phi.entries + velocity)
    if state.iteration % config.renormalize_every == 0:
        phi = phi.normalize()
    return OptimizerState(phi, velocity, state.iteration + 1, state.rng)


def design(geometry: ArrayGeometry, channels: int, config: OptimizerConfig) -> DesignTrace:
    """Run the full seeded design loop and return its trace.

    Costs are recorded every ``record_every`` iterations, each measured on
    the freshly sampled batch before the update that uses it.  The returned
    matrix is always column-normalized.
    """
    if channels > geometry.element_count:
        raise ValueError("cannot have more channels than elements")
    state = initial_state(geometry, channels, config)
    costs = []
    for i in range(config.iterations):
        batch = sample_batch(config, state.rng, index=i)
        if i % config.record_every == 0:
            costs.append((i, batch_cost(geometry, state.phi, [batch])))
        state = step(geometry, state, config, batch=batch)
    phi = state.phi
    last = config.iterations - 1
    if config.iterations > 0 and last % config.renormalize_every != 0:
        phi = phi.normalize()
    return DesignTrace(costs=costs, final_phi=phi, channels=channels, config=config)
