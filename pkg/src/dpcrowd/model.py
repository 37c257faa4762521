"""Latent process, observation, and user-partition models.

The quantity being estimated is a d-dimensional statistic r(t) over the whole
user population, evolving linearly with Gaussian process noise. Each server
observes only its own user share, so its raw aggregate is a scaled, noisy
view of r(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProcessModel",
    "TrueState",
    "ObservationModel",
    "StreamPrefix",
    "step_process",
    "partition_users",
    "observe",
]


def as_transition(transition, d: int) -> np.ndarray:
    """Coerce a scalar or (d, d) array-like into a validated transition matrix."""
    a = np.asarray(transition, dtype=float)
    if a.ndim == 0:
        a = np.eye(d) * float(a)
    if a.shape != (d, d):
        raise ValueError(f"transition must be scalar or ({d}, {d}), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("transition matrix must be finite")
    return a


def as_noise_diag(noise_var, d: int) -> np.ndarray:
    """Coerce a scalar or length-d array-like into a per-dimension variance vector."""
    q = np.asarray(noise_var, dtype=float)
    if q.ndim == 0:
        q = np.full(d, float(q))
    if q.shape != (d,):
        raise ValueError(f"noise_var must be scalar or length {d}, got shape {q.shape}")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("process noise variances must be finite and non-negative")
    return q


@dataclass(frozen=True)
class ProcessModel:
    """Linear-Gaussian dynamics: r(t+1) = transition @ r(t) + noise.

    noise_var holds the diagonal of the (diagonal) process-noise covariance.
    """

    transition: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self) -> None:
        d = self.d
        object.__setattr__(self, "transition", as_transition(self.transition, d))
        object.__setattr__(self, "noise_var", as_noise_diag(self.noise_var, d))

    @property
    def d(self) -> int:
        a = np.asarray(self.transition, dtype=float)
        if a.ndim == 0:
            q = np.asarray(self.noise_var, dtype=float)
            return 1 if q.ndim == 0 else q.shape[0]
        return a.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.transition == np.diag(np.diagonal(self.transition))))


@dataclass(frozen=True)
class TrueState:
    """The latent statistic at one timestamp."""

    t: int
    value: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.value, dtype=float)
        if v.ndim != 1:
            raise ValueError("state value must be a 1-D vector")
        object.__setattr__(self, "value", v)


def step_process(model: ProcessModel, state: TrueState, rng: np.random.Generator) -> TrueState:
    """Advance the latent statistic one timestamp."""
    if state.value.shape != (model.d,):
        raise ValueError(
            f"state dimension {state.value.shape} does not match model dimension {model.d}"
        )
    noise = rng.normal(0.0, np.sqrt(model.noise_var))
    return TrueState(t=state.t + 1, value=model.transition @ state.value + noise)


def partition_users(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Assign n users to m servers uniformly at random; returns group sizes.

    Sizes are multinomial(n, 1/m each), so they sum to n exactly.
    """
    if n < 1:
        raise ValueError(f"need at least one user, got n={n}")
    if m < 1:
        raise ValueError(f"need at least one server, got m={m}")
    return rng.multinomial(n, np.full(m, 1.0 / m))


@dataclass(frozen=True)
class ObservationModel:
    """Per-server observation coefficients for one timestamp.

    coefficients[i] = |G_i| / n. The exact invariant lives at the integer
    level (group sizes sum to n); the float coefficients sum to 1 only up to
    rounding of the m divisions.
    """

    n: int
    group_sizes: np.ndarray

    def __post_init__(self) -> None:
        sizes = np.asarray(self.group_sizes, dtype=np.int64)
        if sizes.ndim != 1 or sizes.shape[0] < 1:
            raise ValueError("group_sizes must be a non-empty 1-D integer vector")
        if np.any(sizes < 0):
            raise ValueError("group sizes must be non-negative")
        if int(sizes.sum()) != self.n:
            raise ValueError(f"group sizes sum to {int(sizes.sum())}, expected n={self.n}")
        object.__setattr__(self, "group_sizes", sizes)
        coeff = sizes / float(self.n)
        if abs(math.fsum(coeff.tolist()) - 1.0) > 1e-12:
            raise ValueError("observation coefficients must sum to 1")
        object.__setattr__(self, "_coefficients", coeff)

    @property
    def m(self) -> int:
        return self.group_sizes.shape[0]

    @property
    def coefficients(self) -> np.ndarray:
        return self._coefficients  # type: ignore[attr-defined]


def observe(
    coefficient: float,
    value: np.ndarray,
    noise_var: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """One server's raw aggregate: coefficient * r(t) plus sensing noise.

    Sensing noise is N(0, coefficient^2 * noise_var) per dimension, so an
    empty server (coefficient 0) observes exactly zero.
    """
    if not 0.0 <= coefficient <= 1.0:
        raise ValueError(f"observation coefficient must lie in [0, 1], got {coefficient}")
    value = np.asarray(value, dtype=float)
    q = np.asarray(noise_var, dtype=float)
    noise = rng.normal(0.0, coefficient * np.sqrt(q))
    return coefficient * value + noise


@dataclass(frozen=True)
class StreamPrefix:
    """A finite run of true statistics, one row per timestamp."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("stream values must be a (T, d) array with T, d >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("stream values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def timestamps(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]
