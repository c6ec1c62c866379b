"""Value types, seeded randomness and error classes shared by every module.

Point clouds are plain ``float64`` arrays of shape ``(n, d)``; :func:`as_cloud`
is the single validation gate. A :class:`Coupling` pairs two clouds row by row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

# Emitted in every experiment's metadata so golden fixtures can be traced to the stream.
RNG_INFO = {
    "bit_generator": "PCG64",
    "seeding": "numpy.random.SeedSequence",
    "normal_method": "ziggurat",
    "numpy_version": np.__version__,
}


class NumericalFailure(RuntimeError):
    """A computation produced non-finite values or could not meet its tolerance."""


class DivergenceError(NumericalFailure):
    """Training loss became non-finite or exceeded the divergence guard."""


class SolverError(NumericalFailure):
    """ODE integration failed (step rejection budget exhausted or non-finite state)."""


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64 via SeedSequence) for a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Derive ``count`` independent child generators deterministically."""
    return list(rng.spawn(count))


def standard_normal_batch(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return rng.standard_normal((n, d))


def as_cloud(x, name: str = "cloud") -> np.ndarray:
    """Validate and return ``x`` as a finite ``(n, d)`` float64 array.

    A 1-D input is read as a single point.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have shape (n, d) with n, d >= 1; got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"{what} produced non-finite values")
    return arr


@dataclass(frozen=True)
class Coupling:
    """Row-paired samples ``(left[i], right[i])`` of two distributions."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = as_cloud(self.left, "coupling.left")
        right = as_cloud(self.right, "coupling.right")
        if left.shape != right.shape:
            raise ValueError(f"coupling sides differ in shape: {left.shape} vs {right.shape}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def n(self) -> int:
        return self.left.shape[0]

    @property
    def d(self) -> int:
        return self.left.shape[1]

    def swapped(self) -> "Coupling":
        return Coupling(self.right, self.left)

    def subset(self, idx) -> "Coupling":
        return Coupling(self.left[idx], self.right[idx])

    def resample(self, n: int, rng: np.random.Generator) -> "Coupling":
        """Draw ``n`` pairs with replacement."""
        return self.subset(rng.integers(0, self.n, size=n))


def max_pairwise_distance(cloud) -> float:
    """Largest Euclidean distance between two rows; sizes the VE noise scale."""
    cloud = as_cloud(cloud)
    return float(kernels.pairwise_distances(cloud, cloud).max())
