"""Source and target distributions for the toy experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_cloud


def _vec(x, name):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite vector")
    return arr


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = _vec(self.mean, "mean")
        std = _vec(self.stddev, "stddev")
        if std.shape == (1,) and mean.shape[0] > 1:
            std = np.full_like(mean, std[0])
        if mean.shape != std.shape:
            raise ValueError("mean and stddev dimensions differ")
        if np.any(std <= 0):
            raise ValueError("stddev entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n, rng):
        return self.mean + self.stddev * rng.standard_normal((n, self.dim))

    def mean_and_cov(self):
        return self.mean.copy(), np.diag(self.stddev**2)


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = _vec(self.weights, "weights")
        comps = tuple(self.components)
        if len(comps) != w.shape[0] or not comps:
            raise ValueError("need one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("mixture components differ in dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @classmethod
    def equal(cls, means, stddev):
        """Equal-weight mixture of isotropic components at ``means``."""
        means = as_cloud(means, "means")
        k = means.shape[0]
        return cls(np.full(k, 1.0 / k), tuple(DiagonalGaussian(mu, stddev) for mu in means))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @property
    def stddevs(self) -> np.ndarray:
        return np.stack([c.stddev for c in self.components])

    def sample(self, n, rng):
        # inverse CDF over cumulative weights, then one normal block for all rows
        u = rng.random(n)
        k = np.searchsorted(np.cumsum(self.weights), u, side="right")
        k = np.minimum(k, len(self.components) - 1)
        eps = rng.standard_normal((n, self.dim))
        return self.means[k] + self.stddevs[k] * eps

    def mean_and_cov(self):
        mu = self.weights @ self.means
        second = sum(
            w * (np.diag(c.stddev**2) + np.outer(c.mean, c.mean))
            for w, c in zip(self.weights, self.components)
        )
        return mu, second - np.outer(mu, mu)


@dataclass(frozen=True)
class Empirical:
    cloud: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cloud", as_cloud(self.cloud, "empirical cloud"))

    @property
    def dim(self) -> int:
        return self.cloud.shape[1]

    def sample(self, n, rng):
        return self.cloud[rng.integers(0, self.cloud.shape[0], size=n)]

    def mean_and_cov(self):
        mu = self.cloud.mean(axis=0)
        centred = self.cloud - mu
        return mu, centred.T @ centred / self.cloud.shape[0]


@dataclass(frozen=True)
class Uniform:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("Uniform needs lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def sample(self, n, rng):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def mean_and_cov(self):
        return 0.5 * (self.lo + self.hi), np.diag((self.hi - self.lo) ** 2 / 12.0)


DistributionSpec = DiagonalGaussian | GaussianMixture | Empirical | Uniform


def sample(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return as_cloud(spec.sample(n, rng), "sample")


def mean_and_cov(spec: DistributionSpec):
    return spec.mean_and_cov()


def smooth_source(cloud, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add isotropic Gaussian noise of scale ``sigma`` to every row.

    Gives a degenerate source (e.g. repeated points) a density so that the
    conditional velocity field is well defined.
    """
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    cloud = as_cloud(cloud)
    return cloud + sigma * rng.standard_normal(cloud.shape)


def from_config(cfg: dict) -> DistributionSpec:
    """Build a distribution from a parsed config mapping.

    Recognised ``kind`` values: ``gaussian``, ``mixture``, ``uniform``,
    ``empirical``.
    """
    kind = cfg.get("kind")
    if kind == "gaussian":
        return DiagonalGaussian(cfg["mean"], cfg.get("stddev", 1.0))
    if kind == "mixture":
        means = as_cloud(cfg["means"], "mixture means")
        k = means.shape[0]
        weights = np.asarray(cfg.get("weights", [1.0 / k] * k), dtype=float)
        stds = cfg.get("stddev", 1.0)
        stds = [stds] * k if np.ndim(stds) == 0 else stds
        return GaussianMixture(weights, tuple(DiagonalGaussian(mu, s) for mu, s in zip(means, stds)))
    if kind == "uniform":
        return Uniform(cfg["lo"], cfg["hi"])
    if kind == "empirical":
        return Empirical(cfg["points"])
    raise ValueError(f"unknown distribution kind {kind!r}")


def to_config(spec: DistributionSpec) -> dict:
    if isinstance(spec, DiagonalGaussian):
        return {"kind": "gaussian", "mean": spec.mean.tolist(), "stddev": spec.stddev.tolist()}
    if isinstance(spec, GaussianMixture):
        return {
            "kind": "mixture",
            "weights": spec.weights.tolist(),
            "means": spec.means.tolist(),
            "stddev": spec.stddevs.tolist(),
        }
    if isinstance(spec, Uniform):
        return {"kind": "uniform", "lo": spec.lo.tolist(), "hi": spec.hi.tolist()}
    return {"kind": "empirical", "points": spec.cloud.tolist()}
