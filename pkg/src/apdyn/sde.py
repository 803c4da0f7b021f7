"""One-dimensional reflected stochastic calculus.

The discrete Skorokhod map regulates a path at a lower boundary with the
running-infimum formula; Euler-Maruyama integrates the mean-reverting
(Ornstein-Uhlenbeck type) process dV = (mu - V/gamma) dt + sigma dW, with
or without a reflecting boundary. The reflected integrator accumulates
the regulator (local time) explicitly and keeps the discrete Skorokhod
conditions exact in floating point: values never dip below the boundary,
the local time only grows on steps that end exactly on the boundary, and
sum((V_k - r) * dL_k) is identically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .seeding import make_generator


@dataclass(frozen=True)
class OuParams:
    """Mean-reverting process parameters.

    ``mu`` is the drive level, ``gamma`` the reversion time scale (the
    long-run mean of the free process is mu * gamma and its stationary
    variance sigma^2 * gamma / 2), ``sigma`` the diffusion coefficient.
    ``boundary`` adds a reflecting level; the start value must then sit at
    or above it.
    """

    mu: float
    gamma: float
    sigma: float
    boundary: float | None = None
    v0: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.boundary is not None and self.v0 < self.boundary:
            raise ValueError(
                f"start value {self.v0} lies below the boundary {self.boundary}"
            )


@dataclass(frozen=True)
class SamplePath:
    """A trajectory on a uniform grid plus its cumulative local time."""

    dt: float
    values: np.ndarray
    local_time: np.ndarray
    boundary: float | None

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dt

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        """Write the path as ``k,t,V,L``."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("k,t,V,L\n")
            for k, (v, lt) in enumerate(zip(self.values, self.local_time)):
                fh.write(f"{k},{float(k * self.dt)!r},{float(v)!r},{float(lt)!r}\n")


def skorokhod_map(path, boundary: float):
    """Regulate a grid path at a lower boundary.

    Returns ``(x, phi)`` with ``x = y + phi``, ``x >= boundary``, ``phi``
    non-decreasing from zero and growing only while ``x`` sits on the
    boundary; explicitly ``phi_k = max(0, max_{j<=k}(boundary - y_j))``.
    On binding steps the reflected value is set to the boundary exactly,
    which keeps the complementarity sum identically zero in floats.
    """
    y = np.asarray(path, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("path must be a non-empty 1-d array")
    r = float(boundary)
    if y[0] < r:
        raise ValueError(f"path starts at {y[0]}, below the boundary {r}")
    deficit = np.maximum(r - y, 0.0)
    phi = np.maximum.accumulate(deficit)
    x = y + phi
    x[(deficit == phi) & (phi > 0.0)] = r
    np.maximum(x, r, out=x)  # one-ulp guard where y + phi rounds low
    return x, phi


def _draw_noise(rng, noise, n_steps: int) -> np.ndarray:
    if noise is not None:
        z = np.asarray(noise, dtype=np.float64)
        if z.shape != (n_steps,):
            raise ValueError(f"noise must have shape ({n_steps},), got {z.shape}")
        return z
    if rng is None:
        raise ValueError("pass an rng or pre-drawn noise")
    return make_generator(rng).standard_normal(n_steps)


def euler_maruyama_ou(params: OuParams, dt: float, n_steps: int, rng=None, *, noise=None) -> SamplePath:
    """Integrate the free process: V_{k+1} = V_k + (mu - V_k/gamma) dt + sigma sqrt(dt) Z_k.

    ``noise`` may supply the standard-normal increments directly (shape
    (n_steps,)), e.g. to couple runs across step sizes.
    """
    if params.boundary is not None:
        raise ValueError("params carry a boundary; use reflected_ou")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    z = _draw_noise(rng, noise, n_steps)
    values = np.empty(n_steps + 1, dtype=np.float64)
    _k.ou_path(params.v0, params.mu, 1.0 / params.gamma, params.sigma * math.sqrt(dt), dt, z, values)
    return SamplePath(dt=dt, values=values, local_time=np.zeros(n_steps + 1), boundary=None)


def reflected_ou(params: OuParams, dt: float, n_steps: int, rng=None, *, noise=None) -> SamplePath:
    """Integrate the reflected process on [boundary, inf).

    Each Euler proposal is projected onto the half line and the push is
    booked into the local time: proposals at or above the boundary pass
    through, proposals below end exactly on the boundary with a positive
    local-time increment. In the driftless case the output matches the
    Skorokhod map of the accumulated noise step for step, bit for bit.
    """
    if params.boundary is None:
        raise ValueError("params carry no boundary; use euler_maruyama_ou")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    z = _draw_noise(rng, noise, n_steps)
    values = np.empty(n_steps + 1, dtype=np.float64)
    local_time = np.empty(n_steps + 1, dtype=np.float64)
    _k.reflected_ou_path(
        params.v0, params.mu, 1.0 / params.gamma, params.sigma * math.sqrt(dt),
        dt, params.boundary, z, values, local_time,
    )
    return SamplePath(dt=dt, values=values, local_time=local_time, boundary=params.boundary)


def ou_stationary_moments(params: OuParams) -> tuple:
    """(mean, variance) of the free process in the long-time limit."""
    return params.mu * params.gamma, params.sigma**2 * params.gamma / 2.0


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-time statistics over an ensemble of paths."""

    dt: float
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray
    n: int

    def to_csv(self, path) -> None:
        """Write the summary as ``t,mean,var,min,max,n``."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("t,mean,var,min,max,n\n")
            for t, m, v, lo, hi in zip(self.times, self.mean, self.var, self.vmin, self.vmax):
                fh.write(f"{float(t)!r},{float(m)!r},{float(v)!r},{float(lo)!r},{float(hi)!r},{self.n}\n")


def ou_ensemble(params: OuParams, dt: float, n_steps: int, n_paths: int, rng, *, keep_paths: bool = False):
    """Simulate many paths at once (free or reflected, by params.boundary).

    Returns an EnsembleSummary, or (summary, paths) with the full
    (n_paths, n_steps + 1) value matrix when ``keep_paths`` is set. The
    ensemble stepper projects onto the boundary directly; use
    reflected_ou for per-path local-time accounting.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if n_paths < 1:
        raise ValueError("need at least one path")
    gen = make_generator(rng)
    inv_gamma = 1.0 / params.gamma
    scale = params.sigma * math.sqrt(dt)
    v = np.full(n_paths, params.v0, dtype=np.float64)
    mean = np.empty(n_steps + 1)
    var = np.empty(n_steps + 1)
    vmin = np.empty(n_steps + 1)
    vmax = np.empty(n_steps + 1)
    paths = np.empty((n_paths, n_steps + 1)) if keep_paths else None

    def record(k):
        mean[k] = v.mean()
        var[k] = v.var(ddof=1) if n_paths > 1 else 0.0
        vmin[k] = v.min()
        vmax[k] = v.max()
        if paths is not None:
            paths[:, k] = v

    record(0)
    for k in range(n_steps):
        v += (params.mu - v * inv_gamma) * dt + scale * gen.standard_normal(n_paths)
        if params.boundary is not None:
            np.maximum(v, params.boundary, out=v)
        record(k + 1)
    summary = EnsembleSummary(
        dt=dt, times=np.arange(n_steps + 1) * dt,
        mean=mean, var=var, vmin=vmin, vmax=vmax, n=n_paths,
    )
    return (summary, paths) if keep_paths else summary
