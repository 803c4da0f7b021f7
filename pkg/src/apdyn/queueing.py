"""Finite-capacity multi-server queue and its diffusion-limit scaling.

``simulate_queue`` runs the birth-death chain exactly (births at the
arrival rate while below capacity, deaths at the service rate per busy
server); ``stationary_distribution`` gives the closed-form equilibrium.
The scaling harness builds centred, sqrt-intensity-rescaled counting
paths and their Skorokhod-regulated companions, whose terminal law
approaches a reflected Brownian marginal as the intensity grows;
``limit_report`` quantifies the approach with Kolmogorov-Smirnov
distances against that limit law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .sde import skorokhod_map
from .seeding import make_generator

ARRIVAL = 0
DEPARTURE = 1
BLOCKED = 2

_KIND_NAMES = {ARRIVAL: "arrival", DEPARTURE: "departure", BLOCKED: "blocked"}


@dataclass(frozen=True)
class QueueParams:
    """Arrival/service intensities, server count and system capacity."""

    arrival_rate: float
    service_rate: float
    servers: int
    capacity: int
    t_max: float

    def __post_init__(self):
        if self.arrival_rate <= 0.0 or self.service_rate <= 0.0:
            raise ValueError("arrival and service rates must be positive")
        if not 1 <= self.servers <= self.capacity:
            raise ValueError(
                f"need 1 <= servers <= capacity, got {self.servers}, {self.capacity}"
            )
        if self.t_max <= 0.0:
            raise ValueError("t_max must be positive")


@dataclass(frozen=True)
class QueueTrace:
    """Jump times, post-jump occupancy and event kinds of one run.

    Arrivals keep flowing at full capacity but are recorded as blocked
    and leave the occupancy unchanged.
    """

    params: QueueParams
    times: np.ndarray
    occupancy: np.ndarray
    kinds: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    def occupancy_fractions(self) -> np.ndarray:
        """Time-weighted occupancy distribution over {0..capacity}."""
        frac = np.zeros(self.params.capacity + 1)
        t_prev = 0.0
        n_prev = 0
        for t, n in zip(self.times, self.occupancy):
            frac[n_prev] += t - t_prev
            t_prev = t
            n_prev = int(n)
        frac[n_prev] += self.params.t_max - t_prev
        return frac / self.params.t_max

    def to_csv(self, path) -> None:
        """Write the trace as ``t,n,kind``."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("t,n,kind\n")
            for t, n, k in zip(self.times, self.occupancy, self.kinds):
                fh.write(f"{float(t)!r},{int(n)},{_KIND_NAMES[int(k)]}\n")


def simulate_queue(params: QueueParams, rng) -> QueueTrace:
    """Exact event-driven run of the birth-death chain, starting empty."""
    gen = make_generator(rng)
    lam = params.arrival_rate
    mu = params.service_rate
    servers = params.servers
    cap = params.capacity
    t = 0.0
    n = 0
    times, occupancy, kinds = [], [], []
    while True:
        rate = lam + mu * min(n, servers)
        tau = -math.log1p(-gen.random()) / rate
        if t + tau > params.t_max:
            break
        t += tau
        if gen.random() * rate < lam:
            if n < cap:
                n += 1
                kinds.append(ARRIVAL)
            else:
                kinds.append(BLOCKED)
        else:
            n -= 1
            kinds.append(DEPARTURE)
        times.append(t)
        occupancy.append(n)
    return QueueTrace(
        params=params,
        times=np.asarray(times, dtype=np.float64),
        occupancy=np.asarray(occupancy, dtype=np.int32),
        kinds=np.asarray(kinds, dtype=np.int8),
    )


def stationary_distribution(params: QueueParams) -> np.ndarray:
    """Equilibrium occupancy law: pi_n proportional to prod_k lam / (mu min(k, servers))."""
    n_states = params.capacity + 1
    log_w = np.zeros(n_states)
    for k in range(1, n_states):
        log_w[k] = log_w[k - 1] + math.log(params.arrival_rate) - math.log(
            params.service_rate * min(k, params.servers)
        )
    log_w -= log_w.max()
    w = np.exp(log_w)
    return w / w.sum()


@dataclass(frozen=True)
class ScaledPath:
    """A counting path with its intensity-scaled view.

    ``mode="clt"``: raw holds the counts, scaled is (raw - intensity*t) /
    sqrt(intensity). ``mode="skorokhod"``: raw holds the regulated
    centred path, scaled is raw / sqrt(intensity) and ``regulator`` holds
    the matching scaled regulator.
    """

    times: np.ndarray
    raw: np.ndarray
    intensity: float
    scaled: np.ndarray
    mode: str
    regulator: np.ndarray | None = None


def clt_scaled_arrivals(intensity: float, t_grid, rng) -> ScaledPath:
    """Poisson counting path at the given intensity, centred and rescaled."""
    if intensity <= 0.0:
        raise ValueError("intensity must be positive")
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t grid must be a non-empty 1-d array")
    if t[0] < 0.0 or np.any(np.diff(t) <= 0.0):
        raise ValueError("t grid must be non-negative and strictly increasing")
    gen = make_generator(rng)
    seg = np.diff(np.concatenate(([0.0], t)))
    counts = np.cumsum(gen.poisson(intensity * seg)).astype(np.float64)
    scaled = (counts - intensity * t) / math.sqrt(intensity)
    return ScaledPath(times=t, raw=counts, intensity=float(intensity), scaled=scaled, mode="clt")


def reflected_walk_scaled(intensity: float, t_grid, rng) -> ScaledPath:
    """Centred arrival path regulated at zero, with both members rescaled.

    The grid must start at 0 (the pre-limit path starts there, on the
    boundary). The unscaled pair satisfies the discrete Skorokhod
    conditions exactly, and dividing by sqrt(intensity) preserves them.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size == 0 or t[0] != 0.0:
        raise ValueError("t grid must start at 0")
    base = clt_scaled_arrivals(intensity, t, rng)
    prelimit = base.raw - intensity * t
    x, phi = skorokhod_map(prelimit, 0.0)
    root = math.sqrt(intensity)
    return ScaledPath(
        times=t,
        raw=x,
        intensity=float(intensity),
        scaled=x / root,
        mode="skorokhod",
        regulator=phi / root,
    )


def reflected_limit_cdf(t: float):
    """CDF of |Normal(0, t)|, the limit law of the reflected scaled value."""
    scale = math.sqrt(t)

    def cdf(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < 0.0, 0.0, special.erf(x / (scale * math.sqrt(2.0))))

    return cdf


@dataclass(frozen=True)
class LimitReport:
    """KS distance of the reflected scaled marginal to its limit, per intensity."""

    intensities: np.ndarray
    ks: np.ndarray
    t: float
    replicas: int
    trend_decreasing: bool

    def rows(self) -> list:
        return list(zip(self.intensities, self.ks))

    def to_csv(self, path) -> None:
        """Write the report as ``alpha,t,ks,replicas``."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("alpha,t,ks,replicas\n")
            for a, k in zip(self.intensities, self.ks):
                fh.write(f"{float(a)!r},{self.t!r},{float(k)!r},{self.replicas}\n")


def limit_report(intensities, t: float, replicas: int, rng, *, grid_points: int = 1024) -> LimitReport:
    """Tabulate the convergence toward the reflected limit law.

    For each intensity, draws the terminal value of the reflected scaled
    walk ``replicas`` times and measures the KS distance to |Normal(0, t)|.
    The trend flag reports whether the distance strictly decreases along
    increasing intensities.
    """
    alphas = sorted(float(a) for a in intensities)
    if len(alphas) < 2:
        raise ValueError("need at least two intensities for a trend")
    if len(set(alphas)) != len(alphas):
        raise ValueError("intensities must be distinct")
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    if t <= 0.0:
        raise ValueError("t must be positive")
    gen = make_generator(rng)
    grid = np.linspace(0.0, t, grid_points + 1)
    cdf = reflected_limit_cdf(t)
    ks = []
    for alpha in alphas:
        terminal = np.empty(replicas)
        for i in range(replicas):
            terminal[i] = reflected_walk_scaled(alpha, grid, gen).scaled[-1]
        ks.append(float(stats.kstest(terminal, cdf).statistic))
    ks_arr = np.asarray(ks)
    return LimitReport(
        intensities=np.asarray(alphas),
        ks=ks_arr,
        t=float(t),
        replicas=int(replicas),
        trend_decreasing=bool(np.all(np.diff(ks_arr) < 0.0)),
    )
