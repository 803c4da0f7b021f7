"""Measured quantities derived from event logs.

Currents (cumulative exits over elapsed time), per-particle residence
times, remaining-count curves, configuration snapshots by replay, and
across-replica aggregation. Everything here is a pure function of
immutable logs, so replicas can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .kmc import EventLog
from .lattice import Configuration


@dataclass(frozen=True)
class CurrentSeries:
    """Outgoing flux sampled on a time grid: exits in (0, t] divided by t."""

    times: np.ndarray
    values: np.ndarray
    species: str = "A"


@dataclass(frozen=True)
class ExitProfile:
    """Residence times of exited particles and the remaining-count curve."""

    residence_times: np.ndarray  # one entry per exit event, in exit order
    exit_particles: np.ndarray
    knot_times: np.ndarray  # 0 followed by the exit times
    remaining_counts: np.ndarray  # active particles still present after each knot
    initial_active: int
    evacuation_time: float | None


@dataclass(frozen=True)
class AggregateSeries:
    """Pointwise mean and standard error over replicas on a common grid."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n: int


def log_time_grid(t_min: float, t_max: float, points_per_decade: int = 32) -> np.ndarray:
    """Log-spaced sample times covering [t_min, t_max]."""
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    n = max(2, int(round(np.log10(t_max / t_min) * points_per_decade)) + 1)
    return np.geomspace(t_min, t_max, n)


def current(log: EventLog, sample_times) -> CurrentSeries:
    """Exit current of the log at each sample time."""
    t = np.asarray(sample_times, dtype=np.float64)
    if t.size == 0:
        raise ValueError("empty sample grid")
    if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
        raise ValueError("sample times must be positive and strictly increasing")
    exits = log.exit_times
    n_before = np.searchsorted(exits, t, side="right")
    return CurrentSeries(times=t, values=n_before / t)


def exit_profile(log: EventLog) -> ExitProfile:
    """Residence times and remaining-count series of the active species.

    Every particle is present from t=0, so the residence time of an exited
    particle equals its exit time.
    """
    exits = log.exit_times
    n0 = log.initial_config.n_active
    remaining = n0 - np.arange(1, exits.size + 1)
    evacuated = exits.size == n0 and n0 > 0
    return ExitProfile(
        residence_times=exits.copy(),
        exit_particles=log.exit_particles.copy(),
        knot_times=np.concatenate(([0.0], exits)),
        remaining_counts=np.concatenate(([n0], remaining)).astype(np.int64),
        initial_active=n0,
        evacuation_time=float(exits[-1]) if evacuated else None,
    )


def remaining_at(profile: ExitProfile, sample_times) -> np.ndarray:
    """Active particles still present at each sample time."""
    t = np.asarray(sample_times, dtype=np.float64)
    idx = np.searchsorted(profile.knot_times, t, side="right") - 1
    return profile.remaining_counts[idx]


def aggregate(series_list) -> AggregateSeries:
    """Pointwise mean and standard error of replica series on one grid."""
    if not series_list:
        raise ValueError("need at least one replica")
    grids = [np.asarray(s.times) for s in series_list]
    base = grids[0]
    for g in grids[1:]:
        if not np.array_equal(g, base):
            raise ValueError("replica sample grids differ")
    stack = np.vstack([np.asarray(s.values, dtype=np.float64) for s in series_list])
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    if n > 1:
        se = stack.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se = np.zeros_like(mean)
    return AggregateSeries(times=base.copy(), mean=mean, se=se, n=n)


def snapshot_series(log: EventLog, initial_config: Configuration, dump_times) -> list:
    """Configurations reconstructed by replaying the log up to each dump time."""
    if not log.full:
        raise ValueError("snapshot replay needs a full event record")
    dumps = [float(t) for t in dump_times]
    if any(t < 0.0 or t > log.t_final for t in dumps):
        raise ValueError(f"dump times must lie within [0, {log.t_final}]")
    order = np.argsort(dumps, kind="stable")
    state = initial_config.copy()
    out: list = [None] * len(dumps)
    cursor = 0
    for j in order:
        upto = int(np.searchsorted(log.times, dumps[j], side="right"))
        while cursor < upto:
            if log.kinds[cursor] == _k.KIND_EXIT:
                state.remove_particle(int(log.particles[cursor]))
            else:
                state.move_particle(
                    int(log.particles[cursor]),
                    (int(log.to_rows[cursor]), int(log.to_cols[cursor])),
                )
            cursor += 1
        out[j] = state.copy()
    return out


# -- CSV emitters ------------------------------------------------------------

def write_current_csv(path, agg: AggregateSeries) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("t,mean,se,n\n")
        for t, m, s in zip(agg.times, agg.mean, agg.se):
            fh.write(f"{float(t)!r},{float(m)!r},{float(s)!r},{agg.n}\n")


def write_exits_csv(path, profile: ExitProfile) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("particle_id,residence_time\n")
        for pid, rt in zip(profile.exit_particles, profile.residence_times):
            fh.write(f"{int(pid)},{float(rt)!r}\n")


def write_remaining_csv(path, profile: ExitProfile) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("t,count\n")
        for t, c in zip(profile.knot_times, profile.remaining_counts):
            fh.write(f"{float(t)!r},{int(c)}\n")
