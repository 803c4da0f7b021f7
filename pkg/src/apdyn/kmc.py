"""Event-driven simulation of the two-species exclusion dynamics.

The state evolves as a continuous-time Markov chain: passive particles hop
at rate 1 to each empty nearest neighbour anywhere on the lattice, active
particles hop left/right at rate 1, up (toward the door row) at rate
``1 + drift`` and down at rate ``1 - drift``, and an active particle
standing on a door site exits at rate ``1 + drift`` through the edge its
blocked up-move would cross. All rates scale with ``rate_unit``. Each step
draws an exponential waiting time at the total rate and picks one move
with probability proportional to its rate; the move table is maintained
incrementally (at most ten entries change per event).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels as _k
from .lattice import Configuration, LatticeGeometry, Species, counts
from .seeding import make_generator, seed_of


class Direction(Enum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    EXIT = 4


class StopRule(Enum):
    AT_TIME = "at-time"
    ALL_ACTIVE_EXITED = "all-active-exited"


class EventKind(Enum):
    HOP = _k.KIND_HOP
    EXIT = _k.KIND_EXIT


class FrozenStateError(RuntimeError):
    """No admissible move remains."""


class InvariantViolation(AssertionError):
    """A runtime consistency check failed (exclusion, counts, or rate table)."""


@dataclass(frozen=True)
class KmcParams:
    """Dynamics parameters.

    drift must lie in [0, 1] so the downward rate stays non-negative.
    ``stop`` selects the termination rule; AT_TIME requires a finite
    ``t_max``. ``door_open=False`` turns exits off (useful for sampling
    the closed-room equilibrium). ``drift_axis`` is recorded for future
    variants; only the vertical drift toward the door row is implemented.
    """

    drift: float = 0.0
    rate_unit: float = 1.0
    t_max: float = math.inf
    stop: StopRule = StopRule.ALL_ACTIVE_EXITED
    door_open: bool = True
    drift_axis: str = "vertical"

    def __post_init__(self):
        if not 0.0 <= self.drift <= 1.0:
            raise ValueError(f"drift must lie in [0, 1], got {self.drift}")
        if self.rate_unit <= 0.0:
            raise ValueError("rate_unit must be positive")
        if self.t_max <= 0.0:
            raise ValueError("t_max must be positive")
        if self.stop is StopRule.AT_TIME and not math.isfinite(self.t_max):
            raise ValueError("stop rule AT_TIME needs a finite t_max")
        if self.drift_axis != "vertical":
            raise ValueError("only the vertical drift variant is implemented")

    def as_dict(self) -> dict:
        return {
            "drift": self.drift,
            "rate_unit": self.rate_unit,
            "t_max": self.t_max,
            "stop": self.stop.value,
            "door_open": self.door_open,
            "drift_axis": self.drift_axis,
        }


class MoveEntry(NamedTuple):
    particle: int
    direction: Direction
    rate: float


class Event(NamedTuple):
    time: float
    particle: int
    species: Species
    kind: EventKind
    source: tuple
    target: tuple | None  # None for exits


def _door_bounds(geometry: LatticeGeometry) -> tuple:
    cols = geometry.door_columns
    return cols.start, cols.stop - 1


class MoveTable:
    """Admissible moves of one configuration, kept in a binary sum tree.

    The table references the configuration's own arrays; applying an event
    through :func:`kmc_step` keeps both in sync. Entry ``(i, d)`` sits in
    leaf ``4*i + d`` of the tree, whose root is the total rate.
    """

    __slots__ = ("config", "params", "tree", "n_leaves")

    def __init__(self, config: Configuration, params: KmcParams):
        self.config = config
        self.params = params
        slots = max(1, 4 * config.n_registered)
        n_leaves = 1
        while n_leaves < slots:
            n_leaves *= 2
        self.n_leaves = n_leaves
        self.tree = np.zeros(2 * n_leaves, dtype=np.float64)
        lo, hi = _door_bounds(config.geometry)
        _k.rebuild_tree(
            config._occ, config._row, config._col, config._species,
            self.tree, n_leaves,
            config.geometry.side, lo, hi, params.door_open,
            params.drift, params.rate_unit,
        )

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def rate(self, particle: int, direction: Direction) -> float:
        if direction is Direction.EXIT:
            direction = Direction.UP
        return float(self.tree[self.n_leaves + 4 * particle + direction.value])

    def entries(self) -> list:
        """All moves with positive rate, exits labelled as such."""
        out = []
        config = self.config
        for pid in config.particle_ids():
            site = config.site_of(pid)
            exiting = (
                config.species_of(pid) is Species.ACTIVE
                and config.geometry.is_door(site)
                and self.params.door_open
            )
            for d in range(4):
                r = float(self.tree[self.n_leaves + 4 * pid + d])
                if r <= 0.0:
                    continue
                direction = Direction(d)
                if d == 0 and exiting:
                    direction = Direction.EXIT
                out.append(MoveEntry(pid, direction, r))
        return out

    def __len__(self) -> int:
        return len(self.entries())


def build_move_table(config: Configuration, params: KmcParams) -> MoveTable:
    return MoveTable(config, params)


def move_rates(
    config: Configuration,
    geometry: LatticeGeometry,
    params: KmcParams,
    particle: int,
) -> list:
    """Admissible (direction, rate) pairs of one particle, freshly computed."""
    if geometry != config.geometry:
        raise ValueError("geometry does not match the configuration")
    if config.site_of(particle) is None:
        raise KeyError(f"particle {particle} is not on the lattice")
    lo, hi = _door_bounds(geometry)
    site = config.site_of(particle)
    exiting = (
        config.species_of(particle) is Species.ACTIVE
        and geometry.is_door(site)
        and params.door_open
    )
    out = []
    for d in range(4):
        rate = _k.move_rate(
            config._occ, config._row, config._col, config._species,
            geometry.side, lo, hi, params.door_open,
            params.drift, params.rate_unit, particle, d,
        )
        if rate > 0.0:
            direction = Direction.EXIT if (d == 0 and exiting) else Direction(d)
            out.append((direction, float(rate)))
    return out


def total_rate(table: MoveTable) -> float:
    """Sum of all admissible rates; 0 signals a frozen state."""
    return table.total_rate


@dataclass
class EventLog:
    """Time-stamped record of one simulation run.

    ``full=False`` means only exit events were kept (hop records dropped to
    bound memory on large sweeps); replay-based observables then refuse to
    run. Event times are offsets from the run start, strictly increasing.
    """

    geometry: LatticeGeometry
    params: KmcParams
    seed: int | None
    initial_config: Configuration
    final_config: Configuration
    t_final: float
    termination: str
    full: bool
    n_events_total: int
    times: np.ndarray
    particles: np.ndarray
    species: np.ndarray
    kinds: np.ndarray
    from_rows: np.ndarray
    from_cols: np.ndarray
    to_rows: np.ndarray
    to_cols: np.ndarray
    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.times.shape[0]

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self.event(i)

    def event(self, i: int) -> Event:
        kind = EventKind(int(self.kinds[i]))
        target = None
        if kind is EventKind.HOP:
            target = (int(self.to_rows[i]), int(self.to_cols[i]))
        return Event(
            time=float(self.times[i]),
            particle=int(self.particles[i]),
            species=Species.from_value(int(self.species[i])),
            kind=kind,
            source=(int(self.from_rows[i]), int(self.from_cols[i])),
            target=target,
        )

    @property
    def exit_times(self) -> np.ndarray:
        return self.times[self.kinds == _k.KIND_EXIT]

    @property
    def exit_particles(self) -> np.ndarray:
        return self.particles[self.kinds == _k.KIND_EXIT]

    @property
    def n_exits(self) -> int:
        return int(np.sum(self.kinds == _k.KIND_EXIT))

    def to_csv(self, path) -> None:
        """Write events as ``t,particle_id,species,kind,from_row,from_col,to_row,to_col``."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("t,particle_id,species,kind,from_row,from_col,to_row,to_col\n")
            for i in range(len(self)):
                kind = "exit" if self.kinds[i] == _k.KIND_EXIT else "hop"
                letter = "A" if self.species[i] == 1 else "P"
                fh.write(
                    f"{self.times[i]!r},{self.particles[i]},{letter},{kind},"
                    f"{self.from_rows[i]},{self.from_cols[i]},"
                    f"{self.to_rows[i]},{self.to_cols[i]}\n"
                )

    def metadata(self) -> dict:
        geo = self.geometry
        return {
            "seed": self.seed,
            "params": self.params.as_dict(),
            "geometry": {
                "side": geo.side,
                "door_width": geo.door_width,
                "door_columns": [geo.door_columns.start, geo.door_columns.stop - 1],
                "odd_side": geo.odd_side,
            },
            "initial_counts": {
                "active": self.initial_config.n_active,
                "passive": self.initial_config.n_passive,
            },
            "termination": self.termination,
            "t_final": self.t_final,
            "n_events": self.n_events_total,
            "n_exits": self.n_exits,
            "record": "full" if self.full else "exits",
        }

    def write_metadata(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _unpack(config: Configuration, params: KmcParams):
    lo, hi = _door_bounds(config.geometry)
    return (
        config._occ, config._row, config._col, config._species,
        config.geometry.side, lo, hi, params.door_open,
        params.drift, params.rate_unit,
    )


def kmc_step(config: Configuration, table: MoveTable, rng) -> tuple:
    """Execute one event in place; returns (event, waiting time).

    The waiting time is exponential at the total rate and the move is
    selected with probability rate/total. Raises FrozenStateError when no
    move is admissible. Consumes the random stream exactly as the batched
    simulation loop does, two uniforms per event.
    """
    if table.config is not config:
        raise ValueError("move table was built for a different configuration")
    if table.total_rate <= 0.0:
        raise FrozenStateError("no admissible move: total rate is zero")
    gen = make_generator(rng)
    occ, row, col, spec, side, lo, hi, door_open, drift, unit = _unpack(config, table.params)
    buf_t = np.empty(1, dtype=np.float64)
    buf_id = np.empty(1, dtype=np.int32)
    buf_kind = np.empty(1, dtype=np.int8)
    buf_fr = np.empty(1, dtype=np.int16)
    buf_fc = np.empty(1, dtype=np.int16)
    buf_tr = np.empty(1, dtype=np.int16)
    buf_tc = np.empty(1, dtype=np.int16)
    n, t, _, status = _k.run_events(
        occ, row, col, spec, table.tree, table.n_leaves,
        side, lo, hi, door_open, drift, unit,
        0.0, math.inf, False, 0,
        gen,
        buf_t, buf_id, buf_kind, buf_fr, buf_fc, buf_tr, buf_tc,
    )
    if n != 1:
        raise FrozenStateError("no admissible move: total rate is zero")
    pid = int(buf_id[0])
    kind = EventKind(int(buf_kind[0]))
    if kind is EventKind.EXIT:
        config.n_active -= 1
    event = Event(
        time=float(buf_t[0]),
        particle=pid,
        species=Species.from_value(int(spec[pid])),
        kind=kind,
        source=(int(buf_fr[0]), int(buf_fc[0])),
        target=None if kind is EventKind.EXIT else (int(buf_tr[0]), int(buf_tc[0])),
    )
    return event, float(buf_t[0])


def check_invariants(
    config: Configuration,
    params: KmcParams,
    table: MoveTable | None = None,
    *,
    initial_active: int | None = None,
    initial_passive: int | None = None,
    n_exits: int | None = None,
) -> None:
    """Raise InvariantViolation on any exclusion / count / rate-table breach."""
    side = config.geometry.side
    interior = config._occ[1 : side + 1, 1 : side + 1]
    occupied = interior[interior >= 0]
    if occupied.size != np.unique(occupied).size:
        raise InvariantViolation("two registry entries share a site")
    alive = config._row >= 0
    if int(np.sum(alive)) != occupied.size:
        raise InvariantViolation("registry size disagrees with the occupancy field")
    rows = config._row[alive]
    cols = config._col[alive]
    ids = np.nonzero(alive)[0]
    if not np.array_equal(config._occ[rows, cols], ids):
        raise InvariantViolation("registry positions disagree with the occupancy field")
    n_a, n_p = counts(config)
    if (n_a, n_p) != (config.n_active, config.n_passive):
        raise InvariantViolation(
            f"recomputed counts {(n_a, n_p)} != running counts "
            f"{(config.n_active, config.n_passive)}"
        )
    if initial_active is not None and n_exits is not None:
        if n_a + n_exits != initial_active:
            raise InvariantViolation(
                f"conservation broken: {n_a} active + {n_exits} exits != {initial_active}"
            )
    if initial_passive is not None and n_p != initial_passive:
        raise InvariantViolation(f"passive count changed: {n_p} != {initial_passive}")
    if table is not None:
        rebuilt = MoveTable(config, params)
        if not np.array_equal(table.tree, rebuilt.tree):
            raise InvariantViolation("incremental move table differs from a rebuild")


def simulate(
    initial_config: Configuration,
    geometry: LatticeGeometry,
    params: KmcParams,
    rng,
    *,
    record: str = "full",
    snapshot_times=None,
    validate_every: int | None = None,
    chunk_size: int = 1 << 16,
) -> EventLog:
    """Run the chain from ``initial_config`` until the stop rule fires.

    The caller's configuration is left untouched. ``record="exits"`` keeps
    only exit events in the log (the run itself is unchanged).
    ``snapshot_times`` captures configuration copies at the given times;
    ``validate_every`` re-checks exclusion, conservation and the
    incremental-vs-rebuilt rate table every so many events, raising
    InvariantViolation on any breach.
    """
    if geometry != initial_config.geometry:
        raise ValueError("geometry does not match the configuration")
    if record not in ("full", "exits"):
        raise ValueError(f"record must be 'full' or 'exits', got {record!r}")
    gen = make_generator(rng)
    seed = seed_of(rng)
    state = initial_config.copy()
    pristine = initial_config.copy()
    table = MoveTable(state, params)

    snaps = sorted(float(t) for t in (snapshot_times or []))
    if snaps and snaps[0] < 0.0:
        raise ValueError("snapshot times must be non-negative")
    snapshots = []
    snap_idx = 0
    while snap_idx < len(snaps) and snaps[snap_idx] <= 0.0:
        snapshots.append((snaps[snap_idx], state.copy()))
        snap_idx += 1

    occ, row, col, spec, side, lo, hi, door_open, drift, unit = _unpack(state, params)
    stop_when_empty = params.stop is StopRule.ALL_ACTIVE_EXITED
    n_active_present = state.n_active
    initial_active = state.n_active
    initial_passive = state.n_passive

    buf_t = np.empty(chunk_size, dtype=np.float64)
    buf_id = np.empty(chunk_size, dtype=np.int32)
    buf_kind = np.empty(chunk_size, dtype=np.int8)
    buf_fr = np.empty(chunk_size, dtype=np.int16)
    buf_fc = np.empty(chunk_size, dtype=np.int16)
    buf_tr = np.empty(chunk_size, dtype=np.int16)
    buf_tc = np.empty(chunk_size, dtype=np.int16)

    parts_t, parts_id, parts_kind = [], [], []
    parts_fr, parts_fc, parts_tr, parts_tc = [], [], [], []

    t = 0.0
    n_total = 0
    n_exits = 0
    since_check = 0
    termination = None
    while True:
        cap = chunk_size
        if validate_every is not None:
            cap = min(cap, validate_every - since_check)
        seg_t_max = params.t_max
        if snap_idx < len(snaps):
            seg_t_max = min(seg_t_max, snaps[snap_idx])
        n, t, n_active_present, status = _k.run_events(
            occ, row, col, spec, table.tree, table.n_leaves,
            side, lo, hi, door_open, drift, unit,
            t, seg_t_max, stop_when_empty, n_active_present,
            gen,
            buf_t[:cap], buf_id[:cap], buf_kind[:cap],
            buf_fr[:cap], buf_fc[:cap], buf_tr[:cap], buf_tc[:cap],
        )
        if n:
            if record == "exits":
                keep = buf_kind[:n] == _k.KIND_EXIT
            else:
                keep = slice(None, n)
            parts_t.append(buf_t[:n][keep].copy())
            parts_id.append(buf_id[:n][keep].copy())
            parts_kind.append(buf_kind[:n][keep].copy())
            parts_fr.append(buf_fr[:n][keep].copy())
            parts_fc.append(buf_fc[:n][keep].copy())
            parts_tr.append(buf_tr[:n][keep].copy())
            parts_tc.append(buf_tc[:n][keep].copy())
            n_total += n
            n_exits += int(np.sum(buf_kind[:n] == _k.KIND_EXIT))
            since_check += n
        state.n_active = initial_active - n_exits

        if validate_every is not None and since_check >= validate_every:
            check_invariants(
                state, params, table,
                initial_active=initial_active, initial_passive=initial_passive,
                n_exits=n_exits,
            )
            since_check = 0

        if status == _k.STATUS_TIME and snap_idx < len(snaps) and t >= snaps[snap_idx] and snaps[snap_idx] < params.t_max:
            while snap_idx < len(snaps) and snaps[snap_idx] <= t:
                snapshots.append((snaps[snap_idx], state.copy()))
                snap_idx += 1
            continue
        if status == _k.STATUS_CHUNK_FULL:
            continue
        if status == _k.STATUS_TIME:
            termination = "completed"
        elif status == _k.STATUS_EVACUATED:
            termination = "evacuated"
        else:
            termination = "frozen"
        break

    # snapshot times past the end of activity see the final state
    while snap_idx < len(snaps):
        snapshots.append((snaps[snap_idx], state.copy()))
        snap_idx += 1

    if validate_every is not None and since_check > 0:
        check_invariants(
            state, params, table,
            initial_active=initial_active, initial_passive=initial_passive,
            n_exits=n_exits,
        )

    times = np.concatenate(parts_t) if parts_t else np.empty(0, dtype=np.float64)
    ids = np.concatenate(parts_id) if parts_id else np.empty(0, dtype=np.int32)
    kinds = np.concatenate(parts_kind) if parts_kind else np.empty(0, dtype=np.int8)
    return EventLog(
        geometry=geometry,
        params=params,
        seed=seed,
        initial_config=pristine,
        final_config=state,
        t_final=float(t),
        termination=termination,
        full=(record == "full"),
        n_events_total=n_total,
        times=times,
        particles=ids,
        species=pristine._species[ids] if ids.size else np.empty(0, dtype=np.int8),
        kinds=kinds,
        from_rows=np.concatenate(parts_fr) if parts_fr else np.empty(0, dtype=np.int16),
        from_cols=np.concatenate(parts_fc) if parts_fc else np.empty(0, dtype=np.int16),
        to_rows=np.concatenate(parts_tr) if parts_tr else np.empty(0, dtype=np.int16),
        to_cols=np.concatenate(parts_tc) if parts_tc else np.empty(0, dtype=np.int16),
        snapshots=snapshots,
    )
