"""Square-lattice geometry and two-species exclusion configurations.

The domain is the grid {1..L} x {1..L} of sites (row, col), row L being the
top row. The exit door is a contiguous run of columns on the top row; every
other boundary edge is reflecting. Each site holds at most one particle:
``+1`` marks an active particle (the species that may leave through the
door), ``-1`` a passive one, ``0`` an empty site.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .seeding import make_generator

Site = "tuple[int, int]"

# occupancy-index grid sentinels (particle ids are >= 0)
EMPTY = -1
WALL = -2


class Species(Enum):
    """Particle species.

    Ion labels are display aliases for the membrane-potential reading of
    the same dynamics (sodium = active, chloride = passive); the mapping is
    bijective and carries no behavioural difference.
    """

    ACTIVE = 1
    PASSIVE = -1

    @property
    def letter(self) -> str:
        return "A" if self is Species.ACTIVE else "P"

    @property
    def ion(self) -> str:
        return "Na+" if self is Species.ACTIVE else "Cl-"

    @classmethod
    def from_value(cls, value: int) -> "Species":
        if value == 1:
            return cls.ACTIVE
        if value == -1:
            return cls.PASSIVE
        raise ValueError(f"no species with occupancy value {value}")


@dataclass(frozen=True)
class LatticeGeometry:
    """Lattice side length and door placement. Build with :func:`new_geometry`."""

    side: int
    door_width: int
    door_columns: range

    @property
    def door_row(self) -> int:
        return self.side

    @property
    def n_sites(self) -> int:
        return self.side * self.side

    @property
    def odd_side(self) -> bool:
        return self.side % 2 == 1

    def contains(self, site) -> bool:
        row, col = site
        return 1 <= row <= self.side and 1 <= col <= self.side

    def is_door(self, site) -> bool:
        row, col = site
        return row == self.side and col in self.door_columns

    def sites(self) -> Iterator[tuple[int, int]]:
        for row in range(1, self.side + 1):
            for col in range(1, self.side + 1):
                yield (row, col)


def new_geometry(side: int, door_width: int, *, require_odd: bool = False) -> LatticeGeometry:
    """Build an L x L geometry with a centred door of ``door_width`` sites.

    The door sits on the top row; when it cannot be centred exactly the
    extra margin goes to the left. ``side`` may be even unless
    ``require_odd`` is set (parity is visible via ``geometry.odd_side``).
    """
    if side < 1:
        raise ValueError(f"side length must be positive, got {side}")
    if require_odd and side % 2 == 0:
        raise ValueError(f"side length must be odd, got {side}")
    if not 1 <= door_width <= side:
        raise ValueError(f"door width must lie in [1, {side}], got {door_width}")
    left_margin = (side - door_width + 1) // 2
    columns = range(left_margin + 1, left_margin + door_width + 1)
    return LatticeGeometry(side=side, door_width=door_width, door_columns=columns)


def neighbors(geometry: LatticeGeometry, site) -> set:
    """All in-lattice sites at Manhattan distance 1 from ``site``."""
    if not geometry.contains(site):
        raise ValueError(f"site {site} lies outside the lattice")
    row, col = site
    out = set()
    for nr, nc in ((row + 1, col), (row - 1, col), (row, col - 1), (row, col + 1)):
        if 1 <= nr <= geometry.side and 1 <= nc <= geometry.side:
            out.add((nr, nc))
    return out


class Configuration:
    """Occupancy state of the lattice plus a particle registry.

    The occupancy field maps each site to -1 / 0 / +1; the registry keeps
    particle identity (stable integer ids) so per-particle exit times stay
    observable after the field alone has forgotten who is who. A
    configuration is owned by a single execution context at a time;
    replicas must each work on their own copy.
    """

    __slots__ = ("geometry", "_occ", "_row", "_col", "_species", "n_active", "n_passive")

    def __init__(self, geometry: LatticeGeometry):
        side = geometry.side
        self.geometry = geometry
        # padded frame: border cells are walls, interior indexed [row, col] 1-based
        self._occ = np.full((side + 2, side + 2), WALL, dtype=np.int32)
        self._occ[1 : side + 1, 1 : side + 1] = EMPTY
        self._row = np.empty(0, dtype=np.int32)
        self._col = np.empty(0, dtype=np.int32)
        self._species = np.empty(0, dtype=np.int8)
        self.n_active = 0
        self.n_passive = 0

    # -- construction ------------------------------------------------------

    def place(self, site, species: Species) -> int:
        """Add one particle on an empty site; returns its id."""
        row, col = site
        if not self.geometry.contains(site):
            raise ValueError(f"site {site} lies outside the lattice")
        if self._occ[row, col] != EMPTY:
            raise ValueError(f"site {site} is already occupied")
        pid = self._row.shape[0]
        self._row = np.append(self._row, np.int32(row))
        self._col = np.append(self._col, np.int32(col))
        self._species = np.append(self._species, np.int8(species.value))
        self._occ[row, col] = pid
        if species is Species.ACTIVE:
            self.n_active += 1
        else:
            self.n_passive += 1
        return pid

    def _adopt(self, row, col, species):
        """Bulk-install registry arrays (internal fast path)."""
        self._row = np.ascontiguousarray(row, dtype=np.int32)
        self._col = np.ascontiguousarray(col, dtype=np.int32)
        self._species = np.ascontiguousarray(species, dtype=np.int8)
        alive = self._row >= 0
        self._occ[self._row[alive], self._col[alive]] = np.arange(
            self._row.shape[0], dtype=np.int32
        )[alive]
        self.n_active = int(np.sum(self._species[alive] == 1))
        self.n_passive = int(np.sum(self._species[alive] == -1))

    # -- queries -----------------------------------------------------------

    @property
    def n_particles(self) -> int:
        return self.n_active + self.n_passive

    @property
    def n_registered(self) -> int:
        """Number of ids ever issued, including exited particles."""
        return self._row.shape[0]

    def eta(self, site) -> int:
        row, col = site
        if not self.geometry.contains(site):
            raise ValueError(f"site {site} lies outside the lattice")
        pid = self._occ[row, col]
        return 0 if pid == EMPTY else int(self._species[pid])

    def eta_grid(self) -> np.ndarray:
        """Occupancy field as an (L, L) int8 array, ``grid[row-1, col-1]``."""
        side = self.geometry.side
        interior = self._occ[1 : side + 1, 1 : side + 1]
        grid = np.zeros((side, side), dtype=np.int8)
        mask = interior >= 0
        grid[mask] = self._species[interior[mask]]
        return grid

    def occupant(self, site) -> int | None:
        row, col = site
        if not self.geometry.contains(site):
            raise ValueError(f"site {site} lies outside the lattice")
        pid = self._occ[row, col]
        return None if pid == EMPTY else int(pid)

    def site_of(self, pid: int) -> tuple[int, int] | None:
        """Current site of a particle, or None once it has exited."""
        if not 0 <= pid < self.n_registered:
            raise KeyError(pid)
        row = int(self._row[pid])
        return None if row < 0 else (row, int(self._col[pid]))

    def species_of(self, pid: int) -> Species:
        if not 0 <= pid < self.n_registered:
            raise KeyError(pid)
        return Species.from_value(int(self._species[pid]))

    def particle_ids(self) -> list:
        return [int(i) for i in np.nonzero(self._row >= 0)[0]]

    def registry(self) -> dict:
        """id -> (site, species) for every particle still on the lattice."""
        return {
            pid: (self.site_of(pid), self.species_of(pid)) for pid in self.particle_ids()
        }

    # -- mutation (used by the simulator and by event replay) ---------------

    def move_particle(self, pid: int, site) -> None:
        row, col = site
        old = self.site_of(pid)
        if old is None:
            raise KeyError(f"particle {pid} is no longer on the lattice")
        if self._occ[row, col] != EMPTY:
            raise ValueError(f"cannot move particle {pid} onto occupied site {site}")
        self._occ[old[0], old[1]] = EMPTY
        self._occ[row, col] = pid
        self._row[pid] = row
        self._col[pid] = col

    def remove_particle(self, pid: int) -> None:
        old = self.site_of(pid)
        if old is None:
            raise KeyError(f"particle {pid} is no longer on the lattice")
        self._occ[old[0], old[1]] = EMPTY
        self._row[pid] = -1
        self._col[pid] = -1
        if self._species[pid] == 1:
            self.n_active -= 1
        else:
            self.n_passive -= 1

    # -- plumbing ----------------------------------------------------------

    def copy(self) -> "Configuration":
        dup = Configuration.__new__(Configuration)
        dup.geometry = self.geometry
        dup._occ = self._occ.copy()
        dup._row = self._row.copy()
        dup._col = self._col.copy()
        dup._species = self._species.copy()
        dup.n_active = self.n_active
        dup.n_passive = self.n_passive
        return dup

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self._occ, other._occ)
            and np.array_equal(self._row, other._row)
            and np.array_equal(self._col, other._col)
            and np.array_equal(self._species, other._species)
        )

    def __repr__(self) -> str:
        return (
            f"Configuration(L={self.geometry.side}, n_active={self.n_active}, "
            f"n_passive={self.n_passive})"
        )


def random_configuration(geometry: LatticeGeometry, n_active: int, n_passive: int, rng) -> Configuration:
    """Place particles uniformly at random on distinct sites.

    Active particles get ids ``0 .. n_active-1``, passives follow. The
    layout is a deterministic function of the rng seed.
    """
    if n_active < 0 or n_passive < 0:
        raise ValueError("particle counts must be non-negative")
    total = n_active + n_passive
    if total > geometry.n_sites:
        raise ValueError(
            f"overfull lattice: {total} particles on {geometry.n_sites} sites"
        )
    gen = make_generator(rng)
    flat = gen.choice(geometry.n_sites, size=total, replace=False)
    config = Configuration(geometry)
    row = (flat // geometry.side + 1).astype(np.int32)
    col = (flat % geometry.side + 1).astype(np.int32)
    species = np.empty(total, dtype=np.int8)
    species[:n_active] = 1
    species[n_active:] = -1
    config._adopt(row, col, species)
    return config


def counts(config: Configuration) -> tuple:
    """(n_active, n_passive) recomputed from the occupancy field."""
    grid = config.eta_grid()
    return int(np.sum(grid == 1)), int(np.sum(grid == -1))


# -- snapshot text format ---------------------------------------------------

def format_snapshot(config: Configuration, t: float) -> str:
    """Render a configuration in the snapshot text format.

    One header line ``# t=<time> L=<L> omega=<door width>`` followed by L
    lines of L characters ('A' active, 'P' passive, '.' empty), top row
    (the door row) first.
    """
    geo = config.geometry
    grid = config.eta_grid()
    glyphs = {1: "A", -1: "P", 0: "."}
    lines = [f"# t={float(t)!r} L={geo.side} omega={geo.door_width}"]
    for row in range(geo.side, 0, -1):
        lines.append("".join(glyphs[int(v)] for v in grid[row - 1]))
    return "\n".join(lines) + "\n"


def write_snapshot(path, config: Configuration, t: float) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_snapshot(config, t))
