"""Jitted kernels for the event-driven lattice simulation.

Shared by the single-step API and the batched simulation loop, so both
consume the random stream identically: one uniform for the waiting time
(inverse transform), one uniform for move selection.

Rates live in the leaves of a binary sum tree (leaf ``4*i + d`` holds the
rate of particle ``i`` in direction ``d``), giving O(log N) selection and
O(log N) per touched entry on update. A hop touches at most ten leaves:
the mover's four plus one direction of each particle adjacent to the
source or the destination.

Directions: 0 up (+row, toward the door row), 1 down, 2 left, 3 right.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .lattice import EMPTY

DR = (1, -1, 0, 0)
DC = (0, 0, -1, 1)
OPPOSITE = (1, 0, 3, 2)

KIND_HOP = 0
KIND_EXIT = 1

STATUS_CHUNK_FULL = 0
STATUS_TIME = 1
STATUS_EVACUATED = 2
STATUS_FROZEN = 3


@njit(cache=True, nogil=True, inline="always")
def move_rate(occ, prow, pcol, pspec, side, door_lo, door_hi, door_open, drift, unit, i, d):
    """Rate of particle i in direction d for the current occupancy."""
    r = prow[i]
    if r < 0:  # already exited
        return 0.0
    c = pcol[i]
    tr = r + DR[d]
    tc = c + DC[d]
    if tr > side:
        # crossing the top edge: an exit for actives standing on a door site
        if d == 0 and pspec[i] == 1 and door_open and door_lo <= c <= door_hi:
            return (1.0 + drift) * unit
        return 0.0
    if occ[tr, tc] != EMPTY:  # wall sentinel or another particle
        return 0.0
    if pspec[i] == 1:
        if d == 0:
            return (1.0 + drift) * unit
        if d == 1:
            return (1.0 - drift) * unit
        return unit
    return unit


@njit(cache=True, nogil=True, inline="always")
def tree_set(tree, n_leaves, leaf, value):
    idx = n_leaves + leaf
    tree[idx] = value
    idx >>= 1
    while idx >= 1:
        tree[idx] = tree[2 * idx] + tree[2 * idx + 1]
        idx >>= 1


@njit(cache=True, nogil=True, inline="always")
def tree_sample(tree, n_leaves, threshold):
    """Leaf index holding the cumulative position ``threshold``.

    Descends into a subtree only if it has positive mass, so rounding at
    the top (threshold == total) still lands on an admissible move.
    """
    node = 1
    while node < n_leaves:
        left = 2 * node
        if threshold < tree[left] or tree[left + 1] <= 0.0:
            node = left
        else:
            threshold -= tree[left]
            node = left + 1
    return node - n_leaves


@njit(cache=True, nogil=True, inline="always")
def refresh_particle(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, i):
    base = 4 * i
    for d in range(4):
        tree_set(
            tree,
            n_leaves,
            base + d,
            move_rate(occ, prow, pcol, pspec, side, door_lo, door_hi, door_open, drift, unit, i, d),
        )


@njit(cache=True, nogil=True, inline="always")
def refresh_watchers(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, r, c, exclude):
    """Re-rate, for every particle adjacent to site (r, c), the one move aimed at (r, c)."""
    for d in range(4):
        nr = r + DR[d]
        nc = c + DC[d]
        j = occ[nr, nc]
        if j >= 0 and j != exclude:
            od = OPPOSITE[d]
            tree_set(
                tree,
                n_leaves,
                4 * j + od,
                move_rate(occ, prow, pcol, pspec, side, door_lo, door_hi, door_open, drift, unit, j, od),
            )


@njit(cache=True, nogil=True)
def rebuild_tree(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit):
    """Recompute every leaf from the configuration, then all internal sums."""
    tree[:] = 0.0
    n = prow.shape[0]
    for i in range(n):
        base = 4 * i
        for d in range(4):
            tree[n_leaves + base + d] = move_rate(
                occ, prow, pcol, pspec, side, door_lo, door_hi, door_open, drift, unit, i, d
            )
    for idx in range(n_leaves - 1, 0, -1):
        tree[idx] = tree[2 * idx] + tree[2 * idx + 1]


@njit(cache=True, nogil=True)
def run_events(
    occ, prow, pcol, pspec,
    tree, n_leaves,
    side, door_lo, door_hi, door_open, drift, unit,
    t, t_max, stop_when_empty, n_active_present,
    rng,
    ev_t, ev_id, ev_kind, ev_fr, ev_fc, ev_tr, ev_tc,
):
    """Advance the chain until the buffers fill, t_max is hit, the last
    active leaves (when requested), or no move remains.

    Returns (events written, time, actives still present, status).
    """
    capacity = ev_t.shape[0]
    n = 0
    status = STATUS_CHUNK_FULL
    if stop_when_empty and n_active_present == 0:
        return 0, t, n_active_present, STATUS_EVACUATED
    while n < capacity:
        total = tree[1]
        if total <= 0.0:
            status = STATUS_FROZEN
            break
        tau = -np.log1p(-rng.random()) / total
        while tau <= 0.0:  # guard against a zero uniform
            tau = -np.log1p(-rng.random()) / total
        if t + tau > t_max:
            t = t_max
            status = STATUS_TIME
            break
        t = t + tau
        leaf = tree_sample(tree, n_leaves, rng.random() * total)
        i = leaf >> 2
        d = leaf & 3
        r = prow[i]
        c = pcol[i]
        tr = r + DR[d]
        tc = c + DC[d]
        ev_t[n] = t
        ev_id[n] = i
        ev_fr[n] = r
        ev_fc[n] = c
        if tr > side:
            ev_kind[n] = KIND_EXIT
            ev_tr[n] = -1
            ev_tc[n] = -1
            occ[r, c] = EMPTY
            prow[i] = -1
            pcol[i] = -1
            for dd in range(4):
                tree_set(tree, n_leaves, 4 * i + dd, 0.0)
            refresh_watchers(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, r, c, i)
            n_active_present -= 1
            n += 1
            if stop_when_empty and n_active_present == 0:
                status = STATUS_EVACUATED
                break
        else:
            ev_kind[n] = KIND_HOP
            ev_tr[n] = tr
            ev_tc[n] = tc
            occ[r, c] = EMPTY
            occ[tr, tc] = i
            prow[i] = tr
            pcol[i] = tc
            refresh_particle(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, i)
            refresh_watchers(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, r, c, i)
            refresh_watchers(occ, prow, pcol, pspec, tree, n_leaves, side, door_lo, door_hi, door_open, drift, unit, tr, tc, i)
            n += 1
    return n, t, n_active_present, status


@njit(cache=True, nogil=True)
def ou_path(v0, mu, inv_gamma, noise_scale, dt, z, values):
    """Euler-Maruyama recursion for the free mean-reverting process."""
    v = v0
    values[0] = v
    for k in range(z.shape[0]):
        v = v + (mu - v * inv_gamma) * dt + noise_scale * z[k]
        values[k + 1] = v


@njit(cache=True, nogil=True)
def reflected_ou_path(v0, mu, inv_gamma, noise_scale, dt, boundary, z, values, local_time):
    """Reflected Euler-Maruyama recursion in running-maximum form.

    Tracks the free accumulation y and the regulator phi; the reflected
    value is y + phi, pinned to the boundary exactly on binding steps.
    Equivalent to projecting each Euler proposal onto [boundary, inf), and
    arithmetic-identical to the discrete Skorokhod map of the accumulated
    increments, which keeps the complementarity condition exact in floats.
    """
    y = v0
    phi = 0.0
    v = v0
    values[0] = v0
    local_time[0] = 0.0
    for k in range(z.shape[0]):
        y = y + (mu - v * inv_gamma) * dt + noise_scale * z[k]
        deficit = boundary - y
        if deficit >= phi and deficit > 0.0:
            phi = deficit
            v = boundary
        else:
            v = y + phi
            if v < boundary:
                v = boundary
        values[k + 1] = v
        local_time[k + 1] = phi
