"""Event-driven propagation of the finite hard-sphere system.

Exact ballistic flight between events, exact elastic collision laws at pair
contacts (center distance sigma) and wall contacts (clearance sigma/2).
The numba backend schedules events on a binary min-heap with lazy
invalidation via per-particle collision stamps; the numpy backend rescans a
candidate-time matrix per event.  Both share the same contact arithmetic, so
they produce the same event sequences away from exact time ties.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._compat import USE_NUMBA, njit
from .geometry import DomainSpec, NBodyState

# Event kinds in logs and heaps.
KIND_WALL = 0
KIND_PAIR = 1

# Relative closing speed below this multiple of the thermal speed is treated
# as a grazing contact and not scheduled (it would transfer ~0 energy and
# invite division-by-near-zero in the post-collision separation).
GRAZE_TOL = 1e-12

# Post-collision separation nudge, in units of sigma.
NUDGE = 1e-12


@dataclass
class CollisionEvent:
    """One applied collision: wall (j < 0) or pair."""

    time: float
    kind: str  # "wall" | "pair"
    i: int
    j: int  # -1 for wall events
    normal: np.ndarray  # unit vector; inward wall normal n1, or n12

    def as_row(self):
        return (self.time, self.kind, self.i, self.j, *self.normal.tolist())


@dataclass
class Trajectory:
    """Initial state, applied event log, and current state of one replica."""

    initial: NBodyState
    domain: DomainSpec
    current: NBodyState = None  # type: ignore[assignment]
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.current is None:
            self.current = self.initial.copy()

    @property
    def n_events(self) -> int:
        return len(self.events)

    def kinetic_energy(self) -> float:
        v = self.current.velocities
        return 0.5 * float(np.sum(v * v))


def predict_pair_collision(state: NBodyState, i: int, j: int, sigma: float, v_thermal: float = 0.0):
    """Earliest contact time of pair (i, j) after state.time, or None.

    The contact-normal closing speed equals sqrt(discriminant)/sigma, so the
    grazing skip is applied at prediction time.
    """
    rij = state.positions[i] - state.positions[j]
    vij = state.velocities[i] - state.velocities[j]
    b = float(rij @ vij)
    if b >= 0.0:
        return None
    a = float(vij @ vij)
    c = float(rij @ rij) - sigma * sigma
    disc = b * b - a * c
    if disc <= 0.0:
        return None
    root = np.sqrt(disc)
    if root <= sigma * GRAZE_TOL * v_thermal:
        return None
    dt = (-b - root) / a
    if dt <= 0.0:
        return None
    return state.time + dt


def predict_wall_collision(state: NBodyState, i: int, domain: DomainSpec):
    """Earliest wall-contact time of particle i and the inward wall normal."""
    if domain.periodic:
        return None
    half = 0.5 * domain.sigma
    best_dt = np.inf
    best_axis = -1
    best_side = 0
    r = state.positions[i]
    v = state.velocities[i]
    for ax in range(3):
        if v[ax] > 0.0:
            dt = (domain.hi[ax] - half - r[ax]) / v[ax]
            side = 1
        elif v[ax] < 0.0:
            dt = (domain.lo[ax] + half - r[ax]) / v[ax]
            side = 0
        else:
            continue
        if 0.0 < dt < best_dt:
            best_dt = dt
            best_axis = ax
            best_side = side
    if best_axis < 0:
        return None
    normal = np.zeros(3)
    normal[best_axis] = 1.0 if best_side == 0 else -1.0
    return state.time + best_dt, normal


def apply_binary_collision(v1: np.ndarray, v2: np.ndarray, n12: np.ndarray):
    """Elastic smooth-sphere exchange of the normal relative velocity."""
    g = float(n12 @ (v1 - v2))
    if g >= 0.0:
        raise ValueError("not an incoming pair: v12·n12 must be negative")
    return v1 - n12 * g, v2 + n12 * g


def apply_wall_reflection(v: np.ndarray, n1: np.ndarray) -> np.ndarray:
    """Specular reflection off a wall with inward unit normal n1."""
    g = float(n1 @ v)
    if g >= 0.0:
        raise ValueError("not incoming: v·n1 must be negative")
    return v - 2.0 * g * n1


def time_reverse(state: NBodyState, origin: float | None = None) -> NBodyState:
    """Velocity reversal; the reversal instant becomes the new time origin.

    With an explicit origin t0 the clock maps t -> 2*t0 - t instead.
    """
    t = 0.0 if origin is None else 2.0 * origin - state.time
    return NBodyState(state.positions.copy(), -state.velocities, t)


# ---------------------------------------------------------------------------
# numba backend: heap-scheduled event loop.
# Heap entries: time, kind, i, j, stamp_i, stamp_j. An entry is stale when a
# participant's stamp changed since scheduling. Ties are broken (kind, i, j)
# with wall events first, which serializes simultaneous contacts
# deterministically.


@njit(cache=True, inline="always")
def _entry_less(t1, k1, i1, j1, t2, k2, i2, j2):  # pragma: no cover - jitted
    if t1 != t2:
        return t1 < t2
    if k1 != k2:
        return k1 < k2
    if i1 != i2:
        return i1 < i2
    return j1 < j2


@njit(cache=True)
def _heap_push(ht, hk, hi, hj, hsi, hsj, size, t, k, i, j, si, sj):  # pragma: no cover
    pos = size
    ht[pos] = t
    hk[pos] = k
    hi[pos] = i
    hj[pos] = j
    hsi[pos] = si
    hsj[pos] = sj
    while pos > 0:
        parent = (pos - 1) // 2
        if _entry_less(ht[pos], hk[pos], hi[pos], hj[pos], ht[parent], hk[parent], hi[parent], hj[parent]):
            ht[pos], ht[parent] = ht[parent], ht[pos]
            hk[pos], hk[parent] = hk[parent], hk[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            hj[pos], hj[parent] = hj[parent], hj[pos]
            hsi[pos], hsi[parent] = hsi[parent], hsi[pos]
            hsj[pos], hsj[parent] = hsj[parent], hsj[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(ht, hk, hi, hj, hsi, hsj, size):  # pragma: no cover - jitted
    last = size - 1
    ht[0], ht[last] = ht[last], ht[0]
    hk[0], hk[last] = hk[last], hk[0]
    hi[0], hi[last] = hi[last], hi[0]
    hj[0], hj[last] = hj[last], hj[0]
    hsi[0], hsi[last] = hsi[last], hsi[0]
    hsj[0], hsj[last] = hsj[last], hsj[0]
    size = last
    pos = 0
    while True:
        left = 2 * pos + 1
        right = left + 1
        smallest = pos
        if left < size and _entry_less(ht[left], hk[left], hi[left], hj[left], ht[smallest], hk[smallest], hi[smallest], hj[smallest]):
            smallest = left
        if right < size and _entry_less(ht[right], hk[right], hi[right], hj[right], ht[smallest], hk[smallest], hi[smallest], hj[smallest]):
            smallest = right
        if smallest == pos:
            break
        ht[pos], ht[smallest] = ht[smallest], ht[pos]
        hk[pos], hk[smallest] = hk[smallest], hk[pos]
        hi[pos], hi[smallest] = hi[smallest], hi[pos]
        hj[pos], hj[smallest] = hj[smallest], hj[pos]
        hsi[pos], hsi[smallest] = hsi[smallest], hsi[pos]
        hsj[pos], hsj[smallest] = hsj[smallest], hsj[pos]
        pos = smallest
    return size


@njit(cache=True)
def _predict_pair_dt(pos, vel, i, j, sigma, graze_speed):  # pragma: no cover - jitted
    bx = pos[i, 0] - pos[j, 0]
    by = pos[i, 1] - pos[j, 1]
    bz = pos[i, 2] - pos[j, 2]
    ux = vel[i, 0] - vel[j, 0]
    uy = vel[i, 1] - vel[j, 1]
    uz = vel[i, 2] - vel[j, 2]
    b = bx * ux + by * uy + bz * uz
    if b >= 0.0:
        return -1.0
    a = ux * ux + uy * uy + uz * uz
    c = bx * bx + by * by + bz * bz - sigma * sigma
    disc = b * b - a * c
    if disc <= 0.0:
        return -1.0
    root = np.sqrt(disc)
    if root <= sigma * graze_speed:
        return -1.0
    dt = (-b - root) / a
    if dt <= 0.0:
        return -1.0
    return dt


@njit(cache=True)
def _predict_wall_dt(pos, vel, i, lo, hi, half):  # pragma: no cover - jitted
    best = np.inf
    axis = -1
    side = 0
    for ax in range(3):
        v = vel[i, ax]
        if v > 0.0:
            dt = (hi[ax] - half - pos[i, ax]) / v
            s = 1
        elif v < 0.0:
            dt = (lo[ax] + half - pos[i, ax]) / v
            s = 0
        else:
            continue
        if 0.0 < dt < best:
            best = dt
            axis = ax
            side = s
    return best, axis, side


@njit(cache=True)
def _schedule_particle(pos, vel, now, p, n, sigma, graze_speed, lo, hi, half, periodic,
                       ht, hk, hi_, hj, hsi, hsj, size, stamps, exclude):  # pragma: no cover
    if not periodic:
        dt, axis, side = _predict_wall_dt(pos, vel, p, lo, hi, half)
        if axis >= 0:
            size = _heap_push(ht, hk, hi_, hj, hsi, hsj, size,
                              now + dt, KIND_WALL, p, axis * 2 + side, stamps[p], -1)
    for q in range(n):
        if q == p or q == exclude:
            continue
        i = p if p < q else q
        j = q if p < q else p
        dt = _predict_pair_dt(pos, vel, i, j, sigma, graze_speed)
        if dt > 0.0:
            size = _heap_push(ht, hk, hi_, hj, hsi, hsj, size,
                              now + dt, KIND_PAIR, i, j, stamps[i], stamps[j])
    return size


@njit(cache=True)
def _compact_heap(ht, hk, hi_, hj, hsi, hsj, size, stamps):  # pragma: no cover
    keep = 0
    for idx in range(size):
        i = hi_[idx]
        valid = hsi[idx] == stamps[i]
        if valid and hk[idx] == KIND_PAIR:
            valid = hsj[idx] == stamps[hj[idx]]
        if valid:
            ht[keep] = ht[idx]
            hk[keep] = hk[idx]
            hi_[keep] = hi_[idx]
            hj[keep] = hj[idx]
            hsi[keep] = hsi[idx]
            hsj[keep] = hsj[idx]
            keep += 1
    # re-heapify in place
    for idx in range(keep // 2 - 1, -1, -1):
        pos = idx
        while True:
            left = 2 * pos + 1
            right = left + 1
            smallest = pos
            if left < keep and _entry_less(ht[left], hk[left], hi_[left], hj[left], ht[smallest], hk[smallest], hi_[smallest], hj[smallest]):
                smallest = left
            if right < keep and _entry_less(ht[right], hk[right], hi_[right], hj[right], ht[smallest], hk[smallest], hi_[smallest], hj[smallest]):
                smallest = right
            if smallest == pos:
                break
            ht[pos], ht[smallest] = ht[smallest], ht[pos]
            hk[pos], hk[smallest] = hk[smallest], hk[pos]
            hi_[pos], hi_[smallest] = hi_[smallest], hi_[pos]
            hj[pos], hj[smallest] = hj[smallest], hj[pos]
            hsi[pos], hsi[smallest] = hsi[smallest], hsi[pos]
            hsj[pos], hsj[smallest] = hsj[smallest], hsj[pos]
            pos = smallest
    return keep


@njit(cache=True)
def _run_events_numba(pos, vel, t0, lo, hi, sigma, periodic, t_end, max_events,
                      graze_speed, ev_t, ev_k, ev_i, ev_j, ev_n):  # pragma: no cover
    n = pos.shape[0]
    half = 0.5 * sigma
    cap = ev_t.shape[0]
    heap_cap = 8 * (n * (n - 1) // 2 + n) + 64
    ht = np.empty(heap_cap, dtype=np.float64)
    hk = np.empty(heap_cap, dtype=np.int64)
    hi_ = np.empty(heap_cap, dtype=np.int64)
    hj = np.empty(heap_cap, dtype=np.int64)
    hsi = np.empty(heap_cap, dtype=np.int64)
    hsj = np.empty(heap_cap, dtype=np.int64)
    stamps = np.zeros(n, dtype=np.int64)
    size = 0
    now = t0

    for p in range(n):
        if not periodic:
            dt, axis, side = _predict_wall_dt(pos, vel, p, lo, hi, half)
            if axis >= 0:
                size = _heap_push(ht, hk, hi_, hj, hsi, hsj, size,
                                  now + dt, KIND_WALL, p, axis * 2 + side, stamps[p], -1)
    for i in range(n - 1):
        for j in range(i + 1, n):
            dt = _predict_pair_dt(pos, vel, i, j, sigma, graze_speed)
            if dt > 0.0:
                size = _heap_push(ht, hk, hi_, hj, hsi, hsj, size,
                                  now + dt, KIND_PAIR, i, j, stamps[i], stamps[j])

    applied = 0
    status = 0  # 0: reached t_end / exhausted, 1: hit max_events, 2: overlap fault
    while True:
        # drop stale entries
        while size > 0:
            i = hi_[0]
            ok = hsi[0] == stamps[i]
            if ok and hk[0] == KIND_PAIR:
                ok = hsj[0] == stamps[hj[0]]
            if ok:
                break
            size = _heap_pop(ht, hk, hi_, hj, hsi, hsj, size)
        if size == 0:
            break
        t_ev = ht[0]
        if t_ev > t_end:
            break
        if applied >= max_events or applied >= cap:
            status = 1
            break
        kind = hk[0]
        i = hi_[0]
        j = hj[0]
        size = _heap_pop(ht, hk, hi_, hj, hsi, hsj, size)

        dt = t_ev - now
        for p in range(n):
            pos[p, 0] += vel[p, 0] * dt
            pos[p, 1] += vel[p, 1] * dt
            pos[p, 2] += vel[p, 2] * dt
        now = t_ev

        if kind == KIND_WALL:
            axis = j // 2
            side = j % 2
            nx = 0.0
            ny = 0.0
            nz = 0.0
            sign = 1.0 if side == 0 else -1.0
            if axis == 0:
                nx = sign
            elif axis == 1:
                ny = sign
            else:
                nz = sign
            g = vel[i, axis] * sign
            if g < 0.0:
                vel[i, axis] -= 2.0 * g * sign
                pos[i, axis] += sign * NUDGE * sigma
            ev_t[applied] = now
            ev_k[applied] = KIND_WALL
            ev_i[applied] = i
            ev_j[applied] = -1
            ev_n[applied, 0] = nx
            ev_n[applied, 1] = ny
            ev_n[applied, 2] = nz
            applied += 1
            stamps[i] += 1
            size = _schedule_particle(pos, vel, now, i, n, sigma, graze_speed, lo, hi, half,
                                      periodic, ht, hk, hi_, hj, hsi, hsj, size, stamps, -1)
        else:
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            dist = np.sqrt(dx * dx + dy * dy + dz * dz)
            n12x = dx / dist
            n12y = dy / dist
            n12z = dz / dist
            gx = vel[i, 0] - vel[j, 0]
            gy = vel[i, 1] - vel[j, 1]
            gz = vel[i, 2] - vel[j, 2]
            g = n12x * gx + n12y * gy + n12z * gz
            if g < 0.0:
                vel[i, 0] -= n12x * g
                vel[i, 1] -= n12y * g
                vel[i, 2] -= n12z * g
                vel[j, 0] += n12x * g
                vel[j, 1] += n12y * g
                vel[j, 2] += n12z * g
                nudge = 0.5 * NUDGE * sigma
                pos[i, 0] += n12x * nudge
                pos[i, 1] += n12y * nudge
                pos[i, 2] += n12z * nudge
                pos[j, 0] -= n12x * nudge
                pos[j, 1] -= n12y * nudge
                pos[j, 2] -= n12z * nudge
                ev_t[applied] = now
                ev_k[applied] = KIND_PAIR
                ev_i[applied] = i
                ev_j[applied] = j
                ev_n[applied, 0] = n12x
                ev_n[applied, 1] = n12y
                ev_n[applied, 2] = n12z
                applied += 1
                # overlap audit against the collided pair's new neighbors
                for p in range(n):
                    if p == i or p == j:
                        continue
                    for q in (i, j):
                        ox = pos[p, 0] - pos[q, 0]
                        oy = pos[p, 1] - pos[q, 1]
                        oz = pos[p, 2] - pos[q, 2]
                        if np.sqrt(ox * ox + oy * oy + oz * oz) < sigma * (1.0 - 1e-9):
                            status = 2
                            break
                    if status == 2:
                        break
                if status == 2:
                    break
            stamps[i] += 1
            stamps[j] += 1
            size = _schedule_particle(pos, vel, now, i, n, sigma, graze_speed, lo, hi, half,
                                      periodic, ht, hk, hi_, hj, hsi, hsj, size, stamps, -1)
            size = _schedule_particle(pos, vel, now, j, n, sigma, graze_speed, lo, hi, half,
                                      periodic, ht, hk, hi_, hj, hsi, hsj, size, stamps, i)
        if size > heap_cap - 4 * (n + 1):
            size = _compact_heap(ht, hk, hi_, hj, hsi, hsj, size, stamps)

    if status == 0 and np.isfinite(t_end) and now < t_end:
        dt = t_end - now
        for p in range(n):
            pos[p, 0] += vel[p, 0] * dt
            pos[p, 1] += vel[p, 1] * dt
            pos[p, 2] += vel[p, 2] * dt
        now = t_end
    return applied, now, status


def _run_events_numpy(pos, vel, t0, lo, hi, sigma, periodic, t_end, max_events, graze_speed,
                      ev_t, ev_k, ev_i, ev_j, ev_n):
    """Matrix-scan fallback with identical contact arithmetic."""
    n = pos.shape[0]
    half = 0.5 * sigma
    cap = ev_t.shape[0]
    now = t0
    applied = 0
    status = 0

    pair_t = np.full((n, n), np.inf)
    wall_t = np.full(n, np.inf)
    wall_id = np.full(n, -1, dtype=np.int64)

    def repredict_pair(i, j):
        rij = pos[i] - pos[j]
        vij = vel[i] - vel[j]
        b = rij @ vij
        pair_t[i, j] = np.inf
        if b >= 0.0:
            return
        a = vij @ vij
        c = rij @ rij - sigma * sigma
        disc = b * b - a * c
        if disc <= 0.0:
            return
        root = np.sqrt(disc)
        if root <= sigma * graze_speed:
            return
        dt = (-b - root) / a
        if dt > 0.0:
            pair_t[i, j] = now + dt

    def repredict_wall(i):
        wall_t[i] = np.inf
        wall_id[i] = -1
        if periodic:
            return
        best = np.inf
        ident = -1
        for ax in range(3):
            v = vel[i, ax]
            if v > 0.0:
                dt = (hi[ax] - half - pos[i, ax]) / v
                s = 1
            elif v < 0.0:
                dt = (lo[ax] + half - pos[i, ax]) / v
                s = 0
            else:
                continue
            if 0.0 < dt < best:
                best = dt
                ident = ax * 2 + s
        if ident >= 0:
            wall_t[i] = now + best
            wall_id[i] = ident

    for i in range(n):
        repredict_wall(i)
        for j in range(i + 1, n):
            repredict_pair(i, j)

    while True:
        wmin = wall_t.min() if n else np.inf
        pmin = pair_t.min()
        t_ev = min(wmin, pmin)
        if not np.isfinite(t_ev) or t_ev > t_end:
            break
        if applied >= max_events or applied >= cap:
            status = 1
            break
        # wall first on exact ties, then lowest indices
        if wmin <= pmin:
            kind = KIND_WALL
            i = int(np.flatnonzero(wall_t == wmin)[0])
            j = int(wall_id[i])
        else:
            kind = KIND_PAIR
            flat = np.flatnonzero(pair_t == pmin)[0]
            i, j = int(flat // n), int(flat % n)

        pos += vel * (t_ev - now)
        now = t_ev

        if kind == KIND_WALL:
            axis, side = j // 2, j % 2
            sign = 1.0 if side == 0 else -1.0
            normal = np.zeros(3)
            normal[axis] = sign
            g = vel[i, axis] * sign
            if g < 0.0:
                vel[i, axis] -= 2.0 * g * sign
                pos[i, axis] += sign * NUDGE * sigma
                ev_t[applied] = now
                ev_k[applied] = KIND_WALL
                ev_i[applied] = i
                ev_j[applied] = -1
                ev_n[applied] = normal
                applied += 1
            touched = (i,)
        else:
            d = pos[i] - pos[j]
            dist = np.linalg.norm(d)
            n12 = d / dist
            g = float(n12 @ (vel[i] - vel[j]))
            if g < 0.0:
                vel[i] -= n12 * g
                vel[j] += n12 * g
                pos[i] += n12 * (0.5 * NUDGE * sigma)
                pos[j] -= n12 * (0.5 * NUDGE * sigma)
                ev_t[applied] = now
                ev_k[applied] = KIND_PAIR
                ev_i[applied] = i
                ev_j[applied] = j
                ev_n[applied] = n12
                applied += 1
                others = np.array([p for p in range(n) if p not in (i, j)], dtype=np.int64)
                if others.size:
                    for q in (i, j):
                        sep = np.linalg.norm(pos[others] - pos[q], axis=1)
                        if np.any(sep < sigma * (1.0 - 1e-9)):
                            status = 2
                            break
            touched = (i, j)
            if status == 2:
                break

        for p in touched:
            repredict_wall(p)
            for q in range(n):
                if q == p:
                    continue
                a, b2 = (p, q) if p < q else (q, p)
                repredict_pair(a, b2)

    if status == 0 and np.isfinite(t_end) and now < t_end:
        pos += vel * (t_end - now)
        now = t_end
    return applied, now, status


def simulate(traj: Trajectory, t_end: float | None = None, max_events: int | None = None) -> Trajectory:
    """Advance a trajectory to t_end and/or through at most max_events events.

    Events are applied in chronological order; the event log grows in place.
    Raises RuntimeError on a numerical-overlap fault.
    """
    if t_end is None and max_events is None:
        raise ValueError("need t_end and/or max_events")
    state = traj.current
    dom = traj.domain
    horizon = np.inf if t_end is None else float(t_end)
    budget = np.iinfo(np.int64).max if max_events is None else int(max_events)
    if horizon < state.time:
        raise ValueError("t_end is in the past")

    speeds = np.linalg.norm(state.velocities, axis=1)
    v_thermal = float(np.sqrt(np.mean(speeds**2))) if state.n else 0.0
    graze_speed = GRAZE_TOL * v_thermal

    runner = _run_events_numba if USE_NUMBA else _run_events_numpy
    pos = state.positions
    vel = state.velocities
    while True:
        chunk = int(min(budget, 65536))
        ev_t = np.empty(chunk)
        ev_k = np.empty(chunk, dtype=np.int64)
        ev_i = np.empty(chunk, dtype=np.int64)
        ev_j = np.empty(chunk, dtype=np.int64)
        ev_n = np.empty((chunk, 3))
        applied, now, status = runner(pos, vel, state.time, dom.lo, dom.hi, dom.sigma,
                                      dom.periodic, horizon, chunk, graze_speed,
                                      ev_t, ev_k, ev_i, ev_j, ev_n)
        state.time = float(now)
        for idx in range(applied):
            traj.events.append(
                CollisionEvent(
                    time=float(ev_t[idx]),
                    kind="wall" if ev_k[idx] == KIND_WALL else "pair",
                    i=int(ev_i[idx]),
                    j=int(ev_j[idx]),
                    normal=ev_n[idx].copy(),
                )
            )
        budget -= applied
        if status == 2:
            raise RuntimeError("numerical-overlap fault: post-event separation below sigma")
        if status == 1 and budget > 0:
            continue  # chunk filled; keep going
        break
    return traj


# ---------------------------------------------------------------------------
# serialization


def snapshot_record(state: NBodyState) -> str:
    """Flat text record: t then N x 6 reals."""
    vals = [state.time]
    for p in range(state.n):
        vals.extend(state.positions[p].tolist())
        vals.extend(state.velocities[p].tolist())
    return " ".join(f"{v:.17g}" for v in vals)


def state_from_record(line: str) -> NBodyState:
    vals = np.array([float(tok) for tok in line.split()])
    t = vals[0]
    body = vals[1:].reshape(-1, 6)
    return NBodyState(body[:, :3].copy(), body[:, 3:].copy(), t)


def events_to_csv(events, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "kind", "i", "j", "nx", "ny", "nz"])
        for ev in events:
            t, kind, i, j, nx, ny, nz = ev.as_row()
            writer.writerow([f"{t:.17g}", kind, i, j, f"{nx:.17g}", f"{ny:.17g}", f"{nz:.17g}"])
